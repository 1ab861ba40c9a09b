#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "surjcycle/affine/train.hpp"
#include "surjcycle/cvae/bound.hpp"
#include "surjcycle/tiles/train.hpp"

namespace surjcycle::cli {

/// Bad config file or field; maps to exit code 2.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AffineSection {
  Index r_x = 12;
  Index r_y = 4;
  Index r_u = 3;
  Index n_samples = 100000;
  Index n_heldout = 1000;
  double tol = 0.05;
  affine::AffineTrainConfig train;
  std::vector<double> alphas{1.0, 0.1, 0.01};
  std::vector<double> betas{0.0, 0.5, 0.99};
  int diagonal_steps = 50;
};

struct TilesSection {
  tiles::TilesConfig train;
  int n_seeds = 1;
  Index n_draws = 10;
  int pgm_scale = 4;
  Index cvae_samples = 3;
};

struct ExperimentConfig {
  /// Command the file is meant for (affine-verify, tiles or bound-check);
  /// empty fits any.
  std::string kind;
  std::uint64_t seed = 0;
  std::string out = "out";
  AffineSection affine;
  TilesSection tiles;
  cvae::BoundCheckConfig bound;
};

/// Unknown keys and out-of-range values throw ConfigError. Missing keys keep
/// their defaults.
ExperimentConfig parse_config(const nlohmann::json& doc);
ExperimentConfig load_config(const std::string& path);
/// Every field, so that reloading reproduces the run.
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace surjcycle::cli
