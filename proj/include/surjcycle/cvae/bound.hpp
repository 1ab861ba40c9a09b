#pragma once

#include <cstdint>
#include <vector>

#include "surjcycle/cvae/tiny_model.hpp"

namespace surjcycle::cvae {

struct BoundCheckConfig {
  int models = 10;
  int inputs = 10;
  Index importance_samples = 10000;
  Index elbo_samples = 10000;
  TinyModelDims dims;
  /// Encoder fit per model before the comparisons; 0 steps keeps the random
  /// encoder, which is a poor importance proposal.
  int encoder_fit_steps = 500;
  Index encoder_fit_inputs = 256;
  std::uint64_t seed = 0;
  /// Fault injection: report recon - KL in place of the ELBO.
  bool negate_kl = false;
};

struct BoundComparison {
  int model = 0;
  int input = 0;
  double elbo = 0.0;
  double estimate = 0.0;
  double stderr_ = 0.0;
  bool degenerate = false;
  /// elbo >= estimate - 3 stderr
  bool passed = false;
};

struct BoundCheckReport {
  std::vector<BoundComparison> comparisons;
  int violations() const;
};

/// ELBO against the importance estimate of the marginal on random tiny models
/// and inputs drawn from each model.
BoundCheckReport run_bound_check(const BoundCheckConfig& config);

}  // namespace surjcycle::cvae
