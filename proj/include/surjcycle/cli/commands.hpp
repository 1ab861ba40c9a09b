#pragma once

#include <filesystem>
#include <ostream>
#include <vector>

#include "surjcycle/affine/train.hpp"
#include "surjcycle/affine/verify.hpp"
#include "surjcycle/cli/config.hpp"

namespace surjcycle::cli {

enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kInvalidConfig = 2 };

inline constexpr double kCycleValueTol = 1e-3;

struct AffineOutcome {
  affine::AffineGroundTruth truth;
  affine::AffineTrainResult training;
  affine::RecoveryReport recovery;
  affine::RecoveryReport pruning;
  affine::AlphaBetaResult path;
  /// |loss_x + loss_y of the trained model - the planted optimum's| on the
  /// training moments at the trained gamma.
  double cycle_value_gap = 0.0;
  double seconds = 0.0;
  bool passed() const;
};

/// Trains on fresh pairs for config.seed, verifies recovery, pruning and the
/// alpha-beta path, and writes recovery_report.json, trace.csv and path.csv
/// into config.out. Training divergence propagates as affine::TrainingError
/// after trace.csv is written.
AffineOutcome affine_verify(const ExperimentConfig& config);

struct TilesSeedOutcome {
  std::uint64_t seed = 0;
  double base_recon = 0.0;
  double cvae_recon = 0.0;
  /// Distinct border classes among n_draws generations, per digit.
  std::vector<int> base_diversity;
  std::vector<int> cvae_diversity;
  double base_seconds = 0.0;
  double cvae_seconds = 0.0;
};

struct TilesOutcome {
  std::vector<TilesSeedOutcome> seeds;
  double base_mean = 0.0;
  double cvae_mean = 0.0;
  double gap = 0.0;
  /// Largest across-seed sample std of base recon, CycleCVAE recon and their
  /// paired difference; 0 for one seed.
  double spread = 0.0;
  bool ordered() const;
  /// Fills the means, gap and spread from `seeds`.
  void summarize();
};

/// Trains both models on seeds config.seed .. config.seed + n_seeds - 1 and
/// writes curves.csv, diversity.csv, summary.json and samples/*.pgm.
TilesOutcome tiles_experiment(const ExperimentConfig& config);

/// Runs the bound comparisons and writes bound.csv.
cvae::BoundCheckReport bound_experiment(const ExperimentConfig& config);

/// Command wrappers: log a summary and map the outcome onto an exit code.
/// ConfigError and ContractError map to 2, divergence and failed checks to 1.
int run_affine_verify(const ExperimentConfig& config, std::ostream& log);
int run_tiles(const ExperimentConfig& config, std::ostream& log);
int run_bound_check(const ExperimentConfig& config, std::ostream& log);

}  // namespace surjcycle::cli
