#pragma once

#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "surjcycle/affine/model.hpp"

namespace surjcycle::affine {

struct AffineTrainConfig {
  Index r_z = 6;
  /// Penalty weight at the start of screening; it grows geometrically to
  /// lambda_end over the screening iterations and is held afterwards.
  double lambda_penalty = 10.0;
  double lambda_end = 1e5;
  /// Weight of the third-moment term inside the penalty.
  double skew_weight = 1.0;
  double gamma_start = 1e-1;
  double gamma_end = 1e-4;
  /// Fraction of iterations over which gamma decays geometrically; it is held
  /// at gamma_end afterwards.
  double anneal_fraction = 0.75;
  long iters = 20000;
  /// Independent initializations, each run for screen_iters iterations at
  /// gamma_start; the one with the lowest objective continues to the anneal.
  int restarts = 4;
  long screen_iters = 2000;
  /// Penalty-only starts over (W_y, b_y) run before screening; the lowest
  /// penalty seeds W_y and b_y of every restart. 0 disables.
  int presolve_starts = 64;
  long presolve_iters = 3000;
  double presolve_lr = 3e-2;
  double lr = 3e-2;
  double lr_end = 1e-4;
  long checkpoint_every = 100;
  std::uint64_t seed = 0;
};

/// gamma at iteration `iter` of the anneal phase.
double gamma_at(const AffineTrainConfig& config, long iter);
/// Penalty weight at iteration `iter` of the screening phase.
double lambda_at(const AffineTrainConfig& config, long iter);

struct TraceRow {
  long iter = 0;
  double loss_x = 0.0;
  double loss_y = 0.0;
  double penalty = 0.0;
  double gamma = 0.0;
  std::vector<double> vx_col_norms;
};

struct TrainingTrace {
  std::vector<TraceRow> rows;

  /// `# surjcycle-v1` then iter,loss_x,loss_y,penalty,gamma,vx_norm_0,...
  void write_csv(std::ostream& out) const;
};

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, TrainingTrace trace)
      : std::runtime_error(what), trace_(std::move(trace)) {}
  const TrainingTrace& trace() const { return trace_; }

 private:
  TrainingTrace trace_;
};

struct AffineTrainResult {
  AffineCvaeParams params;
  /// Screening then anneal of the selected restart; iter counts both phases.
  TrainingTrace trace;
  int selected_restart = 0;
  /// Objective of each restart at the end of screening.
  std::vector<double> screen_objectives;
  /// Final penalty of each presolve start.
  std::vector<double> presolve_penalties;
};

/// Rows of W_z outside the span of the data covariance are unidentified by
/// the loss; this projects them out and folds the shift into b_z so mu_z is
/// unchanged on the data mean.
void project_encoder_to_data_span(AffineCvaeParams& p, const DataMoments& x);

/// Full-batch minimization of affine_loss_x + affine_loss_y + lambda * penalty
/// over the moments of the given samples with Adam. Each restart is screened
/// at gamma_start while lambda ramps up; the best then anneals gamma with
/// lambda held at lambda_end while the learning rate decays from lr to lr_end.
/// Throws ContractError when r_z < r_c - r_y and TrainingError when a loss
/// turns non-finite.
AffineTrainResult train_affine(const DenseMatrix& x, const DenseMatrix& y, const AffineTrainConfig& config);

}  // namespace surjcycle::affine
