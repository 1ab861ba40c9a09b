#include "surjcycle/affine/train.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>

#include <Eigen/Eigenvalues>

#include "surjcycle/affine/losses.hpp"
#include "surjcycle/numerics/optim.hpp"

namespace surjcycle::affine {

double gamma_at(const AffineTrainConfig& config, long iter) {
  const double span = std::max(1.0, config.anneal_fraction * static_cast<double>(config.iters));
  const double t = std::clamp(static_cast<double>(iter) / span, 0.0, 1.0);
  return config.gamma_start * std::pow(config.gamma_end / config.gamma_start, t);
}

double lambda_at(const AffineTrainConfig& config, long iter) {
  const double span = static_cast<double>(std::max<long>(1, config.screen_iters));
  const double t = std::clamp(static_cast<double>(iter) / span, 0.0, 1.0);
  return config.lambda_penalty * std::pow(config.lambda_end / config.lambda_penalty, t);
}

void TrainingTrace::write_csv(std::ostream& out) const {
  out << "# surjcycle-v1\n";
  out << "iter,loss_x,loss_y,penalty,gamma";
  const std::size_t k = rows.empty() ? 0 : rows.front().vx_col_norms.size();
  for (std::size_t j = 0; j < k; ++j) out << ",vx_norm_" << j;
  out << '\n';
  out << std::setprecision(17);
  for (const TraceRow& r : rows) {
    out << r.iter << ',' << r.loss_x << ',' << r.loss_y << ',' << r.penalty << ',' << r.gamma;
    for (double v : r.vx_col_norms) out << ',' << v;
    out << '\n';
  }
}

namespace {

// Leaf order: W_x, W_y, V_x, b_x, b_y, W_z, b_z, log s.
std::vector<DenseMatrix> to_leaves(const AffineCvaeParams& p) {
  return {p.w_x, p.w_y, p.v_x, DenseMatrix(p.b_x), DenseMatrix(p.b_y), p.w_z, DenseMatrix(p.b_z), DenseMatrix(p.log_s)};
}

AffineCvaeParams from_leaves(const std::vector<DenseMatrix>& leaves, double gamma) {
  AffineCvaeParams p;
  p.w_x = leaves[0];
  p.w_y = leaves[1];
  p.v_x = leaves[2];
  p.b_x = leaves[3].col(0);
  p.b_y = leaves[4].col(0);
  p.w_z = leaves[5];
  p.b_z = leaves[6].col(0);
  p.log_s = leaves[7].col(0);
  p.gamma = gamma;
  return p;
}

struct Schedule {
  double gamma;
  double lambda;
  double lr;
};

class Phase {
 public:
  Phase(const DataMoments& mx, const DataMoments& my, const AffineTrainConfig& config)
      : mx_(mx), my_(my), config_(config) {}

  /// Runs `n` Adam steps; the trace gets a row every checkpoint_every steps
  /// (numbered from `offset`) and, when `final_row`, one after the last step.
  /// Returns the objective at the final parameters.
  template <typename ScheduleFn>
  double run(std::vector<DenseMatrix>& leaves, long n, ScheduleFn schedule, long offset, TrainingTrace* trace,
             bool final_row) {
    std::vector<DenseMatrix*> handles;
    for (DenseMatrix& m : leaves) handles.push_back(&m);
    Adam adam(AdamConfig{.lr = config_.lr});
    double objective = std::numeric_limits<double>::quiet_NaN();
    for (long it = 0; it <= n; ++it) {
      const Schedule s = schedule(std::min(it, n));
      Tape tape;
      std::vector<Var> vars;
      for (const DenseMatrix& m : leaves) vars.push_back(tape.variable(m));
      AffineVars v{vars[0], vars[1], vars[2], vars[3], vars[4], vars[5], vars[6], vars[7], s.gamma};
      Var lx, ly, pen;
      try {
        lx = affine_loss_x(v, mx_);
        ly = affine_loss_y(v, my_);
        pen = moment_penalty(v, mx_, my_, config_.skew_weight);
      } catch (const NumericalError& e) {
        fail(std::string(e.what()), offset + it, trace);
      }
      const bool checkpoint = config_.checkpoint_every > 0 && (it < n ? it % config_.checkpoint_every == 0 : final_row);
      if (trace != nullptr && checkpoint) {
        TraceRow row{offset + it, lx.scalar(), ly.scalar(), pen.scalar(), s.gamma, {}};
        for (Index k = 0; k < leaves[2].cols(); ++k) row.vx_col_norms.push_back(leaves[2].col(k).norm());
        trace->rows.push_back(std::move(row));
      }
      Var total = lx + ly + s.lambda * pen;
      objective = total.scalar();
      if (!std::isfinite(objective)) fail("non-finite loss", offset + it, trace);
      if (it == n) break;
      tape.backward(total);
      std::vector<DenseMatrix> grads;
      for (const Var& leaf : vars) grads.push_back(leaf.grad());
      adam.set_lr(s.lr);
      try {
        adam.step(handles, grads);
      } catch (const NumericalError& e) {
        fail(e.what(), offset + it, trace);
      }
    }
    return objective;
  }

 private:
  [[noreturn]] static void fail(const std::string& what, long iter, TrainingTrace* trace) {
    throw TrainingError("train_affine: " + what + " at iter " + std::to_string(iter),
                        trace != nullptr ? *trace : TrainingTrace{});
  }

  const DataMoments& mx_;
  const DataMoments& my_;
  const AffineTrainConfig& config_;
};

struct PresolveResult {
  DenseMatrix w_y;
  DenseMatrix b_y;
  std::vector<double> penalties;
};

// Penalty-only fit of (W_y, b_y). The mean and covariance terms ramp in over
// the first 30% so the third moment steers the rotation early.
PresolveResult presolve(const DataMoments& mx, const DataMoments& my, const AffineTrainConfig& config, const Rng& root) {
  PresolveResult out;
  double best = std::numeric_limits<double>::infinity();
  const long n = config.presolve_iters;
  for (int r = 0; r < config.presolve_starts; ++r) {
    Rng rng = root.split(0x70e5u + static_cast<std::uint64_t>(r));
    const AffineCvaeParams init = init_params(mx.dim(), my.dim(), config.r_z, config.gamma_start, rng);
    std::vector<DenseMatrix> leaves{init.w_y, DenseMatrix(init.b_y)};
    std::vector<DenseMatrix*> handles{&leaves[0], &leaves[1]};
    Adam adam(AdamConfig{.lr = config.presolve_lr});
    double pen = std::numeric_limits<double>::infinity();
    for (long it = 0; it <= n; ++it) {
      Tape tape;
      AffineVars v = bind(tape, init, false);
      v.w_y = tape.variable(leaves[0]);
      v.b_y = tape.variable(leaves[1]);
      const double rho = std::min(1.0, static_cast<double>(it) / (0.3 * static_cast<double>(std::max<long>(n, 1))));
      Var skew = moment_penalty(v, mx, my, config.skew_weight) - moment_penalty(v, mx, my, 0.0);
      Var total = skew + rho * moment_penalty(v, mx, my, 0.0);
      pen = total.scalar();
      if (it == n || !std::isfinite(pen)) break;
      tape.backward(total);
      std::vector<DenseMatrix> grads{v.w_y.grad(), v.b_y.grad()};
      adam.set_lr(config.presolve_lr * std::pow(1e-2, static_cast<double>(it) / static_cast<double>(n)));
      adam.step(handles, grads);
    }
    if (!std::isfinite(pen)) pen = std::numeric_limits<double>::infinity();
    out.penalties.push_back(pen);
    if (pen < best) {
      best = pen;
      out.w_y = leaves[0];
      out.b_y = leaves[1];
    }
  }
  return out;
}

}  // namespace

void project_encoder_to_data_span(AffineCvaeParams& p, const DataMoments& x) {
  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(x.cov);
  const DenseVector vals = eig.eigenvalues();
  const double cut = 1e-8 * std::max(vals.maxCoeff(), 0.0);
  DenseMatrix basis(x.dim(), 0);
  for (Index k = 0; k < vals.size(); ++k) {
    if (vals(k) > cut) {
      basis.conservativeResize(Eigen::NoChange, basis.cols() + 1);
      basis.col(basis.cols() - 1) = eig.eigenvectors().col(k);
    }
  }
  const DenseMatrix proj = basis * basis.transpose();
  const DenseMatrix dropped = p.w_z - p.w_z * proj;
  p.b_z += dropped * x.mean;
  p.w_z -= dropped;
}

AffineTrainResult train_affine(const DenseMatrix& x, const DenseMatrix& y, const AffineTrainConfig& config) {
  if (x.rows() == 0 || y.rows() == 0) throw ContractError("train_affine: empty sample set");
  if (x.rows() != y.rows()) throw ShapeError("train_affine: x and y sample counts differ");
  if (config.iters < 1 || config.screen_iters < 0 || config.restarts < 1 || config.presolve_starts < 0 ||
      config.presolve_iters < 1) {
    throw ContractError("train_affine: need iters >= 1, screen_iters >= 0, restarts >= 1 and presolve_iters >= 1");
  }
  if (!(config.gamma_start > 0.0) || !(config.gamma_end > 0.0) || !(config.lambda_penalty > 0.0) ||
      !(config.lambda_end > 0.0) || !(config.lr > 0.0) || !(config.lr_end > 0.0)) {
    throw ContractError("train_affine: gamma, lambda and learning rates must be positive");
  }
  const DataMoments mx = compute_moments(x, config.skew_weight != 0.0);
  const DataMoments my = compute_moments(y, config.skew_weight != 0.0);
  const Index r_y = y.cols();
  if (config.r_z < mx.raw_rank - r_y) {
    throw ContractError("train_affine: r_z = " + std::to_string(config.r_z) + " is below r_c - r_y = " +
                        std::to_string(mx.raw_rank - r_y));
  }

  Phase phase(mx, my, config);
  auto screen_schedule = [&](long it) { return Schedule{config.gamma_start, lambda_at(config, it), config.lr}; };

  AffineTrainResult result;
  const Rng root(config.seed);
  PresolveResult seeded;
  if (config.presolve_starts > 0) {
    seeded = presolve(mx, my, config, root);
    result.presolve_penalties = seeded.penalties;
  }
  std::vector<DenseMatrix> best;
  TrainingTrace best_trace;
  double best_objective = std::numeric_limits<double>::infinity();
  for (int r = 0; r < config.restarts; ++r) {
    Rng rng = root.split(static_cast<std::uint64_t>(r));
    std::vector<DenseMatrix> leaves = to_leaves(init_params(x.cols(), r_y, config.r_z, config.gamma_start, rng));
    if (seeded.w_y.size() > 0) {
      leaves[1] = seeded.w_y;
      leaves[4] = seeded.b_y;
    }
    TrainingTrace trace;
    double objective = std::numeric_limits<double>::infinity();
    try {
      objective = phase.run(leaves, config.screen_iters, screen_schedule, 0, &trace, false);
    } catch (const TrainingError&) {
      if (config.restarts == 1) throw;
    }
    result.screen_objectives.push_back(objective);
    if (objective < best_objective) {
      best_objective = objective;
      best = std::move(leaves);
      best_trace = std::move(trace);
      result.selected_restart = r;
    }
  }
  if (best.empty()) throw TrainingError("train_affine: every restart diverged during screening", TrainingTrace{});

  const double lr_ratio = config.lr_end / config.lr;
  auto anneal_schedule = [&](long it) {
    const double frac = static_cast<double>(it) / static_cast<double>(config.iters);
    return Schedule{gamma_at(config, it), config.lambda_end, config.lr * std::pow(lr_ratio, frac)};
  };
  phase.run(best, config.iters, anneal_schedule, config.screen_iters, &best_trace, true);

  result.params = from_leaves(best, gamma_at(config, config.iters));
  project_encoder_to_data_span(result.params, mx);
  result.trace = std::move(best_trace);
  return result;
}

}  // namespace surjcycle::affine
