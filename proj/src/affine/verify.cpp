#include "surjcycle/affine/verify.hpp"

#include <algorithm>
#include <cmath>

#include "surjcycle/numerics/assignment.hpp"

namespace surjcycle::affine {
namespace {

Check make_check(std::string name, double residual, double tol) {
  return {std::move(name), residual, tol, std::isfinite(residual) && residual <= tol};
}

double signed_permutation_residual(const DenseMatrix& w, const DenseMatrix& target) {
  const Index r = w.cols();
  DenseMatrix cost(r, r);
  for (Index i = 0; i < r; ++i) {
    for (Index j = 0; j < r; ++j) {
      // best sign for column i of w against column j of target
      cost(i, j) = std::min((w.col(i) - target.col(j)).squaredNorm(), (w.col(i) + target.col(j)).squaredNorm());
    }
  }
  const std::vector<Index> col = min_cost_assignment(cost);
  double acc = 0.0;
  for (Index i = 0; i < r; ++i) acc += cost(i, col[i]);
  return std::sqrt(acc) / target.norm();
}

}  // namespace

bool RecoveryReport::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

const Check& RecoveryReport::at(const std::string& name) const {
  for (const Check& c : checks) {
    if (c.name == name) return c;
  }
  throw ContractError("RecoveryReport: no check named " + name);
}

RecoveryReport verify_recovery(const AffineCvaeParams& p, const AffineGroundTruth& gt, double tol) {
  p.check_shapes();
  if (p.r_x() != gt.r_x || p.r_y() != gt.r_y) throw ShapeError("verify_recovery: model and ground truth dims differ");
  const DenseMatrix bbt = gt.b * gt.b.transpose();
  const double bbt_norm = bbt.norm();
  const double c_norm = gt.c.norm();
  RecoveryReport report;
  report.checks.push_back(make_check("wx_vs_a", (p.w_x - gt.a).norm() / gt.a.norm(), tol));
  report.checks.push_back(make_check(
      "vvt_vs_bbt", bbt_norm > 0.0 ? (p.v_x * p.v_x.transpose() - bbt).norm() / bbt_norm : (p.v_x * p.v_x.transpose()).norm(),
      2.0 * tol));
  report.checks.push_back(
      make_check("wy_a_identity", (p.w_y * gt.a - DenseMatrix::Identity(gt.r_y, gt.r_y)).norm(), tol));
  report.checks.push_back(make_check("wy_b_null", gt.r_u > 0 ? (p.w_y * gt.b).norm() : 0.0, tol));
  report.checks.push_back(make_check("bx_vs_c", c_norm > 0.0 ? (p.b_x - gt.c).norm() / c_norm : p.b_x.norm(), tol));
  report.checks.push_back(make_check("by_vs_wy_c", (p.b_y + p.w_y * gt.c).norm(), tol));
  report.wx_aligned_residual = signed_permutation_residual(p.w_x, gt.a);
  report.symmetry_only = !report.checks[0].passed && report.wx_aligned_residual <= tol;
  return report;
}

RecoveryReport verify_pruning_bijection(const AffineCvaeParams& p, const AffineGroundTruth& gt,
                                        const DenseMatrix& held_out_x, double tol) {
  p.check_shapes();
  if (held_out_x.cols() != p.r_x()) throw ShapeError("verify_pruning_bijection: held-out dim mismatch");
  const Index rz = p.r_z();
  const DenseVector row_norms = p.w_z.rowwise().norm();
  const double top = rz > 0 ? row_norms.maxCoeff() : 0.0;
  RecoveryReport report;
  std::vector<bool> active(static_cast<std::size_t>(rz), false);
  for (Index k = 0; k < rz; ++k) {
    if (top > 0.0 && row_norms(k) > tol * top) {
      active[static_cast<std::size_t>(k)] = true;
      report.active_dims.push_back(k);
    }
  }
  const Index rank_b = gt.r_u > 0 ? numerical_rank(gt.b) : 0;
  const double count_gap = std::abs(static_cast<double>(report.active_dims.size()) - static_cast<double>(rank_b));
  report.checks.push_back(make_check("active_count", count_gap, 0.0));

  double worst_s = 0.0;
  const DenseVector s = p.s();
  for (Index k = 0; k < rz; ++k) {
    if (!active[static_cast<std::size_t>(k)]) worst_s = std::max(worst_s, std::abs(s(k) - 1.0));
  }
  report.checks.push_back(make_check("inactive_s_prior", worst_s, tol));

  // x -> y_hat -> (y_hat, active mu_z) -> x_hat
  DenseMatrix y_hat = held_out_x * p.w_y.transpose();
  y_hat.rowwise() += p.b_y.transpose();
  DenseMatrix mu = held_out_x * p.w_z.transpose();
  mu.rowwise() += p.b_z.transpose();
  for (Index k = 0; k < rz; ++k) {
    if (!active[static_cast<std::size_t>(k)]) mu.col(k).setZero();
  }
  DenseMatrix x_hat = y_hat * p.w_x.transpose() + mu * p.v_x.transpose();
  x_hat.rowwise() += p.b_x.transpose();
  report.checks.push_back(make_check("round_trip", (held_out_x - x_hat).norm() / held_out_x.norm(), tol));
  return report;
}

double cycle_path_value(const AffineCvaeParams& p, const AffineGroundTruth& gt, double alpha, double beta) {
  if (!(alpha >= 1e-6)) throw ContractError("cycle_path_value: alpha must be at least 1e-6");
  const Index d = p.r_x();
  const Index r = p.r_y();
  const DenseMatrix vvt = p.v_x * p.v_x.transpose();
  const DenseMatrix bbt = gt.b * gt.b.transpose();
  const DenseMatrix sx = vvt + p.gamma * DenseMatrix::Identity(d, d);
  const DenseMatrix sy = p.w_y * vvt * p.w_y.transpose() + p.gamma * DenseMatrix::Identity(r, r);
  const SpdFactor<double> mixed(DenseMatrix(alpha * sx + beta * bbt));
  return mixed.solve(bbt).trace() + mixed.log_det() + log_det_spd(DenseMatrix(alpha * sy));
}

AlphaBetaResult alpha_beta_path(const AffineCvaeParams& p, const AffineGroundTruth& gt,
                                const std::vector<double>& alphas, const std::vector<double>& betas,
                                int diagonal_steps, double slack) {
  if (alphas.empty() || betas.empty()) throw ContractError("alpha_beta_path: empty grid");
  if (diagonal_steps < 1) throw ContractError("alpha_beta_path: diagonal_steps must be positive");
  AlphaBetaResult out;
  for (double a : alphas) {
    for (double b : betas) out.grid.push_back({a, b, cycle_path_value(p, gt, a, b)});
  }
  out.grid_min = *std::min_element(out.grid.begin(), out.grid.end(),
                                   [](const PathPoint& l, const PathPoint& r) { return l.value < r.value; });
  const double a_min = *std::min_element(alphas.begin(), alphas.end());
  const double b_max = *std::max_element(betas.begin(), betas.end());
  out.min_at_corner = out.grid_min.alpha == a_min && out.grid_min.beta == b_max;

  for (int i = 0; i <= diagonal_steps; ++i) {
    const double t = static_cast<double>(i) / diagonal_steps;
    const double a = 1.0 - 0.99 * t;
    const double b = 0.99 * t;
    out.diagonal.push_back({a, b, cycle_path_value(p, gt, a, b)});
  }
  for (std::size_t i = 1; i < out.diagonal.size(); ++i) {
    out.max_diagonal_increase = std::max(out.max_diagonal_increase, out.diagonal[i].value - out.diagonal[i - 1].value);
  }
  out.diagonal_monotone = out.max_diagonal_increase <= slack;
  return out;
}

}  // namespace surjcycle::affine
