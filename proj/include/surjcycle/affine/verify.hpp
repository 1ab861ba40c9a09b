#pragma once

#include <string>
#include <vector>

#include "surjcycle/affine/model.hpp"

namespace surjcycle::affine {

struct Check {
  std::string name;
  double residual = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct RecoveryReport {
  std::vector<Check> checks;
  /// |W_x P - A| / |A| minimized over signed permutations P; set by
  /// verify_recovery. A small value here with a failing direct check means
  /// recovery only up to latent symmetry.
  double wx_aligned_residual = 0.0;
  bool symmetry_only = false;
  /// Set by verify_pruning_bijection.
  std::vector<Index> active_dims;

  bool passed() const;
  const Check& at(const std::string& name) const;
};

/// (i) |W_x - A|/|A| <= tol, (ii) |V V^T - B B^T|/|B B^T| <= 2 tol,
/// (iii) |W_y A - I| <= tol, (iv) |W_y B| <= tol, (v) |b_x - c|/|c| <= tol,
/// (vi) |b_y + W_y c| <= tol, all Frobenius.
RecoveryReport verify_recovery(const AffineCvaeParams& p, const AffineGroundTruth& gt, double tol);

/// Active z dimensions are rows of W_z with norm above tol * max row norm.
/// Checks that their count equals rank(B), that inactive s_k are within tol of
/// 1, and that x -> (y_hat, active mu_z) -> x_hat reconstructs held-out rows
/// with |x - x_hat| / |x| <= tol (aggregate Frobenius over the rows).
RecoveryReport verify_pruning_bijection(const AffineCvaeParams& p, const AffineGroundTruth& gt,
                                        const DenseMatrix& held_out_x, double tol);

struct PathPoint {
  double alpha = 0.0;
  double beta = 0.0;
  double value = 0.0;
};

struct AlphaBetaResult {
  std::vector<PathPoint> grid;
  std::vector<PathPoint> diagonal;
  PathPoint grid_min;
  bool min_at_corner = false;
  /// Largest increase between consecutive diagonal points.
  double max_diagonal_increase = 0.0;
  bool diagonal_monotone = false;
};

/// tr[B B^T (a Sx + b B B^T)^{-1}] + log|a Sx + b B B^T| + log|a Sy|,
/// Sx = V V^T + g I, Sy = W_y V V^T W_y^T + g I.
double cycle_path_value(const AffineCvaeParams& p, const AffineGroundTruth& gt, double alpha, double beta);

/// Evaluates the grid (alphas x betas) and the diagonal alpha = 1 - 0.99 t,
/// beta = 0.99 t for t on a uniform grid of `diagonal_steps` + 1 points.
/// Throws ContractError for alpha < 1e-6.
AlphaBetaResult alpha_beta_path(const AffineCvaeParams& p, const AffineGroundTruth& gt,
                                const std::vector<double>& alphas, const std::vector<double>& betas,
                                int diagonal_steps = 50, double slack = 1e-9);

}  // namespace surjcycle::affine
