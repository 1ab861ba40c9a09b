#pragma once

#include <vector>

#include "surjcycle/numerics/dense.hpp"
#include "surjcycle/numerics/rng.hpp"

namespace surjcycle::affine {

/// x = A y + B u + c and y = D x + e.
struct AffineGroundTruth {
  DenseMatrix a;  // r_x x r_y
  DenseMatrix b;  // r_x x r_u
  DenseVector c;  // r_x
  DenseMatrix d;  // r_y x r_x
  DenseVector e;  // r_y
  Index r_x = 0;
  Index r_y = 0;
  Index r_u = 0;

  /// Largest violation of D A = I, D B = 0 and D c = -e.
  double identity_residual() const;
};

/// Orthonormal frames U_A, U_B with U_A^T U_B = 0; A = U_A R with cond(R) <= 10,
/// B = U_B S with S diagonal in [0.5, 2], D = R^{-1} U_A^T, e = -D c.
/// Throws ContractError unless r_y >= 1, r_u >= 0 and r_y + r_u <= r_x.
AffineGroundTruth make_ground_truth(Index r_x, Index r_y, Index r_u, Rng& rng);

struct AffinePairs {
  DenseMatrix x;  // n x r_x
  DenseMatrix y;  // n x r_y
  DenseMatrix u;  // n x r_u, oracle use only
};

/// Shape parameter k_j of coordinate j of y: y_j is a standardized Beta(1, k_j),
/// k_j = 2 * 4^{j / (r_y - 1)}, so the coordinates have distinct positive skew.
std::vector<double> latent_shapes(Index r_y);

/// Skewness of a Beta(1, k) variable.
double beta1_skewness(double k);

/// y as above, u i.i.d. uniform on [-sqrt 3, sqrt 3]; both zero mean and unit
/// variance. x = A y + B u + c row by row.
AffinePairs sample_pairs(const AffineGroundTruth& gt, Index n, Rng& rng);

/// Population summaries of a sample set (rows are samples), 1/n normalization.
struct DataMoments {
  DenseVector mean;
  DenseMatrix cov;
  /// cov = cov_root * cov_root^T, from a clamped eigendecomposition.
  DenseMatrix cov_root;
  /// Third central moments unfolded along the first mode, d x d^2, with
  /// column index j * d + k. Empty when not requested.
  DenseMatrix third;
  Index count = 0;
  /// Numerical rank of E[x x^T] at 1e-8 * sigma_max.
  Index raw_rank = 0;

  Index dim() const { return mean.size(); }
};

DataMoments compute_moments(const DenseMatrix& samples, bool with_third = true);

/// theta = {W_x, W_y, V_x, b_x, b_y, gamma}, phi = {W_z, b_z, s}. Encoder
/// scales are stored as log s.
struct AffineCvaeParams {
  DenseMatrix w_x;  // r_x x r_y
  DenseMatrix w_y;  // r_y x r_x
  DenseMatrix v_x;  // r_x x r_z
  DenseVector b_x;
  DenseVector b_y;
  double gamma = 1.0;
  DenseMatrix w_z;  // r_z x r_x
  DenseVector b_z;
  DenseVector log_s;

  Index r_x() const { return w_x.rows(); }
  Index r_y() const { return w_x.cols(); }
  Index r_z() const { return v_x.cols(); }
  DenseVector s() const { return log_s.array().exp(); }
  void check_shapes() const;
};

/// Weights i.i.d. normal with std 0.1 / sqrt(fan_in), s = 1, biases 0.
AffineCvaeParams init_params(Index r_x, Index r_y, Index r_z, double gamma, Rng& rng);

/// The global optimum at the given gamma: W_x = A, V_x = [B, 0], b_x = c,
/// W_y = D, b_y = -D c, with the encoder at its closed-form optimum.
AffineCvaeParams planted_optimum(const AffineGroundTruth& gt, Index r_z, double gamma);

}  // namespace surjcycle::affine
