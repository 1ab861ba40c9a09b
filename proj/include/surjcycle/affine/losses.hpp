#pragma once

#include "surjcycle/affine/model.hpp"
#include "surjcycle/numerics/tape.hpp"

namespace surjcycle::affine {

/// Parameters bound to a tape. Biases are column matrices.
struct AffineVars {
  Var w_x, w_y, v_x, b_x, b_y, w_z, b_z, log_s;
  double gamma = 1.0;
};

/// Binds every parameter as a variable when `trainable`, else as constants.
AffineVars bind(Tape& tape, const AffineCvaeParams& params, bool trainable = true);

/// x-cycle CVAE energy with the q(z|x) expectation in closed form:
///   (1/g) E|(I - W_x W_y) x - W_x b_y - b_x - V_x mu_z(x)|^2 + (1/g) sum_k s_k^2 |v_k|^2
///   + d log g + sum_k (s_k^2 - log s_k^2) + E|mu_z(x)|^2,   mu_z(x) = W_z x + b_z.
/// Equals 2 * (gaussian-head ELBO) - d log(2 pi) + r_z.
Var affine_loss_x(const AffineVars& p, const DataMoments& x);
double affine_loss_x(const AffineCvaeParams& p, const DataMoments& x);
/// Same quantity accumulated sample by sample.
double affine_loss_x_samples(const AffineCvaeParams& p, const DenseMatrix& x);

/// y-cycle loss with z integrated out:
///   E[eps^T S^{-1} eps] + log|S|,  eps = (I - W_y W_x) y - (b_y + W_y b_x),
///   S = g I + W_y V_x V_x^T W_y^T.
Var affine_loss_y(const AffineVars& p, const DataMoments& y);
double affine_loss_y(const AffineCvaeParams& p, const DataMoments& y);
double affine_loss_y_samples(const AffineCvaeParams& p, const DenseMatrix& y);

/// Moment matching between y_hat = W_y x + b_y and y:
///   |mean(y_hat) - mean(y)|^2 + |Cov(y_hat) - Cov(y)|_F^2
///   + skew_weight * |T3(y_hat) - T3(y)|_F^2
/// with T3 the third central moment tensor. skew_weight > 0 needs third moments
/// in both moment sets.
Var moment_penalty(const AffineVars& p, const DataMoments& x, const DataMoments& y, double skew_weight = 0.0);
double moment_penalty(const AffineCvaeParams& p, const DataMoments& x, const DataMoments& y,
                      double skew_weight = 0.0);
double moment_penalty_samples(const AffineCvaeParams& p, const DenseMatrix& x, const DenseMatrix& y,
                              double skew_weight = 0.0);

/// s_k = [ |v_k|^2 / g + 1 ]^{-1/2}.
DenseVector optimal_s(const DenseMatrix& v_x, double gamma);

/// (g I + V^T V)^{-1} V^T, the ridge map from the x residual to mu_z.
DenseMatrix ridge_map(const DenseMatrix& v_x, double gamma);

/// mu_z = V^T (g I + V V^T)^{-1} [ (I - W_x W_y) x - W_x b_y - b_x ] per row of x.
DenseMatrix optimal_mu_z(const AffineCvaeParams& p, const DenseMatrix& x);

/// Copy of p with W_z, b_z and log s at their closed-form optima.
AffineCvaeParams with_optimal_encoder(const AffineCvaeParams& p);

struct ReducedLoss {
  /// tr[S R^{-1}] + m^T R^{-1} m + sum_k log(|v_k|^2 + g) + (d - r_z) log g + r_z,
  /// R = V V^T + g I, S the residual covariance, m the residual mean.
  /// Equals affine_loss_x minimized over the encoder.
  double column_norm = 0.0;
  /// Same with sum_k log(|v_k|^2 + g) + (d - r_z) log g replaced by log|R|; the
  /// minimum over the right frame of V. Never above column_norm.
  double lemma = 0.0;
};

ReducedLoss reduced_loss_x(const AffineCvaeParams& p, const DataMoments& x);

/// V P R where V = U S Q^T and R = Q P^T with P the signed permutation closest
/// to Q (assignment on |Q|). The result has orthogonal columns, the same V V^T,
/// and stays close to V when V's columns are already near-orthogonal.
DenseMatrix align_right_frame(const DenseMatrix& v_x);

/// b_y = mean_y - W_y mean_x, then b_x = (I - W_x W_y) mean_x - W_x b_y.
void optimal_biases(const DenseMatrix& w_x, const DenseMatrix& w_y, const DataMoments& x, const DataMoments& y,
                    DenseVector& b_x, DenseVector& b_y);

}  // namespace surjcycle::affine
