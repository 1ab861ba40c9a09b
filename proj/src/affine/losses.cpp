#include "surjcycle/affine/losses.hpp"

#include <cmath>

#include "surjcycle/numerics/assignment.hpp"

namespace surjcycle::affine {
namespace {

DenseMatrix column(const DenseVector& v) { return DenseMatrix(v); }

Var identity(Tape& t, Index n) { return t.constant(DenseMatrix::Identity(n, n)); }

void check_gamma(double gamma) {
  if (!(gamma > 0.0)) throw ContractError("affine loss: gamma must be positive");
}

template <typename F>
double evaluate(const AffineCvaeParams& p, F&& f) {
  p.check_shapes();
  Tape tape;
  return f(bind(tape, p, false)).scalar();
}

}  // namespace

AffineVars bind(Tape& tape, const AffineCvaeParams& p, bool trainable) {
  auto leaf = [&](DenseMatrix m) { return trainable ? tape.variable(std::move(m)) : tape.constant(std::move(m)); };
  AffineVars v;
  v.w_x = leaf(p.w_x);
  v.w_y = leaf(p.w_y);
  v.v_x = leaf(p.v_x);
  v.b_x = leaf(column(p.b_x));
  v.b_y = leaf(column(p.b_y));
  v.w_z = leaf(p.w_z);
  v.b_z = leaf(column(p.b_z));
  v.log_s = leaf(column(p.log_s));
  v.gamma = p.gamma;
  return v;
}

Var affine_loss_x(const AffineVars& p, const DataMoments& x) {
  check_gamma(p.gamma);
  Tape& t = *p.w_x.tape();
  const Index d = p.w_x.rows();
  if (x.dim() != d) throw ShapeError("affine_loss_x: data dim " + std::to_string(x.dim()) + ", model " + std::to_string(d));
  Var root = t.constant(x.cov_root);
  Var mean = t.constant(column(x.mean));

  Var m = identity(t, d) - ad::matmul(p.w_x, p.w_y) - ad::matmul(p.v_x, p.w_z);
  Var offset = -(ad::matmul(p.w_x, p.b_y) + p.b_x + ad::matmul(p.v_x, p.b_z));
  Var residual = ad::squared_norm(ad::matmul(m, root)) + ad::squared_norm(ad::matmul(m, mean) + offset);

  Var s2 = ad::exp(2.0 * p.log_s);
  Var spread = ad::matmul(ad::colwise_sum(ad::square(p.v_x)), s2);
  Var mu = ad::squared_norm(ad::matmul(p.w_z, root)) + ad::squared_norm(ad::matmul(p.w_z, mean) + p.b_z);
  Var prior = ad::sum(s2 - 2.0 * p.log_s);

  return (1.0 / p.gamma) * (residual + spread) + prior + mu + static_cast<double>(d) * std::log(p.gamma);
}

double affine_loss_x(const AffineCvaeParams& p, const DataMoments& x) {
  return evaluate(p, [&](const AffineVars& v) { return affine_loss_x(v, x); });
}

double affine_loss_x_samples(const AffineCvaeParams& p, const DenseMatrix& x) {
  p.check_shapes();
  check_gamma(p.gamma);
  const Index d = p.r_x();
  const DenseMatrix m = DenseMatrix::Identity(d, d) - p.w_x * p.w_y;
  const DenseVector offset = p.w_x * p.b_y + p.b_x;
  const DenseVector s2 = (2.0 * p.log_s).array().exp();
  double acc = 0.0;
  for (Index i = 0; i < x.rows(); ++i) {
    const DenseVector xi = x.row(i).transpose();
    const DenseVector mu = p.w_z * xi + p.b_z;
    acc += (m * xi - offset - p.v_x * mu).squaredNorm() / p.gamma + mu.squaredNorm();
  }
  double constant = static_cast<double>(d) * std::log(p.gamma);
  for (Index k = 0; k < p.r_z(); ++k) {
    constant += s2(k) * p.v_x.col(k).squaredNorm() / p.gamma + s2(k) - std::log(s2(k));
  }
  return acc / static_cast<double>(x.rows()) + constant;
}

Var affine_loss_y(const AffineVars& p, const DataMoments& y) {
  check_gamma(p.gamma);
  Tape& t = *p.w_x.tape();
  const Index r = p.w_y.rows();
  if (y.dim() != r) throw ShapeError("affine_loss_y: data dim " + std::to_string(y.dim()) + ", model " + std::to_string(r));
  Var k = identity(t, r) - ad::matmul(p.w_y, p.w_x);
  Var shift = p.b_y + ad::matmul(p.w_y, p.b_x);
  Var g = ad::hcat(ad::matmul(k, t.constant(y.cov_root)), ad::matmul(k, t.constant(column(y.mean))) - shift);
  Var wv = ad::matmul(p.w_y, p.v_x);
  Var sigma = ad::matmul(wv, ad::transpose(wv)) + t.constant(p.gamma * DenseMatrix::Identity(r, r));
  return ad::sum(ad::hadamard(g, ad::solve_spd(sigma, g))) + ad::logdet_spd(sigma);
}

double affine_loss_y(const AffineCvaeParams& p, const DataMoments& y) {
  return evaluate(p, [&](const AffineVars& v) { return affine_loss_y(v, y); });
}

double affine_loss_y_samples(const AffineCvaeParams& p, const DenseMatrix& y) {
  p.check_shapes();
  check_gamma(p.gamma);
  const Index r = p.r_y();
  const DenseMatrix k = DenseMatrix::Identity(r, r) - p.w_y * p.w_x;
  const DenseVector shift = p.b_y + p.w_y * p.b_x;
  const DenseMatrix wv = p.w_y * p.v_x;
  const SpdFactor<double> sigma(DenseMatrix(wv * wv.transpose() + p.gamma * DenseMatrix::Identity(r, r)));
  double acc = 0.0;
  for (Index i = 0; i < y.rows(); ++i) {
    const DenseVector eps = k * y.row(i).transpose() - shift;
    acc += eps.dot(sigma.solve(eps).col(0));
  }
  return acc / static_cast<double>(y.rows()) + sigma.log_det();
}

Var moment_penalty(const AffineVars& p, const DataMoments& x, const DataMoments& y, double skew_weight) {
  Tape& t = *p.w_y.tape();
  if (x.dim() != p.w_y.cols() || y.dim() != p.w_y.rows()) throw ShapeError("moment_penalty: data dims do not match W_y");
  Var mean_gap = ad::matmul(p.w_y, t.constant(column(x.mean))) + p.b_y - t.constant(column(y.mean));
  Var proj = ad::matmul(p.w_y, t.constant(x.cov_root));
  Var cov_gap = ad::matmul(proj, ad::transpose(proj)) - t.constant(y.cov);
  Var out = ad::squared_norm(mean_gap) + ad::squared_norm(cov_gap);
  if (skew_weight != 0.0) {
    if (x.third.size() == 0 || y.third.size() == 0) throw ContractError("moment_penalty: third moments not computed");
    Var kw = ad::kron(p.w_y, p.w_y);
    Var third = ad::matmul(ad::matmul(p.w_y, t.constant(x.third)), ad::transpose(kw));
    out = out + skew_weight * ad::squared_norm(third - t.constant(y.third));
  }
  return out;
}

double moment_penalty(const AffineCvaeParams& p, const DataMoments& x, const DataMoments& y, double skew_weight) {
  return evaluate(p, [&](const AffineVars& v) { return moment_penalty(v, x, y, skew_weight); });
}

double moment_penalty_samples(const AffineCvaeParams& p, const DenseMatrix& x, const DenseMatrix& y,
                              double skew_weight) {
  DenseMatrix y_hat = x * p.w_y.transpose();
  y_hat.rowwise() += p.b_y.transpose();
  const bool third = skew_weight != 0.0;
  const DataMoments mh = compute_moments(y_hat, third);
  const DataMoments my = compute_moments(y, third);
  double out = (mh.mean - my.mean).squaredNorm() + (mh.cov - my.cov).squaredNorm();
  if (third) out += skew_weight * (mh.third - my.third).squaredNorm();
  return out;
}

DenseVector optimal_s(const DenseMatrix& v_x, double gamma) {
  check_gamma(gamma);
  DenseVector s(v_x.cols());
  for (Index k = 0; k < v_x.cols(); ++k) s(k) = 1.0 / std::sqrt(v_x.col(k).squaredNorm() / gamma + 1.0);
  return s;
}

DenseMatrix ridge_map(const DenseMatrix& v_x, double gamma) {
  check_gamma(gamma);
  const Index r = v_x.cols();
  return solve_spd(DenseMatrix(v_x.transpose() * v_x + gamma * DenseMatrix::Identity(r, r)),
                   DenseMatrix(v_x.transpose()));
}

DenseMatrix optimal_mu_z(const AffineCvaeParams& p, const DenseMatrix& x) {
  p.check_shapes();
  const Index d = p.r_x();
  const DenseMatrix m = DenseMatrix::Identity(d, d) - p.w_x * p.w_y;
  const DenseVector offset = p.w_x * p.b_y + p.b_x;
  DenseMatrix residual = x * m.transpose();
  residual.rowwise() -= offset.transpose();
  return residual * ridge_map(p.v_x, p.gamma).transpose();
}

AffineCvaeParams with_optimal_encoder(const AffineCvaeParams& p) {
  AffineCvaeParams out = p;
  const Index d = p.r_x();
  const DenseMatrix k = ridge_map(p.v_x, p.gamma);
  out.w_z = k * (DenseMatrix::Identity(d, d) - p.w_x * p.w_y);
  out.b_z = -k * (p.w_x * p.b_y + p.b_x);
  out.log_s = optimal_s(p.v_x, p.gamma).array().log();
  out.check_shapes();
  return out;
}

ReducedLoss reduced_loss_x(const AffineCvaeParams& p, const DataMoments& x) {
  p.check_shapes();
  check_gamma(p.gamma);
  const Index d = p.r_x();
  const Index rz = p.r_z();
  const DenseMatrix m = DenseMatrix::Identity(d, d) - p.w_x * p.w_y;
  const DenseMatrix s = m * x.cov * m.transpose();
  const DenseVector mean = m * x.mean - p.w_x * p.b_y - p.b_x;
  const SpdFactor<double> r(DenseMatrix(p.v_x * p.v_x.transpose() + p.gamma * DenseMatrix::Identity(d, d)));
  const double quad = r.solve(s).trace() + mean.dot(r.solve(mean).col(0));

  double columns = static_cast<double>(d - rz) * std::log(p.gamma);
  for (Index k = 0; k < rz; ++k) columns += std::log(p.v_x.col(k).squaredNorm() + p.gamma);

  const double kappa = static_cast<double>(rz);
  return {quad + columns + kappa, quad + r.log_det() + kappa};
}

DenseMatrix align_right_frame(const DenseMatrix& v_x) {
  const Index r = v_x.cols();
  Eigen::JacobiSVD<DenseMatrix> svd(v_x, Eigen::ComputeFullV);
  const DenseMatrix q = svd.matrixV();
  const std::vector<Index> col = min_cost_assignment(-q.cwiseAbs());
  DenseMatrix signed_perm = DenseMatrix::Zero(r, r);
  for (Index i = 0; i < r; ++i) signed_perm(i, col[i]) = q(i, col[i]) < 0.0 ? -1.0 : 1.0;
  return v_x * q * signed_perm.transpose();
}

void optimal_biases(const DenseMatrix& w_x, const DenseMatrix& w_y, const DataMoments& x, const DataMoments& y,
                    DenseVector& b_x, DenseVector& b_y) {
  if (w_y.cols() != x.dim() || w_y.rows() != y.dim() || w_x.rows() != x.dim() || w_x.cols() != y.dim()) {
    throw ShapeError("optimal_biases: parameter and data dims disagree");
  }
  b_y = y.mean - w_y * x.mean;
  b_x = x.mean - w_x * (w_y * x.mean) - w_x * b_y;
}

}  // namespace surjcycle::affine
