#include "surjcycle/affine/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>
#include <cmath>

#include "surjcycle/affine/losses.hpp"

namespace surjcycle::affine {
namespace {

DenseMatrix random_orthogonal(Index n, Rng& rng) {
  Eigen::HouseholderQR<DenseMatrix> qr(rng.normal_matrix(n, n));
  DenseMatrix q = qr.householderQ();
  return q;
}

}  // namespace

double AffineGroundTruth::identity_residual() const {
  const DenseMatrix da = d * a - DenseMatrix::Identity(r_y, r_y);
  double worst = max_abs(da);
  if (r_u > 0) worst = std::max(worst, max_abs(d * b));
  return std::max(worst, max_abs(d * c + e));
}

AffineGroundTruth make_ground_truth(Index r_x, Index r_y, Index r_u, Rng& rng) {
  if (r_y < 1 || r_u < 0 || r_y + r_u > r_x) {
    throw ContractError("make_ground_truth: need r_y >= 1 and r_y + r_u <= r_x, got r_x=" + std::to_string(r_x) +
                        " r_y=" + std::to_string(r_y) + " r_u=" + std::to_string(r_u));
  }
  Eigen::HouseholderQR<DenseMatrix> qr(rng.normal_matrix(r_x, r_y + r_u));
  const DenseMatrix frame = DenseMatrix(qr.householderQ()).leftCols(r_y + r_u);

  // R = U diag(sigma) W^T with sigma in [0.5, 2], so cond(R) <= 4
  const DenseMatrix ur = random_orthogonal(r_y, rng);
  const DenseMatrix wr = random_orthogonal(r_y, rng);
  DenseVector sigma(r_y);
  for (Index i = 0; i < r_y; ++i) sigma(i) = rng.uniform(0.5, 2.0);
  const DenseMatrix r = ur * sigma.asDiagonal() * wr.transpose();

  DenseVector scales(r_u);
  for (Index i = 0; i < r_u; ++i) scales(i) = rng.uniform(0.5, 2.0);

  AffineGroundTruth gt;
  gt.r_x = r_x;
  gt.r_y = r_y;
  gt.r_u = r_u;
  gt.a = frame.leftCols(r_y) * r;
  gt.b = frame.middleCols(r_y, r_u) * scales.asDiagonal();
  gt.c = rng.normal_matrix(r_x, 1);
  gt.d = r.partialPivLu().solve(DenseMatrix(frame.leftCols(r_y).transpose()));
  gt.e = -gt.d * gt.c;
  if (!(gt.identity_residual() <= 1e-10)) {
    throw NumericalError("make_ground_truth: identity residual " + std::to_string(gt.identity_residual()));
  }
  return gt;
}

std::vector<double> latent_shapes(Index r_y) {
  std::vector<double> k(static_cast<std::size_t>(r_y));
  for (Index j = 0; j < r_y; ++j) {
    const double t = r_y > 1 ? static_cast<double>(j) / static_cast<double>(r_y - 1) : 0.0;
    k[static_cast<std::size_t>(j)] = 2.0 * std::pow(4.0, t);
  }
  return k;
}

double beta1_skewness(double k) {
  return 2.0 * (k - 1.0) * std::sqrt(k + 2.0) / ((k + 3.0) * std::sqrt(k));
}

AffinePairs sample_pairs(const AffineGroundTruth& gt, Index n, Rng& rng) {
  if (n < 1) throw ContractError("sample_pairs: n must be at least 1");
  const std::vector<double> shapes = latent_shapes(gt.r_y);
  const double half_width = std::sqrt(3.0);
  AffinePairs out;
  out.y.resize(n, gt.r_y);
  out.u.resize(n, gt.r_u);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < gt.r_y; ++j) {
      // inverse CDF of Beta(1, k), then standardize
      const double k = shapes[static_cast<std::size_t>(j)];
      const double v = 1.0 - std::pow(1.0 - rng.uniform(), 1.0 / k);
      const double mean = 1.0 / (1.0 + k);
      const double sd = std::sqrt(k / ((1.0 + k) * (1.0 + k) * (k + 2.0)));
      out.y(i, j) = (v - mean) / sd;
    }
    for (Index j = 0; j < gt.r_u; ++j) out.u(i, j) = rng.uniform(-half_width, half_width);
  }
  out.x = out.y * gt.a.transpose() + out.u * gt.b.transpose();
  out.x.rowwise() += gt.c.transpose();
  return out;
}

DataMoments compute_moments(const DenseMatrix& samples, bool with_third) {
  if (samples.rows() == 0) throw ContractError("compute_moments: no samples");
  const Index n = samples.rows();
  const Index d = samples.cols();
  const double inv_n = 1.0 / static_cast<double>(n);
  DataMoments m;
  m.count = n;
  m.mean = samples.colwise().mean().transpose();
  DenseMatrix centered = samples.rowwise() - m.mean.transpose();
  m.cov = inv_n * (centered.transpose() * centered);
  m.cov = 0.5 * (m.cov + m.cov.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<DenseMatrix> eig(m.cov);
  const DenseVector roots = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  m.cov_root = eig.eigenvectors() * roots.asDiagonal();

  if (with_third) {
    m.third.resize(d, d * d);
    for (Index i = 0; i < d; ++i) {
      const DenseMatrix weighted = centered.array().colwise() * centered.col(i).array();
      const DenseMatrix slab = inv_n * (weighted.transpose() * centered);
      m.third.row(i) = Eigen::Map<const DenseRowVector>(slab.data(), d * d);
    }
  }
  m.raw_rank = numerical_rank(DenseMatrix(inv_n * (samples.transpose() * samples)));
  return m;
}

void AffineCvaeParams::check_shapes() const {
  const Index rx = r_x(), ry = r_y(), rz = r_z();
  const bool ok = w_y.rows() == ry && w_y.cols() == rx && v_x.rows() == rx && b_x.size() == rx &&
                  b_y.size() == ry && w_z.rows() == rz && w_z.cols() == rx && b_z.size() == rz &&
                  log_s.size() == rz;
  if (!ok) throw ShapeError("AffineCvaeParams: inconsistent shapes");
  if (!(gamma > 0.0)) throw ContractError("AffineCvaeParams: gamma must be positive");
}

AffineCvaeParams init_params(Index r_x, Index r_y, Index r_z, double gamma, Rng& rng) {
  auto fan = [](Index n) { return 0.1 / std::sqrt(static_cast<double>(std::max<Index>(n, 1))); };
  AffineCvaeParams p;
  p.w_x = rng.normal_matrix(r_x, r_y, fan(r_y));
  p.w_y = rng.normal_matrix(r_y, r_x, fan(r_x));
  p.v_x = rng.normal_matrix(r_x, r_z, fan(r_z));
  p.w_z = rng.normal_matrix(r_z, r_x, fan(r_x));
  p.b_x = DenseVector::Zero(r_x);
  p.b_y = DenseVector::Zero(r_y);
  p.b_z = DenseVector::Zero(r_z);
  p.log_s = DenseVector::Zero(r_z);
  p.gamma = gamma;
  p.check_shapes();
  return p;
}

AffineCvaeParams planted_optimum(const AffineGroundTruth& gt, Index r_z, double gamma) {
  if (r_z < gt.r_u) throw ContractError("planted_optimum: r_z must be at least r_u");
  AffineCvaeParams p;
  p.w_x = gt.a;
  p.w_y = gt.d;
  p.v_x = DenseMatrix::Zero(gt.r_x, r_z);
  p.v_x.leftCols(gt.r_u) = gt.b;
  p.b_x = gt.c;
  p.b_y = -gt.d * gt.c;
  p.gamma = gamma;
  p.w_z = DenseMatrix::Zero(r_z, gt.r_x);
  p.b_z = DenseVector::Zero(r_z);
  p.log_s = DenseVector::Zero(r_z);
  return with_optimal_encoder(p);
}

}  // namespace surjcycle::affine
