#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <sstream>

#include <Eigen/LU>
#include <Eigen/QR>

#include "surjcycle/affine/losses.hpp"
#include "surjcycle/affine/train.hpp"
#include "surjcycle/affine/verify.hpp"
#include "surjcycle/cvae/cvae.hpp"
#include "surjcycle/numerics/grad_check.hpp"
#include "surjcycle/numerics/optim.hpp"

using namespace surjcycle;
using namespace surjcycle::affine;

namespace {

struct Fixture {
  AffineGroundTruth gt;
  AffinePairs pairs;
  DataMoments mx, my;
};

// r_x=12, r_y=4, r_u=3 at n = 1e5, shared across cases.
const Fixture& default_system() {
  static const Fixture f = [] {
    Fixture out;
    Rng rng(11);
    out.gt = make_ground_truth(12, 4, 3, rng);
    Rng data = rng.split(1);
    out.pairs = sample_pairs(out.gt, 100000, data);
    out.mx = compute_moments(out.pairs.x);
    out.my = compute_moments(out.pairs.y);
    return out;
  }();
  return f;
}

AffineCvaeParams random_params(Index r_x, Index r_y, Index r_z, double gamma, Rng& rng, double scale = 0.4) {
  AffineCvaeParams p;
  p.w_x = rng.normal_matrix(r_x, r_y, scale);
  p.w_y = rng.normal_matrix(r_y, r_x, scale);
  p.v_x = rng.normal_matrix(r_x, r_z, scale);
  p.b_x = rng.normal_matrix(r_x, 1, scale).col(0);
  p.b_y = rng.normal_matrix(r_y, 1, scale).col(0);
  p.w_z = rng.normal_matrix(r_z, r_x, scale);
  p.b_z = rng.normal_matrix(r_z, 1, scale).col(0);
  p.log_s = rng.normal_matrix(r_z, 1, 0.3).col(0);
  p.gamma = gamma;
  return p;
}

std::vector<DenseMatrix> leaves_of(const AffineCvaeParams& p) {
  return {p.w_x, p.w_y, p.v_x, DenseMatrix(p.b_x), DenseMatrix(p.b_y), p.w_z, DenseMatrix(p.b_z), DenseMatrix(p.log_s)};
}

AffineVars vars_of(std::span<const Var> v, double gamma) {
  return {v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7], gamma};
}

double pearson(const DenseVector& a, const DenseVector& b) {
  const DenseVector ca = a.array() - a.mean();
  const DenseVector cb = b.array() - b.mean();
  return ca.dot(cb) / (ca.norm() * cb.norm());
}

// Root of an increasing f on [lo, hi].
template <typename F>
double bisect(F f, double lo, double hi, int iters = 200) {
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

// V with orthogonal columns of distinct norms.
DenseMatrix orthogonal_columns(Index rows, Index cols, Rng& rng) {
  Eigen::HouseholderQR<DenseMatrix> qr(rng.normal_matrix(rows, cols));
  DenseMatrix q = qr.householderQ() * DenseMatrix::Identity(rows, cols);
  for (Index k = 0; k < cols; ++k) q.col(k) *= 0.3 + 0.5 * static_cast<double>(k);
  return q;
}

}  // namespace

TEST_CASE("ground truth construction") {
  SUBCASE("identities hold for many draws and shapes") {
    Rng rng(1);
    const Index shapes[][3] = {{3, 1, 1}, {12, 4, 3}, {8, 5, 0}, {20, 6, 10}};
    for (const auto& s : shapes) {
      for (int rep = 0; rep < 5; ++rep) {
        const AffineGroundTruth gt = make_ground_truth(s[0], s[1], s[2], rng);
        CHECK((gt.d * gt.a - DenseMatrix::Identity(s[1], s[1])).cwiseAbs().maxCoeff() <= 1e-10);
        if (s[2] > 0) CHECK((gt.d * gt.b).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((gt.d * gt.c + gt.e).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK(gt.identity_residual() <= 1e-10);
        Eigen::JacobiSVD<DenseMatrix> svd(gt.a);
        const DenseVector sv = svd.singularValues();
        CHECK(sv(0) / sv(sv.size() - 1) <= 10.0 + 1e-9);
        if (s[2] > 0) {
          Eigen::JacobiSVD<DenseMatrix> svd_b(gt.b);
          CHECK(svd_b.singularValues().maxCoeff() <= 2.0 + 1e-12);
          CHECK(svd_b.singularValues().minCoeff() >= 0.5 - 1e-12);
          CHECK((gt.a.transpose() * gt.b).cwiseAbs().maxCoeff() <= 1e-10);
        }
      }
    }
  }
  SUBCASE("infeasible ranks") {
    Rng rng(2);
    CHECK_THROWS_AS(make_ground_truth(5, 3, 3, rng), ContractError);
    CHECK_THROWS_AS(make_ground_truth(5, 0, 2, rng), ContractError);
  }
  SUBCASE("sample ranks") {
    const Fixture& f = default_system();
    // raw second moment carries the mean direction too
    CHECK(f.mx.raw_rank == 8);
    CHECK(numerical_rank(f.mx.cov) == 7);
  }
}

TEST_CASE("sample_pairs") {
  const Fixture& f = default_system();
  const AffinePairs& s = f.pairs;
  SUBCASE("D x + e returns y") {
    DenseMatrix y = s.x * f.gt.d.transpose();
    y.rowwise() += f.gt.e.transpose();
    CHECK((y - s.y).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("x rebuilt from y and u") {
    DenseMatrix x = s.y * f.gt.a.transpose() + s.u * f.gt.b.transpose();
    x.rowwise() += f.gt.c.transpose();
    CHECK((x - s.x).cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("latents whitened and uncorrelated") {
    CHECK((f.my.cov - DenseMatrix::Identity(4, 4)).cwiseAbs().maxCoeff() <= 0.05);
    const DataMoments mu = compute_moments(s.u, false);
    CHECK((mu.cov - DenseMatrix::Identity(3, 3)).cwiseAbs().maxCoeff() <= 0.05);
    double worst = 0.0;
    for (Index i = 0; i < 4; ++i) {
      for (Index j = 0; j < 3; ++j) worst = std::max(worst, std::abs(pearson(s.y.col(i), s.u.col(j))));
    }
    CHECK(worst <= 0.02);
  }
  SUBCASE("coordinate skews match the Beta(1,k) shapes") {
    const std::vector<double> k = latent_shapes(4);
    for (Index j = 0; j < 4; ++j) {
      // Beta(1,k) has density k(1-t)^{k-1}; central moments by integration
      const double kj = k[static_cast<std::size_t>(j)];
      const int grid = 200000;
      double m1 = 0.0, m2 = 0.0, m3 = 0.0;
      for (int pass = 0; pass < 2; ++pass) {
        double acc2 = 0.0, acc3 = 0.0, acc1 = 0.0;
        for (int i = 0; i < grid; ++i) {
          const double t = (i + 0.5) / grid;
          const double w = kj * std::pow(1.0 - t, kj - 1.0) / grid;
          acc1 += w * t;
          acc2 += w * (t - m1) * (t - m1);
          acc3 += w * std::pow(t - m1, 3);
        }
        m1 = pass == 0 ? acc1 : m1;
        m2 = acc2;
        m3 = acc3;
      }
      const double skew = m3 / std::pow(m2, 1.5);
      CHECK(beta1_skewness(kj) == doctest::Approx(skew).epsilon(1e-4));
      const double sample_skew = f.my.third(j, j * 4 + j) / std::pow(f.my.cov(j, j), 1.5);
      CHECK(sample_skew == doctest::Approx(skew).epsilon(0.05));
    }
    const DenseVector u0 = s.u.col(0);
    CHECK(u0.maxCoeff() <= std::sqrt(3.0));
    CHECK(u0.minCoeff() >= -std::sqrt(3.0));
  }
}

TEST_CASE("affine_loss_x") {
  const Fixture& f = default_system();
  SUBCASE("all quadratics vanish") {
    AffineCvaeParams p;
    p.w_x = DenseMatrix::Zero(6, 6);
    p.w_x.diagonal().setOnes();
    p.w_y = DenseMatrix::Identity(6, 6);
    p.v_x = DenseMatrix::Zero(6, 4);
    p.b_x = DenseVector::Zero(6);
    p.b_y = DenseVector::Zero(6);
    p.w_z = DenseMatrix::Zero(4, 6);
    p.b_z = DenseVector::Zero(4);
    p.log_s = DenseVector::Zero(4);
    p.gamma = 1.0;
    Rng rng(3);
    const DenseMatrix x = rng.normal_matrix(50, 6);
    CHECK(affine_loss_x(p, compute_moments(x, false)) == doctest::Approx(4.0).epsilon(1e-14));
    CHECK(affine_loss_x_samples(p, x) == doctest::Approx(4.0).epsilon(1e-14));
  }
  SUBCASE("moment and per-sample routes agree") {
    Rng rng(4);
    const DenseMatrix x = f.pairs.x.topRows(2000);
    const DataMoments m = compute_moments(x, false);
    for (int rep = 0; rep < 10; ++rep) {
      const AffineCvaeParams p = random_params(12, 4, 6, 0.05 + 0.3 * rep, rng);
      CHECK(affine_loss_x(p, m) == doctest::Approx(affine_loss_x_samples(p, x)).epsilon(1e-10));
    }
  }
  SUBCASE("non-positive gamma") {
    Rng rng(5);
    AffineCvaeParams p = random_params(12, 4, 6, 0.1, rng);
    p.gamma = 0.0;
    CHECK_THROWS_AS(affine_loss_x(p, f.mx), ContractError);
  }
  SUBCASE("Monte Carlo ELBO with a gaussian head") {
    Rng rng(6);
    const AffineCvaeParams p = random_params(12, 4, 6, 0.7, rng);
    const DenseMatrix x = f.pairs.x.topRows(100);
    cvae::FunctionForward forward([&](Var v) {
      Tape& t = *v.tape();
      return ad::add_row(ad::matmul(v, t.constant(p.w_y.transpose())), t.constant(p.b_y.transpose()));
    });
    cvae::FunctionInverse inverse(
        [&](Var y, Var z) {
          Tape& t = *y.tape();
          Var out = ad::matmul(y, t.constant(p.w_x.transpose())) + ad::matmul(z, t.constant(p.v_x.transpose()));
          return ad::add_row(out, t.constant(p.b_x.transpose()));
        },
        6);
    cvae::FunctionEncoder encoder([&](Var v) {
      Tape& t = *v.tape();
      Var mu = ad::add_row(ad::matmul(v, t.constant(p.w_z.transpose())), t.constant(p.b_z.transpose()));
      return cvae::Posterior{mu, t.constant(DenseMatrix(p.log_s.transpose()))};
    });
    cvae::CycleModel model;
    model.forward = &forward;
    model.inverse = &inverse;
    model.encoder = &encoder;
    model.x_head = cvae::LikelihoodHead::gaussian(p.gamma);
    model.y_head = cvae::LikelihoodHead::gaussian(p.gamma);

    // 40 batches of 250 draws = 1e4 draws per row
    std::vector<double> batches;
    Rng draws(7);
    for (int b = 0; b < 40; ++b) {
      Tape t;
      const double elbo = cvae::elbo_loss_x(t, x, model, 250, draws).total.scalar();
      batches.push_back(2.0 * elbo - 12.0 * std::log(2.0 * std::numbers::pi) + 6.0);
    }
    const double mean = std::accumulate(batches.begin(), batches.end(), 0.0) / batches.size();
    double var = 0.0;
    for (double v : batches) var += (v - mean) * (v - mean);
    const double se = std::sqrt(var / (batches.size() - 1) / batches.size());
    const double exact = affine_loss_x_samples(p, x);
    CHECK(std::abs(mean - exact) <= 3.0 * se);
    CHECK(se < 0.05 * std::abs(exact));
  }
}

TEST_CASE("affine_loss_y") {
  const Fixture& f = default_system();
  SUBCASE("exact inverse gives r_y log gamma") {
    AffineCvaeParams p = planted_optimum(f.gt, 6, 0.3);
    p.v_x.setZero();
    CHECK(affine_loss_y(p, f.my) == doctest::Approx(4.0 * std::log(0.3)).epsilon(1e-9));
  }
  SUBCASE("V_x = 0 and gamma = 1 give the mean squared residual") {
    Rng rng(8);
    AffineCvaeParams p = random_params(12, 4, 6, 1.0, rng);
    p.v_x.setZero();
    const DenseMatrix k = DenseMatrix::Identity(4, 4) - p.w_y * p.w_x;
    DenseMatrix eps = f.pairs.y * k.transpose();
    eps.rowwise() -= (p.b_y + p.w_y * p.b_x).transpose();
    const double expected = eps.squaredNorm() / static_cast<double>(eps.rows());
    CHECK(affine_loss_y(p, f.my) == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("moment and per-sample routes agree") {
    Rng rng(9);
    const DenseMatrix y = f.pairs.y.topRows(2000);
    const DataMoments m = compute_moments(y, false);
    for (int rep = 0; rep < 10; ++rep) {
      const AffineCvaeParams p = random_params(12, 4, 6, 0.05 + 0.2 * rep, rng);
      CHECK(affine_loss_y(p, m) == doctest::Approx(affine_loss_y_samples(p, y)).epsilon(1e-10));
    }
  }
}

TEST_CASE("moment_penalty") {
  const Fixture& f = default_system();
  SUBCASE("plug-in of D sits at the sampling floor") {
    AffineCvaeParams p = planted_optimum(f.gt, 6, 0.1);
    CHECK(moment_penalty(p, f.mx, f.my) <= 1e-20);
    CHECK(moment_penalty(p, f.mx, f.my, 1.0) <= 1e-20);
    // independent samples of y against x
    Rng other(77);
    const AffinePairs fresh = sample_pairs(f.gt, 100000, other);
    CHECK(moment_penalty(p, f.mx, compute_moments(fresh.y)) <= 0.01);
  }
  SUBCASE("W_y = 0 leaves the y moments") {
    AffineCvaeParams p = planted_optimum(f.gt, 6, 0.1);
    p.w_y.setZero();
    p.b_y.setZero();
    const double expected = f.my.mean.squaredNorm() + f.my.cov.squaredNorm();
    CHECK(moment_penalty(p, f.mx, f.my) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(expected == doctest::Approx(4.0).epsilon(0.05));
  }
  SUBCASE("moment and per-sample routes agree") {
    Rng rng(10);
    const DenseMatrix x = f.pairs.x.topRows(3000);
    const DenseMatrix y = f.pairs.y.bottomRows(3000);
    const DataMoments mx = compute_moments(x), my = compute_moments(y);
    for (int rep = 0; rep < 5; ++rep) {
      const AffineCvaeParams p = random_params(12, 4, 6, 0.1, rng);
      CHECK(moment_penalty(p, mx, my, 0.7) == doctest::Approx(moment_penalty_samples(p, x, y, 0.7)).epsilon(1e-9));
    }
  }
  SUBCASE("skew term needs third moments") {
    const AffineCvaeParams p = planted_optimum(f.gt, 6, 0.1);
    const DataMoments bare = compute_moments(f.pairs.y.topRows(100), false);
    CHECK_THROWS_AS(moment_penalty(p, f.mx, bare, 1.0), ContractError);
  }
}

TEST_CASE("gradients of the affine losses") {
  const Fixture& f = default_system();
  const DataMoments mx = compute_moments(f.pairs.x.topRows(500));
  const DataMoments my = compute_moments(f.pairs.y.topRows(500));
  Rng rng(12);
  for (int point = 0; point < 10; ++point) {
    const double gamma = 0.05 + 0.1 * point;
    const AffineCvaeParams p = random_params(12, 4, 6, gamma, rng);
    const std::vector<DenseMatrix> leaves = leaves_of(p);
    CAPTURE(point);
    const auto rx = grad_check(
        [&](Tape&, std::span<const Var> v) { return affine_loss_x(vars_of(v, gamma), mx); }, leaves);
    CHECK(rx.passed);
    const auto ry = grad_check(
        [&](Tape&, std::span<const Var> v) { return affine_loss_y(vars_of(v, gamma), my); }, leaves);
    CHECK(ry.passed);
    const auto rp = grad_check(
        [&](Tape&, std::span<const Var> v) { return moment_penalty(vars_of(v, gamma), mx, my, 1.0); }, leaves);
    CHECK(rp.passed);
  }
}

TEST_CASE("optimal_s") {
  SUBCASE("closed-form cases") {
    DenseMatrix v = DenseMatrix::Zero(5, 2);
    v(0, 1) = std::sqrt(0.2);
    const DenseVector s = optimal_s(v, 0.2);
    CHECK(s(0) == 1.0);
    CHECK(s(1) * s(1) == doctest::Approx(0.5).epsilon(1e-15));
  }
  SUBCASE("one-dimensional minimization of the x loss") {
    // the loss is flat at its minimum, so locate the zero of its slope in s_k
    const Fixture& f = default_system();
    Rng rng(13);
    for (int rep = 0; rep < 10; ++rep) {
      AffineCvaeParams p = random_params(12, 4, 6, 0.02 + 0.1 * rep, rng);
      const DenseVector s = optimal_s(p.v_x, p.gamma);
      for (Index k = 0; k < 6; ++k) {
        const double best = bisect(
            [&](double sk) {
              AffineCvaeParams q = p;
              q.log_s(k) = std::log(sk);
              Tape t;
              AffineVars v = bind(t, q, true);
              Var loss = affine_loss_x(v, f.mx);
              t.backward(loss);
              return v.log_s.grad()(k, 0);
            },
            1e-6, 2.0);
        CHECK(best == doctest::Approx(s(k)).epsilon(1e-8));
      }
    }
  }
}

TEST_CASE("optimal_mu_z") {
  const Fixture& f = default_system();
  Rng rng(14);
  SUBCASE("V_x = 0 gives zero") {
    AffineCvaeParams p = random_params(12, 4, 6, 0.1, rng);
    p.v_x.setZero();
    CHECK(optimal_mu_z(p, f.pairs.x.topRows(10)).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("stacked least squares oracle") {
    for (int rep = 0; rep < 10; ++rep) {
      const AffineCvaeParams p = random_params(12, 4, 6, 0.05 + 0.1 * rep, rng);
      const DenseMatrix x = f.pairs.x.middleRows(100 * rep, 20);
      const DenseMatrix mu = optimal_mu_z(p, x);
      // min |r - V mu|^2 / g + |mu|^2  <=>  least squares on [V / sqrt g; I]
      DenseMatrix stacked(12 + 6, 6);
      stacked << p.v_x / std::sqrt(p.gamma), DenseMatrix::Identity(6, 6);
      const DenseMatrix m = DenseMatrix::Identity(12, 12) - p.w_x * p.w_y;
      for (Index i = 0; i < x.rows(); ++i) {
        const DenseVector r = m * x.row(i).transpose() - p.w_x * p.b_y - p.b_x;
        DenseVector rhs = DenseVector::Zero(18);
        rhs.head(12) = r / std::sqrt(p.gamma);
        const DenseVector oracle = stacked.colPivHouseholderQr().solve(rhs);
        CHECK((mu.row(i).transpose() - oracle).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, oracle.norm()));
      }
    }
  }
  SUBCASE("Woodbury form") {
    for (int rep = 0; rep < 5; ++rep) {
      const DenseMatrix v = rng.normal_matrix(12, 6);
      const double g = 0.01 + 0.2 * rep;
      const DenseMatrix left =
          v.transpose() * DenseMatrix(g * DenseMatrix::Identity(12, 12) + v * v.transpose()).inverse();
      CHECK((left - ridge_map(v, g)).cwiseAbs().maxCoeff() <= 1e-10);
    }
  }
}

TEST_CASE("reduced_loss_x") {
  const Fixture& f = default_system();
  Rng rng(15);
  SUBCASE("substitution of the encoder optimum") {
    for (int rep = 0; rep < 10; ++rep) {
      AffineCvaeParams p = random_params(12, 4, 6, 0.02 + 0.1 * rep, rng);
      p.v_x = align_right_frame(p.v_x);
      const double substituted = affine_loss_x(with_optimal_encoder(p), f.mx);
      const ReducedLoss r = reduced_loss_x(p, f.mx);
      CHECK(r.column_norm == doctest::Approx(substituted).epsilon(1e-8));
      CHECK(r.lemma == doctest::Approx(substituted).epsilon(1e-8));
    }
  }
  SUBCASE("alignment keeps V V^T") {
    const DenseMatrix v = rng.normal_matrix(12, 6);
    const DenseMatrix a = align_right_frame(v);
    CHECK((a * a.transpose() - v * v.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    const DenseMatrix gram = a.transpose() * a;
    CHECK((gram - DenseMatrix(gram.diagonal().asDiagonal())).cwiseAbs().maxCoeff() <= 1e-10);
  }
  SUBCASE("V_x = 0 collapse") {
    AffineCvaeParams p = random_params(12, 4, 6, 0.3, rng);
    p.v_x.setZero();
    const DenseMatrix m = DenseMatrix::Identity(12, 12) - p.w_x * p.w_y;
    const DenseVector mean = m * f.mx.mean - p.w_x * p.b_y - p.b_x;
    const double expected =
        ((m * f.mx.cov * m.transpose()).trace() + mean.squaredNorm()) / p.gamma + 12.0 * std::log(p.gamma) + 6.0;
    CHECK(reduced_loss_x(p, f.mx).column_norm == doctest::Approx(expected).epsilon(1e-12));
  }
  SUBCASE("the two forms") {
    for (int rep = 0; rep < 10; ++rep) {
      AffineCvaeParams p = random_params(12, 4, 6, 0.05 + 0.1 * rep, rng);
      const ReducedLoss general = reduced_loss_x(p, f.mx);
      CHECK(general.column_norm >= general.lemma - 1e-10);
      p.v_x = orthogonal_columns(12, 6, rng);
      const ReducedLoss ortho = reduced_loss_x(p, f.mx);
      CHECK(std::abs(ortho.column_norm - ortho.lemma) <= 1e-9);
    }
  }
  SUBCASE("numeric minimization over the encoder") {
    for (int rep = 0; rep < 10; ++rep) {
      AffineCvaeParams p = random_params(12, 4, 6, 0.2 + 0.1 * rep, rng);
      p.v_x = orthogonal_columns(12, 6, rng);
      std::vector<DenseMatrix> phi{p.w_z, DenseMatrix(p.b_z), DenseMatrix(p.log_s)};
      std::vector<DenseMatrix*> handles{&phi[0], &phi[1], &phi[2]};
      Adam adam(AdamConfig{.lr = 3e-2});
      const long steps = 5000;
      double value = 0.0;
      for (long it = 0; it <= steps; ++it) {
        Tape t;
        AffineVars v = bind(t, p, false);
        v.w_z = t.variable(phi[0]);
        v.b_z = t.variable(phi[1]);
        v.log_s = t.variable(phi[2]);
        Var loss = affine_loss_x(v, f.mx);
        value = loss.scalar();
        if (it == steps) break;
        t.backward(loss);
        std::vector<DenseMatrix> g{v.w_z.grad(), v.b_z.grad(), v.log_s.grad()};
        adam.set_lr(3e-2 * std::pow(1e-3, static_cast<double>(it) / steps));
        adam.step(handles, g);
      }
      CAPTURE(rep);
      CHECK(std::abs(value - reduced_loss_x(p, f.mx).column_norm) <= 1e-4);
      const DenseVector s = phi[2].col(0).array().exp();
      CHECK((s - optimal_s(p.v_x, p.gamma)).cwiseAbs().maxCoeff() <= 1e-3);
    }
  }
}

TEST_CASE("optimal_biases") {
  const Fixture& f = default_system();
  SUBCASE("zero-mean data with an exact inverse") {
    Rng rng(16);
    DenseMatrix x = rng.normal_matrix(200, 5);
    x.rowwise() -= x.colwise().mean();
    DenseMatrix y = rng.normal_matrix(200, 5);
    y.rowwise() -= y.colwise().mean();
    const DenseMatrix w = rng.normal_matrix(5, 5) + 3.0 * DenseMatrix::Identity(5, 5);
    DenseVector b_x, b_y;
    optimal_biases(w, w.inverse(), compute_moments(x, false), compute_moments(y, false), b_x, b_y);
    CHECK(b_x.cwiseAbs().maxCoeff() <= 1e-12);
  }
  SUBCASE("planted weights recover c and -D c") {
    DenseVector b_x, b_y;
    optimal_biases(f.gt.a, f.gt.d, f.mx, f.my, b_x, b_y);
    CHECK((b_x - f.gt.c).norm() <= 0.05 * f.gt.c.norm());
    CHECK((b_y + f.gt.d * f.gt.c).norm() <= 0.05);
  }
  SUBCASE("stationary in the bias gradient") {
    Rng rng(17);
    AffineCvaeParams p = random_params(12, 4, 6, 0.3, rng);
    p.v_x.setZero();
    p.w_z.setZero();
    p.b_z.setZero();
    optimal_biases(p.w_x, p.w_y, f.mx, f.my, p.b_x, p.b_y);
    Tape t;
    AffineVars v = bind(t, p, true);
    Var total = affine_loss_x(v, f.mx) + moment_penalty(v, f.mx, f.my);
    t.backward(total);
    CHECK(v.b_x.grad().cwiseAbs().maxCoeff() <= 1e-9);
    CHECK(v.b_y.grad().cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("verify_recovery") {
  const Fixture& f = default_system();
  SUBCASE("planted optimum") {
    const RecoveryReport r = verify_recovery(planted_optimum(f.gt, 6, 1e-4), f.gt, 0.05);
    CHECK(r.passed());
    CHECK(r.checks.size() == 6);
    for (const Check& c : r.checks) CHECK(c.residual <= 1e-10);
    CHECK_FALSE(r.symmetry_only);
  }
  SUBCASE("random init") {
    Rng rng(18);
    const RecoveryReport r = verify_recovery(init_params(12, 4, 6, 0.1, rng), f.gt, 0.05);
    CHECK_FALSE(r.passed());
    CHECK(r.at("wx_vs_a").residual >= 0.5);
    CHECK(r.at("vvt_vs_bbt").residual >= 0.5);
    CHECK(r.at("wy_a_identity").residual >= 0.5);
    CHECK(r.at("bx_vs_c").residual >= 0.5);
  }
  SUBCASE("latent permutation is reported as symmetry") {
    AffineCvaeParams p = planted_optimum(f.gt, 6, 1e-4);
    DenseMatrix perm = DenseMatrix::Zero(4, 4);
    perm(0, 1) = perm(1, 0) = perm(3, 3) = 1.0;
    perm(2, 2) = -1.0;
    p.w_x = p.w_x * perm;
    p.w_y = perm.transpose() * p.w_y;
    p.b_y = perm.transpose() * p.b_y;
    const RecoveryReport r = verify_recovery(p, f.gt, 0.05);
    CHECK_FALSE(r.passed());
    CHECK(r.wx_aligned_residual <= 1e-10);
    CHECK(r.symmetry_only);
  }
  SUBCASE("unknown check name") {
    const RecoveryReport r = verify_recovery(planted_optimum(f.gt, 6, 1e-4), f.gt, 0.05);
    CHECK_THROWS_AS(r.at("nope"), ContractError);
  }
}

TEST_CASE("verify_pruning_bijection") {
  const Fixture& f = default_system();
  const DenseMatrix held = f.pairs.x.topRows(1000);
  SUBCASE("exact optimum") {
    const RecoveryReport r = verify_pruning_bijection(planted_optimum(f.gt, 6, 1e-14), f.gt, held, 0.05);
    CHECK(r.passed());
    CHECK(r.active_dims.size() == 3);
    CHECK(r.at("round_trip").residual <= 1e-8);
    CHECK(r.at("inactive_s_prior").residual <= 1e-12);
  }
  SUBCASE("no slack dimensions") {
    const RecoveryReport r = verify_pruning_bijection(planted_optimum(f.gt, 3, 1e-14), f.gt, held, 0.05);
    CHECK(r.passed());
    CHECK(r.active_dims.size() == 3);
  }
  SUBCASE("an extra active row fails the count") {
    AffineCvaeParams p = planted_optimum(f.gt, 6, 1e-14);
    p.w_z.row(5).setConstant(1.0);
    CHECK_FALSE(verify_pruning_bijection(p, f.gt, held, 0.05).at("active_count").passed);
  }
}

TEST_CASE("alpha-beta path") {
  const Fixture& f = default_system();
  const AffineCvaeParams p = planted_optimum(f.gt, 6, 1e-4);
  SUBCASE("grid minimum at the corner and monotone diagonal") {
    const AlphaBetaResult r = alpha_beta_path(p, f.gt, {1.0, 0.1, 0.01}, {0.0, 0.5, 0.99});
    CHECK(r.grid.size() == 9);
    CHECK(r.min_at_corner);
    CHECK(r.grid_min.alpha == 0.01);
    CHECK(r.grid_min.beta == 0.99);
    CHECK(r.diagonal.size() == 51);
    CHECK(r.diagonal_monotone);
  }
  SUBCASE("alpha = 1, beta = 0 is the cycle value at the point") {
    const DenseMatrix bbt = f.gt.b * f.gt.b.transpose();
    const DenseMatrix sx = p.v_x * p.v_x.transpose() + p.gamma * DenseMatrix::Identity(12, 12);
    const DenseMatrix sy = p.w_y * p.v_x * p.v_x.transpose() * p.w_y.transpose() + p.gamma * DenseMatrix::Identity(4, 4);
    const double expected = (sx.inverse() * bbt).trace() + std::log(sx.determinant()) + std::log(sy.determinant());
    CHECK(cycle_path_value(p, f.gt, 1.0, 0.0) == doctest::Approx(expected).epsilon(1e-9));
  }
  SUBCASE("alpha must stay away from zero") {
    CHECK_THROWS_AS(cycle_path_value(p, f.gt, 0.0, 1.0), ContractError);
    CHECK_NOTHROW(cycle_path_value(p, f.gt, 1e-6, 1.0));
  }
}

TEST_CASE("train_affine") {
  Rng rng(19);
  const AffineGroundTruth gt = make_ground_truth(6, 2, 2, rng);
  Rng data = rng.split(1);
  const AffinePairs pairs = sample_pairs(gt, 5000, data);
  AffineTrainConfig cfg;
  cfg.r_z = 3;
  cfg.iters = 300;
  cfg.screen_iters = 100;
  cfg.restarts = 2;
  cfg.presolve_starts = 3;
  cfg.presolve_iters = 100;
  cfg.checkpoint_every = 50;
  cfg.seed = 5;

  SUBCASE("same seed, same trace") {
    const AffineTrainResult a = train_affine(pairs.x, pairs.y, cfg);
    const AffineTrainResult b = train_affine(pairs.x, pairs.y, cfg);
    std::ostringstream sa, sb;
    a.trace.write_csv(sa);
    b.trace.write_csv(sb);
    CHECK(sa.str() == sb.str());
    CHECK((a.params.w_x - b.params.w_x).cwiseAbs().maxCoeff() == 0.0);
    CHECK(sa.str().rfind("# surjcycle-v1\niter,loss_x,loss_y,penalty,gamma,vx_norm_0,vx_norm_1,vx_norm_2\n", 0) == 0);
    CHECK(a.screen_objectives.size() == 2);
    CHECK(a.presolve_penalties.size() == 3);
    // screening rows then anneal rows ending at the last iteration
    CHECK(a.trace.rows.back().iter == cfg.screen_iters + cfg.iters);
    CHECK(a.params.gamma == doctest::Approx(cfg.gamma_end).epsilon(1e-12));
  }
  SUBCASE("gamma and lambda schedules") {
    CHECK(gamma_at(cfg, 0) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(gamma_at(cfg, 225) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(gamma_at(cfg, 300) == doctest::Approx(1e-4).epsilon(1e-12));
    CHECK(gamma_at(cfg, 75) == doctest::Approx(1e-1 * std::pow(1e-3, 1.0 / 3.0)).epsilon(1e-12));
    CHECK(lambda_at(cfg, 0) == doctest::Approx(10.0).epsilon(1e-15));
    CHECK(lambda_at(cfg, 100) == doctest::Approx(1e5).epsilon(1e-12));
  }
  SUBCASE("r_z below the required count") {
    AffineTrainConfig small = cfg;
    small.r_z = 1;  // raw rank 5, r_y = 2
    CHECK_THROWS_AS(train_affine(pairs.x, pairs.y, small), ContractError);
  }
  SUBCASE("mismatched samples") {
    CHECK_THROWS_AS(train_affine(pairs.x, pairs.y.topRows(10), cfg), ShapeError);
  }
}

TEST_CASE("train_affine without a hidden factor") {
  Rng rng(20);
  const AffineGroundTruth gt = make_ground_truth(6, 3, 0, rng);
  Rng data = rng.split(1);
  const AffinePairs pairs = sample_pairs(gt, 20000, data);
  AffineTrainConfig cfg;
  cfg.r_z = 3;
  cfg.iters = 4000;
  cfg.screen_iters = 1000;
  cfg.restarts = 2;
  cfg.presolve_starts = 16;
  const AffineTrainResult r = train_affine(pairs.x, pairs.y, cfg);
  for (Index k = 0; k < 3; ++k) CHECK(r.params.v_x.col(k).norm() <= 0.05);
  CHECK(verify_recovery(r.params, gt, 0.05).passed());
}
