#include <doctest.h>

#include <Eigen/LU>
#include <Eigen/QR>

#include <cmath>

#include "surjcycle/numerics/dense.hpp"
#include "surjcycle/numerics/grad_check.hpp"
#include "surjcycle/numerics/optim.hpp"
#include "surjcycle/numerics/rng.hpp"
#include "surjcycle/numerics/tape.hpp"

using namespace surjcycle;

namespace {

DenseMatrix naive_product(const DenseMatrix& a, const DenseMatrix& b) {
  DenseMatrix out = DenseMatrix::Zero(a.rows(), b.cols());
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.cols(); ++j)
      for (Index k = 0; k < a.cols(); ++k) out(i, j) += a(i, k) * b(k, j);
  return out;
}

DenseMatrix random_spd(Rng& rng, Index n, double ridge = 0.5) {
  DenseMatrix g = rng.normal_matrix(n, n);
  return g * g.transpose() + ridge * DenseMatrix::Identity(n, n);
}

}  // namespace

TEST_CASE("matmul") {
  Rng rng(1);
  DenseMatrix m = rng.normal_matrix(3, 4);
  CHECK(matmul(DenseMatrix::Identity(3, 3), m).isApprox(m));

  DenseMatrix a(2, 2), b(2, 1);
  a << 1, 2, 3, 4;
  b << 0, 1;
  DenseMatrix ab = matmul(a, b);
  CHECK(ab(0, 0) == 2);
  CHECK(ab(1, 0) == 4);

  DenseMatrix x = rng.normal_matrix(5, 7), y = rng.normal_matrix(7, 3);
  CHECK(max_abs(matmul(x, y) - naive_product(x, y)) <= 1e-12);

  CHECK_THROWS_AS(matmul(x, x), ShapeError);
}

TEST_CASE("solve_spd") {
  Rng rng(2);
  DenseMatrix r = rng.normal_matrix(4, 2);
  CHECK(max_abs(solve_spd(DenseMatrix::Identity(4, 4), r) - r) == 0.0);
  CHECK(max_abs(solve_spd(2.0 * DenseMatrix::Identity(4, 4), r) - r / 2.0) <= 1e-15);

  DenseMatrix m = random_spd(rng, 6);
  DenseMatrix rhs = rng.normal_matrix(6, 3);
  DenseMatrix x = solve_spd(m, rhs);
  CHECK(max_abs(m * x - rhs) <= 1e-10);

  SUBCASE("log-determinant from Cholesky diagonal") {
    CHECK(log_det_spd(m) == doctest::Approx(std::log(m.determinant())).epsilon(1e-10));
  }
  SUBCASE("non-SPD input is a numerical error") {
    DenseMatrix bad = DenseMatrix::Identity(3, 3);
    bad(1, 1) = -1.0;
    CHECK_THROWS_AS(solve_spd(bad, DenseMatrix::Ones(3, 1)), NumericalError);
    CHECK_THROWS_AS(solve_spd(DenseMatrix::Zero(2, 2), DenseMatrix::Ones(2, 1)), NumericalError);
  }
  SUBCASE("residual bound for conditioned inputs") {
    for (int trial = 0; trial < 10; ++trial) {
      // condition number 1e6 by construction
      Eigen::HouseholderQR<DenseMatrix> qr(rng.normal_matrix(8, 8));
      DenseMatrix q = qr.householderQ();
      DenseVector spectrum = DenseVector::LinSpaced(8, 0.0, 6.0).unaryExpr([](double e) { return std::pow(10.0, e); });
      DenseMatrix a = q * spectrum.asDiagonal() * q.transpose();
      a = 0.5 * (a + a.transpose()).eval();
      DenseMatrix b = rng.normal_matrix(8, 2);
      DenseMatrix sol = solve_spd(a, b);
      CHECK(max_abs(a * sol - b) <= 1e-9 * max_abs(b) * spectrum.maxCoeff());
    }
  }
}

TEST_CASE("numerical rank") {
  Rng rng(3);
  DenseMatrix low = rng.normal_matrix(10, 3) * rng.normal_matrix(3, 10);
  CHECK(numerical_rank(low) == 3);
  CHECK(numerical_rank(DenseMatrix::Zero(4, 4)) == 0);
}

TEST_CASE("tape backward: closed-form gradients") {
  Rng rng(4);
  SUBCASE("squared norm") {
    DenseMatrix x = rng.normal_matrix(3, 1);
    Tape tape;
    Var v = tape.variable(x);
    tape.backward(ad::squared_norm(v));
    CHECK(max_abs(v.grad() - 2.0 * x) <= 1e-15);
  }
  SUBCASE("trace") {
    Tape tape;
    Var w = tape.variable(rng.normal_matrix(4, 4));
    tape.backward(ad::trace(w));
    CHECK(max_abs(w.grad() - DenseMatrix::Identity(4, 4)) == 0.0);
  }
  SUBCASE("non-scalar loss is rejected") {
    Tape tape;
    Var w = tape.variable(rng.normal_matrix(2, 2));
    CHECK_THROWS_AS(tape.backward(w), ContractError);
  }
  SUBCASE("untracked constants get no adjoint") {
    Tape tape;
    Var c = tape.constant(rng.normal_matrix(2, 2));
    Var w = tape.variable(rng.normal_matrix(2, 2));
    tape.backward(ad::sum(ad::matmul(c, w)));
    CHECK(c.grad().size() == 0);
    CHECK(w.grad().size() == 4);
  }
}

TEST_CASE("tape backward matches central differences for every primitive") {
  Rng rng(5);
  const DenseMatrix target = (rng.uniform_matrix(3, 4, 0.0, 1.0).array() > 0.5).cast<double>();
  const LossBuilder composite = [&](Tape& t, std::span<const Var> p) {
    Var a = p[0], b = p[1], r = p[2], s = p[3];
    Var h = ad::tanh(ad::add_row(ad::matmul(a, b), r));                 // 3x4
    Var g = ad::hadamard(ad::sigmoid(h), ad::exp(ad::scale(h, 0.3)));  // 3x4
    Var ls = ad::log_softmax(ad::mul_row(g, r));
    Var spd = ad::add(ad::matmul(s, ad::transpose(s)), t.constant(DenseMatrix::Identity(3, 3)));
    Var solved = ad::solve_spd(spd, g);
    Var k = ad::kron(ad::cols(a, 0, 2), ad::transpose(ad::colwise_sum(r)));
    Var cat = ad::hcat(ls, solved);
    return ad::sum(ad::rowwise_sum(ad::square(cat))) + ad::logdet_spd(spd) + ad::trace(ad::matmul(spd, spd)) +
           ad::mean(ad::log(ad::add_scalar(ad::square(k), 1.0))) + ad::sum(ad::bce_with_logits(h, target)) +
           ad::sum(ad::softmax(g)) * 0.5 - ad::sum(ad::neg(g));
  };
  for (int point = 0; point < 10; ++point) {
    std::vector<DenseMatrix> params{rng.normal_matrix(3, 2), rng.normal_matrix(2, 4),
                                    rng.normal_matrix(1, 4), rng.normal_matrix(3, 3)};
    const auto report = grad_check(composite, params);
    CHECK_MESSAGE(report.passed, "point " << point << " rel err " << report.max_rel_error);
  }
}

TEST_CASE("grad_check") {
  Rng rng(6);
  DenseMatrix q = random_spd(rng, 4);
  const LossBuilder quadratic = [&](Tape& t, std::span<const Var> p) {
    return ad::sum(ad::hadamard(p[0], ad::matmul(t.constant(q), p[0])));
  };
  std::vector<DenseMatrix> x{rng.normal_matrix(4, 1)};
  CHECK(grad_check(quadratic, x, {.step = 1e-4, .tol = 1e-6}).passed);

  SUBCASE("corrupted gradient is caught and located") {
    GradCheckOptions opts;
    opts.tamper = [](std::vector<DenseMatrix>& g) { g[0](2, 0) *= 2.0; };
    const auto report = grad_check(quadratic, x, opts);
    CHECK_FALSE(report.passed);
    CHECK(report.param_index == 0);
    CHECK(report.entry_index == 2);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradient leaves parameters unchanged") {
    DenseMatrix p = DenseMatrix::Constant(2, 2, 1.5);
    const DenseMatrix before = p;
    Adam opt;
    std::vector<DenseMatrix*> ps{&p};
    std::vector<DenseMatrix> gs{DenseMatrix::Zero(2, 2)};
    for (int i = 0; i < 10; ++i) opt.step(ps, gs);
    CHECK(p == before);
  }
  SUBCASE("constant gradient on a linear function decreases it monotonically") {
    DenseMatrix g(3, 1);
    g << 1.0, -2.0, 0.5;
    DenseMatrix x = DenseMatrix::Zero(3, 1);
    Adam opt;
    std::vector<DenseMatrix*> ps{&x};
    std::vector<DenseMatrix> gs{g};
    double prev = (g.transpose() * x)(0, 0);
    for (int i = 0; i < 200; ++i) {
      opt.step(ps, gs);
      const double f = (g.transpose() * x)(0, 0);
      REQUIRE(f < prev);
      prev = f;
    }
  }
  SUBCASE("1-D quadratic converges to its minimizer") {
    // f(x) = 2 (x - 3)^2, minimizer 3
    DenseMatrix x = DenseMatrix::Zero(1, 1);
    Adam opt(AdamConfig{.lr = 1e-2});
    std::vector<DenseMatrix*> ps{&x};
    for (int i = 0; i < 5000; ++i) {
      std::vector<DenseMatrix> gs{DenseMatrix::Constant(1, 1, 4.0 * (x(0, 0) - 3.0))};
      opt.step(ps, gs);
    }
    CHECK(std::abs(x(0, 0) - 3.0) <= 1e-4);
  }
  SUBCASE("errors") {
    DenseMatrix p = DenseMatrix::Zero(2, 1);
    Adam opt;
    std::vector<DenseMatrix*> ps{&p};
    std::vector<DenseMatrix> bad{DenseMatrix::Constant(2, 1, std::nan(""))};
    CHECK_THROWS_AS(opt.step(ps, bad), NumericalError);
    std::vector<DenseMatrix> wrong{DenseMatrix::Zero(3, 1)};
    CHECK_THROWS_AS(opt.step(ps, wrong), ShapeError);
  }
}

TEST_CASE("gaussian_sample") {
  Rng rng(7);
  Tape tape;
  DenseMatrix mu = rng.normal_matrix(1, 3);
  Var m = tape.constant(mu);
  CHECK(ad::gaussian_sample(m, tape.constant(DenseMatrix::Zero(1, 3)), rng).value() == mu);
  CHECK_THROWS_AS(ad::gaussian_sample(m, tape.constant(DenseMatrix::Constant(1, 3, -1.0)), rng),
                  ContractError);

  SUBCASE("moments of 1e5 draws") {
    const Index n = 100000, dim = 3;
    Tape t;
    Var draws = ad::gaussian_sample(t.constant(DenseMatrix::Zero(n, dim)), t.constant(DenseMatrix::Ones(n, dim)), rng);
    const DenseMatrix& z = draws.value();
    for (Index j = 0; j < dim; ++j) {
      const double mean = z.col(j).mean();
      const double var = (z.col(j).array() - mean).square().sum() / (n - 1);
      CHECK(std::abs(mean) <= 0.02);
      CHECK(var >= 0.97);
      CHECK(var <= 1.03);
    }
  }
  SUBCASE("seeded determinism") {
    Rng a(99), b(99);
    Tape t;
    Var zero = t.constant(DenseMatrix::Zero(2, 2)), one = t.constant(DenseMatrix::Ones(2, 2));
    CHECK(ad::gaussian_sample(zero, one, a).value() == ad::gaussian_sample(zero, one, b).value());
  }
  SUBCASE("differentiable in mu and s") {
    Tape t;
    Var mv = t.variable(DenseMatrix::Zero(1, 2));
    Var sv = t.variable(DenseMatrix::Ones(1, 2));
    Var z = ad::gaussian_sample(mv, sv, rng);
    t.backward(ad::sum(z));
    CHECK(mv.grad() == DenseMatrix::Ones(1, 2));
    CHECK(sv.grad() == z.value());  // d/ds (mu + s eps) = eps = z when mu = 0, s = 1
  }
}
