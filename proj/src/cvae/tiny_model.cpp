#include "surjcycle/cvae/tiny_model.hpp"

#include "surjcycle/numerics/optim.hpp"

namespace surjcycle::cvae {
namespace {

Var affine(Var x, const DenseMatrix& w, const DenseMatrix& b) {
  Tape& t = *x.tape();
  return ad::add_row(ad::matmul(x, t.constant(w)), t.constant(b));
}

Var affine_leaf(Var x, Var w, Var b) { return ad::add_row(ad::matmul(x, w), b); }

}  // namespace

TinyModel::TinyModel(TinyModelDims dims, Rng& rng)
    : dims_(dims),
      gamma_(rng.uniform(0.05, 0.5)),
      wy_(rng.normal_matrix(dims.x, dims.y, 0.7)),
      by_(rng.normal_matrix(1, dims.y, 0.3)),
      w1_(rng.normal_matrix(dims.y + dims.z, dims.hidden, 1.0)),
      b1_(rng.normal_matrix(1, dims.hidden, 0.3)),
      w2_(rng.normal_matrix(dims.hidden, dims.x, 1.0)),
      b2_(rng.normal_matrix(1, dims.x, 0.3)),
      wz_(rng.normal_matrix(dims.x, dims.z, 0.5)),
      bz_(rng.normal_matrix(1, dims.z, 0.3)),
      log_s_(rng.uniform_matrix(1, dims.z, -1.0, 0.0)),
      forward_([this](Var x) { return affine(x, wy_, by_); }),
      inverse_([this](Var y, Var z) { return affine(ad::tanh(affine(ad::hcat(y, z), w1_, b1_)), w2_, b2_); },
               dims.z),
      encoder_([this](Var x) {
        Tape& t = *x.tape();
        return Posterior{affine(x, wz_, bz_), t.constant(log_s_)};
      }) {}

CycleModel TinyModel::cycle_model() const {
  CycleModel m;
  m.forward = &forward_;
  m.inverse = &inverse_;
  m.encoder = &encoder_;
  m.x_head = LikelihoodHead::gaussian(gamma_);
  m.y_head = LikelihoodHead::gaussian(1.0);
  return m;
}

DenseMatrix TinyModel::sample_x(Rng& rng) const {
  Tape t;
  Var y = t.constant(rng.normal_matrix(1, dims_.y));
  Var z = t.constant(rng.normal_matrix(1, dims_.z));
  DenseMatrix x = inverse_(y, z).value();
  x += std::sqrt(gamma_) * rng.normal_matrix(1, dims_.x);
  return x;
}

double TinyModel::fit_encoder(Index n, int steps, double lr, Rng& rng) {
  if (n < 1 || steps < 0) throw ContractError("fit_encoder: n must be positive and steps non-negative");
  DenseMatrix x(n, dims_.x);
  for (Index i = 0; i < n; ++i) x.row(i) = sample_x(rng);
  Adam adam(AdamConfig{.lr = lr});
  DenseMatrix* params[] = {&wz_, &bz_, &log_s_};
  double last = 0.0;
  for (int step = 0; step <= steps; ++step) {
    Tape t;
    Var wz = t.variable(wz_), bz = t.variable(bz_), log_s = t.variable(log_s_);
    const FunctionEncoder enc([&](Var xv) { return Posterior{affine_leaf(xv, wz, bz), log_s}; });
    CycleModel m = cycle_model();
    m.encoder = &enc;
    const ElboTerms e = elbo_loss_x(t, x, m, 1, rng);
    last = e.total.scalar();
    if (step == steps) break;
    t.backward(e.total);
    const DenseMatrix grads[] = {wz.grad(), bz.grad(), log_s.grad()};
    adam.step(params, grads);
  }
  return last;
}

}  // namespace surjcycle::cvae
