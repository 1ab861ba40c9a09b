#include "surjcycle/cvae/cvae.hpp"

#include <cmath>
#include <cstring>
#include <numbers>
#include <unordered_map>

namespace surjcycle::cvae {
namespace {

std::uint64_t hash_row(const DenseMatrix& m, Index row) {
  // FNV-1a over the raw bytes of the row
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (Index j = 0; j < m.cols(); ++j) {
    double v = m(row, j);
    if (v == 0.0) v = 0.0;  // fold -0.0
    unsigned char bytes[sizeof(double)];
    std::memcpy(bytes, &v, sizeof(double));
    for (unsigned char b : bytes) {
      h ^= b;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

Var broadcast_rows(Tape& tape, Var scalar, Index rows) {
  return ad::matmul(tape.constant(DenseMatrix::Ones(rows, 1)), scalar);
}

/// mu + s .* eps with s either per-row or a shared 1 x r_z row.
Var reparameterize(const Posterior& q, const DenseMatrix& eps) {
  Tape& tape = *q.mu.tape();
  Var s = ad::exp(q.log_s);
  Var e = tape.constant(eps);
  if (q.log_s.rows() == 1 && q.mu.rows() != 1) return ad::add(q.mu, ad::mul_row(e, s));
  return ad::add(q.mu, ad::hadamard(s, e));
}

void check_posterior(const Posterior& q) {
  if (q.log_s.cols() != q.mu.cols() || (q.log_s.rows() != 1 && q.log_s.rows() != q.mu.rows())) {
    throw ShapeError("posterior: mu " + shape_string(q.mu.rows(), q.mu.cols()) + ", log_s " +
                     shape_string(q.log_s.rows(), q.log_s.cols()));
  }
}

}  // namespace

LikelihoodHead LikelihoodHead::gaussian(double gamma) {
  if (!(gamma > 0.0)) throw ContractError("gaussian head: gamma must be positive");
  return LikelihoodHead(Family::gaussian, gamma);
}

void LikelihoodHead::check_domain(const DenseMatrix& target) const {
  switch (family_) {
    case Family::gaussian:
      if (!target.allFinite()) throw ContractError("gaussian head: non-finite target");
      break;
    case Family::bernoulli:
      if ((target.array() < 0.0).any() || (target.array() > 1.0).any()) {
        throw ContractError("bernoulli head: target outside [0, 1]");
      }
      break;
    case Family::categorical:
      for (Index i = 0; i < target.rows(); ++i) {
        const auto row = target.row(i).array();
        if (((row != 0.0) && (row != 1.0)).any() || row.sum() != 1.0) {
          throw ContractError("categorical head: target row " + std::to_string(i) + " is not one-hot");
        }
      }
      break;
  }
}

Var LikelihoodHead::nll(const DenseMatrix& target, Var output) const {
  if (target.rows() != output.rows() || target.cols() != output.cols()) {
    throw ShapeError("nll: target " + shape_string(target.rows(), target.cols()) + ", output " +
                     shape_string(output.rows(), output.cols()));
  }
  check_domain(target);
  Tape& tape = *output.tape();
  switch (family_) {
    case Family::gaussian: {
      const double d = static_cast<double>(target.cols());
      Var sq = ad::rowwise_sum(ad::square(ad::sub(tape.constant(target), output)));
      return ad::add_scalar(ad::scale(sq, 0.5 / gamma_), 0.5 * d * std::log(2.0 * std::numbers::pi * gamma_));
    }
    case Family::bernoulli:
      return ad::bce_with_logits(output, target);
    case Family::categorical:
      return ad::neg(ad::rowwise_sum(ad::hadamard(tape.constant(target), ad::log_softmax(output))));
  }
  throw ContractError("nll: unknown family");
}

Var LikelihoodHead::mean(Var output) const {
  switch (family_) {
    case Family::gaussian:
      return output;
    case Family::bernoulli:
      return ad::sigmoid(output);
    case Family::categorical:
      return ad::softmax(output);
  }
  throw ContractError("mean: unknown family");
}

Var LikelihoodHead::point(Var output) const {
  if (family_ != Family::categorical) return mean(output);
  const DenseMatrix& logits = output.value();
  DenseMatrix onehot = DenseMatrix::Zero(logits.rows(), logits.cols());
  for (Index i = 0; i < logits.rows(); ++i) {
    Index arg = 0;
    logits.row(i).maxCoeff(&arg);
    onehot(i, arg) = 1.0;
  }
  return output.tape()->constant(std::move(onehot));
}

DenseMatrix keyed_normal(const DenseMatrix& keys, Index n_cols, Rng& rng) {
  const Rng base(rng.engine()());
  std::unordered_map<std::uint64_t, std::uint64_t> seen;
  DenseMatrix out(keys.rows(), n_cols);
  for (Index i = 0; i < keys.rows(); ++i) {
    const std::uint64_t h = hash_row(keys, i);
    const std::uint64_t occurrence = seen[h]++;
    Rng row_rng = base.split(h).split(occurrence);
    for (Index j = 0; j < n_cols; ++j) out(i, j) = row_rng.normal();
  }
  return out;
}

Var kl_to_standard_normal(const Posterior& q) {
  check_posterior(q);
  Tape& tape = *q.mu.tape();
  // 0.5 * sum_k (s^2 + mu^2 - 1 - 2 log s)
  Var mu_term = ad::rowwise_sum(ad::square(q.mu));
  Var s_term = ad::rowwise_sum(ad::add_scalar(ad::sub(ad::exp(ad::scale(q.log_s, 2.0)), ad::scale(q.log_s, 2.0)), -1.0));
  if (q.log_s.rows() == 1 && q.mu.rows() != 1) s_term = broadcast_rows(tape, s_term, q.mu.rows());
  return ad::scale(ad::add(mu_term, s_term), 0.5);
}

Var loss_y(Tape& tape, const DenseMatrix& y, const CycleModel& model, Index n_z, Rng& rng) {
  if (n_z < 1) throw ContractError("loss_y: n_z must be at least 1");
  if (y.rows() == 0) throw ContractError("loss_y: empty batch");
  model.y_head.check_domain(y);
  Var yv = tape.constant(y);
  const Index dz = model.inverse->latent_dim();
  Var acc;
  for (Index k = 0; k < n_z; ++k) {
    Var z = tape.constant(keyed_normal(y, dz, rng));
    Var x_hat = model.x_head.mean((*model.inverse)(yv, z));
    Var nll = model.y_head.nll(y, (*model.forward)(x_hat));
    acc = acc.valid() ? ad::add(acc, nll) : nll;
  }
  return ad::scale(ad::sum(acc), 1.0 / static_cast<double>(n_z * y.rows()));
}

ElboTerms elbo_loss_x(Tape& tape, const DenseMatrix& x, const CycleModel& model, Index n_z, Rng& rng) {
  if (n_z < 1) throw ContractError("elbo_loss_x: n_z must be at least 1");
  if (x.rows() == 0) throw ContractError("elbo_loss_x: empty batch");
  model.x_head.check_domain(x);
  Var xv = tape.constant(x);
  Var y_hat = model.y_head.point((*model.forward)(xv));
  Posterior q = (*model.encoder)(xv);
  check_posterior(q);
  if (!q.log_s.value().allFinite()) throw ContractError("elbo_loss_x: non-finite log s");

  Var acc;
  for (Index k = 0; k < n_z; ++k) {
    Var z = reparameterize(q, keyed_normal(x, q.mu.cols(), rng));
    Var nll = model.x_head.nll(x, (*model.inverse)(y_hat, z));
    acc = acc.valid() ? ad::add(acc, nll) : nll;
  }
  const double rows = static_cast<double>(x.rows());
  Var recon = ad::scale(ad::sum(acc), 1.0 / (static_cast<double>(n_z) * rows));
  Var kl = ad::scale(ad::sum(kl_to_standard_normal(q)), 1.0 / rows);
  return {ad::add(recon, kl), recon, kl};
}

CycleTerms cycle_loss(Tape& tape, const DenseMatrix& batch_x, const DenseMatrix& batch_y, const CycleModel& model,
                      const CycleWeights& weights, Index n_z, Rng& rng, std::optional<Var> penalty) {
  if (batch_x.rows() == 0 || batch_y.rows() == 0) throw ContractError("cycle_loss: empty batch");
  ElboTerms ex = elbo_loss_x(tape, batch_x, model, n_z, rng);
  Var ly = loss_y(tape, batch_y, model, n_z, rng);
  Var total = ad::add(ad::scale(ex.total, weights.x), ad::scale(ly, weights.y));
  if (penalty) total = ad::add(total, ad::scale(*penalty, weights.penalty));
  return {total, ex.total, ex.recon, ex.kl, ly, penalty};
}

DenseMatrix infer_forward(const DenseMatrix& x, const ForwardMap& forward, const LikelihoodHead& y_head) {
  Tape tape;
  return y_head.point(forward(tape.constant(x))).value();
}

std::vector<DenseMatrix> sample_inverse(const DenseMatrix& y, const InverseMap& inverse,
                                        const LikelihoodHead& x_head, Index n, Rng& rng) {
  if (n < 1) throw ContractError("sample_inverse: n must be at least 1");
  if (y.rows() != 1) throw ShapeError("sample_inverse: y must be a single row");
  std::vector<DenseMatrix> out;
  out.reserve(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    Tape tape;
    Var z = tape.constant(rng.normal_matrix(1, inverse.latent_dim()));
    out.push_back(x_head.mean(inverse(tape.constant(y), z)).value());
  }
  return out;
}

ImportanceEstimate importance_estimate_loss_x(const DenseMatrix& x, const CycleModel& model, Index m, Rng& rng) {
  if (m < 1000) throw ContractError("importance_estimate_loss_x: m must be at least 1000");
  if (x.rows() != 1) throw ShapeError("importance_estimate_loss_x: x must be a single row");
  Tape tape;
  Var xv = tape.constant(x);
  const DenseMatrix y_hat = model.y_head.point((*model.forward)(xv)).value();
  Posterior q = (*model.encoder)(xv);
  check_posterior(q);
  const Index dz = q.mu.cols();
  const DenseRowVector mu = q.mu.value().row(0);
  const DenseRowVector log_s = q.log_s.value().row(0);
  const DenseRowVector s = log_s.array().exp();

  const DenseMatrix eps = rng.normal_matrix(m, dz);
  DenseMatrix z = eps.array().rowwise() * s.array();
  z.rowwise() += mu;
  const DenseMatrix x_rep = x.replicate(m, 1);
  Var nll = model.x_head.nll(x_rep, (*model.inverse)(tape.constant(y_hat.replicate(m, 1)), tape.constant(z)));

  // log w = log p(x|y,z) + log p(z) - log q(z|x); the 2*pi terms cancel.
  DenseVector log_w(m);
  for (Index i = 0; i < m; ++i) {
    const double log_p = -0.5 * z.row(i).squaredNorm();
    const double log_q = -0.5 * eps.row(i).squaredNorm() - log_s.sum();
    log_w(i) = -nll.value()(i, 0) + log_p - log_q;
  }
  const double top = log_w.maxCoeff();
  const DenseVector w = (log_w.array() - top).exp();
  const double total = w.sum();
  const double md = static_cast<double>(m);

  ImportanceEstimate out;
  out.estimate = -(top + std::log(total / md));
  out.effective_sample_size = total * total / w.squaredNorm();
  out.degenerate = out.effective_sample_size < 10.0;

  DenseVector loo(m);
  for (Index i = 0; i < m; ++i) {
    const double rest = std::max(total - w(i), std::numeric_limits<double>::min());
    loo(i) = -(top + std::log(rest / (md - 1.0)));
  }
  const double loo_mean = loo.mean();
  out.stderr_ = std::sqrt((md - 1.0) / md * (loo.array() - loo_mean).square().sum());
  return out;
}

}  // namespace surjcycle::cvae
