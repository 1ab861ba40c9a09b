#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "surjcycle/numerics/dense.hpp"
#include "surjcycle/numerics/rng.hpp"
#include "surjcycle/numerics/tape.hpp"

namespace surjcycle::cvae {

enum class Family { gaussian, bernoulli, categorical };

/// Conditional likelihood family for p(x | y, z) or p(y | x).
///
/// Map outputs are distribution parameters: the mean for gaussian, logits for
/// bernoulli and categorical. All negative log-likelihoods are normalized
/// (constants included) so that ELBO and importance estimates are comparable.
class LikelihoodHead {
 public:
  static LikelihoodHead gaussian(double gamma);
  static LikelihoodHead bernoulli() { return LikelihoodHead(Family::bernoulli, 0.0); }
  static LikelihoodHead categorical() { return LikelihoodHead(Family::categorical, 0.0); }

  Family family() const { return family_; }
  /// Isotropic variance of the gaussian family.
  double gamma() const { return gamma_; }

  /// Per-row negative log-likelihood of `target`, n x 1. Throws ContractError
  /// when target rows are outside the family's domain.
  Var nll(const DenseMatrix& target, Var output) const;
  /// Data-space mean of the distribution; differentiable.
  Var mean(Var output) const;
  /// Deterministic point estimate used as the cycle intermediate. For the
  /// categorical family this is the one-hot argmax and carries no gradient.
  Var point(Var output) const;

  void check_domain(const DenseMatrix& target) const;

 private:
  LikelihoodHead(Family family, double gamma) : family_(family), gamma_(gamma) {}
  Family family_;
  double gamma_;
};

/// x -> parameters of p(y | x), i.e. h+.
class ForwardMap {
 public:
  virtual ~ForwardMap() = default;
  virtual Var operator()(Var x) const = 0;
};

/// (y, z) -> parameters of p(x | y, z), i.e. h.
class InverseMap {
 public:
  virtual ~InverseMap() = default;
  virtual Var operator()(Var y, Var z) const = 0;
  virtual Index latent_dim() const = 0;
};

struct Posterior {
  Var mu;     // n x r_z
  Var log_s;  // n x r_z, or 1 x r_z shared across rows
};

/// x -> q(z | x) = N(mu, diag(s)^2), s stored as log s.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual Posterior operator()(Var x) const = 0;
};

class FunctionForward final : public ForwardMap {
 public:
  explicit FunctionForward(std::function<Var(Var)> f) : f_(std::move(f)) {}
  Var operator()(Var x) const override { return f_(x); }

 private:
  std::function<Var(Var)> f_;
};

class FunctionInverse final : public InverseMap {
 public:
  FunctionInverse(std::function<Var(Var, Var)> f, Index latent_dim) : f_(std::move(f)), dim_(latent_dim) {}
  Var operator()(Var y, Var z) const override { return f_(y, z); }
  Index latent_dim() const override { return dim_; }

 private:
  std::function<Var(Var, Var)> f_;
  Index dim_;
};

class FunctionEncoder final : public Encoder {
 public:
  explicit FunctionEncoder(std::function<Posterior(Var)> f) : f_(std::move(f)) {}
  Posterior operator()(Var x) const override { return f_(x); }

 private:
  std::function<Posterior(Var)> f_;
};

/// Everything the cycle losses need. The encoder is only used by the x-cycle.
struct CycleModel {
  const ForwardMap* forward = nullptr;
  const InverseMap* inverse = nullptr;
  const Encoder* encoder = nullptr;
  LikelihoodHead x_head = LikelihoodHead::bernoulli();
  LikelihoodHead y_head = LikelihoodHead::categorical();
};

/// Standard normals, one row per row of `keys`, `n_cols` wide. Row i depends
/// on a base drawn from `rng`, on the contents of keys.row(i), and on how many
/// identical rows precede it; permuting the rows of `keys` permutes the output
/// rows the same way.
DenseMatrix keyed_normal(const DenseMatrix& keys, Index n_cols, Rng& rng);

/// KL[N(mu, diag(s)^2) || N(0, I)] per row, n x 1.
Var kl_to_standard_normal(const Posterior& q);

/// y -> z ~ p(z) -> x_hat = mean(h(y, z)) -> -log p(y | h+(x_hat)), averaged over
/// rows and over n_z draws (mean of log-likelihoods, an upper bound on the
/// log-of-mean form by Jensen).
Var loss_y(Tape& tape, const DenseMatrix& y, const CycleModel& model, Index n_z, Rng& rng);

struct ElboTerms {
  Var total;
  Var recon;
  Var kl;
};

/// E_q[-log p(x | y_hat, z)] + KL[q(z|x) || p(z)], averaged over rows, with
/// y_hat = point(h+(x)) and n_z reparameterized draws.
ElboTerms elbo_loss_x(Tape& tape, const DenseMatrix& x, const CycleModel& model, Index n_z, Rng& rng);

struct CycleWeights {
  double x = 1.0;
  double y = 1.0;
  double penalty = 1.0;
};

struct CycleTerms {
  Var total;
  Var loss_x;
  Var recon;
  Var kl;
  Var loss_y;
  std::optional<Var> penalty;
};

/// Weighted x-cycle ELBO plus y-cycle loss, plus an optional caller-built penalty.
CycleTerms cycle_loss(Tape& tape, const DenseMatrix& batch_x, const DenseMatrix& batch_y, const CycleModel& model,
                      const CycleWeights& weights, Index n_z, Rng& rng, std::optional<Var> penalty = std::nullopt);

/// y_hat = point(h+(x)); no randomness.
DenseMatrix infer_forward(const DenseMatrix& x, const ForwardMap& forward, const LikelihoodHead& y_head);

/// n draws x_hat_i = mean(h(y, z_i)), z_i ~ N(0, I), for a single-row y.
std::vector<DenseMatrix> sample_inverse(const DenseMatrix& y, const InverseMap& inverse,
                                        const LikelihoodHead& x_head, Index n, Rng& rng);

struct ImportanceEstimate {
  double estimate = 0.0;
  double stderr_ = 0.0;
  double effective_sample_size = 0.0;
  /// Set when the effective sample size falls below 10.
  bool degenerate = false;
};

/// -log (1/m) sum_i p(x | y_hat, z_i) p(z_i) / q(z_i | x), z_i ~ q(z | x), for a
/// single-row x, with a jackknife standard error.
ImportanceEstimate importance_estimate_loss_x(const DenseMatrix& x, const CycleModel& model, Index m, Rng& rng);

}  // namespace surjcycle::cvae
