#pragma once

#include "surjcycle/cvae/cvae.hpp"

namespace surjcycle::cvae {

struct TinyModelDims {
  Index x = 3;
  Index y = 2;
  Index z = 2;
  Index hidden = 4;
};

/// Small random gaussian-head model used for bound verification: affine h+,
/// one-hidden-layer tanh h(y, z), affine encoder mean with a shared log s.
class TinyModel {
 public:
  TinyModel(TinyModelDims dims, Rng& rng);
  TinyModel(const TinyModel&) = delete;
  TinyModel& operator=(const TinyModel&) = delete;

  const TinyModelDims& dims() const { return dims_; }
  double gamma() const { return gamma_; }
  CycleModel cycle_model() const;

  /// Draws an input near the model's own generative distribution.
  DenseMatrix sample_x(Rng& rng) const;

  /// Adam on the ELBO over the encoder alone, on `n` inputs from sample_x.
  /// Theta is untouched, so the bound still holds afterwards; the point is a
  /// usable importance proposal. Returns the final batch ELBO.
  double fit_encoder(Index n, int steps, double lr, Rng& rng);

  const ForwardMap& forward() const { return forward_; }
  const InverseMap& inverse() const { return inverse_; }
  const Encoder& encoder() const { return encoder_; }

 private:
  TinyModelDims dims_;
  double gamma_;
  DenseMatrix wy_, by_;             // h+: y = x wy + by
  DenseMatrix w1_, b1_, w2_, b2_;   // h: tanh([y z] w1 + b1) w2 + b2
  DenseMatrix wz_, bz_, log_s_;     // q: mu = x wz + bz
  FunctionForward forward_;
  FunctionInverse inverse_;
  FunctionEncoder encoder_;
};

}  // namespace surjcycle::cvae
