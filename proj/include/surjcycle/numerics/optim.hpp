#pragma once

#include <span>
#include <vector>

#include "surjcycle/numerics/dense.hpp"

namespace surjcycle {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adaptive-moment optimizer state for a fixed list of parameter shapes.
class Adam {
 public:
  Adam() = default;
  explicit Adam(AdamConfig config) : config_(config) {}

  const AdamConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }
  long step_count() const { return step_; }

  /// One update of `params` in place. Moments are allocated on the first call
  /// and must shape-match on every later call. Throws NumericalError on a
  /// non-finite gradient, leaving params and state untouched.
  void step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads);

  const std::vector<DenseMatrix>& first_moments() const { return m_; }
  const std::vector<DenseMatrix>& second_moments() const { return v_; }

 private:
  AdamConfig config_;
  long step_ = 0;
  std::vector<DenseMatrix> m_;
  std::vector<DenseMatrix> v_;
};

}  // namespace surjcycle
