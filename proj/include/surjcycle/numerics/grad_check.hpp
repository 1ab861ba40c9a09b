#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "surjcycle/numerics/tape.hpp"

namespace surjcycle {

/// Builds a scalar loss on `tape` from the bound parameter leaves.
using LossBuilder = std::function<Var(Tape& tape, std::span<const Var> params)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  /// (parameter index, flat entry index) of the worst component.
  std::size_t param_index = 0;
  Index entry_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  bool passed = true;
};

struct GradCheckOptions {
  double step = 1e-4;
  double tol = 1e-5;
  /// Optional hook applied to the tape gradients before comparison; used to
  /// inject faults in tests.
  std::function<void(std::vector<DenseMatrix>&)> tamper;
};

/// Tape gradients of `loss` at `params` against central differences.
///
/// Relative error per component is |a - n| / max(|a|, |n|, 1e-4 * max|n|, 1e-12),
/// so entries that are tiny compared to the largest gradient are judged on an
/// absolute scale.
GradCheckReport grad_check(const LossBuilder& loss, std::span<const DenseMatrix> params,
                           const GradCheckOptions& options = {});

/// Evaluates the loss value only.
double evaluate_loss(const LossBuilder& loss, std::span<const DenseMatrix> params);

/// Tape gradients of the loss.
std::vector<DenseMatrix> tape_gradients(const LossBuilder& loss, std::span<const DenseMatrix> params);

}  // namespace surjcycle
