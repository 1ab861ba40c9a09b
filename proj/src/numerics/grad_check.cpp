#include "surjcycle/numerics/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace surjcycle {

double evaluate_loss(const LossBuilder& loss, std::span<const DenseMatrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.constant(p));
  return loss(tape, vars).scalar();
}

std::vector<DenseMatrix> tape_gradients(const LossBuilder& loss, std::span<const DenseMatrix> params) {
  Tape tape;
  std::vector<Var> vars;
  vars.reserve(params.size());
  for (const auto& p : params) vars.push_back(tape.variable(p));
  tape.backward(loss(tape, vars));
  std::vector<DenseMatrix> grads;
  grads.reserve(vars.size());
  for (const auto& v : vars) {
    grads.push_back(v.grad().size() == 0 ? DenseMatrix::Zero(v.rows(), v.cols()) : v.grad());
  }
  return grads;
}

GradCheckReport grad_check(const LossBuilder& loss, std::span<const DenseMatrix> params,
                           const GradCheckOptions& options) {
  if (!(options.step > 0)) throw ContractError("grad_check: step must be positive");
  auto analytic = tape_gradients(loss, params);
  if (options.tamper) options.tamper(analytic);

  std::vector<DenseMatrix> work(params.begin(), params.end());
  std::vector<DenseMatrix> numeric;
  double max_numeric = 0.0;
  for (std::size_t p = 0; p < work.size(); ++p) {
    DenseMatrix n(work[p].rows(), work[p].cols());
    for (Index i = 0; i < work[p].size(); ++i) {
      const double orig = work[p].data()[i];
      work[p].data()[i] = orig + options.step;
      const double up = evaluate_loss(loss, work);
      work[p].data()[i] = orig - options.step;
      const double down = evaluate_loss(loss, work);
      work[p].data()[i] = orig;
      n.data()[i] = (up - down) / (2.0 * options.step);
    }
    max_numeric = std::max(max_numeric, max_abs(n));
    numeric.push_back(std::move(n));
  }

  GradCheckReport report;
  const double floor = std::max(1e-4 * max_numeric, 1e-12);
  for (std::size_t p = 0; p < work.size(); ++p) {
    for (Index i = 0; i < work[p].size(); ++i) {
      const double a = analytic[p].data()[i];
      const double n = numeric[p].data()[i];
      const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
      if (rel > report.max_rel_error || (p == 0 && i == 0)) {
        report.max_rel_error = rel;
        report.param_index = p;
        report.entry_index = i;
        report.analytic = a;
        report.numeric = n;
      }
    }
  }
  report.passed = report.max_rel_error <= options.tol;
  return report;
}

}  // namespace surjcycle
