#include "surjcycle/numerics/optim.hpp"

#include <cmath>
#include <string>

namespace surjcycle {

void Adam::step(std::span<DenseMatrix* const> params, std::span<const DenseMatrix> grads) {
  if (params.size() != grads.size()) {
    throw ShapeError("adam: " + std::to_string(params.size()) + " params but " +
                     std::to_string(grads.size()) + " gradients");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i]->rows() != grads[i].rows() || params[i]->cols() != grads[i].cols()) {
      throw ShapeError("adam: gradient " + std::to_string(i) + " is " +
                       shape_string(grads[i].rows(), grads[i].cols()) + ", parameter is " +
                       shape_string(params[i]->rows(), params[i]->cols()));
    }
    if (!grads[i].allFinite()) throw NumericalError("adam: non-finite gradient " + std::to_string(i));
  }
  if (m_.empty()) {
    for (auto* p : params) {
      m_.push_back(DenseMatrix::Zero(p->rows(), p->cols()));
      v_.push_back(DenseMatrix::Zero(p->rows(), p->cols()));
    }
  } else if (m_.size() != params.size()) {
    throw ShapeError("adam: parameter count changed between steps");
  }

  ++step_;
  const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(step_));
  const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (m_[i].rows() != grads[i].rows() || m_[i].cols() != grads[i].cols()) {
      throw ShapeError("adam: moment buffer " + std::to_string(i) + " shape mismatch");
    }
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * grads[i];
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * grads[i].cwiseProduct(grads[i]);
    const auto m_hat = m_[i].array() / c1;
    const auto v_hat = v_[i].array() / c2;
    params[i]->array() -= config_.lr * m_hat / (v_hat.sqrt() + config_.eps);
  }
}

}  // namespace surjcycle
