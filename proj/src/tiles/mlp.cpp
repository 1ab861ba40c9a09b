#include "surjcycle/tiles/mlp.hpp"

#include <cmath>

namespace surjcycle::tiles {

Mlp::Mlp(std::vector<Index> widths, Rng& rng) : widths_(std::move(widths)) {
  if (widths_.size() < 2) throw ContractError("Mlp: need at least input and output widths");
  for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
    const Index in = widths_[l], out = widths_[l + 1];
    if (in < 1 || out < 1) throw ContractError("Mlp: widths must be positive");
    params_.push_back(rng.normal_matrix(in, out, 1.0 / std::sqrt(static_cast<double>(in))));
    params_.push_back(DenseMatrix::Zero(1, out));
  }
}

Var Mlp::apply(Var x, std::span<const Var> bound) const {
  if (bound.size() != params_.size()) throw ShapeError("Mlp::apply: wrong number of parameter leaves");
  if (x.cols() != in_dim()) throw ShapeError("Mlp::apply: input width mismatch");
  Var h = x;
  for (std::size_t l = 0; l < layers(); ++l) {
    h = ad::add_row(ad::matmul(h, bound[2 * l]), bound[2 * l + 1]);
    if (l + 1 < layers()) h = ad::tanh(h);
  }
  return h;
}

Var Mlp::apply(Var x) const {
  Tape& t = *x.tape();
  std::vector<Var> leaves;
  for (const DenseMatrix& p : params_) leaves.push_back(t.constant(p));
  return apply(x, leaves);
}

DenseMatrix Mlp::apply(const DenseMatrix& x) const {
  Tape t;
  return apply(t.constant(x)).value();
}

}  // namespace surjcycle::tiles
