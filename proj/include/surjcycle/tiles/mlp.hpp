#pragma once

#include <span>
#include <vector>

#include "surjcycle/numerics/rng.hpp"
#include "surjcycle/numerics/tape.hpp"

namespace surjcycle::tiles {

/// Affine layers with tanh between them and a linear last layer. Parameters
/// are stored W_0, b_0, W_1, b_1, ... with W_l of shape in x out and b_l a row.
class Mlp {
 public:
  Mlp() = default;
  /// widths = {in, hidden..., out}; weights N(0, 1/fan_in), biases 0.
  Mlp(std::vector<Index> widths, Rng& rng);

  Index in_dim() const { return widths_.front(); }
  Index out_dim() const { return widths_.back(); }
  std::size_t layers() const { return widths_.size() - 1; }

  std::vector<DenseMatrix>& params() { return params_; }
  const std::vector<DenseMatrix>& params() const { return params_; }

  /// Output for rows of x using `bound` as the parameter leaves.
  Var apply(Var x, std::span<const Var> bound) const;
  /// Same with the stored parameters as constants on x's tape.
  Var apply(Var x) const;
  DenseMatrix apply(const DenseMatrix& x) const;

 private:
  std::vector<Index> widths_;
  std::vector<DenseMatrix> params_;
};

}  // namespace surjcycle::tiles
