#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "surjcycle/numerics/dense.hpp"

namespace surjcycle {

class Tape;
class Rng;

/// Handle to a node on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const DenseMatrix& value() const;
  /// Adjoint after Tape::backward; zero-sized if the node is not tracked.
  const DenseMatrix& grad() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  double scalar() const;
  bool tracked() const;

  Tape* tape() const { return tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

/// Define-by-run reverse-mode tape over dense matrices.
///
/// Nodes are appended in evaluation order, so the node list is already a
/// topological order; backward() walks it in reverse. A node is tracked when
/// it is a variable or depends on one; untracked nodes never receive adjoints.
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&, const DenseMatrix& out_adjoint)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var variable(DenseMatrix value);
  Var constant(DenseMatrix value);

  /// Appends an op node. `fn` receives the node's adjoint and must accumulate
  /// into its parents via accumulate().
  Var push(DenseMatrix value, std::initializer_list<Var> parents, BackwardFn fn);

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws ContractError unless
  /// loss is 1x1. May be called once per tape.
  void backward(Var loss);

  void accumulate(const Var& v, const DenseMatrix& delta);

  const DenseMatrix& value(std::size_t id) const { return nodes_[id].value; }
  const DenseMatrix& adjoint(std::size_t id) const { return nodes_[id].adjoint; }
  bool tracked(std::size_t id) const { return nodes_[id].tracked; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix adjoint;
    BackwardFn backward;
    bool tracked = false;
  };
  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

namespace ad {

Var matmul(Var a, Var b);
Var transpose(Var a);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var hadamard(Var a, Var b);
/// a (n x c) plus row vector r (1 x c) broadcast over rows.
Var add_row(Var a, Var r);
/// a (n x c) times row vector r (1 x c), elementwise per row.
Var mul_row(Var a, Var r);
Var sum(Var a);
Var mean(Var a);
/// Column sums, 1 x c.
Var colwise_sum(Var a);
/// Row sums, n x 1.
Var rowwise_sum(Var a);
Var square(Var a);
Var exp(Var a);
Var log(Var a);
Var tanh(Var a);
Var sigmoid(Var a);
/// Row-wise log-softmax.
Var log_softmax(Var a);
Var softmax(Var a);
Var trace(Var a);
/// log|a| for SPD a via Cholesky.
Var logdet_spd(Var a);
/// a^{-1} b for SPD a via Cholesky.
Var solve_spd(Var a, Var b);
Var kron(Var a, Var b);
Var hcat(Var a, Var b);
Var cols(Var a, Index start, Index count);
/// Sum of squares of all entries.
Var squared_norm(Var a);
/// Per-row binary cross-entropy with logits, n x 1; target entries in [0,1].
Var bce_with_logits(Var logits, const DenseMatrix& target);
/// mu + s .* eps with eps ~ N(0, I); s must be entrywise nonnegative.
Var gaussian_sample(Var mu, Var s, Rng& rng);

}  // namespace ad

inline Var operator+(Var a, Var b) { return ad::add(a, b); }
inline Var operator-(Var a, Var b) { return ad::sub(a, b); }
inline Var operator-(Var a) { return ad::neg(a); }
inline Var operator*(double s, Var a) { return ad::scale(a, s); }
inline Var operator*(Var a, double s) { return ad::scale(a, s); }
inline Var operator+(Var a, double s) { return ad::add_scalar(a, s); }
inline Var operator+(double s, Var a) { return ad::add_scalar(a, s); }

}  // namespace surjcycle
