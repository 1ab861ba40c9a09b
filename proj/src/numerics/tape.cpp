#include "surjcycle/numerics/tape.hpp"

#include <cmath>
#include <memory>

#include "surjcycle/numerics/rng.hpp"

namespace surjcycle {

const DenseMatrix& Var::value() const { return tape_->value(id_); }
const DenseMatrix& Var::grad() const { return tape_->adjoint(id_); }
bool Var::tracked() const { return tape_->tracked(id_); }

double Var::scalar() const {
  const auto& v = value();
  if (v.rows() != 1 || v.cols() != 1) {
    throw ContractError("Var::scalar on " + shape_string(v.rows(), v.cols()));
  }
  return v(0, 0);
}

Var Tape::variable(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, true});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(DenseMatrix value) {
  nodes_.push_back(Node{std::move(value), {}, {}, false});
  return Var(this, nodes_.size() - 1);
}

Var Tape::push(DenseMatrix value, std::initializer_list<Var> parents, BackwardFn fn) {
  bool tracked = false;
  for (const auto& p : parents) {
    if (p.tape() != this) throw ContractError("tape: operand belongs to another tape");
    tracked = tracked || nodes_[p.id()].tracked;
  }
  if (!value.allFinite()) throw NumericalError("tape: op produced a non-finite value");
  nodes_.push_back(Node{std::move(value), {}, tracked ? std::move(fn) : BackwardFn{}, tracked});
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(const Var& v, const DenseMatrix& delta) {
  auto& node = nodes_[v.id()];
  if (!node.tracked) return;
  if (node.adjoint.size() == 0) {
    node.adjoint = delta;
  } else {
    node.adjoint += delta;
  }
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss belongs to another tape");
  const auto& lv = nodes_[loss.id()].value;
  if (lv.rows() != 1 || lv.cols() != 1) {
    throw ContractError("backward: loss must be scalar, got " + shape_string(lv.rows(), lv.cols()));
  }
  if (backward_done_) throw ContractError("backward: tape already consumed");
  backward_done_ = true;
  if (!nodes_[loss.id()].tracked) return;
  nodes_[loss.id()].adjoint = DenseMatrix::Ones(1, 1);
  for (std::size_t i = loss.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (!node.backward || node.adjoint.size() == 0) continue;
    // The callback may touch other nodes' adjoints but never this one.
    const DenseMatrix adj = node.adjoint;
    node.backward(*this, adj);
  }
}

namespace ad {
namespace {

void require_same_shape(const char* op, const Var& a, const Var& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": " + shape_string(a.rows(), a.cols()) + " vs " +
                     shape_string(b.rows(), b.cols()));
  }
}

template <typename F, typename DF>
Var unary(Var a, F f, DF df) {
  DenseMatrix out = a.value().unaryExpr(f);
  return a.tape()->push(std::move(out), {a}, [a, df](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& x = t.value(a.id());
    DenseMatrix d = g.cwiseProduct(x.unaryExpr(df));
    t.accumulate(a, d);
  });
}

double stable_sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

DenseMatrix row_log_softmax(const DenseMatrix& a) {
  DenseMatrix out(a.rows(), a.cols());
  for (Index i = 0; i < a.rows(); ++i) {
    const double m = a.row(i).maxCoeff();
    const double lse = m + std::log((a.row(i).array() - m).exp().sum());
    out.row(i) = a.row(i).array() - lse;
  }
  return out;
}

}  // namespace

Var matmul(Var a, Var b) {
  DenseMatrix out = surjcycle::matmul(a.value(), b.value());
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.tracked(a.id())) t.accumulate(a, g * t.value(b.id()).transpose());
    if (t.tracked(b.id())) t.accumulate(b, t.value(a.id()).transpose() * g);
  });
}

Var transpose(Var a) {
  DenseMatrix out = a.value().transpose();
  return a.tape()->push(std::move(out), {a},
                        [a](Tape& t, const DenseMatrix& g) { t.accumulate(a, g.transpose()); });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  DenseMatrix out = a.value() + b.value();
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, g);
  });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  DenseMatrix out = a.value() - b.value();
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    t.accumulate(b, -g);
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  DenseMatrix out = s * a.value();
  return a.tape()->push(std::move(out), {a},
                        [a, s](Tape& t, const DenseMatrix& g) { t.accumulate(a, s * g); });
}

Var add_scalar(Var a, double s) {
  DenseMatrix out = a.value().array() + s;
  return a.tape()->push(std::move(out), {a},
                        [a](Tape& t, const DenseMatrix& g) { t.accumulate(a, g); });
}

Var hadamard(Var a, Var b) {
  require_same_shape("hadamard", a, b);
  DenseMatrix out = a.value().cwiseProduct(b.value());
  return a.tape()->push(std::move(out), {a, b}, [a, b](Tape& t, const DenseMatrix& g) {
    if (t.tracked(a.id())) t.accumulate(a, g.cwiseProduct(t.value(b.id())));
    if (t.tracked(b.id())) t.accumulate(b, g.cwiseProduct(t.value(a.id())));
  });
}

Var add_row(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ShapeError("add_row: " + shape_string(a.rows(), a.cols()) + " + " +
                     shape_string(r.rows(), r.cols()));
  }
  DenseMatrix out = a.value().rowwise() + r.value().row(0);
  return a.tape()->push(std::move(out), {a, r}, [a, r](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g);
    if (t.tracked(r.id())) t.accumulate(r, g.colwise().sum());
  });
}

Var mul_row(Var a, Var r) {
  if (r.rows() != 1 || r.cols() != a.cols()) {
    throw ShapeError("mul_row: " + shape_string(a.rows(), a.cols()) + " * " +
                     shape_string(r.rows(), r.cols()));
  }
  DenseMatrix out = a.value().array().rowwise() * r.value().row(0).array();
  return a.tape()->push(std::move(out), {a, r}, [a, r](Tape& t, const DenseMatrix& g) {
    const auto& av = t.value(a.id());
    const auto& rv = t.value(r.id());
    if (t.tracked(a.id())) {
      DenseMatrix d = g.array().rowwise() * rv.row(0).array();
      t.accumulate(a, d);
    }
    if (t.tracked(r.id())) t.accumulate(r, g.cwiseProduct(av).colwise().sum());
  });
}

Var sum(Var a) {
  DenseMatrix out(1, 1);
  out(0, 0) = a.value().sum();
  const Index rows = a.rows(), cols = a.cols();
  return a.tape()->push(std::move(out), {a}, [a, rows, cols](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, DenseMatrix::Constant(rows, cols, g(0, 0)));
  });
}

Var mean(Var a) {
  if (a.value().size() == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), 1.0 / static_cast<double>(a.value().size()));
}

Var colwise_sum(Var a) {
  DenseMatrix out = a.value().colwise().sum();
  const Index rows = a.rows();
  return a.tape()->push(std::move(out), {a}, [a, rows](Tape& t, const DenseMatrix& g) {
    DenseMatrix d = g.replicate(rows, 1);
    t.accumulate(a, d);
  });
}

Var rowwise_sum(Var a) {
  DenseMatrix out = a.value().rowwise().sum();
  const Index cols = a.cols();
  return a.tape()->push(std::move(out), {a}, [a, cols](Tape& t, const DenseMatrix& g) {
    DenseMatrix d = g.replicate(1, cols);
    t.accumulate(a, d);
  });
}

Var square(Var a) {
  return unary(a, [](double x) { return x * x; }, [](double x) { return 2.0 * x; });
}

Var exp(Var a) {
  return unary(a, [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Var log(Var a) {
  if ((a.value().array() <= 0.0).any()) throw ContractError("log: non-positive operand");
  return unary(a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Var tanh(Var a) {
  return unary(
      a, [](double x) { return std::tanh(x); },
      [](double x) {
        const double th = std::tanh(x);
        return 1.0 - th * th;
      });
}

Var sigmoid(Var a) {
  return unary(a, stable_sigmoid, [](double x) {
    const double s = stable_sigmoid(x);
    return s * (1.0 - s);
  });
}

Var log_softmax(Var a) {
  DenseMatrix out = row_log_softmax(a.value());
  Tape* tape = a.tape();
  const std::size_t self = tape->size();
  return tape->push(std::move(out), {a}, [a, self](Tape& t, const DenseMatrix& g) {
    const DenseMatrix p = t.value(self).array().exp();
    DenseMatrix d = g - (p.array().colwise() * g.rowwise().sum().array()).matrix();
    t.accumulate(a, d);
  });
}

Var softmax(Var a) { return exp(log_softmax(a)); }

Var trace(Var a) {
  if (a.rows() != a.cols()) throw ShapeError("trace: non-square " + shape_string(a.rows(), a.cols()));
  DenseMatrix out(1, 1);
  out(0, 0) = a.value().trace();
  const Index n = a.rows();
  return a.tape()->push(std::move(out), {a}, [a, n](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g(0, 0) * DenseMatrix::Identity(n, n));
  });
}

Var logdet_spd(Var a) {
  auto factor = std::make_shared<SpdFactor<double>>(a.value());
  DenseMatrix out(1, 1);
  out(0, 0) = factor->log_det();
  return a.tape()->push(std::move(out), {a}, [a, factor](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g(0, 0) * factor->inverse());
  });
}

Var solve_spd(Var a, Var b) {
  auto factor = std::make_shared<SpdFactor<double>>(a.value());
  DenseMatrix out = factor->solve(b.value());
  Tape* tape = a.tape();
  const std::size_t self = tape->size();
  return tape->push(std::move(out), {a, b}, [a, b, factor, self](Tape& t, const DenseMatrix& g) {
    const DenseMatrix db = factor->solve(g);
    if (t.tracked(a.id())) t.accumulate(a, -db * t.value(self).transpose());
    if (t.tracked(b.id())) t.accumulate(b, db);
  });
}

Var kron(Var a, Var b) {
  const DenseMatrix& av = a.value();
  const DenseMatrix& bv = b.value();
  const Index br = bv.rows(), bc = bv.cols();
  DenseMatrix out(av.rows() * br, av.cols() * bc);
  for (Index i = 0; i < av.rows(); ++i) {
    for (Index j = 0; j < av.cols(); ++j) out.block(i * br, j * bc, br, bc) = av(i, j) * bv;
  }
  return a.tape()->push(std::move(out), {a, b}, [a, b, br, bc](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& av = t.value(a.id());
    const DenseMatrix& bv = t.value(b.id());
    DenseMatrix da = DenseMatrix::Zero(av.rows(), av.cols());
    DenseMatrix db = DenseMatrix::Zero(br, bc);
    for (Index i = 0; i < av.rows(); ++i) {
      for (Index j = 0; j < av.cols(); ++j) {
        const auto blk = g.block(i * br, j * bc, br, bc);
        da(i, j) = blk.cwiseProduct(bv).sum();
        db += av(i, j) * blk;
      }
    }
    t.accumulate(a, da);
    t.accumulate(b, db);
  });
}

Var hcat(Var a, Var b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("hcat: " + shape_string(a.rows(), a.cols()) + " | " +
                     shape_string(b.rows(), b.cols()));
  }
  DenseMatrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Index ac = a.cols(), bc = b.cols();
  return a.tape()->push(std::move(out), {a, b}, [a, b, ac, bc](Tape& t, const DenseMatrix& g) {
    t.accumulate(a, g.leftCols(ac));
    t.accumulate(b, g.rightCols(bc));
  });
}

Var cols(Var a, Index start, Index count) {
  if (start < 0 || count < 0 || start + count > a.cols()) {
    throw ShapeError("cols: range [" + std::to_string(start) + ", " + std::to_string(start + count) +
                     ") of " + shape_string(a.rows(), a.cols()));
  }
  DenseMatrix out = a.value().middleCols(start, count);
  const Index rows = a.rows(), total = a.cols();
  return a.tape()->push(std::move(out), {a},
                        [a, start, count, rows, total](Tape& t, const DenseMatrix& g) {
                          DenseMatrix d = DenseMatrix::Zero(rows, total);
                          d.middleCols(start, count) = g;
                          t.accumulate(a, d);
                        });
}

Var squared_norm(Var a) { return sum(square(a)); }

Var bce_with_logits(Var logits, const DenseMatrix& target) {
  const DenseMatrix& z = logits.value();
  if (z.rows() != target.rows() || z.cols() != target.cols()) {
    throw ShapeError("bce_with_logits: " + shape_string(z.rows(), z.cols()) + " vs " +
                     shape_string(target.rows(), target.cols()));
  }
  DenseMatrix out(z.rows(), 1);
  for (Index i = 0; i < z.rows(); ++i) {
    double acc = 0.0;
    for (Index j = 0; j < z.cols(); ++j) {
      const double v = z(i, j);
      acc += std::max(v, 0.0) - v * target(i, j) + std::log1p(std::exp(-std::abs(v)));
    }
    out(i, 0) = acc;
  }
  return logits.tape()->push(std::move(out), {logits}, [logits, target](Tape& t, const DenseMatrix& g) {
    const DenseMatrix& zv = t.value(logits.id());
    DenseMatrix d = zv.unaryExpr([](double v) { return stable_sigmoid(v); }) - target;
    d.array().colwise() *= g.col(0).array();
    t.accumulate(logits, d);
  });
}

Var gaussian_sample(Var mu, Var s, Rng& rng) {
  require_same_shape("gaussian_sample", mu, s);
  if ((s.value().array() < 0.0).any()) throw ContractError("gaussian_sample: negative scale");
  Tape* tape = mu.tape();
  Var eps = tape->constant(rng.normal_matrix(mu.rows(), mu.cols()));
  return add(mu, hadamard(s, eps));
}

}  // namespace ad
}  // namespace surjcycle
