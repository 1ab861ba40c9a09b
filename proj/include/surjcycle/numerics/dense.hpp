#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <Eigen/SVD>

#include <cmath>
#include <stdexcept>
#include <string>

namespace surjcycle {

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

using DenseMatrix = MatrixX<double>;
using DenseVector = VectorX<double>;
using DenseRowVector = RowVectorX<double>;
using Index = Eigen::Index;

/// Dimension mismatch between operands.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Violated precondition on an argument value (negative scale, bad index, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Factorization failure or non-finite value produced by a computation.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline std::string shape_string(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
  return m.allFinite();
}

template <typename DerivedA, typename DerivedB>
auto matmul(const Eigen::MatrixBase<DerivedA>& a, const Eigen::MatrixBase<DerivedB>& b) {
  using Scalar = typename DerivedA::Scalar;
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: " + shape_string(a.rows(), a.cols()) + " * " +
                     shape_string(b.rows(), b.cols()));
  }
  MatrixX<Scalar> out = a * b;
  return out;
}

/// Cholesky factorization of a symmetric positive definite matrix.
///
/// Only the lower triangle of the input is read. Construction throws
/// NumericalError when a pivot is not strictly positive.
template <typename Scalar>
class SpdFactor {
 public:
  template <typename Derived>
  explicit SpdFactor(const Eigen::MatrixBase<Derived>& m) {
    if (m.rows() != m.cols()) {
      throw ShapeError("solve_spd: matrix is " + shape_string(m.rows(), m.cols()));
    }
    llt_.compute(m);
    if (llt_.info() != Eigen::Success) {
      throw NumericalError("solve_spd: matrix is not positive definite");
    }
    const auto diag = llt_.matrixLLT().diagonal();
    for (Index i = 0; i < diag.size(); ++i) {
      if (!(diag(i) > Scalar(0)) || !std::isfinite(diag(i))) {
        throw NumericalError("solve_spd: non-positive pivot at " + std::to_string(i));
      }
    }
  }

  Index dim() const { return llt_.matrixLLT().rows(); }

  template <typename Derived>
  MatrixX<Scalar> solve(const Eigen::MatrixBase<Derived>& rhs) const {
    if (rhs.rows() != dim()) {
      throw ShapeError("solve_spd: rhs is " + shape_string(rhs.rows(), rhs.cols()) +
                       ", matrix dim " + std::to_string(dim()));
    }
    return llt_.solve(rhs);
  }

  MatrixX<Scalar> inverse() const {
    return solve(MatrixX<Scalar>::Identity(dim(), dim()));
  }

  Scalar log_det() const {
    return Scalar(2) * llt_.matrixLLT().diagonal().array().log().sum();
  }

 private:
  Eigen::LLT<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>> llt_;
};

template <typename DerivedM, typename DerivedR>
auto solve_spd(const Eigen::MatrixBase<DerivedM>& m, const Eigen::MatrixBase<DerivedR>& rhs) {
  return SpdFactor<typename DerivedM::Scalar>(m).solve(rhs);
}

template <typename Derived>
typename Derived::Scalar log_det_spd(const Eigen::MatrixBase<Derived>& m) {
  return SpdFactor<typename Derived::Scalar>(m).log_det();
}

/// Number of singular values above rel_tol * sigma_max.
template <typename Derived>
Index numerical_rank(const Eigen::MatrixBase<Derived>& m, double rel_tol = 1e-8) {
  if (m.size() == 0) return 0;
  Eigen::JacobiSVD<Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>> svd(m);
  const auto& sv = svd.singularValues();
  if (sv.size() == 0 || sv(0) == 0) return 0;
  Index r = 0;
  for (Index i = 0; i < sv.size(); ++i) {
    if (sv(i) > rel_tol * sv(0)) ++r;
  }
  return r;
}

template <typename Derived>
double max_abs(const Eigen::MatrixBase<Derived>& m) {
  return m.size() == 0 ? 0.0 : static_cast<double>(m.cwiseAbs().maxCoeff());
}

}  // namespace surjcycle
