#pragma once

// Dense row-major matrices and the differentiable primitives used by the
// fixed fuse -> heads -> losses graph. Every primitive has a hand-derived
// backward companion; there is no tape.
//
// Reductions always run in ascending index order. The matrix products use the
// i-k-j loop order so each output element accumulates its k terms left to
// right, which keeps results bit-reproducible while the inner j loop still
// vectorizes.

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "updp/error.hpp"

namespace updp {

/// Vectors with an L2 norm at or below this are degenerate.
inline constexpr double kNormEpsilon = 1e-12;

template <typename Real>
class Matrix {
 public:
  using value_type = Real;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, Real fill = Real{0})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<Real> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::DimMismatch, "matrix data length does not match rows*cols");
    }
  }

  static Matrix from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r == 0 ? 0 : rows.begin()->size();
    Matrix out(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      if (row.size() != c) {
        throw Error(ErrorCode::DimMismatch, "ragged rows in matrix literal");
      }
      std::size_t j = 0;
      for (const Real v : row) out(i, j++) = v;
      ++i;
    }
    return out;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<Real> values() noexcept { return data_; }
  std::span<const Real> values() const noexcept { return data_; }
  const std::vector<Real>& data() const noexcept { return data_; }

  template <typename Other>
  Matrix<Other> cast() const {
    std::vector<Other> out(data_.begin(), data_.end());
    return Matrix<Other>(rows_, cols_, std::move(out));
  }

  Matrix transposed() const {
    Matrix out(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) out(j, i) = (*this)(i, j);
    return out;
  }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

using DenseMatrix = Matrix<double>;

template <typename Real>
bool all_finite(std::span<const Real> values);

template <typename Real>
bool all_finite(const Matrix<Real>& m) {
  return all_finite<Real>(m.values());
}

// ---- products -------------------------------------------------------------

/// A (n x k) times B (k x m).
template <typename Real>
Matrix<Real> matmul(const Matrix<Real>& a, const Matrix<Real>& b);

/// A (n x k) times B^T, B is (m x k).
template <typename Real>
Matrix<Real> matmul_bt(const Matrix<Real>& a, const Matrix<Real>& b);

/// A^T times B, A is (k x n), B is (k x m).
template <typename Real>
Matrix<Real> matmul_at(const Matrix<Real>& a, const Matrix<Real>& b);

/// X W^T + b, broadcasting the bias over rows.
template <typename Real>
Matrix<Real> affine(const Matrix<Real>& x, const Matrix<Real>& weight,
                    std::span<const Real> bias);

template <typename Real>
std::vector<Real> column_sums(const Matrix<Real>& m);

template <typename Real>
void add_in_place(Matrix<Real>& target, const Matrix<Real>& other);

// ---- pointwise and row-wise primitives -----------------------------------

/// v / ||v||. Throws ZeroVector when ||v|| <= kNormEpsilon.
template <typename Real>
std::vector<Real> l2_normalize(std::span<const Real> v);

template <typename Real>
Matrix<Real> l2_normalize_rows(const Matrix<Real>& m);

/// Gradient w.r.t. the input of l2_normalize_rows, given its input, output
/// and the upstream gradient.
template <typename Real>
Matrix<Real> l2_normalize_rows_backward(const Matrix<Real>& input,
                                        const Matrix<Real>& output,
                                        const Matrix<Real>& grad_output);

/// (i, j) = <A_i, B_j> / (||A_i|| ||B_j||).
template <typename Real>
Matrix<Real> cosine_sim_matrix(const Matrix<Real>& a, const Matrix<Real>& b);

/// Row-wise softmax with row-max subtraction.
template <typename Real>
Matrix<Real> softmax_rows(const Matrix<Real>& m);

template <typename Real>
Matrix<Real> softmax_rows_backward(const Matrix<Real>& output,
                                   const Matrix<Real>& grad_output);

template <typename Real>
Matrix<Real> relu(const Matrix<Real>& m);

template <typename Real>
Matrix<Real> relu_backward(const Matrix<Real>& pre_activation,
                           const Matrix<Real>& grad_output);

// ---- gradient checking ----------------------------------------------------

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_parameter_index = 0;
  double eps = 0.0;
};

/// A scalar function of a flat parameter vector together with its analytic
/// gradient.
struct DifferentiableFunction {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

/// Compares the analytic gradient against central differences
/// (f(p + eps e_i) - f(p - eps e_i)) / (2 eps), coordinate by coordinate, with
/// relative error |a - n| / max(|a|, |n|, 1e-8).
GradCheckReport finite_diff_check(const DifferentiableFunction& fn,
                                  std::span<const double> params, double eps);

}  // namespace updp
