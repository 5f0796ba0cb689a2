#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

namespace fedefc {

/// Dense row-major matrix with runtime dimensions. Used for feature tables and
/// per-sample probability tables.
class RowMatrix {
 public:
  RowMatrix() = default;
  RowMatrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), values_(rows * cols, fill) {}
  RowMatrix(std::size_t rows, std::size_t cols, std::vector<double> values)
      : rows_(rows), cols_(cols), values_(std::move(values)) {
    if (values_.size() != rows_ * cols_) {
      throw std::invalid_argument("RowMatrix: value count does not match shape");
    }
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  std::span<const double> row(std::size_t r) const {
    return {values_.data() + r * cols_, cols_};
  }
  std::span<double> row(std::size_t r) { return {values_.data() + r * cols_, cols_}; }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }

  std::span<const double> values() const { return values_; }
  std::vector<double>& storage() { return values_; }

  bool operator==(const RowMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
};

/// |C|x|C| matrix indexed (observed label i, true label j).
template <typename T>
class SquareMatrix {
 public:
  SquareMatrix() = default;
  explicit SquareMatrix(std::size_t n, T fill = T{}) : n_(n), values_(n * n, fill) {}
  SquareMatrix(std::size_t n, std::vector<T> values) : n_(n), values_(std::move(values)) {
    if (values_.size() != n_ * n_) {
      throw std::invalid_argument("SquareMatrix: expected n*n values");
    }
  }

  std::size_t size() const { return n_; }
  T operator()(std::size_t i, std::size_t j) const { return values_[i * n_ + j]; }
  T& operator()(std::size_t i, std::size_t j) { return values_[i * n_ + j]; }
  std::span<const T> values() const { return values_; }

  bool operator==(const SquareMatrix&) const = default;

 private:
  std::size_t n_ = 0;
  std::vector<T> values_;
};

/// Column-stochastic matrix of p(observed = i | true = j).
class TransitionMatrix : public SquareMatrix<double> {
 public:
  using SquareMatrix<double>::SquareMatrix;

  static TransitionMatrix identity(std::size_t n);

  /// Every entry nonnegative and every column sums to one within `tol`.
  bool is_column_stochastic(double tol = 1e-9) const;
  double column_sum(std::size_t j) const;
  /// Determinant by partial-pivot LU.
  double determinant() const;
};

/// C[i][j] = number of examples with observed label i confidently assigned to
/// true label j.
class CountMatrix : public SquareMatrix<std::int64_t> {
 public:
  using SquareMatrix<std::int64_t>::SquareMatrix;

  std::int64_t total() const;
  std::int64_t column_total(std::size_t j) const;
  std::int64_t row_total(std::size_t i) const;
};

}  // namespace fedefc
