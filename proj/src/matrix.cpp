#include "fedefc/matrix.hpp"

#include <cmath>
#include <utility>

namespace fedefc {

TransitionMatrix TransitionMatrix::identity(std::size_t n) {
  TransitionMatrix m(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double TransitionMatrix::column_sum(std::size_t j) const {
  double s = 0.0;
  for (std::size_t i = 0; i < size(); ++i) s += (*this)(i, j);
  return s;
}

bool TransitionMatrix::is_column_stochastic(double tol) const {
  if (size() == 0) return false;
  for (std::size_t j = 0; j < size(); ++j) {
    for (std::size_t i = 0; i < size(); ++i) {
      const double v = (*this)(i, j);
      if (!std::isfinite(v) || v < 0.0) return false;
    }
    if (std::abs(column_sum(j) - 1.0) > tol) return false;
  }
  return true;
}

double TransitionMatrix::determinant() const {
  const std::size_t n = size();
  std::vector<double> a(values().begin(), values().end());
  double det = 1.0;
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t pivot = k;
    for (std::size_t r = k + 1; r < n; ++r) {
      if (std::abs(a[r * n + k]) > std::abs(a[pivot * n + k])) pivot = r;
    }
    if (a[pivot * n + k] == 0.0) return 0.0;
    if (pivot != k) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a[k * n + c], a[pivot * n + c]);
      det = -det;
    }
    const double diag = a[k * n + k];
    det *= diag;
    for (std::size_t r = k + 1; r < n; ++r) {
      const double f = a[r * n + k] / diag;
      for (std::size_t c = k; c < n; ++c) a[r * n + c] -= f * a[k * n + c];
    }
  }
  return det;
}

std::int64_t CountMatrix::total() const {
  std::int64_t s = 0;
  for (auto v : values()) s += v;
  return s;
}

std::int64_t CountMatrix::column_total(std::size_t j) const {
  std::int64_t s = 0;
  for (std::size_t i = 0; i < size(); ++i) s += (*this)(i, j);
  return s;
}

std::int64_t CountMatrix::row_total(std::size_t i) const {
  std::int64_t s = 0;
  for (std::size_t j = 0; j < size(); ++j) s += (*this)(i, j);
  return s;
}

}  // namespace fedefc
