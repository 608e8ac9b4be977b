#pragma once

// Dense vectors and matrices for the tiny (d <= 8) systems used throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gwlab {

template <class Real>
using Vector = std::vector<Real>;

template <class Real = double>
class Matrix {
 public:
  Matrix() = default;
  explicit Matrix(std::size_t n, Real fill = Real(0)) : n_(n), data_(n * n, fill) {}

  static Matrix identity(std::size_t n) {
    Matrix m(n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = Real(1);
    return m;
  }

  std::size_t size() const noexcept { return n_; }

  Real& operator()(std::size_t i, std::size_t j) { return data_[i * n_ + j]; }
  const Real& operator()(std::size_t i, std::size_t j) const { return data_[i * n_ + j]; }

  Matrix transposed() const {
    Matrix t(n_);
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = 0; j < n_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  Real min_entry() const { return *std::min_element(data_.begin(), data_.end()); }

  Matrix& operator*=(Real a) {
    for (auto& x : data_) x *= a;
    return *this;
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t n_ = 0;
  std::vector<Real> data_;
};

inline void require_dim(std::size_t got, std::size_t want, const char* what) {
  if (got != want)
    throw std::invalid_argument(std::string(what) + ": dimension " + std::to_string(got) +
                                " does not match " + std::to_string(want));
}

template <class Real>
Matrix<Real> operator*(const Matrix<Real>& a, const Matrix<Real>& b) {
  require_dim(b.size(), a.size(), "matrix product");
  const std::size_t n = a.size();
  Matrix<Real> c(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < n; ++k) {
      const Real aik = a(i, k);
      for (std::size_t j = 0; j < n; ++j) c(i, j) += aik * b(k, j);
    }
  return c;
}

template <class Real>
Vector<Real> operator*(const Matrix<Real>& a, const Vector<Real>& x) {
  require_dim(x.size(), a.size(), "matrix-vector product");
  Vector<Real> y(a.size(), Real(0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) y[i] += a(i, j) * x[j];
  return y;
}

/// Row vector times matrix, x' A.
template <class Real>
Vector<Real> left_multiply(const Vector<Real>& x, const Matrix<Real>& a) {
  require_dim(x.size(), a.size(), "vector-matrix product");
  Vector<Real> y(a.size(), Real(0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a.size(); ++j) y[j] += x[i] * a(i, j);
  return y;
}

template <class Real>
Matrix<Real> power(Matrix<Real> base, unsigned exponent) {
  Matrix<Real> result = Matrix<Real>::identity(base.size());
  while (exponent > 0) {
    if (exponent & 1u) result = result * base;
    exponent >>= 1;
    if (exponent > 0) base = base * base;
  }
  return result;
}

template <class Real>
Real dot(const Vector<Real>& a, const Vector<Real>& b) {
  require_dim(b.size(), a.size(), "dot product");
  Real s(0);
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

template <class Real>
Real sum(const Vector<Real>& a) {
  Real s(0);
  for (const auto& x : a) s += x;
  return s;
}

template <class Real>
Real max_abs(const Vector<Real>& a) {
  Real m(0);
  for (const auto& x : a) {
    using std::abs;
    m = std::max<Real>(m, abs(x));
  }
  return m;
}

template <class Real>
Vector<Real> hadamard(const Vector<Real>& a, const Vector<Real>& b) {
  require_dim(b.size(), a.size(), "componentwise product");
  Vector<Real> c(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = a[i] * b[i];
  return c;
}

/// Integer power by repeated squaring; 0^0 == 1.
template <class Real>
Real ipow(Real base, unsigned long long e) {
  Real result(1);
  while (e > 0) {
    if (e & 1ull) result *= base;
    e >>= 1;
    if (e > 0) base *= base;
  }
  return result;
}

}  // namespace gwlab
