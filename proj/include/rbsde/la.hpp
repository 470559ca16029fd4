#pragma once

#include <cassert>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rbsde/errors.hpp"

// Small dense linear algebra for points in R^d (d is tiny, runtime-sized)
// and for the normal equations of the regression step.

namespace rbsde {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double dist2(std::span<const double> a, std::span<const double> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline Vec operator+(Vec a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

inline Vec operator-(Vec a, std::span<const double> b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] -= b[i];
  return a;
}

inline Vec operator*(double s, Vec a) {
  for (double& x : a) x *= s;
  return a;
}

inline void axpy(double s, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += s * x[i];
}

inline bool all_finite(std::span<const double> a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

// Neumaier-compensated accumulator. The backward induction compounds one
// regression per step, so per-step sums must stay near machine precision
// even across 1e5-term reductions.
struct Kahan {
  double sum = 0.0;
  double comp = 0.0;

  void add(double x) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  // Merge another accumulator (fixed order gives deterministic results).
  void merge(const Kahan& o) {
    add(o.sum);
    comp += o.comp;
  }
  double value() const { return sum + comp; }
};

// Row-major dense matrix, only as large as a regression Gram matrix.
struct Mat {
  std::size_t rows = 0, cols = 0;
  std::vector<double> a;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), a(r * c, 0.0) {}
  double& operator()(std::size_t i, std::size_t j) { return a[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return a[i * cols + j]; }
};

// In-place Cholesky factorization of a symmetric positive definite matrix.
// Returns false if a pivot drops below `min_pivot` (rank deficiency).
inline bool cholesky(Mat& g, double min_pivot = 0.0) {
  assert(g.rows == g.cols);
  const std::size_t n = g.rows;
  for (std::size_t j = 0; j < n; ++j) {
    double d = g(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= g(j, k) * g(j, k);
    if (!(d > min_pivot)) return false;
    g(j, j) = std::sqrt(d);
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = g(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= g(i, k) * g(j, k);
      g(i, j) = s / g(j, j);
    }
  }
  return true;
}

// Solve L L^T x = b given the Cholesky factor in the lower triangle.
inline void cholesky_solve(const Mat& l, std::span<double> b) {
  const std::size_t n = l.rows;
  assert(b.size() == n);
  for (std::size_t i = 0; i < n; ++i) {
    double s = b[i];
    for (std::size_t k = 0; k < i; ++k) s -= l(i, k) * b[k];
    b[i] = s / l(i, i);
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = b[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= l(k, ii) * b[k];
    b[ii] = s / l(ii, ii);
  }
}

} // namespace rbsde
