#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace qmt {

// Sum after sorting by value. Deterministic and invariant under permutation of
// the inputs; every reduction whose result must not depend on particle order
// or on the worker count goes through here.
inline double det_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

inline double det_mean(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const double n = static_cast<double>(v.size());
  return det_sum(std::move(v)) / n;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

// y = M x with M row-major r x c.
inline void matvec(std::span<const double> m, std::size_t r, std::size_t c,
                   std::span<const double> x, std::span<double> y) {
  for (std::size_t i = 0; i < r; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += m[i * c + j] * x[j];
    y[i] = s;
  }
}

// y = M^T x with M row-major r x c (so y has length c).
inline void mat_t_vec(std::span<const double> m, std::size_t r, std::size_t c,
                      std::span<const double> x, std::span<double> y) {
  for (std::size_t j = 0; j < c; ++j) y[j] = 0.0;
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) y[j] += m[i * c + j] * x[i];
}

inline double frobenius_norm(std::span<const double> m) { return norm2(m); }

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

inline double clip(double x, double lo, double hi) { return std::min(std::max(x, lo), hi); }

}  // namespace qmt
