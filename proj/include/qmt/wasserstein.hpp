#pragma once

#include <algorithm>
#include <numeric>
#include <string>

#include "qmt/assignment.hpp"
#include "qmt/errors.hpp"
#include "qmt/measure.hpp"
#include "qmt/parallel.hpp"

namespace qmt {

struct W2Options {
  /// Largest point count handed to the exact assignment solver (and to the
  /// unequal-count replication rule).
  std::size_t exact_cap = 4096;
  /// Past the cap, fall back to a lexicographic-pairing coupling. That is an
  /// upper bound on the true distance, not the optimum.
  bool approx_above_cap = false;
  int workers = 1;
};

namespace detail {

// Canonical argument order so that W2(mu, nu) and W2(nu, mu) run the exact
// same arithmetic.
inline bool measure_less(const EmpiricalMeasure& a, const EmpiricalMeasure& b) {
  if (a.size() != b.size()) return a.size() < b.size();
  const auto fa = a.flat(), fb = b.flat();
  return std::lexicographical_compare(fa.begin(), fa.end(), fb.begin(), fb.end());
}

inline std::vector<double> replicate(const EmpiricalMeasure& m, std::size_t copies) {
  const auto d = static_cast<std::size_t>(m.dim());
  std::vector<double> out;
  out.reserve(m.size() * copies * d);
  for (std::size_t i = 0; i < m.size(); ++i) {
    const auto p = m.point(i);
    for (std::size_t r = 0; r < copies; ++r) out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

inline double sorted_line_distance(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  std::vector<double> costs(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    costs[i] = d * d;
  }
  return std::sqrt(det_mean(std::move(costs)));
}

inline double lex_pair_distance(std::vector<double> xa, std::vector<double> xb, std::size_t d) {
  const std::size_t n = xa.size() / d;
  auto order = [d, n](const std::vector<double>& xs) {
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t i, std::size_t j) {
      return std::lexicographical_compare(xs.begin() + static_cast<long>(i * d),
                                          xs.begin() + static_cast<long>((i + 1) * d),
                                          xs.begin() + static_cast<long>(j * d),
                                          xs.begin() + static_cast<long>((j + 1) * d));
    });
    return idx;
  };
  const auto ia = order(xa), ib = order(xb);
  std::vector<double> costs(n);
  for (std::size_t k = 0; k < n; ++k) {
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double diff = xa[ia[k] * d + c] - xb[ib[k] * d + c];
      s += diff * diff;
    }
    costs[k] = s;
  }
  return std::sqrt(det_mean(std::move(costs)));
}

}  // namespace detail

/// 2-Wasserstein distance between equal-weight empirical measures: square root
/// of the minimal mean squared displacement over couplings. Equal counts go
/// through an exact optimal assignment on the squared-distance matrix (sorted
/// pairing when d = 1); unequal counts are replicated to lcm(N1, N2) copies
/// first, which is exact for uniform weights.
inline double wasserstein2(const EmpiricalMeasure& mu, const EmpiricalMeasure& nu,
                           const W2Options& opt = {}) {
  if (mu.dim() != nu.dim())
    throw invalid_input("wasserstein2: dimension mismatch (" + std::to_string(mu.dim()) +
                        " vs " + std::to_string(nu.dim()) + ")");
  const EmpiricalMeasure* a = &mu;
  const EmpiricalMeasure* b = &nu;
  if (detail::measure_less(*b, *a)) std::swap(a, b);

  const auto d = static_cast<std::size_t>(a->dim());
  const std::size_t na = a->size(), nb = b->size();

  std::size_t n = na;
  std::vector<double> xa(a->flat().begin(), a->flat().end());
  std::vector<double> xb(b->flat().begin(), b->flat().end());
  if (na != nb) {
    const std::size_t l = std::lcm(na, nb);
    if (l > opt.exact_cap)
      throw capacity_error("wasserstein2: lcm(" + std::to_string(na) + ", " +
                           std::to_string(nb) + ") exceeds the cap of " +
                           std::to_string(opt.exact_cap));
    xa = detail::replicate(*a, l / na);
    xb = detail::replicate(*b, l / nb);
    n = l;
  }

  if (d == 1) return detail::sorted_line_distance(std::move(xa), std::move(xb));

  if (n > opt.exact_cap) {
    if (opt.approx_above_cap) return detail::lex_pair_distance(std::move(xa), std::move(xb), d);
    throw capacity_error("wasserstein2: " + std::to_string(n) +
                         " points exceed the exact-solver cap of " +
                         std::to_string(opt.exact_cap) +
                         " (set approx_above_cap for an upper-bound estimate)");
  }

  std::vector<double> cost(n * n);
  parallel_for(n, opt.workers, [&](std::size_t i) {
    const std::span<const double> pi{xa.data() + i * d, d};
    for (std::size_t j = 0; j < n; ++j)
      cost[i * n + j] = sq_dist(pi, {xb.data() + j * d, d});
  });
  const auto match = solve_assignment(n, cost);
  std::vector<double> chosen(n);
  for (std::size_t i = 0; i < n; ++i) chosen[i] = cost[i * n + static_cast<std::size_t>(match[i])];
  return std::sqrt(det_mean(std::move(chosen)));
}

}  // namespace qmt
