#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "qmt/errors.hpp"
#include "qmt/math.hpp"
#include "qmt/rng.hpp"

namespace qmt {

inline std::vector<double> uniform_grid(double t0, double T, std::size_t steps) {
  if (!(t0 <= T) || !std::isfinite(t0) || !std::isfinite(T))
    throw invalid_input("uniform_grid: need finite t0 <= T");
  std::vector<double> times(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    times[k] = t0 + (T - t0) * (static_cast<double>(k) / static_cast<double>(steps == 0 ? 1 : steps));
  times.back() = T;
  return times;
}

inline void check_grid(const std::vector<double>& times) {
  if (times.empty()) throw invalid_input("grid: empty time list");
  for (std::size_t k = 0; k + 1 < times.size(); ++k)
    if (!(times[k] < times[k + 1]))
      throw invalid_input("grid: times must be strictly increasing");
  if (!all_finite(times)) throw invalid_input("grid: non-finite time");
}

/// Index of t in the grid, matched up to a relative tolerance. Throws when t
/// is not a grid time.
inline std::size_t grid_index(const std::vector<double>& times, double t) {
  const double tol = 1e-12 * std::max(1.0, std::abs(t));
  for (std::size_t k = 0; k < times.size(); ++k)
    if (std::abs(times[k] - t) <= tol) return k;
  throw invalid_input("grid: t is not a grid time");
}

/// One realization of the common d-dimensional Brownian path on a grid,
/// stored as per-step increments (B at the first grid time is 0 by
/// convention). Fully determined by (grid, dim, seed).
struct CommonNoisePath {
  std::vector<double> times;       // K+1 entries
  int dim = 1;
  std::vector<double> increments;  // K * dim
  std::uint64_t seed = 0;

  std::size_t steps() const { return times.empty() ? 0 : times.size() - 1; }

  double dt(std::size_t k) const { return times[k + 1] - times[k]; }

  std::span<const double> increment(std::size_t k) const {
    return {increments.data() + k * static_cast<std::size_t>(dim),
            static_cast<std::size_t>(dim)};
  }

  /// B at grid index k: the running sum of increments.
  std::vector<double> value_at(std::size_t k) const {
    std::vector<double> b(static_cast<std::size_t>(dim), 0.0);
    for (std::size_t j = 0; j < k; ++j) {
      const auto inc = increment(j);
      for (std::size_t c = 0; c < b.size(); ++c) b[c] += inc[c];
    }
    return b;
  }
};

inline CommonNoisePath sample_path(std::vector<double> times, int dim, std::uint64_t seed) {
  check_grid(times);
  if (dim < 1) throw invalid_input("sample_path: dimension must be positive");
  CommonNoisePath p;
  p.dim = dim;
  p.seed = seed;
  const std::size_t k_steps = times.size() - 1;
  p.increments.resize(k_steps * static_cast<std::size_t>(dim));
  rng::Stream stream(seed);
  for (std::size_t k = 0; k < k_steps; ++k) {
    const double sdt = std::sqrt(times[k + 1] - times[k]);
    for (int c = 0; c < dim; ++c)
      p.increments[k * static_cast<std::size_t>(dim) + static_cast<std::size_t>(c)] =
          sdt * stream.gaussian();
  }
  p.times = std::move(times);
  return p;
}

/// Original increments up to splice_step, freshly sampled ones after. This is
/// the restart construction used by the dynamic-programming checks: the
/// history is kept, the tail is resampled.
inline CommonNoisePath splice_path(const CommonNoisePath& base, std::size_t splice_step,
                                   std::uint64_t fresh_seed) {
  if (splice_step > base.steps()) throw invalid_input("splice_path: step out of range");
  CommonNoisePath fresh = sample_path(base.times, base.dim, fresh_seed);
  const std::size_t cut = splice_step * static_cast<std::size_t>(base.dim);
  std::copy(base.increments.begin(), base.increments.begin() + static_cast<long>(cut),
            fresh.increments.begin());
  return fresh;
}

}  // namespace qmt
