#pragma once

#include "qmt/ensemble.hpp"
#include "qmt/measure_function.hpp"

namespace qmt {

/// Value of the lift at a particle representative: w(t, law of the ensemble).
inline double lift_eval(const MeasureFunction& w, double t, const ParticleEnsemble& e) {
  return w.eval(t, e.as_measure());
}

/// Measure derivative at particle i by central differences of the lift: a
/// single particle carries weight 1/N in the empirical representative, so the
/// difference quotient is rescaled by N. Accurate to O(h^2) for smooth w.
inline std::vector<double> fd_dmu(const MeasureFunction& w, double t, const EmpiricalMeasure& mu,
                                  std::size_t i, double h) {
  if (!(h > 0.0)) throw invalid_input("fd_dmu: step must be positive");
  const auto d = static_cast<std::size_t>(mu.dim());
  const auto n = static_cast<double>(mu.size());
  std::vector<double> out(d);
  std::vector<double> x(mu.point(i).begin(), mu.point(i).end());
  for (std::size_t c = 0; c < d; ++c) {
    const double orig = x[c];
    x[c] = orig + h;
    const double up = w.eval(t, mu.with_point(i, x));
    x[c] = orig - h;
    const double dn = w.eval(t, mu.with_point(i, x));
    x[c] = orig;
    out[c] = n * (up - dn) / (2.0 * h);
  }
  if (!all_finite(out)) throw numeric_error("fd_dmu: non-finite difference");
  return out;
}

/// Second-order action of the lift along a per-particle displacement field y
/// (N*d values): (w(mu + h y) - 2 w(mu) + w(mu - h y)) / h^2. This is the
/// quadratic form of the lifted second derivative evaluated at y.
inline double fd_d2_action(const MeasureFunction& w, double t, const EmpiricalMeasure& mu,
                           std::span<const double> y, double h) {
  if (!(h > 0.0)) throw invalid_input("fd_d2_action: step must be positive");
  if (y.size() != mu.flat().size())
    throw invalid_input("fd_d2_action: displacement size mismatch");
  const double up = w.eval(t, mu.displaced(y, h));
  const double mid = w.eval(t, mu);
  const double dn = w.eval(t, mu.displaced(y, -h));
  const double out = (up - 2.0 * mid + dn) / (h * h);
  if (!std::isfinite(out)) throw numeric_error("fd_d2_action: non-finite difference");
  return out;
}

/// Analytic counterpart of fd_d2_action from the derivative components:
///   (1/N)  sum_i  y_i^T dx_d_mu(x_i) y_i
/// + (1/N^2) sum_ij y_i^T d2_mu(x_i, x_j) y_j.
inline double d2_action_quadrature(const MeasureFunction& w, double t, const EmpiricalMeasure& mu,
                                   std::span<const double> y) {
  const auto d = static_cast<std::size_t>(mu.dim());
  const std::size_t n = mu.size();
  if (y.size() != n * d) throw invalid_input("d2_action_quadrature: displacement size mismatch");
  auto prep = w.prepare(t, mu);

  std::vector<double> gamma(d * d), gy(d), first(n);
  for (std::size_t i = 0; i < n; ++i) {
    prep.dx_d_mu_at(i, gamma);
    const std::span<const double> yi{y.data() + i * d, d};
    matvec(gamma, d, d, yi, gy);
    first[i] = dot(yi, gy);
  }
  const double first_term = det_mean(std::move(first));
  const double second_term = prep.d2_bilinear(y, 1);  // y_i as d x 1 blocks
  return first_term + second_term;
}

/// Wrap a derivative-free w with finite-difference derivatives (central
/// stencils; mixed-particle probes for the second measure derivative). The
/// wrapped function only supports derivative queries at particles of the
/// prepared measure, which is all the quadratures need.
inline MeasureFunction with_fd_derivatives(MeasureFunction w, double h_first = 1e-5,
                                           double h_second = 1e-4) {
  if (!w.eval) throw invalid_input("with_fd_derivatives: missing eval");
  MeasureFunction out = w;
  out.label = w.label + "+fd";
  out.prepare_hook = [w, h_first, h_second](double t, const EmpiricalMeasure& mu) {
    MeasureFunction::Prepared p;
    const auto d = static_cast<std::size_t>(mu.dim());
    const std::size_t n = mu.size();
    p.dt_value = (w.eval(t + h_first, mu) - w.eval(t - h_first, mu)) / (2.0 * h_first);
    p.d_mu_at = [w, h_first, t, &mu](std::size_t i, std::span<double> outv) {
      const auto v = fd_dmu(w, t, mu, i, h_first);
      std::copy(v.begin(), v.end(), outv.begin());
    };
    p.dx_d_mu_at = [w, h_first, h_second, t, &mu, d](std::size_t i, std::span<double> outm) {
      // d/dx of the measure derivative at the same particle: central stencil
      // on the base point of fd_dmu.
      std::vector<double> x(mu.point(i).begin(), mu.point(i).end());
      for (std::size_t c = 0; c < d; ++c) {
        const double orig = x[c];
        x[c] = orig + h_second;
        const auto up = fd_dmu(w, t, mu.with_point(i, x), i, h_first);
        x[c] = orig - h_second;
        const auto dn = fd_dmu(w, t, mu.with_point(i, x), i, h_first);
        x[c] = orig;
        for (std::size_t r = 0; r < d; ++r)
          outm[r * d + c] = (up[r] - dn[r]) / (2.0 * h_second);
      }
    };
    p.d2_mu_at = [w, h_second, t, &mu, d, n](std::size_t i, std::size_t j,
                                             std::span<double> outm) {
      if (i == j)
        throw invalid_input(
            "fd derivatives: diagonal d2_mu entries are not separable from dx_d_mu; "
            "use d2_bilinear");
      // Mixed difference moving particle i along e_r and particle j along e_c;
      // the 1/N weight of each particle cancels against the N^2 factor.
      const auto nn = static_cast<double>(n);
      std::vector<double> xi(mu.point(i).begin(), mu.point(i).end());
      std::vector<double> xj(mu.point(j).begin(), mu.point(j).end());
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t c = 0; c < d; ++c) {
          double acc = 0.0;
          for (int si = -1; si <= 1; si += 2)
            for (int sj = -1; sj <= 1; sj += 2) {
              xi[r] += si * h_second;
              xj[c] += sj * h_second;
              acc += si * sj * w.eval(t, mu.with_point(i, xi).with_point(j, xj));
              xi[r] -= si * h_second;
              xj[c] -= sj * h_second;
            }
          outm[r * d + c] = nn * nn * acc / (4.0 * h_second * h_second);
        }
    };
    // Quadratic form along the per-column displacement fields:
    // sum_g fd_d2_action(A e_g) gives trace part + double sum; subtract the
    // trace part so only the double sum remains.
    p.d2_bilinear = [w, h_second, t, &mu, d, n, dx = p.dx_d_mu_at](
                        std::span<const double> blocks, std::size_t c) -> double {
      std::vector<double> y(n * d);
      double acc = 0.0;
      std::vector<double> gamma(d * d), gy(d), first(n);
      for (std::size_t g = 0; g < c; ++g) {
        for (std::size_t i = 0; i < n; ++i)
          for (std::size_t r = 0; r < d; ++r) y[i * d + r] = blocks[i * d * c + r * c + g];
        acc += fd_d2_action(w, t, mu, y, h_second);
        for (std::size_t i = 0; i < n; ++i) {
          dx(i, gamma);
          const std::span<const double> yi{y.data() + i * d, d};
          matvec(gamma, d, d, yi, gy);
          first[i] = dot(yi, gy);
        }
        acc -= det_mean(first);
      }
      return acc;
    };
    return p;
  };
  return out;
}

}  // namespace qmt
