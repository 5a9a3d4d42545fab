#pragma once

#include "qmt/measure_function.hpp"
#include "qmt/model.hpp"

namespace qmt {

/// Pointwise control map x -> u used by the operator quadratures.
using PointControlMap = std::function<void(std::span<const double>, std::span<double>)>;

namespace detail {

// Generator quadrature with per-particle controls already evaluated (N*q):
//   (1/N)    sum_i [ b^T d_mu w + (1/2) Tr(dx d_mu w . a a^T) ](x_i)
// + (1/2N^2) sum_ij Tr(a_i^T d2_mu w(x_i, x_j) a_j).
inline double generator_quadrature(const MeasureFunction::Prepared& prep, double t,
                                   const EmpiricalMeasure& mu, std::span<const double> us,
                                   const CoefficientModel& model) {
  const auto d = static_cast<std::size_t>(model.dim);
  const auto q = static_cast<std::size_t>(model.control_dim);
  const std::size_t n = mu.size();

  std::vector<double> b(d), as(n * d * d), dmu(d), gamma(d * d);
  std::vector<double> first(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.point(i);
    const std::span<const double> u{us.data() + i * q, q};
    model.drift(t, x, mu, u, b);
    const std::span<double> a{as.data() + i * d * d, d * d};
    model.diffusion(t, x, mu, u, a);
    prep.d_mu_at(i, dmu);
    prep.dx_d_mu_at(i, gamma);
    double tr = 0.0;
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s2 = 0; s2 < d; ++s2) {
        double aat = 0.0;
        for (std::size_t g = 0; g < d; ++g) aat += a[s2 * d + g] * a[r * d + g];
        tr += gamma[r * d + s2] * aat;
      }
    first[i] = dot(b, dmu) + 0.5 * tr;
  }
  return det_mean(std::move(first)) + 0.5 * prep.d2_bilinear(as, d);
}

// | (1/N) sum_i d_mu w(x_i)^T a(t, x_i, mu, u_i) |, norm over the d Brownian
// components.
inline double n_integral_norm(const MeasureFunction::Prepared& prep, double t,
                              const EmpiricalMeasure& mu, std::span<const double> us,
                              const CoefficientModel& model) {
  const auto d = static_cast<std::size_t>(model.dim);
  const auto q = static_cast<std::size_t>(model.control_dim);
  const std::size_t n = mu.size();

  std::vector<double> a(d * d), dmu(d);
  std::vector<double> per_particle(n * d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto x = mu.point(i);
    model.diffusion(t, x, mu, {us.data() + i * q, q}, a);
    prep.d_mu_at(i, dmu);
    for (std::size_t g = 0; g < d; ++g) {
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += dmu[r] * a[r * d + g];
      per_particle[i * d + g] = s;
    }
  }
  std::vector<double> rowvec(d), cols(n);
  for (std::size_t g = 0; g < d; ++g) {
    for (std::size_t i = 0; i < n; ++i) cols[i] = per_particle[i * d + g];
    rowvec[g] = det_mean(cols);
  }
  return norm2(rowvec);
}

inline std::vector<double> evaluate_map(const PointControlMap& u, const EmpiricalMeasure& mu,
                                        std::size_t q) {
  const std::size_t n = mu.size();
  std::vector<double> us(n * q);
  for (std::size_t i = 0; i < n; ++i) u(mu.point(i), {us.data() + i * q, q});
  return us;
}

}  // namespace detail

/// Generator applied to w at (t, mu) under the feedback map u, coefficients
/// evaluated at (t, x_i, mu, u(x_i)).
inline double hamiltonian_L(const MeasureFunction& w, double t, const EmpiricalMeasure& mu,
                            const PointControlMap& u, const CoefficientModel& model) {
  if (!w.has_derivatives()) throw invalid_input("hamiltonian_L: derivatives missing");
  const auto prep = w.prepare(t, mu);
  const auto us = detail::evaluate_map(u, mu, static_cast<std::size_t>(model.control_dim));
  return detail::generator_quadrature(prep, t, mu, us, model);
}

/// Martingale-compatibility test: true iff
///   | (1/N) sum_i d_mu w(t, mu)(x_i)^T a(t, x_i, mu, u(x_i)) | <= eps.
/// A map that ignores x (the measure-feedback class) is admissible unchanged.
inline bool n_set_test(const MeasureFunction& w, double t, const EmpiricalMeasure& mu,
                       const PointControlMap& u, const CoefficientModel& model, double eps,
                       double* integral_norm = nullptr) {
  if (!w.has_derivatives()) throw invalid_input("n_set_test: derivatives missing");
  if (eps < 0.0) throw invalid_input("n_set_test: eps must be nonnegative");
  const auto prep = w.prepare(t, mu);
  const auto us = detail::evaluate_map(u, mu, static_cast<std::size_t>(model.control_dim));
  const double norm = detail::n_integral_norm(prep, t, mu, us, model);
  if (integral_norm != nullptr) *integral_norm = norm;
  return norm <= eps;
}

}  // namespace qmt
