#pragma once

#include "qmt/lions.hpp"
#include "qmt/model.hpp"
#include "qmt/simulate.hpp"

namespace qmt {

struct ChainRuleOptions {
  bool fd_fallback = false;  ///< derive missing derivatives by finite differences
  double h_first = 1e-5;
  double h_second = 1e-4;
};

struct ChainRuleReport {
  std::vector<double> times;      ///< evaluation times s (every grid time after the start)
  std::vector<double> residuals;  ///< signed w(s, mu_s) - w(t, mu_t) - quadrature(t, s)

  double final_signed() const { return residuals.empty() ? 0.0 : residuals.back(); }
  double final_abs() const { return std::abs(final_signed()); }
  double max_abs() const {
    double m = 0.0;
    for (double r : residuals) m = std::max(m, std::abs(r));
    return m;
  }
};

/// Discrepancy between the increment of w along the simulated flow of
/// conditional laws and the discrete quadrature of its expansion: drift term
/// E[dt w + d_mu w . b], trace term (1/2) E[Tr(dx d_mu w a a^T)], the
/// double-copy term realized as the (1/N^2) pairing over the same ensemble
/// (diagonal included), and the stochastic term E[d_mu w . a] dB. Left-endpoint
/// rule throughout, matching the simulation scheme.
inline ChainRuleReport chain_rule_residual(const MeasureFunction& w_in,
                                           const CoefficientModel& model, const Trajectory& traj,
                                           const ChainRuleOptions& opt = {}) {
  if (traj.mode != RecordMode::full)
    throw invalid_input("chain_rule_residual: trajectory must record every step");
  MeasureFunction w = w_in;
  if (!w.has_derivatives()) {
    if (!opt.fd_fallback)
      throw invalid_input("chain_rule_residual: analytic derivatives missing "
                          "(enable fd_fallback to probe numerically)");
    w = with_fd_derivatives(w_in, opt.h_first, opt.h_second);
  }

  const auto d = static_cast<std::size_t>(traj.dim);
  const auto q = static_cast<std::size_t>(traj.control_dim);
  const std::size_t n = traj.particles();
  const std::size_t n_steps = traj.controls.size();

  ChainRuleReport rep;
  const EmpiricalMeasure mu0 = traj.measure_at(0);
  const double w0 = w.eval(traj.times.front(), mu0);
  double rhs = 0.0;

  std::vector<double> bs(n * d), as(n * d * d);
  std::vector<double> dmu(d), gamma(d * d);
  std::vector<double> drift_terms(n), trace_terms(n);
  std::vector<double> stoch_cols(n);

  for (std::size_t k = 0; k < n_steps; ++k) {
    const double tk = traj.times[k];
    const double dt = traj.times[k + 1] - traj.times[k];
    const auto db = traj.path.increment(traj.time_steps[k]);
    const EmpiricalMeasure mu = traj.measure_at(k);
    auto prep = w.prepare(tk, mu);

    for (std::size_t i = 0; i < n; ++i) {
      const auto x = mu.point(i);
      const std::span<const double> u{traj.controls[k].data() + i * q, q};
      model.drift(tk, x, mu, u, {bs.data() + i * d, d});
      model.diffusion(tk, x, mu, u, {as.data() + i * d * d, d * d});
    }

    std::vector<double> dmus(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      prep.d_mu_at(i, dmu);
      std::copy(dmu.begin(), dmu.end(), dmus.begin() + static_cast<long>(i * d));
      drift_terms[i] = dot(dmu, {bs.data() + i * d, d});
      prep.dx_d_mu_at(i, gamma);
      const std::span<const double> a{as.data() + i * d * d, d * d};
      // Tr(Gamma a a^T).
      double tr = 0.0;
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t s2 = 0; s2 < d; ++s2) {
          double aat = 0.0;
          for (std::size_t g = 0; g < d; ++g) aat += a[s2 * d + g] * a[r * d + g];
          tr += gamma[r * d + s2] * aat;
        }
      trace_terms[i] = tr;
    }
    // Stochastic integrand (1/N) sum_i d_mu(x_i)^T a_i, one deterministic
    // reduction per Brownian component.
    std::vector<double> stoch(d, 0.0);
    for (std::size_t g = 0; g < d; ++g) {
      for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> a{as.data() + i * d * d, d * d};
        double s = 0.0;
        for (std::size_t r = 0; r < d; ++r) s += dmus[i * d + r] * a[r * d + g];
        stoch_cols[i] = s;
      }
      stoch[g] = det_mean(stoch_cols);
    }

    const double drift_term = prep.dt_value + det_mean(drift_terms);
    const double trace_term = 0.5 * det_mean(trace_terms);
    const double double_term = 0.5 * prep.d2_bilinear(as, d);
    rhs += (drift_term + trace_term + double_term) * dt + dot(stoch, db);

    const double lhs = w.eval(traj.times[k + 1], traj.measure_at(k + 1)) - w0;
    rep.times.push_back(traj.times[k + 1]);
    rep.residuals.push_back(lhs - rhs);
  }
  if (!all_finite(rep.residuals)) throw numeric_error("chain_rule_residual: non-finite residual");
  return rep;
}

}  // namespace qmt
