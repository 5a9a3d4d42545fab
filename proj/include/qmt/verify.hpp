#pragma once

#include <limits>

#include "qmt/hamiltonian.hpp"
#include "qmt/simulate.hpp"
#include "qmt/target_set.hpp"

namespace qmt {

struct VerifyOptions {
  std::size_t paths = 32;
  /// Negative means auto: 1e-6 * (1 + |w(t, mu)|).
  double tol = -1.0;
  std::uint64_t path_seed = 1;
  SimOptions sim;
};

struct VerifyResult {
  bool certified = false;
  /// Empty when certified; otherwise the first failing condition:
  /// "supersolution", "martingale-constraint", "terminal", "initial-level".
  std::string failure;
  long long fail_path = -1;
  long long fail_step = -1;
  double min_supersolution_margin = std::numeric_limits<double>::infinity();
  double max_constraint_norm = 0.0;
  double initial_value = 0.0;
  double tol_used = 0.0;
  std::size_t paths = 0;
};

/// Sufficient-condition certificate for target membership. Along each of M
/// simulated common-noise paths driven by the feedback control u, checks at
/// every grid step:
///   (a) -dt w - L^u[w] >= -tol           (supersolution direction)
///   (b) |N-integral| <= tol              (martingale compatibility)
/// then at the horizon
///   (c) w(T, .) >= 1 - 1_G on the terminal ensemble,
/// and finally
///   (d) w(t, mu) <= 0.
/// All four together certify that mu is reachable-from, i.e. membership of mu
/// in the time-t reachability set.
inline VerifyResult verify_membership(const MeasureFunction& w, const ControlPolicy& u, double t,
                                      const EmpiricalMeasure& mu, const CoefficientModel& model,
                                      const std::vector<double>& grid_times, const TargetSet& g,
                                      const VerifyOptions& opt = {}) {
  if (!w.has_derivatives())
    throw invalid_input("verify_membership: w must provide analytic derivatives");
  VerifyResult res;
  res.paths = opt.paths;
  res.initial_value = w.eval(t, mu);
  res.tol_used = opt.tol >= 0.0 ? opt.tol : 1e-6 * (1.0 + std::abs(res.initial_value));
  const double tol = res.tol_used;

  SimOptions run = opt.sim;
  run.record = RecordMode::full;

  for (std::size_t m = 0; m < opt.paths; ++m) {
    const auto path =
        sample_path(grid_times, model.dim, rng::derive(opt.path_seed, 11, m));
    const Trajectory traj = simulate_ensemble(model, u, t, mu, path, run);

    for (std::size_t k = 0; k < traj.controls.size(); ++k) {
      const double tk = traj.times[k];
      const EmpiricalMeasure mk = traj.measure_at(k);
      const auto prep = w.prepare(tk, mk);
      const double margin =
          -prep.dt_value - detail::generator_quadrature(prep, tk, mk, traj.controls[k], model);
      res.min_supersolution_margin = std::min(res.min_supersolution_margin, margin);
      if (margin < -tol) {
        res.failure = "supersolution";
        res.fail_path = static_cast<long long>(m);
        res.fail_step = static_cast<long long>(k);
        return res;
      }
      const double nnorm = detail::n_integral_norm(prep, tk, mk, traj.controls[k], model);
      res.max_constraint_norm = std::max(res.max_constraint_norm, nnorm);
      if (nnorm > tol) {
        res.failure = "martingale-constraint";
        res.fail_path = static_cast<long long>(m);
        res.fail_step = static_cast<long long>(k);
        return res;
      }
    }

    const EmpiricalMeasure terminal = traj.terminal_measure();
    const double needed = g.membership(terminal) ? 0.0 : 1.0;
    if (w.eval(grid_times.back(), terminal) < needed - tol) {
      res.failure = "terminal";
      res.fail_path = static_cast<long long>(m);
      res.fail_step = static_cast<long long>(traj.controls.size());
      return res;
    }
  }

  if (res.initial_value > 0.0) {
    res.failure = "initial-level";
    return res;
  }
  res.certified = true;
  return res;
}

}  // namespace qmt
