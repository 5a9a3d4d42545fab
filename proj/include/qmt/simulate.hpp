#pragma once

#include <array>
#include <atomic>
#include <string>

#include "qmt/ensemble.hpp"
#include "qmt/model.hpp"
#include "qmt/parallel.hpp"
#include "qmt/wasserstein.hpp"

namespace qmt {

struct SimOptions {
  int workers = 1;
  RecordMode record = RecordMode::full;
};

/// Euler-Maruyama step of the quenched particle system, all particles sharing
/// one Brownian increment:
///   X^l_{k+1} = X^l_k + b(t_k, X^l_k, mu_k, u^l_k) dt_k
///                     + a(t_k, X^l_k, mu_k, u^l_k) dB_k,
/// where mu_k is the ensemble's empirical measure before the step. The run
/// starts at t (a grid time); nothing is simulated before t.
inline Trajectory simulate_ensemble(const CoefficientModel& model, const ControlPolicy& control,
                                    double t, const EmpiricalMeasure& initial,
                                    const CommonNoisePath& path, const SimOptions& opt = {}) {
  if (initial.dim() != model.dim)
    throw invalid_input("simulate_ensemble: initial measure dimension does not match the model");
  if (path.dim != model.dim)
    throw invalid_input("simulate_ensemble: path dimension does not match the model");
  if (!control.valid()) throw invalid_input("simulate_ensemble: empty control policy");
  const std::size_t k0 = grid_index(path.times, t);

  const auto d = static_cast<std::size_t>(model.dim);
  const auto q = static_cast<std::size_t>(model.control_dim);
  const std::size_t n = initial.size();
  const std::size_t k_end = path.steps();

  Trajectory traj;
  traj.dim = model.dim;
  traj.control_dim = model.control_dim;
  traj.start_step = k0;
  traj.path = path;
  traj.mode = opt.record;
  traj.initial_draws.assign(initial.flat().begin(), initial.flat().end());

  std::vector<double> states(initial.flat().begin(), initial.flat().end());
  const std::uint64_t clamps_before = control.clamp_count();

  auto record_state = [&](std::size_t k) {
    traj.times.push_back(path.times[k]);
    traj.time_steps.push_back(k);
    traj.states.push_back(states);
  };
  record_state(k0);

  // Reused scratch: per-particle control, drift and diffusion blocks.
  std::vector<double> us(n * q), bs(n * d), as(n * d * d);
  std::vector<double> next(states.size());

  for (std::size_t k = k0; k < k_end; ++k) {
    const double tk = path.times[k];
    const double dt = path.dt(k);
    const auto db = path.increment(k);
    const EmpiricalMeasure mu(model.dim, states);
    const PathView pv{&path, k};

    if (control.kind() == ControlKind::feedback) {
      parallel_for(n, opt.workers, [&](std::size_t i) {
        control.evaluate(tk, {states.data() + i * d, d}, mu, pv, {us.data() + i * q, q});
      });
    } else {
      // Measure-feedback and open-loop controls ignore the particle position:
      // one evaluation per step, shared by all particles.
      std::vector<double> u0(q);
      control.evaluate(tk, {}, mu, pv, u0);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < q; ++c) us[i * q + c] = u0[c];
    }

    std::atomic<std::size_t> first_bad{n};
    parallel_for(n, opt.workers, [&](std::size_t i) {
      const std::span<const double> x{states.data() + i * d, d};
      const std::span<const double> u{us.data() + i * q, q};
      const std::span<double> b{bs.data() + i * d, d};
      const std::span<double> a{as.data() + i * d * d, d * d};
      model.drift(tk, x, mu, u, b);
      model.diffusion(tk, x, mu, u, a);
      for (std::size_t r = 0; r < d; ++r) {
        double diff = 0.0;
        for (std::size_t c = 0; c < d; ++c) diff += a[r * d + c] * db[c];
        next[i * d + r] = x[r] + b[r] * dt + diff;
      }
      if (!all_finite({next.data() + i * d, d})) {
        std::size_t cur = first_bad.load();
        while (i < cur && !first_bad.compare_exchange_weak(cur, i)) {
        }
      }
    });
    if (first_bad.load() != n)
      throw numeric_error("simulate_ensemble: non-finite state at step " + std::to_string(k) +
                          ", particle " + std::to_string(first_bad.load()));

    states.swap(next);
    if (opt.record == RecordMode::full) {
      traj.controls.push_back(us);
      record_state(k + 1);
    }
  }

  if (opt.record == RecordMode::terminal_only && k_end > k0) record_state(k_end);
  traj.clamps = control.clamp_count() - clamps_before;
  return traj;
}

// ---------------------------------------------------------------------------
// Stability probe

enum class PerturbationKind { initial_shift, control_offset, start_time_shift };

inline std::string to_string(PerturbationKind k) {
  switch (k) {
    case PerturbationKind::initial_shift: return "initial-shift";
    case PerturbationKind::control_offset: return "control-offset";
    case PerturbationKind::start_time_shift: return "start-time-shift";
  }
  return "?";
}

struct StabilityRow {
  PerturbationKind kind;
  double size = 0.0;
  double mean_w2_sq = 0.0;  // Monte Carlo estimate of E[W2^2] over paths
};

/// Perturbs one ingredient of the scenario by each given size and reports the
/// Monte Carlo estimate of E[W2(law_T, perturbed law_T)^2] across independent
/// common-noise paths. Shrinking sizes should drive the estimate to zero.
inline std::vector<StabilityRow> stability_probe(
    const CoefficientModel& model, const ControlPolicy& control, double t,
    const EmpiricalMeasure& initial, const std::vector<double>& grid_times,
    const std::vector<PerturbationKind>& kinds, const std::vector<double>& sizes,
    std::size_t n_paths, std::uint64_t path_seed, const SimOptions& opt = {}) {
  SimOptions run = opt;
  run.record = RecordMode::terminal_only;

  std::vector<EmpiricalMeasure> base_laws;
  std::vector<CommonNoisePath> paths;
  base_laws.reserve(n_paths);
  for (std::size_t m = 0; m < n_paths; ++m) {
    paths.push_back(sample_path(grid_times, model.dim, rng::derive(path_seed, 101, m)));
    base_laws.push_back(
        simulate_ensemble(model, control, t, initial, paths.back(), run).terminal_measure());
  }

  std::vector<StabilityRow> rows;
  for (const auto kind : kinds) {
    for (const double eps : sizes) {
      std::vector<double> w2s(n_paths);
      for (std::size_t m = 0; m < n_paths; ++m) {
        EmpiricalMeasure pert_initial = initial;
        ControlPolicy pert_control = control;
        double t_start = t;
        switch (kind) {
          case PerturbationKind::initial_shift: {
            std::vector<double> shift(static_cast<std::size_t>(model.dim), 0.0);
            shift[0] = eps;
            pert_initial = initial.translated(shift);
            break;
          }
          case PerturbationKind::control_offset: {
            pert_control = ControlPolicy(
                control.kind(), control.box(),
                [base = control, eps](double tt, std::span<const double> x,
                                      const EmpiricalMeasure& mu, const PathView& pv,
                                      std::span<double> out) {
                  base.evaluate(tt, x, mu, pv, out);
                  out[0] += eps;
                },
                control.label() + "+offset");
            break;
          }
          case PerturbationKind::start_time_shift: {
            const std::size_t k0 = grid_index(grid_times, t);
            const double dt0 = grid_times[std::min(k0 + 1, grid_times.size() - 1)] - grid_times[k0];
            std::size_t shift_steps =
                dt0 > 0 ? static_cast<std::size_t>(std::lround(eps / dt0)) : 0;
            const std::size_t k_new = std::min(k0 + shift_steps, grid_times.size() - 1);
            t_start = grid_times[k_new];
            break;
          }
        }
        const double w2 = wasserstein2(
            base_laws[m],
            simulate_ensemble(model, pert_control, t_start, pert_initial, paths[m], run)
                .terminal_measure());
        w2s[m] = w2 * w2;
      }
      rows.push_back({kind, eps, det_mean(std::move(w2s))});
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Regularity probe for the declared coefficient constants

struct H1Report {
  double declared_L = 0.0, declared_M = 0.0;
  double max_ratio_x = 0.0;      // perturbing x only
  double max_ratio_mu = 0.0;     // perturbing mu only
  double max_ratio_joint = 0.0;  // perturbing both
  double max_bound = 0.0;        // max of |b|, |a|_F over samples
  std::vector<std::array<double, 2>> time_modulus;     // (|t - t'|, coefficient deviation)
  std::vector<std::array<double, 2>> control_modulus;  // (|u - u'|, coefficient deviation)

  bool lipschitz_ok(double tolerance = 1e-6) const {
    return max_ratio_joint <= declared_L * (1.0 + tolerance) + tolerance;
  }
  bool bound_ok(double tolerance = 1e-6) const {
    return max_bound <= declared_M * (1.0 + tolerance) + tolerance;
  }
};

/// Randomized sampling of coefficient arguments; reports observed Lipschitz
/// ratios in (x, mu), the observed uniform bound, and modulus samples in t and
/// u. Report-only: nothing is thrown when the declared constants are exceeded.
inline H1Report check_h1(const CoefficientModel& model, const Box& u_box, double horizon,
                         std::size_t samples, std::uint64_t seed) {
  const auto d = static_cast<std::size_t>(model.dim);
  const auto q = static_cast<std::size_t>(model.control_dim);
  rng::Stream s(rng::derive(seed, 202));

  H1Report rep;
  rep.declared_L = model.lipschitz_L;
  rep.declared_M = model.bound_M;

  auto random_point = [&](double scale) {
    std::vector<double> x(d);
    for (auto& v : x) v = scale * s.gaussian();
    return x;
  };
  auto random_measure = [&](double scale) {
    const std::size_t n = 1 + static_cast<std::size_t>(s.raw() % 8);
    std::vector<double> xs(n * d);
    for (auto& v : xs) v = scale * s.gaussian();
    return EmpiricalMeasure(static_cast<int>(d), std::move(xs));
  };
  auto random_control = [&] {
    std::vector<double> u(q);
    for (std::size_t i = 0; i < q; ++i) u[i] = u_box.lo[i] + (u_box.hi[i] - u_box.lo[i]) * s.uniform();
    return u;
  };
  std::vector<double> b1(d), b2(d), a1(d * d), a2(d * d);
  auto coef_dev = [&](double t1, const std::vector<double>& x1, const EmpiricalMeasure& m1,
                      const std::vector<double>& u1, double t2, const std::vector<double>& x2,
                      const EmpiricalMeasure& m2, const std::vector<double>& u2) {
    model.drift(t1, x1, m1, u1, b1);
    model.drift(t2, x2, m2, u2, b2);
    model.diffusion(t1, x1, m1, u1, a1);
    model.diffusion(t2, x2, m2, u2, a2);
    double db = 0.0, da = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double e = b1[i] - b2[i];
      db += e * e;
    }
    for (std::size_t i = 0; i < d * d; ++i) {
      const double e = a1[i] - a2[i];
      da += e * e;
    }
    return std::sqrt(db) + std::sqrt(da);
  };

  for (std::size_t it = 0; it < samples; ++it) {
    const double t1 = horizon * s.uniform();
    const auto x = random_point(2.0);
    const auto mu = random_measure(2.0);
    const auto u = random_control();

    model.drift(t1, x, mu, u, b1);
    model.diffusion(t1, x, mu, u, a1);
    rep.max_bound = std::max(rep.max_bound, std::max(norm2(b1), frobenius_norm(a1)));

    // x-only perturbation.
    {
      auto x2 = x;
      for (auto& v : x2) v += 0.5 * s.gaussian();
      const double den = std::sqrt(sq_dist(x, x2));
      if (den > 1e-9) {
        const double dev = coef_dev(t1, x, mu, u, t1, x2, mu, u);
        rep.max_ratio_x = std::max(rep.max_ratio_x, dev / den);
        rep.max_ratio_joint = std::max(rep.max_ratio_joint, dev / den);
      }
    }
    // mu-only perturbation; alternate common shifts (which realize the W2
    // distance exactly) and independent jitter.
    {
      EmpiricalMeasure mu2 = mu;
      if (it % 2 == 0) {
        std::vector<double> shift(d);
        for (auto& v : shift) v = 0.5 * s.gaussian();
        mu2 = mu.translated(shift);
      } else {
        std::vector<double> ys(mu.flat().begin(), mu.flat().end());
        for (auto& v : ys) v += 0.3 * s.gaussian();
        mu2 = EmpiricalMeasure(static_cast<int>(d), std::move(ys));
      }
      const double den = wasserstein2(mu, mu2);
      if (den > 1e-9) {
        const double dev = coef_dev(t1, x, mu, u, t1, x, mu2, u);
        rep.max_ratio_mu = std::max(rep.max_ratio_mu, dev / den);
        rep.max_ratio_joint = std::max(rep.max_ratio_joint, dev / den);
      }
    }
    // t and u moduli.
    {
      const double t2 = horizon * s.uniform();
      rep.time_modulus.push_back({std::abs(t1 - t2), coef_dev(t1, x, mu, u, t2, x, mu, u)});
      const auto u2 = random_control();
      double du = std::sqrt(sq_dist(u, u2));
      rep.control_modulus.push_back({du, coef_dev(t1, x, mu, u, t1, x, mu, u2)});
    }
  }
  return rep;
}

}  // namespace qmt
