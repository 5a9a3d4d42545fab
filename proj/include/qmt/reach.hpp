#pragma once

#include <array>
#include <string>
#include <vector>

#include "qmt/simulate.hpp"
#include "qmt/target_set.hpp"

namespace qmt {

enum class Verdict { member, non_member, inconclusive };

inline std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::member: return "member";
    case Verdict::non_member: return "non-member";
    case Verdict::inconclusive: return "inconclusive";
  }
  return "?";
}

struct ControlOutcome {
  std::string label;
  std::size_t strict_passes = 0;   // paths whose terminal law lies in G
  std::size_t dilated_passes = 0;  // paths whose terminal law lies in G_delta
};

struct ReachVerdict {
  Verdict verdict = Verdict::inconclusive;
  double delta = 0.0;
  std::size_t paths = 0;
  int best_control = -1;
  std::vector<ControlOutcome> evidence;
  std::string note;
};

struct ReachOptions {
  std::size_t paths = 32;
  double delta = 1e-3;
  std::uint64_t path_seed = 1;
  SimOptions sim;
};

/// Samples M common-noise paths per candidate control (common random numbers
/// across candidates) and classifies the initial measure:
///   member        some control lands the terminal law in G on every path;
///   inconclusive  none does, but some control stays within the dilated G_delta
///                 on every path (the gap is sampling/discretization sized);
///   non-member    every candidate leaves G_delta on some path. Relative to
///                 the candidate family, not to all admissible controls.
inline ReachVerdict reach_estimate(const CoefficientModel& model,
                                   const std::vector<ControlPolicy>& family, double t,
                                   const EmpiricalMeasure& initial, const TargetSet& g,
                                   const std::vector<double>& grid_times,
                                   const ReachOptions& opt = {}) {
  if (family.empty()) throw invalid_input("reach_estimate: empty control family");
  ReachVerdict out;
  out.delta = opt.delta;
  out.paths = opt.paths;
  out.evidence.reserve(family.size());

  SimOptions run = opt.sim;
  run.record = RecordMode::terminal_only;

  int best_strict = -1, best_dilated = -1;
  std::size_t best_dilated_count = 0;
  for (std::size_t c = 0; c < family.size(); ++c) {
    ControlOutcome oc;
    oc.label = family[c].label();
    for (std::size_t m = 0; m < opt.paths; ++m) {
      const auto path = sample_path(grid_times, model.dim, rng::derive(opt.path_seed, 11, m));
      const auto terminal =
          simulate_ensemble(model, family[c], t, initial, path, run).terminal_measure();
      if (g.membership(terminal)) ++oc.strict_passes;
      if (g.contains(terminal, opt.delta)) ++oc.dilated_passes;
    }
    if (oc.strict_passes == opt.paths && best_strict < 0) best_strict = static_cast<int>(c);
    if (oc.dilated_passes == opt.paths && best_dilated < 0) best_dilated = static_cast<int>(c);
    if (oc.dilated_passes > best_dilated_count) {
      best_dilated_count = oc.dilated_passes;
      if (best_strict < 0 && best_dilated < 0) out.best_control = static_cast<int>(c);
    }
    out.evidence.push_back(std::move(oc));
  }

  if (best_strict >= 0) {
    out.verdict = Verdict::member;
    out.best_control = best_strict;
  } else if (best_dilated >= 0) {
    out.verdict = Verdict::inconclusive;
    out.best_control = best_dilated;
    out.note = "within the dilated target only";
  } else {
    out.verdict = Verdict::non_member;
    out.note = "relative to the supplied control family";
  }
  return out;
}

struct GdppOptions {
  std::size_t paths = 16;
  std::size_t restarts = 4;
  double delta = 1e-3;
  std::uint64_t path_seed = 1;
  std::uint64_t restart_seed = 77;
  SimOptions sim;
};

struct GdppReport {
  double theta = 0.0;
  std::size_t paths = 0, restarts = 0;
  std::size_t original_successes = 0;
  std::size_t restart_successes = 0, restart_total = 0;
  /// Time-consistency, forward direction: whenever the full-horizon run
  /// succeeds on every path, every restarted run must succeed too.
  bool consistent = false;
  std::vector<std::array<std::size_t, 3>> failures;  // (path, restart, grid step of theta)
};

/// Restart construction for the dynamic-programming consistency check: run to
/// theta, then continue from the realized ensemble with the same control and
/// fresh tail noise, and test terminal membership in G_delta.
inline GdppReport gdpp_check(const CoefficientModel& model, const ControlPolicy& control,
                             double t, const EmpiricalMeasure& initial, const TargetSet& g,
                             double theta, const std::vector<double>& grid_times,
                             const GdppOptions& opt = {}) {
  GdppReport rep;
  rep.theta = theta;
  rep.paths = opt.paths;
  rep.restarts = opt.restarts;
  const std::size_t k_theta = grid_index(grid_times, theta);

  SimOptions run = opt.sim;
  run.record = RecordMode::full;
  SimOptions tail_run = opt.sim;
  tail_run.record = RecordMode::terminal_only;

  for (std::size_t m = 0; m < opt.paths; ++m) {
    const auto path = sample_path(grid_times, model.dim, rng::derive(opt.path_seed, 11, m));
    const Trajectory traj = simulate_ensemble(model, control, t, initial, path, run);
    if (g.contains(traj.terminal_measure(), opt.delta)) ++rep.original_successes;

    // Entry index of theta among the recorded times.
    const std::size_t entry = k_theta - traj.start_step;
    const EmpiricalMeasure at_theta = traj.measure_at(entry);
    for (std::size_t r = 0; r < opt.restarts; ++r) {
      const auto tail =
          splice_path(path, k_theta, rng::derive(opt.restart_seed, 13, m * opt.restarts + r));
      const auto terminal =
          simulate_ensemble(model, control, theta, at_theta, tail, tail_run).terminal_measure();
      ++rep.restart_total;
      if (g.contains(terminal, opt.delta))
        ++rep.restart_successes;
      else
        rep.failures.push_back({m, r, k_theta});
    }
  }
  rep.consistent = (rep.original_successes < rep.paths) ||
                   (rep.restart_successes == rep.restart_total);
  return rep;
}

}  // namespace qmt
