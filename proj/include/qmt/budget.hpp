#pragma once

#include <map>
#include <optional>

#include "qmt/simulate.hpp"
#include "qmt/target_set.hpp"

namespace qmt {

/// Half-space formulation: one scalar coordinate carries the accumulated
/// control cost, and the value of interest is the minimal initial budget that
/// makes the X-target reachable with the budget kept nonnegative.
struct BudgetProblem {
  CoefficientModel x_model;
  std::function<double(std::span<const double>)> cost_rate;  ///< u -> cost per unit time, >= 0
  TargetSet target_x;
  std::vector<double> grid_times;
};

struct BudgetPath {
  Trajectory x;
  std::vector<double> budget;  ///< E_B[Y] per recorded time: y minus accumulated mean cost

  double terminal_budget() const { return budget.back(); }
};

/// Simulates X and tracks the conditional-expectation budget
///   Y_k = y - sum_{j<k} (1/N) sum_l cost_rate(u^l_j) dt_j.
/// The budget is a scalar per time because the constraint only involves
/// E_B[Y]; per-particle cost enters through the particle average.
inline BudgetPath simulate_budget(const BudgetProblem& problem, const ControlPolicy& control,
                                  double t, const EmpiricalMeasure& initial_x, double y,
                                  const CommonNoisePath& path, const SimOptions& opt = {}) {
  if (!std::isfinite(y)) throw invalid_input("simulate_budget: budget must be finite");
  SimOptions run = opt;
  run.record = RecordMode::full;
  BudgetPath out{simulate_ensemble(problem.x_model, control, t, initial_x, path, run), {}};

  const auto q = static_cast<std::size_t>(out.x.control_dim);
  const std::size_t n = out.x.particles();
  out.budget.reserve(out.x.entries());
  out.budget.push_back(y);
  double acc = y;
  std::vector<double> rates(n);
  for (std::size_t k = 0; k < out.x.controls.size(); ++k) {
    const double dt = out.x.times[k + 1] - out.x.times[k];
    for (std::size_t i = 0; i < n; ++i) {
      rates[i] = problem.cost_rate({out.x.controls[k].data() + i * q, q});
      if (rates[i] < 0.0) throw invalid_input("simulate_budget: negative cost rate");
    }
    acc -= det_mean(rates) * dt;
    out.budget.push_back(acc);
  }
  return out;
}

enum class BudgetStatus { value, infeasible, bracket_error };

inline std::string to_string(BudgetStatus s) {
  switch (s) {
    case BudgetStatus::value: return "value";
    case BudgetStatus::infeasible: return "infeasible";
    case BudgetStatus::bracket_error: return "bracket-error";
  }
  return "?";
}

struct BudgetValue {
  BudgetStatus status = BudgetStatus::infeasible;
  double value = 0.0;
  std::size_t probes = 0;
  int control_used = -1;
  std::string note;
};

struct BudgetOptions {
  std::size_t paths = 8;
  double delta = 1e-3;  ///< dilation for the X-target and slack for E_B[Y_T] >= -delta
  double tol_y = 4e-3;
  std::uint64_t path_seed = 1;
  SimOptions sim;
};

namespace detail {

// Per-control summary under common random numbers: whether the X-target is
// reached (dilated) on every path, and the worst-case accumulated cost. Both
// are independent of y, so every bisection probe reuses them.
struct ControlFeasibility {
  bool target_ok = false;
  double max_cost = 0.0;
};

inline std::vector<ControlFeasibility> probe_family(const BudgetProblem& problem,
                                                    const std::vector<ControlPolicy>& family,
                                                    double t, const EmpiricalMeasure& initial_x,
                                                    const BudgetOptions& opt) {
  std::vector<ControlFeasibility> out(family.size());
  for (std::size_t c = 0; c < family.size(); ++c) {
    ControlFeasibility cf;
    cf.target_ok = true;
    for (std::size_t m = 0; m < opt.paths; ++m) {
      const auto path = sample_path(problem.grid_times, problem.x_model.dim,
                                    rng::derive(opt.path_seed, 11, m));
      const BudgetPath bp =
          simulate_budget(problem, family[c], t, initial_x, 0.0, path, opt.sim);
      if (!problem.target_x.contains(bp.x.terminal_measure(), opt.delta)) cf.target_ok = false;
      cf.max_cost = std::max(cf.max_cost, -bp.terminal_budget());
    }
    out[c] = cf;
  }
  return out;
}

}  // namespace detail

/// Minimal initial budget by bisection on y. Feasibility of y: some control in
/// the family puts the terminal X-law in the dilated target on all M paths and
/// keeps E_B[Y_T] >= -delta on all of them. Fixed common-random-number seeds
/// make feasibility monotone in y, so bisection is sound; the bracket
/// midpoint is returned once its width is below tol_y. An infeasible y_hi is a
/// first-class result, a feasible y_lo is a bracket error.
inline BudgetValue budget_value(const BudgetProblem& problem, double t,
                                const EmpiricalMeasure& initial_x,
                                const std::vector<ControlPolicy>& family,
                                std::pair<double, double> bracket, const BudgetOptions& opt = {}) {
  if (family.empty()) throw invalid_input("budget_value: empty control family");
  if (!(bracket.first < bracket.second)) throw invalid_input("budget_value: bad bracket");

  const auto table = detail::probe_family(problem, family, t, initial_x, opt);
  BudgetValue out;
  auto feasible = [&](double y) -> int {
    ++out.probes;
    for (std::size_t c = 0; c < table.size(); ++c)
      if (table[c].target_ok && y - table[c].max_cost >= -opt.delta) return static_cast<int>(c);
    return -1;
  };

  double lo = bracket.first, hi = bracket.second;
  const int hi_control = feasible(hi);
  if (hi_control < 0) {
    out.status = BudgetStatus::infeasible;
    out.note = "no control in the family succeeds at the top of the bracket";
    return out;
  }
  if (feasible(lo) >= 0) {
    out.status = BudgetStatus::bracket_error;
    out.note = "y_lo is already feasible; lower the bracket";
    return out;
  }
  int used = hi_control;
  while (hi - lo > opt.tol_y) {
    const double mid = 0.5 * (lo + hi);
    const int c = feasible(mid);
    if (c >= 0) {
      hi = mid;
      used = c;
    } else {
      lo = mid;
    }
  }
  out.status = BudgetStatus::value;
  out.value = 0.5 * (lo + hi);
  out.control_used = used;
  return out;
}

struct GdpReport {
  double theta = 0.0;
  double y = 0.0;
  double value_at_t = 0.0;
  BudgetStatus value_status = BudgetStatus::infeasible;
  // GDP1 direction: with y above the value, some control keeps the budget at
  // theta above the value of the realized law on every path.
  bool gdp1_applicable = false;
  bool gdp1_holds = false;
  std::vector<double> gdp1_margins;  // per path: E_B[Y_theta] - v(theta, law_theta)
  // GDP2 direction: a pair passing the theta-inequality strictly must have
  // y above the time-t value.
  bool gdp2_applicable = false;
  bool gdp2_holds = false;
  std::size_t nested_infeasible = 0;  // recorded, not thrown
};

/// Dynamic-programming consistency for the budget formulation at an
/// intermediate grid time theta. The inner values v(theta, .) are recomputed
/// by nested bisection on the realized ensembles.
inline GdpReport gdp_check(const BudgetProblem& problem, double t,
                           const EmpiricalMeasure& initial_x, double y,
                           const std::vector<ControlPolicy>& family, double theta,
                           std::pair<double, double> bracket, const BudgetOptions& opt = {}) {
  GdpReport rep;
  rep.theta = theta;
  rep.y = y;
  const std::size_t k_theta = grid_index(problem.grid_times, theta);

  const BudgetValue v_t = budget_value(problem, t, initial_x, family, bracket, opt);
  rep.value_status = v_t.status;
  rep.value_at_t = v_t.value;
  if (v_t.status != BudgetStatus::value) return rep;

  rep.gdp1_applicable = y > v_t.value;
  // Tail grid starting at theta for the nested values.
  std::vector<double> tail_times(problem.grid_times.begin() + static_cast<long>(k_theta),
                                 problem.grid_times.end());
  BudgetProblem tail_problem = problem;
  tail_problem.grid_times = tail_times;

  const int c_used = v_t.control_used >= 0 ? v_t.control_used : 0;
  const ControlPolicy& control = family[static_cast<std::size_t>(c_used)];

  bool all_margins_ok = true;
  bool all_strict = true;
  for (std::size_t m = 0; m < opt.paths; ++m) {
    const auto path = sample_path(problem.grid_times, problem.x_model.dim,
                                  rng::derive(opt.path_seed, 11, m));
    const BudgetPath bp = simulate_budget(problem, control, t, initial_x, y, path, opt.sim);
    const std::size_t entry = k_theta - bp.x.start_step;
    const double y_theta = bp.budget[entry];

    BudgetOptions nested = opt;
    nested.path_seed = rng::derive(opt.path_seed, 23, m);
    const BudgetValue v_theta = budget_value(tail_problem, theta, bp.x.measure_at(entry), family,
                                             bracket, nested);
    if (v_theta.status != BudgetStatus::value) {
      ++rep.nested_infeasible;
      all_margins_ok = false;
      all_strict = false;
      rep.gdp1_margins.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    const double margin = y_theta - v_theta.value;
    rep.gdp1_margins.push_back(margin);
    if (margin < -opt.delta) all_margins_ok = false;
    if (margin <= 0.0) all_strict = false;
  }
  rep.gdp1_holds = rep.gdp1_applicable && all_margins_ok;
  rep.gdp2_applicable = all_strict;
  rep.gdp2_holds = !all_strict || (y >= v_t.value - opt.delta);
  return rep;
}

}  // namespace qmt
