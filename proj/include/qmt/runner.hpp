#pragma once

#include "qmt/report.hpp"

namespace qmt::runner {

struct RunOptions {
  std::string out_dir = "out";
  int workers = 1;
  std::optional<std::uint64_t> seed_override;
};

struct RunResult {
  int exit_code = 0;
  json report;
  std::vector<std::string> files;
  std::vector<Diagnostic> diagnostics;
};

namespace detail {

using qmt::detail::param;

inline SimOptions sim_options(const RunOptions& opt) {
  SimOptions s;
  s.workers = opt.workers;
  return s;
}

inline void apply_seed_override(Scenario& sc, const RunOptions& opt) {
  if (!opt.seed_override) return;
  sc.seed_path = *opt.seed_override;
  sc.seed_draw = rng::derive(*opt.seed_override, 91);
  sc.seed_control = rng::derive(*opt.seed_override, 92);
}

inline void emit(RunResult& res, const RunOptions& opt, const std::string& name,
                 const std::string& text) {
  const auto path = std::filesystem::path(opt.out_dir) / name;
  write_text(path, text);
  res.files.push_back(path.string());
}

inline void finish(RunResult& res, const RunOptions& opt, const std::string& subcommand) {
  const auto path = std::filesystem::path(opt.out_dir) / (subcommand + "_report.json");
  write_report(path, res.report);
  res.files.push_back(path.string());
}

/// Evaluates the scenario's declared expectation against the result block.
/// Returns 0 when no expectation is declared or every declared check passes,
/// 2 otherwise.
inline int judge(const json& expect, const json& result) {
  if (expect.empty()) return 0;
  bool ok = true;
  auto want = [&](const char* key) { return expect.contains(key); };
  if (want("verdict")) ok = ok && result.value("verdict", "") == expect.at("verdict");
  if (want("certified")) ok = ok && result.value("certified", false) == expect.at("certified");
  if (want("consistent")) ok = ok && result.value("consistent", false) == expect.at("consistent");
  if (want("status")) ok = ok && result.value("status", "") == expect.at("status");
  if (want("value")) {
    const double tol = expect.value("tolerance", 1e-9);
    ok = ok && result.contains("value") &&
         std::abs(result.at("value").get<double>() - expect.at("value").get<double>()) <= tol;
  }
  if (want("distance")) {
    const double tol = expect.value("tolerance", 1e-12);
    ok = ok && result.contains("distance") &&
         std::abs(result.at("distance").get<double>() - expect.at("distance").get<double>()) <=
             tol;
  }
  if (want("within_declared"))
    ok = ok && result.value("lipschitz_ok", false) && result.value("bound_ok", false);
  if (want("frontier")) ok = ok && result.value("frontier_ok", false);
  if (want("max_final_residual"))
    ok = ok && result.value("linear_final_abs_residual", 1e300) <=
                   expect.at("max_final_residual").get<double>();
  if (want("ratio_min"))
    ok = ok && result.value("residual_ratio_min", 0.0) >= expect.at("ratio_min").get<double>();
  if (want("ratio_max"))
    ok = ok && result.value("residual_ratio_max", 1e300) <= expect.at("ratio_max").get<double>();
  return ok ? 0 : 2;
}

/// Initial cloud translated so its first coordinate mean is exactly `target`.
inline EmpiricalMeasure sweep_initial(const EmpiricalMeasure& base, double target) {
  std::vector<double> shift(static_cast<std::size_t>(base.dim()), 0.0);
  shift[0] = target - base.mean()[0];
  return base.translated(shift);
}

inline std::vector<double> sweep_points(const json& sweep) {
  const auto n = sweep.value("points", std::size_t{20});
  const double from = sweep.value("from", -0.5);
  const double to = sweep.value("to", 0.5);
  std::vector<double> pts(n);
  for (std::size_t i = 0; i < n; ++i)
    pts[i] = from + (to - from) * (n == 1 ? 0.0 : double(i) / double(n - 1));
  return pts;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Subcommands

inline RunResult run_simulate(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  SimOptions so = detail::sim_options(opt);

  std::vector<Trajectory> trajectories;
  std::vector<CommonNoisePath> paths;
  json summary = json::array();
  for (std::size_t m = 0; m < sc.paths; ++m) {
    paths.push_back(sample_path(a.grid, a.model.dim, rng::derive(sc.seed_path, 11, m)));
    trajectories.push_back(
        simulate_ensemble(a.model, a.family.front(), sc.t0, a.initial, paths.back(), so));
    const auto terminal = trajectories.back().terminal_measure();
    const auto mean = terminal.mean();
    summary.push_back({{"path", m},
                       {"terminal_mean", std::vector<double>(mean.begin(), mean.end())},
                       {"terminal_second_moment", terminal.second_moment()},
                       {"clamps", trajectories.back().clamps}});
  }
  res.report = report_header("simulate", sc);
  res.report["result"] = {{"paths", summary}, {"control", a.family.front().label()}};
  detail::emit(res, opt, "trajectory.csv", trajectory_csv(trajectories));
  detail::emit(res, opt, "increments.csv", increments_csv(paths));
  detail::finish(res, opt, "simulate");
  return res;
}

inline RunResult run_reach(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  ReachOptions ro;
  ro.paths = sc.paths;
  ro.delta = sc.delta;
  ro.path_seed = sc.seed_path;
  ro.sim = detail::sim_options(opt);

  json result;
  if (!sc.sweep_spec.empty()) {
    const auto pts = detail::sweep_points(sc.sweep_spec);
    json rows = json::array();
    std::string frontier_csv = "scenario,t,initial_mean,verdict,best_control\n";
    bool frontier_ok = true;
    const double frontier = sc.expect.value("frontier", 0.0);
    const double band = sc.expect.value("band", 2.0 * sc.delta);
    for (const double m0 : pts) {
      const auto init = detail::sweep_initial(a.initial, m0);
      const auto v = reach_estimate(a.model, a.family, sc.t0, init, a.target, a.grid, ro);
      rows.push_back({{"initial_mean", m0}, {"verdict", to_string(v.verdict)}});
      frontier_csv += sc.name + "," + qmt::detail::fmt_double(sc.t0) + "," +
                      qmt::detail::fmt_double(m0) + "," + to_string(v.verdict) + "," +
                      (v.best_control >= 0 ? a.family[std::size_t(v.best_control)].label() : "-") +
                      "\n";
      if (sc.expect.contains("frontier")) {
        if (m0 > frontier + band && v.verdict != Verdict::member) frontier_ok = false;
        if (m0 < frontier - band && v.verdict != Verdict::non_member) frontier_ok = false;
      }
    }
    result = {{"sweep", rows}, {"frontier_ok", frontier_ok}};
    detail::emit(res, opt, "frontier.csv", frontier_csv);
  } else {
    result = to_json(reach_estimate(a.model, a.family, sc.t0, a.initial, a.target, a.grid, ro));
  }
  res.report = report_header("reach", sc);
  res.report["result"] = result;
  res.exit_code = detail::judge(sc.expect, result);
  detail::finish(res, opt, "reach");
  return res;
}

inline RunResult run_verify(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  if (sc.target_spec.value("kind", "half-space-mean") != std::string("half-space-mean"))
    throw invalid_input("verify: the built-in barrier needs a half-space-mean target");
  std::vector<double> c = sc.target_spec.contains("c")
                              ? qmt::detail::get_vector(sc.target_spec.at("c"), "target.c", nullptr)
                              : std::vector<double>{1.0};
  if (c.size() == 1 && a.model.dim > 1) {
    c.assign(static_cast<std::size_t>(a.model.dim), 0.0);
    c[0] = 1.0;
  }
  const double kappa = sc.target_spec.value("kappa", 0.0);
  const MeasureFunction w =
      half_space_barrier(c, kappa, sc.horizon, sc.barrier_rate, sc.barrier_eps);

  VerifyOptions vo;
  vo.paths = sc.paths;
  vo.tol = sc.tol;
  vo.path_seed = sc.seed_path;
  vo.sim = detail::sim_options(opt);
  const auto v = verify_membership(w, a.family.front(), sc.t0, a.initial, a.model, a.grid,
                                   a.target, vo);
  res.report = report_header("verify", sc);
  res.report["result"] = to_json(v);
  res.exit_code = detail::judge(sc.expect, res.report["result"]);
  detail::finish(res, opt, "verify");
  return res;
}

inline RunResult run_gdpp(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  GdppOptions go;
  go.paths = sc.paths;
  go.delta = sc.delta;
  go.path_seed = sc.seed_path;
  go.restart_seed = rng::derive(sc.seed_path, 3);
  go.sim = detail::sim_options(opt);
  const auto rep =
      gdpp_check(a.model, a.family.front(), sc.t0, a.initial, a.target, sc.theta, a.grid, go);
  res.report = report_header("gdpp", sc);
  res.report["result"] = to_json(rep);
  res.exit_code = detail::judge(sc.expect, res.report["result"]);
  detail::finish(res, opt, "gdpp");
  return res;
}

inline RunResult run_budget(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  const BudgetProblem bp = assemble_budget(sc, a);
  const auto bracket = budget_bracket(sc, a);
  BudgetOptions bo;
  bo.paths = sc.paths;
  bo.delta = sc.delta;
  bo.tol_y = sc.tol_y;
  bo.path_seed = sc.seed_path;
  bo.sim = detail::sim_options(opt);

  json result;
  if (!sc.sweep_spec.empty()) {
    const auto pts = detail::sweep_points(sc.sweep_spec);
    json rows = json::array();
    std::string frontier_csv = "scenario,t,initial_mean,status,value\n";
    for (const double m0 : pts) {
      const auto init = detail::sweep_initial(a.initial, m0);
      const auto v = budget_value(bp, sc.t0, init, a.family, bracket, bo);
      rows.push_back({{"initial_mean", m0},
                      {"status", to_string(v.status)},
                      {"value", v.value}});
      frontier_csv += sc.name + "," + qmt::detail::fmt_double(sc.t0) + "," +
                      qmt::detail::fmt_double(m0) + "," + to_string(v.status) + "," +
                      qmt::detail::fmt_double(v.value) + "\n";
    }
    result = {{"sweep", rows}};
    detail::emit(res, opt, "frontier.csv", frontier_csv);
  } else {
    const auto v = budget_value(bp, sc.t0, a.initial, a.family, bracket, bo);
    result = to_json(v);
    if (sc.budget_spec.contains("y") && v.status == BudgetStatus::value) {
      const double y = sc.budget_spec.at("y").get<double>();
      result["gdp"] = to_json(
          gdp_check(bp, sc.t0, a.initial, y, a.family, sc.theta, bracket, bo));
    }
  }
  res.report = report_header("budget", sc);
  res.report["result"] = result;
  res.exit_code = detail::judge(sc.expect, result);
  detail::finish(res, opt, "budget");
  return res;
}

inline RunResult run_check_h1(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  const Box& ubox = a.family.front().box();
  const auto rep = check_h1(a.model, ubox, sc.horizon, 512, sc.seed_control);
  res.report = report_header("check-h1", sc);
  res.report["result"] = to_json(rep);
  res.exit_code = detail::judge(sc.expect, res.report["result"]);
  detail::finish(res, opt, "check-h1");
  return res;
}

inline RunResult run_calculus(const Scenario& sc, const RunOptions& opt) {
  RunResult res;
  const Assembled a = assemble(sc);
  SimOptions so = detail::sim_options(opt);

  // Derivative checks on the built-in cylindrical family over random measures.
  const auto family = standard_cylindrical_family(a.model.dim);
  rng::Stream s(rng::derive(sc.seed_draw, 5));
  json fd_rows = json::array();
  double worst_first = 0.0, worst_second = 0.0;
  for (const auto& w : family) {
    double max_rel_first = 0.0, max_abs_second = 0.0;
    for (int rep = 0; rep < 8; ++rep) {
      const std::size_t n = 2 + static_cast<std::size_t>(s.raw() % 31);
      std::vector<double> xs(n * static_cast<std::size_t>(a.model.dim));
      for (auto& x : xs) x = s.gaussian();
      const EmpiricalMeasure mu(a.model.dim, xs);
      const auto prep = w.prepare(0.3, mu);
      std::vector<double> exact(static_cast<std::size_t>(a.model.dim));
      for (std::size_t i = 0; i < n; ++i) {
        prep.d_mu_at(i, exact);
        const auto fd = fd_dmu(w, 0.3, mu, i, sc.h_first);
        const double scale = std::max(1.0, norm2(exact));
        for (std::size_t cc = 0; cc < fd.size(); ++cc)
          max_rel_first = std::max(max_rel_first, std::abs(fd[cc] - exact[cc]) / scale);
      }
      std::vector<double> y(xs.size());
      for (auto& v : y) v = s.gaussian();
      const double lhs = fd_d2_action(w, 0.3, mu, y, sc.h_second);
      const double rhs = d2_action_quadrature(w, 0.3, mu, y);
      max_abs_second = std::max(max_abs_second, std::abs(lhs - rhs));
    }
    worst_first = std::max(worst_first, max_rel_first);
    worst_second = std::max(worst_second, max_abs_second);
    fd_rows.push_back({{"function", w.label},
                       {"max_rel_error_first", max_rel_first},
                       {"max_abs_error_second", max_abs_second}});
  }

  // Chain-rule residuals for the scenario model at dt and dt/2, averaged over
  // paths with the sign kept (the quadrature error is first order; the
  // martingale wobble averages out).
  auto residual_at = [&](std::size_t steps, const MeasureFunction& w) {
    const auto grid = uniform_grid(sc.t0, sc.horizon, steps);
    std::vector<double> finals(sc.paths);
    json per_time;
    for (std::size_t m = 0; m < sc.paths; ++m) {
      const auto path = sample_path(grid, a.model.dim, rng::derive(sc.seed_path, 11, m));
      const auto traj = simulate_ensemble(a.model, a.family.front(), sc.t0, a.initial, path, so);
      const auto rep = chain_rule_residual(w, a.model, traj);
      finals[m] = rep.final_signed();
      if (m == 0) per_time = to_json(rep);
    }
    return std::pair<double, json>(std::abs(det_mean(finals)), per_time);
  };

  const auto w_linear = standard_cylindrical_family(a.model.dim).front();
  const auto w_square = standard_cylindrical_family(a.model.dim)[1];
  const auto [lin_res, lin_detail] = residual_at(sc.steps, w_linear);
  const auto [sq1, sq1_detail] = residual_at(sc.steps, w_square);
  const auto [sq2, sq2_detail] = residual_at(sc.steps * 2, w_square);
  const auto [sq4, sq4_detail] = residual_at(sc.steps * 4, w_square);
  const double ratio1 = sq2 > 0.0 ? sq1 / sq2 : 0.0;
  const double ratio2 = sq4 > 0.0 ? sq2 / sq4 : 0.0;

  res.report = report_header("calculus", sc);
  res.report["result"] = {
      {"fd_checks", fd_rows},
      {"fd_max_rel_error_first", worst_first},
      {"fd_max_abs_error_second", worst_second},
      {"particles", sc.particles},
      {"chain_rule",
       {{"dt_levels",
         {{{"dt", (sc.horizon - sc.t0) / double(sc.steps)}, {"mean_abs_final", sq1}},
          {{"dt", (sc.horizon - sc.t0) / double(2 * sc.steps)}, {"mean_abs_final", sq2}},
          {{"dt", (sc.horizon - sc.t0) / double(4 * sc.steps)}, {"mean_abs_final", sq4}}}},
        {"first_path_residuals", sq1_detail},
        {"linear_detail", lin_detail}}},
      {"linear_final_abs_residual", lin_res},
      {"residual_ratio_min", std::min(ratio1, ratio2)},
      {"residual_ratio_max", std::max(ratio1, ratio2)}};
  res.exit_code = detail::judge(sc.expect, res.report["result"]);
  detail::finish(res, opt, "calculus");
  return res;
}

// ---------------------------------------------------------------------------
// Entry points

inline RunResult run(const std::string& subcommand, Scenario sc, const RunOptions& opt) {
  detail::apply_seed_override(sc, opt);
  if (subcommand == "simulate") return run_simulate(sc, opt);
  if (subcommand == "reach") return run_reach(sc, opt);
  if (subcommand == "verify") return run_verify(sc, opt);
  if (subcommand == "gdpp") return run_gdpp(sc, opt);
  if (subcommand == "budget") return run_budget(sc, opt);
  if (subcommand == "check-h1") return run_check_h1(sc, opt);
  if (subcommand == "calculus") return run_calculus(sc, opt);
  throw invalid_input("unknown subcommand '" + subcommand + "'");
}

inline json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw invalid_input("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw invalid_input("parse error in " + path + ": " + e.what());
  }
  return j;
}

inline RunResult run_file(const std::string& subcommand, const std::string& scenario_path,
                          const RunOptions& opt) {
  const json raw = load_json_file(scenario_path);
  std::vector<Diagnostic> diags;
  const auto sc = parse_scenario(raw, &diags);
  if (!sc) {
    RunResult res;
    res.exit_code = 1;
    res.diagnostics = diags;
    return res;
  }
  RunResult res = run(subcommand, *sc, opt);
  res.diagnostics = diags;
  return res;
}

inline RunResult run_validate(const std::string& scenario_path, const RunOptions& opt) {
  RunResult res;
  const json raw = load_json_file(scenario_path);
  res.diagnostics = validate_scenario(raw);
  json diag_rows = json::array();
  for (const auto& d : res.diagnostics) diag_rows.push_back({{"path", d.path}, {"message", d.message}});
  const auto sc = parse_scenario(raw, nullptr);
  res.report = {{"subcommand", "validate"},
                {"version", library_version},
                {"diagnostics", diag_rows},
                {"valid", sc.has_value()}};
  if (sc) res.report["effective"] = sc->effective();
  detail::finish(res, opt, "validate");
  return res;
}

inline RunResult run_w2(const std::string& file_a, const std::string& file_b,
                        const RunOptions& opt) {
  auto load_measure = [](const std::string& path) {
    const json j = load_json_file(path);
    if (!j.contains("d") || !j.contains("points"))
      throw invalid_input(path + ": measure files need fields 'd' and 'points'");
    const int d = j.at("d").get<int>();
    std::vector<std::vector<double>> pts;
    for (const auto& p : j.at("points"))
      pts.push_back(qmt::detail::get_vector(p, "points", nullptr));
    auto mu = EmpiricalMeasure::from_points(pts);
    if (mu.dim() != d) throw invalid_input(path + ": declared d does not match the points");
    return mu;
  };
  RunResult res;
  const auto mu = load_measure(file_a);
  const auto nu = load_measure(file_b);
  W2Options w2o;
  w2o.workers = opt.workers;
  const double dist = wasserstein2(mu, nu, w2o);
  res.report = {{"subcommand", "w2"},
                {"version", library_version},
                {"result", {{"distance", dist}, {"a", file_a}, {"b", file_b}}}};
  detail::finish(res, opt, "w2");
  return res;
}

}  // namespace qmt::runner
