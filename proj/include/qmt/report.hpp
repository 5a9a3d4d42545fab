#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "qmt/budget.hpp"
#include "qmt/chain_rule.hpp"
#include "qmt/reach.hpp"
#include "qmt/scenario.hpp"
#include "qmt/simulate.hpp"
#include "qmt/verify.hpp"

namespace qmt {

inline constexpr const char* library_version = "0.1.0";

/// FNV-1a over the canonical serialized form; used as the scenario identity in
/// reports.
inline std::string config_hash(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (const unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

/// Report header shared by every subcommand. Deliberately free of timestamps,
/// worker counts and durations: two runs of the same scenario must be
/// byte-identical.
inline json report_header(const std::string& subcommand, const Scenario& sc) {
  const json eff = sc.effective();
  return json{{"subcommand", subcommand},
              {"version", library_version},
              {"config_hash", config_hash(eff)},
              {"scenario", eff}};
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// JSON views of result structs

inline json to_json(const VerifyResult& r) {
  return json{{"certified", r.certified},
              {"failure", r.failure},
              {"fail_path", r.fail_path},
              {"fail_step", r.fail_step},
              {"min_supersolution_margin", r.min_supersolution_margin},
              {"max_constraint_norm", r.max_constraint_norm},
              {"initial_value", r.initial_value},
              {"tol", r.tol_used},
              {"paths", r.paths}};
}

inline json to_json(const ReachVerdict& v) {
  json evidence = json::array();
  for (const auto& e : v.evidence)
    evidence.push_back({{"control", e.label},
                        {"strict_passes", e.strict_passes},
                        {"dilated_passes", e.dilated_passes}});
  return json{{"verdict", to_string(v.verdict)}, {"delta", v.delta},
              {"paths", v.paths},               {"best_control", v.best_control},
              {"evidence", evidence},           {"note", v.note}};
}

inline json to_json(const GdppReport& r) {
  json failures = json::array();
  for (const auto& f : r.failures)
    failures.push_back({{"path", f[0]}, {"restart", f[1]}, {"theta_step", f[2]}});
  return json{{"theta", r.theta},
              {"paths", r.paths},
              {"restarts_per_path", r.restarts},
              {"original_successes", r.original_successes},
              {"restart_successes", r.restart_successes},
              {"restart_total", r.restart_total},
              {"consistent", r.consistent},
              {"failures", failures}};
}

inline json to_json(const BudgetValue& v) {
  return json{{"status", to_string(v.status)},
              {"value", v.value},
              {"probes", v.probes},
              {"control_used", v.control_used},
              {"note", v.note}};
}

inline json to_json(const GdpReport& r) {
  return json{{"theta", r.theta},
              {"y", r.y},
              {"value_at_t", r.value_at_t},
              {"value_status", to_string(r.value_status)},
              {"gdp1_applicable", r.gdp1_applicable},
              {"gdp1_holds", r.gdp1_holds},
              {"gdp1_margins", r.gdp1_margins},
              {"gdp2_applicable", r.gdp2_applicable},
              {"gdp2_holds", r.gdp2_holds},
              {"nested_infeasible", r.nested_infeasible}};
}

inline json to_json(const ChainRuleReport& r) {
  return json{{"times", r.times},
              {"residuals", r.residuals},
              {"final_abs_residual", r.final_abs()},
              {"max_abs_residual", r.max_abs()}};
}

inline json to_json(const H1Report& r) {
  json tm = json::array(), cm = json::array();
  for (const auto& x : r.time_modulus) tm.push_back({x[0], x[1]});
  for (const auto& x : r.control_modulus) cm.push_back({x[0], x[1]});
  return json{{"declared_L", r.declared_L},
              {"declared_M", r.declared_M},
              {"max_ratio_x", r.max_ratio_x},
              {"max_ratio_mu", r.max_ratio_mu},
              {"max_ratio_joint", r.max_ratio_joint},
              {"max_bound", r.max_bound},
              {"lipschitz_ok", r.lipschitz_ok()},
              {"bound_ok", r.bound_ok()},
              {"time_modulus", tm},
              {"control_modulus", cm}};
}

inline json to_json(const std::vector<StabilityRow>& rows) {
  json out = json::array();
  for (const auto& r : rows)
    out.push_back({{"kind", to_string(r.kind)}, {"size", r.size}, {"mean_w2_sq", r.mean_w2_sq}});
  return out;
}

// ---------------------------------------------------------------------------
// File emission

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw error("cannot write " + path.string());
  out << text;
}

inline void write_report(const std::filesystem::path& path, const json& report) {
  write_text(path, report.dump(2) + "\n");
}

/// Trajectory dump: one row per (path, step, particle).
inline std::string trajectory_csv(const std::vector<Trajectory>& trajectories) {
  std::string out = "path_id,step,time,particle";
  const int d = trajectories.empty() ? 0 : trajectories.front().dim;
  for (int c = 1; c <= d; ++c) out += ",x_" + std::to_string(c);
  out += "\n";
  for (std::size_t p = 0; p < trajectories.size(); ++p) {
    const auto& tr = trajectories[p];
    const auto dd = static_cast<std::size_t>(tr.dim);
    for (std::size_t e = 0; e < tr.entries(); ++e)
      for (std::size_t i = 0; i < tr.particles(); ++i) {
        out += std::to_string(p) + "," + std::to_string(tr.time_steps[e]) + "," +
               detail::fmt_double(tr.times[e]) + "," + std::to_string(i);
        for (std::size_t c = 0; c < dd; ++c)
          out += "," + detail::fmt_double(tr.states[e][i * dd + c]);
        out += "\n";
      }
  }
  return out;
}

/// Path replay dump: the increments that, together with (grid, seed) in the
/// manifest, reproduce each path exactly.
inline std::string increments_csv(const std::vector<CommonNoisePath>& paths) {
  std::string out = "path_id,seed,step,time,dt";
  const int d = paths.empty() ? 0 : paths.front().dim;
  for (int c = 1; c <= d; ++c) out += ",db_" + std::to_string(c);
  out += "\n";
  for (std::size_t p = 0; p < paths.size(); ++p) {
    const auto& path = paths[p];
    for (std::size_t k = 0; k < path.steps(); ++k) {
      out += std::to_string(p) + "," + std::to_string(path.seed) + "," + std::to_string(k) + "," +
             detail::fmt_double(path.times[k]) + "," + detail::fmt_double(path.dt(k));
      const auto inc = path.increment(k);
      for (int c = 0; c < d; ++c) out += "," + detail::fmt_double(inc[static_cast<std::size_t>(c)]);
      out += "\n";
    }
  }
  return out;
}

}  // namespace qmt
