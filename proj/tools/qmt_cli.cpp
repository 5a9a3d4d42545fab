#include <CLI11.hpp>

#include <cstdio>

#include "qmt/runner.hpp"

namespace {

struct CommonArgs {
  std::string scenario;
  std::string out_dir = "out";
  int workers = 1;
  std::int64_t seed_override = -1;
};

void add_common(CLI::App* cmd, CommonArgs& args, bool scenario_required = true) {
  cmd->add_option("--scenario", args.scenario, "scenario JSON file")
      ->required(scenario_required)
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out_dir, "output directory for reports");
  cmd->add_option("--workers", args.workers, "worker threads for particle/path loops")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--seed-override", args.seed_override,
                  "replace the scenario's seed streams with ones derived from this value");
}

qmt::runner::RunOptions options_of(const CommonArgs& args) {
  qmt::runner::RunOptions opt;
  opt.out_dir = args.out_dir;
  opt.workers = args.workers;
  if (args.seed_override >= 0)
    opt.seed_override = static_cast<std::uint64_t>(args.seed_override);
  return opt;
}

int report_outcome(const qmt::runner::RunResult& res) {
  for (const auto& d : res.diagnostics)
    std::fprintf(stderr, "note: %s: %s\n", d.path.c_str(), d.message.c_str());
  if (res.exit_code == 1) {
    std::fprintf(stderr, "scenario rejected\n");
    return 1;
  }
  for (const auto& f : res.files) std::printf("wrote %s\n", f.c_str());
  if (res.report.contains("result")) {
    const auto& r = res.report.at("result");
    if (r.contains("verdict")) std::printf("verdict: %s\n", r.at("verdict").get<std::string>().c_str());
    if (r.contains("certified"))
      std::printf("certified: %s\n", r.at("certified").get<bool>() ? "yes" : "no");
    if (r.contains("status")) std::printf("status: %s\n", r.at("status").get<std::string>().c_str());
    if (r.contains("value")) std::printf("value: %.6g\n", r.at("value").get<double>());
    if (r.contains("consistent"))
      std::printf("consistent: %s\n", r.at("consistent").get<bool>() ? "yes" : "no");
    if (r.contains("distance")) std::printf("distance: %.12g\n", r.at("distance").get<double>());
  }
  if (res.exit_code == 2) std::printf("declared expectation NOT met (exit 2)\n");
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quenched mass-transport toolkit"};
  app.require_subcommand(1);

  CommonArgs args;
  std::string w2_a, w2_b;

  auto* simulate = app.add_subcommand("simulate", "particle trajectories to CSV");
  add_common(simulate, args);
  auto* w2 = app.add_subcommand("w2", "distance between two serialized measures");
  w2->add_option("a", w2_a, "first measure JSON file")->required()->check(CLI::ExistingFile);
  w2->add_option("b", w2_b, "second measure JSON file")->required()->check(CLI::ExistingFile);
  w2->add_option("--out", args.out_dir, "output directory for reports");
  w2->add_option("--workers", args.workers, "worker threads");
  auto* calculus = app.add_subcommand("calculus", "derivative and chain-rule residual report");
  add_common(calculus, args);
  auto* reach = app.add_subcommand("reach", "reachability estimate for the scenario target");
  add_common(reach, args);
  auto* verify = app.add_subcommand("verify", "barrier certificate for target membership");
  add_common(verify, args);
  auto* gdpp = app.add_subcommand("gdpp", "dynamic-programming restart consistency check");
  add_common(gdpp, args);
  auto* budget = app.add_subcommand("budget", "minimal-budget value by bisection");
  add_common(budget, args);
  auto* check_h1 = app.add_subcommand("check-h1", "coefficient regularity report");
  add_common(check_h1, args);
  auto* validate = app.add_subcommand("validate", "schema and invariant checks, no run");
  add_common(validate, args);

  CLI11_PARSE(app, argc, argv);

  try {
    const auto opt = options_of(args);
    if (w2->parsed()) return report_outcome(qmt::runner::run_w2(w2_a, w2_b, opt));
    if (validate->parsed()) {
      auto res = qmt::runner::run_validate(args.scenario, opt);
      for (const auto& d : res.diagnostics)
        std::printf("%s: %s\n", d.path.empty() ? "(root)" : d.path.c_str(), d.message.c_str());
      std::printf("%s\n", res.report.value("valid", false) ? "valid" : "INVALID");
      for (const auto& f : res.files) std::printf("wrote %s\n", f.c_str());
      return 0;
    }
    const char* sub = simulate->parsed()   ? "simulate"
                      : calculus->parsed() ? "calculus"
                      : reach->parsed()    ? "reach"
                      : verify->parsed()   ? "verify"
                      : gdpp->parsed()     ? "gdpp"
                      : budget->parsed()   ? "budget"
                                           : "check-h1";
    return report_outcome(qmt::runner::run_file(sub, args.scenario, opt));
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
