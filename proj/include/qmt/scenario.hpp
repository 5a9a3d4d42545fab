#pragma once

#include <json.hpp>
#include <optional>

#include "qmt/budget.hpp"
#include "qmt/embed.hpp"
#include "qmt/model.hpp"
#include "qmt/target_set.hpp"

namespace qmt {

using json = nlohmann::json;

struct Diagnostic {
  std::string path;
  std::string message;
};

// ---------------------------------------------------------------------------
// Typed scenario configuration, a closed-registry description of one run.

struct Scenario {
  std::string name;

  std::string model_name;
  std::map<std::string, double> model_params;

  ControlKind control_kind = ControlKind::feedback;
  Box u_box;
  json family_spec;

  json initial_spec;
  json target_spec;

  double t0 = 0.0, horizon = 1.0;
  std::size_t steps = 100;
  std::size_t particles = 16;
  std::size_t paths = 32;

  std::uint64_t seed_path = 1, seed_draw = 2, seed_control = 3;

  double tol = 1e-6;
  double delta = 1e-3;
  double tol_y = 4e-3;
  double h_first = 1e-5;
  double h_second = 1e-4;

  double barrier_eps = 0.05;
  double barrier_rate = 1.0;
  double theta = 0.5;

  json budget_spec;  // {"cost": "linear", "coeff": 1.0, "bracket": [lo, hi], "y": ...}
  json sweep_spec;   // {"points": n, "from": a, "to": b}
  json expect;       // optional declared expectation

  json effective() const;
};

inline const std::vector<std::string>& model_registry_names() {
  static const std::vector<std::string> names = {
      "constant",       "linear-drift",           "mean-field-ou",
      "threshold-control", "mean-constraint-embedded", "crop-example"};
  return names;
}

namespace detail {

inline double param(const std::map<std::string, double>& p, const std::string& key,
                    double fallback) {
  const auto it = p.find(key);
  return it == p.end() ? fallback : it->second;
}

inline std::vector<double> param_vec(const std::map<std::string, double>& p,
                                     const std::string& key, int d, double fallback) {
  std::vector<double> out(static_cast<std::size_t>(d), param(p, key, fallback));
  for (int i = 0; i < d; ++i) {
    const auto it = p.find(key + "_" + std::to_string(i + 1));
    if (it != p.end()) out[static_cast<std::size_t>(i)] = it->second;
  }
  return out;
}

inline void diag(std::vector<Diagnostic>* diags, const std::string& path,
                 const std::string& message) {
  if (diags != nullptr) diags->push_back({path, message});
}

inline bool get_number(const json& j, const char* key, double& out, const std::string& path,
                       std::vector<Diagnostic>* diags) {
  if (!j.contains(key)) return false;
  if (!j.at(key).is_number()) {
    diag(diags, path + "." + key, "expected a number");
    return false;
  }
  out = j.at(key).get<double>();
  return true;
}

inline std::vector<double> get_vector(const json& j, const std::string& path,
                                      std::vector<Diagnostic>* diags) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_number()) {
        diag(diags, path, "expected numbers");
        return out;
      }
      out.push_back(v.get<double>());
    }
  } else {
    diag(diags, path, "expected a number or an array of numbers");
  }
  return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Registry model builders

inline CoefficientModel build_registry_model(const std::string& name,
                                             const std::map<std::string, double>& params) {
  using detail::param;
  CoefficientModel m;
  m.name = name;
  m.params = params;

  if (name == "constant") {
    const int d = static_cast<int>(param(params, "dim", 1));
    const double sigma = param(params, "sigma", 0.0);
    auto b0 = std::make_shared<std::vector<double>>(detail::param_vec(params, "b", d, 0.0));
    m.dim = d;
    m.control_dim = 1;
    m.drift = [b0](double, std::span<const double>, const EmpiricalMeasure&,
                   std::span<const double>, std::span<double> b) {
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = (*b0)[i];
    };
    m.diffusion = [sigma](double, std::span<const double>, const EmpiricalMeasure&,
                          std::span<const double>, std::span<double> a) {
      const std::size_t d2 = static_cast<std::size_t>(std::lround(std::sqrt(double(a.size()))));
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.0;
      for (std::size_t i = 0; i < d2; ++i) a[i * d2 + i] = sigma;
    };
    m.lipschitz_L = 0.0;
    m.bound_M = norm2(*b0) + std::abs(sigma) * std::sqrt(double(d));
    return m;
  }

  if (name == "linear-drift" || name == "mean-field-ou") {
    const int d = static_cast<int>(param(params, "dim", 1));
    const double theta = param(params, "theta", 1.0);
    const double sigma = param(params, "sigma", 0.5);
    const double clip_r = param(params, "clip", 10.0);
    const bool mean_field = name == "mean-field-ou";
    auto c0 = std::make_shared<std::vector<double>>(detail::param_vec(params, "c", d, 0.0));
    m.dim = d;
    m.control_dim = 1;
    m.drift = [theta, clip_r, mean_field, c0](double, std::span<const double> x,
                                              const EmpiricalMeasure& mu, std::span<const double>,
                                              std::span<double> b) {
      const auto mean = mu.mean();
      for (std::size_t i = 0; i < b.size(); ++i) {
        const double anchor = mean_field ? mean[i] : (*c0)[i];
        b[i] = theta * clip(anchor - x[i], -clip_r, clip_r);
      }
    };
    m.diffusion = [sigma](double, std::span<const double>, const EmpiricalMeasure&,
                          std::span<const double>, std::span<double> a) {
      const std::size_t d2 = static_cast<std::size_t>(std::lround(std::sqrt(double(a.size()))));
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.0;
      for (std::size_t i = 0; i < d2; ++i) a[i * d2 + i] = sigma;
    };
    // The mean is 1-Lipschitz in W2, so the mean-field drift is theta-Lipschitz
    // in each of x and mu.
    m.lipschitz_L = mean_field ? 2.0 * theta : theta;
    m.bound_M = theta * clip_r * std::sqrt(double(d)) + std::abs(sigma) * std::sqrt(double(d));
    return m;
  }

  if (name == "threshold-control") {
    const int d = static_cast<int>(param(params, "dim", 1));
    const double sigma = param(params, "sigma", 0.0);
    m.dim = d;
    m.control_dim = d;
    m.drift = [](double, std::span<const double>, const EmpiricalMeasure&,
                 std::span<const double> u, std::span<double> b) {
      for (std::size_t i = 0; i < b.size(); ++i) b[i] = u[i];
    };
    m.diffusion = [sigma](double, std::span<const double>, const EmpiricalMeasure&,
                          std::span<const double>, std::span<double> a) {
      const std::size_t d2 = static_cast<std::size_t>(std::lround(std::sqrt(double(a.size()))));
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = 0.0;
      for (std::size_t i = 0; i < d2; ++i) a[i * d2 + i] = sigma;
    };
    m.lipschitz_L = 0.0;
    m.bound_M = std::sqrt(double(d)) * (1.0 + std::abs(sigma));
    return m;
  }

  if (name == "crop-example") {
    // Two field characteristics (dry mass, quality) pushed by a scalar
    // fertilizing effort, with local interaction through the field's mean.
    const double g1 = param(params, "gain1", 0.6), g2 = param(params, "gain2", 1.0);
    const double r1 = param(params, "revert1", 0.5), r2 = param(params, "revert2", 0.5);
    const double s1 = param(params, "sigma1", 0.05), s2 = param(params, "sigma2", 0.1);
    const double clip_r = param(params, "clip", 10.0);
    m.dim = 2;
    m.control_dim = 1;
    m.drift = [g1, g2, r1, r2, clip_r](double, std::span<const double> x,
                                       const EmpiricalMeasure& mu, std::span<const double> u,
                                       std::span<double> b) {
      const auto mean = mu.mean();
      b[0] = g1 * u[0] + r1 * clip(mean[0] - x[0], -clip_r, clip_r);
      b[1] = g2 * u[0] + r2 * clip(mean[1] - x[1], -clip_r, clip_r);
    };
    m.diffusion = [s1, s2](double, std::span<const double>, const EmpiricalMeasure&,
                           std::span<const double>, std::span<double> a) {
      a[0] = s1;
      a[1] = 0.0;
      a[2] = 0.0;
      a[3] = s2;
    };
    m.lipschitz_L = 2.0 * std::max(r1, r2);
    m.bound_M = std::max(g1, g2) + std::max(r1, r2) * clip_r + std::max(s1, s2);
    return m;
  }

  if (name == "mean-constraint-embedded") {
    std::string alternatives;
    throw invalid_input(
        "mean-constraint-embedded is assembled through embed_mean_constraint, not directly");
  }

  std::string alternatives;
  for (const auto& n : model_registry_names()) alternatives += (alternatives.empty() ? "" : ", ") + n;
  throw invalid_input("unknown model '" + name + "'; known models: " + alternatives);
}

// ---------------------------------------------------------------------------
// Control family, initial sampler and target builders

inline std::vector<ControlPolicy> build_control_family(const Scenario& sc) {
  const json& f = sc.family_spec;
  const std::string type = f.value("type", "constant-grid");
  const auto q = static_cast<std::size_t>(sc.u_box.dim());
  std::vector<ControlPolicy> family;

  auto as_kind = [&sc](ControlPolicy p) {
    // Constant maps belong to every class; tag them with the declared one.
    return ControlPolicy(sc.control_kind, p.box(),
                         [p](double t, std::span<const double> x, const EmpiricalMeasure& mu,
                             const PathView& pv, std::span<double> out) {
                           p.evaluate(t, x, mu, pv, out);
                         },
                         p.label());
  };

  if (type == "constant-grid") {
    const auto count = f.value("count", std::size_t{5});
    if (count < 1) throw invalid_input("control.family.count must be positive");
    std::vector<std::size_t> idx(q, 0);
    while (true) {
      std::vector<double> u(q);
      for (std::size_t i = 0; i < q; ++i)
        u[i] = count == 1 ? 0.5 * (sc.u_box.lo[i] + sc.u_box.hi[i])
                          : sc.u_box.lo[i] + (sc.u_box.hi[i] - sc.u_box.lo[i]) *
                                                 (double(idx[i]) / double(count - 1));
      family.push_back(as_kind(ControlPolicy::constant(u, sc.u_box)));
      std::size_t c = 0;
      while (c < q && ++idx[c] == count) idx[c++] = 0;
      if (c == q) break;
      if (family.size() > 4096) throw capacity_error("control grid is too large");
    }
    return family;
  }

  if (type == "constant-list") {
    if (!f.contains("values") || !f.at("values").is_array() || f.at("values").empty())
      throw invalid_input("control.family.values: need a nonempty array of control points");
    for (const auto& v : f.at("values")) {
      std::vector<double> u = detail::get_vector(v, "control.family.values", nullptr);
      if (u.size() != q) throw invalid_input("control.family.values: wrong control dimension");
      family.push_back(as_kind(ControlPolicy::constant(u, sc.u_box)));
    }
    return family;
  }

  if (type == "bang-bang") {
    std::vector<double> hi = f.contains("u_hi")
                                 ? detail::get_vector(f.at("u_hi"), "control.family.u_hi", nullptr)
                                 : sc.u_box.hi;
    std::vector<double> lo = f.contains("u_lo")
                                 ? detail::get_vector(f.at("u_lo"), "control.family.u_lo", nullptr)
                                 : sc.u_box.lo;
    const auto switches = f.value("switches", std::size_t{4});
    for (std::size_t s = 0; s <= switches; ++s) {
      const double tau =
          sc.t0 + (sc.horizon - sc.t0) * (double(s) / double(switches == 0 ? 1 : switches));
      for (const bool hi_first : {true, false}) {
        auto u1 = std::make_shared<std::vector<double>>(hi_first ? hi : lo);
        auto u2 = std::make_shared<std::vector<double>>(hi_first ? lo : hi);
        family.push_back(ControlPolicy(
            sc.control_kind, sc.u_box,
            [tau, u1, u2](double t, std::span<const double>, const EmpiricalMeasure&,
                          const PathView&, std::span<double> out) {
              const auto& u = t < tau ? *u1 : *u2;
              for (std::size_t i = 0; i < out.size(); ++i) out[i] = u[i];
            },
            std::string(hi_first ? "bang-hi-lo(" : "bang-lo-hi(") + std::to_string(tau) + ")"));
      }
    }
    return family;
  }

  if (type == "mean-gap") {
    // Measure-feedback family: u = gain * (kappa - c . mean(mu)) * ones.
    const double kappa = sc.target_spec.value("kappa", 0.0);
    std::vector<double> c =
        sc.target_spec.contains("c")
            ? detail::get_vector(sc.target_spec.at("c"), "target.c", nullptr)
            : std::vector<double>{1.0};
    auto cshared = std::make_shared<std::vector<double>>(std::move(c));
    std::vector<double> gains =
        f.contains("gains") ? detail::get_vector(f.at("gains"), "control.family.gains", nullptr)
                            : std::vector<double>{0.5, 1.0, 2.0, 4.0};
    for (const double gain : gains) {
      family.push_back(ControlPolicy::measure_feedback(
          [gain, kappa, cshared](double, const EmpiricalMeasure& mu, const PathView&,
                                 std::span<double> out) {
            const double gap = kappa - dot(*cshared, mu.mean());
            for (std::size_t i = 0; i < out.size(); ++i) out[i] = gain * gap;
          },
          sc.u_box, "mean-gap(" + std::to_string(gain) + ")"));
    }
    return family;
  }

  throw invalid_input("unknown control family type '" + type +
                      "'; known types: constant-grid, constant-list, bang-bang, mean-gap");
}

/// Initial draws for the scenario's particle count. The draw seed is
/// independent of the path seed; `recenter` translates the cloud so that its
/// empirical mean matches the requested center exactly.
inline EmpiricalMeasure build_initial_measure(const json& spec, int dim, std::size_t n,
                                              std::uint64_t draw_seed) {
  const std::string sampler = spec.value("sampler", "gaussian");
  const auto d = static_cast<std::size_t>(dim);
  rng::Stream s(rng::derive(draw_seed, 1));

  std::vector<double> center(d, 0.0);
  std::vector<double> xs(n * d);
  bool has_center = false;

  if (sampler == "gaussian") {
    std::vector<double> mean =
        spec.contains("mean") ? detail::get_vector(spec.at("mean"), "initial.mean", nullptr)
                              : std::vector<double>(d, 0.0);
    std::vector<double> std_dev =
        spec.contains("std") ? detail::get_vector(spec.at("std"), "initial.std", nullptr)
                             : std::vector<double>(d, 1.0);
    if (mean.size() == 1) mean.assign(d, mean[0]);
    if (std_dev.size() == 1) std_dev.assign(d, std_dev[0]);
    if (mean.size() != d || std_dev.size() != d)
      throw invalid_input("initial: mean/std dimension mismatch");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) xs[i * d + c] = mean[c] + std_dev[c] * s.gaussian();
    center = mean;
    has_center = true;
  } else if (sampler == "uniform-box") {
    std::vector<double> lo = detail::get_vector(spec.at("lo"), "initial.lo", nullptr);
    std::vector<double> hi = detail::get_vector(spec.at("hi"), "initial.hi", nullptr);
    if (lo.size() == 1) lo.assign(d, lo[0]);
    if (hi.size() == 1) hi.assign(d, hi[0]);
    if (lo.size() != d || hi.size() != d) throw invalid_input("initial: lo/hi dimension mismatch");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < d; ++c) xs[i * d + c] = lo[c] + (hi[c] - lo[c]) * s.uniform();
    for (std::size_t c = 0; c < d; ++c) center[c] = 0.5 * (lo[c] + hi[c]);
    has_center = true;
  } else if (sampler == "discrete-points") {
    if (!spec.contains("points") || !spec.at("points").is_array() || spec.at("points").empty())
      throw invalid_input("initial.points: need a nonempty array");
    const auto& pts = spec.at("points");
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = detail::get_vector(pts[i % pts.size()], "initial.points", nullptr);
      if (p.size() != d) throw invalid_input("initial.points: wrong dimension");
      for (std::size_t c = 0; c < d; ++c) xs[i * d + c] = p[c];
    }
  } else {
    throw invalid_input("unknown sampler '" + sampler +
                        "'; known samplers: gaussian, uniform-box, discrete-points");
  }

  EmpiricalMeasure mu(dim, std::move(xs));
  if (spec.value("recenter", false) && has_center) {
    const auto m = mu.mean();
    std::vector<double> shift(d);
    for (std::size_t c = 0; c < d; ++c) shift[c] = center[c] - m[c];
    mu = mu.translated(shift);
  }
  return mu;
}

inline TargetSet build_target(const json& spec, int dim) {
  const std::string kind = spec.value("kind", "half-space-mean");
  if (kind == "half-space-mean") {
    std::vector<double> c = spec.contains("c")
                                ? detail::get_vector(spec.at("c"), "target.c", nullptr)
                                : std::vector<double>(static_cast<std::size_t>(dim), 0.0);
    if (!spec.contains("c")) c[0] = 1.0;
    if (c.size() == 1 && dim > 1) {
      c.assign(static_cast<std::size_t>(dim), 0.0);
      c[0] = 1.0;
    }
    return half_space_mean_target(std::move(c), spec.value("kappa", 0.0));
  }
  if (kind == "moment-box") {
    auto lo = detail::get_vector(spec.at("lo"), "target.lo", nullptr);
    auto hi = detail::get_vector(spec.at("hi"), "target.hi", nullptr);
    return moment_box_target(std::move(lo), std::move(hi));
  }
  if (kind == "w2-ball") {
    const auto& cj = spec.at("center");
    const int d = cj.at("d").get<int>();
    std::vector<std::vector<double>> pts;
    for (const auto& p : cj.at("points"))
      pts.push_back(detail::get_vector(p, "target.center.points", nullptr));
    return w2_ball_target(EmpiricalMeasure::from_points(pts), spec.value("radius", 1.0));
  }
  if (kind == "mean-constraint")
    throw invalid_input("target kind 'mean-constraint' is only valid with the "
                        "mean-constraint-embedded model");
  throw invalid_input("unknown target kind '" + kind +
                      "'; known kinds: half-space-mean, moment-box, w2-ball, mean-constraint");
}

// ---------------------------------------------------------------------------
// Scenario parsing and validation

inline std::optional<Scenario> parse_scenario(const json& j, std::vector<Diagnostic>* diags) {
  using detail::diag;
  bool fatal = false;
  Scenario sc;

  if (!j.is_object()) {
    diag(diags, "", "scenario must be a JSON object");
    return std::nullopt;
  }

  static const std::vector<std::string> known_top = {
      "name",   "model",   "control",    "initial", "target", "grid",  "particles",
      "paths",  "seeds",   "tolerances", "barrier", "theta",  "budget", "sweep",
      "expect", "workers"};
  for (const auto& [key, _] : j.items())
    if (std::find(known_top.begin(), known_top.end(), key) == known_top.end())
      diag(diags, key, "unknown field (ignored)");

  if (!j.contains("name") || !j.at("name").is_string()) {
    diag(diags, "name", "missing scenario name");
    fatal = true;
  } else {
    sc.name = j.at("name").get<std::string>();
  }

  if (!j.contains("model") || !j.at("model").is_object() || !j.at("model").contains("name")) {
    diag(diags, "model.name", "missing model name");
    fatal = true;
  } else {
    sc.model_name = j.at("model").at("name").get<std::string>();
    const auto& names = model_registry_names();
    if (std::find(names.begin(), names.end(), sc.model_name) == names.end()) {
      std::string alternatives;
      for (const auto& n : names) alternatives += (alternatives.empty() ? "" : ", ") + n;
      diag(diags, "model.name",
           "unknown model '" + sc.model_name + "'; known models: " + alternatives);
      fatal = true;
    }
    if (j.at("model").contains("params")) {
      for (const auto& [k, v] : j.at("model").at("params").items()) {
        if (!v.is_number()) {
          diag(diags, "model.params." + k, "expected a number");
          fatal = true;
        } else {
          sc.model_params[k] = v.get<double>();
        }
      }
    }
  }

  if (j.contains("control")) {
    const auto& c = j.at("control");
    const std::string kind = c.value("kind", "feedback");
    if (kind == "feedback") sc.control_kind = ControlKind::feedback;
    else if (kind == "measure-feedback") sc.control_kind = ControlKind::measure_feedback;
    else if (kind == "open-loop-constant") sc.control_kind = ControlKind::open_loop_constant;
    else {
      diag(diags, "control.kind", "unknown control kind '" + kind + "'");
      fatal = true;
    }
    if (c.contains("u_box")) {
      auto lo = detail::get_vector(c.at("u_box").value("lo", json::array()), "control.u_box.lo",
                                   diags);
      auto hi = detail::get_vector(c.at("u_box").value("hi", json::array()), "control.u_box.hi",
                                   diags);
      if (lo.empty() || lo.size() != hi.size()) {
        diag(diags, "control.u_box", "lo/hi must be nonempty arrays of equal length");
        fatal = true;
      } else {
        bool ok = true;
        for (std::size_t i = 0; i < lo.size(); ++i)
          if (!(lo[i] <= hi[i])) ok = false;
        if (!ok) {
          diag(diags, "control.u_box", "lo must be <= hi componentwise");
          fatal = true;
        } else {
          sc.u_box = Box::interval(std::move(lo), std::move(hi));
        }
      }
    }
    sc.family_spec = c.value("family", json{{"type", "constant-grid"}, {"count", 5}});
  } else {
    sc.family_spec = json{{"type", "constant-grid"}, {"count", 5}};
  }
  if (sc.u_box.dim() == 0) sc.u_box = Box::symmetric(1, 1.0);

  sc.initial_spec = j.value("initial", json{{"sampler", "gaussian"}});
  sc.target_spec = j.value("target", json{{"kind", "half-space-mean"}, {"kappa", 0.0}});

  if (j.contains("grid")) {
    const auto& g = j.at("grid");
    detail::get_number(g, "t", sc.t0, "grid", diags);
    detail::get_number(g, "T", sc.horizon, "grid", diags);
    if (g.contains("steps")) {
      if (!g.at("steps").is_number_unsigned() || g.at("steps").get<std::size_t>() == 0) {
        diag(diags, "grid.steps", "must be a positive integer");
        fatal = true;
      } else {
        sc.steps = g.at("steps").get<std::size_t>();
      }
    }
    if (!(sc.t0 < sc.horizon)) {
      diag(diags, "grid", "need t < T");
      fatal = true;
    }
  }

  auto positive_count = [&](const char* key, std::size_t& out) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_unsigned() || j.at(key).get<std::size_t>() == 0) {
      diag(diags, key, "must be a positive integer");
      fatal = true;
    } else {
      out = j.at(key).get<std::size_t>();
    }
  };
  positive_count("particles", sc.particles);
  positive_count("paths", sc.paths);

  if (j.contains("seeds")) {
    const auto& s = j.at("seeds");
    sc.seed_path = s.value("path", sc.seed_path);
    sc.seed_draw = s.value("draw", sc.seed_draw);
    sc.seed_control = s.value("control", sc.seed_control);
  }

  if (j.contains("tolerances")) {
    const auto& t = j.at("tolerances");
    detail::get_number(t, "tol", sc.tol, "tolerances", diags);
    detail::get_number(t, "delta", sc.delta, "tolerances", diags);
    detail::get_number(t, "tol_y", sc.tol_y, "tolerances", diags);
    detail::get_number(t, "h_first", sc.h_first, "tolerances", diags);
    detail::get_number(t, "h_second", sc.h_second, "tolerances", diags);
    for (const auto& [key, val] : std::map<std::string, double>{{"tol", sc.tol},
                                                                {"delta", sc.delta},
                                                                {"tol_y", sc.tol_y},
                                                                {"h_first", sc.h_first},
                                                                {"h_second", sc.h_second}})
      if (!(val > 0.0)) {
        diag(diags, "tolerances." + key, "must be positive");
        fatal = true;
      }
  }

  if (j.contains("barrier")) {
    detail::get_number(j.at("barrier"), "epsilon", sc.barrier_eps, "barrier", diags);
    detail::get_number(j.at("barrier"), "rate", sc.barrier_rate, "barrier", diags);
    if (!(sc.barrier_eps > 0.0)) {
      diag(diags, "barrier.epsilon", "must be positive");
      fatal = true;
    }
  }

  sc.theta = 0.5 * (sc.t0 + sc.horizon);
  if (j.contains("theta")) detail::get_number(j, "theta", sc.theta, "", diags);

  sc.budget_spec = j.value("budget", json::object());
  sc.sweep_spec = j.value("sweep", json::object());
  sc.expect = j.value("expect", json::object());

  if (fatal) return std::nullopt;
  return sc;
}

inline std::vector<Diagnostic> validate_scenario(const json& j) {
  std::vector<Diagnostic> diags;
  parse_scenario(j, &diags);
  return diags;
}

inline json Scenario::effective() const {
  json j;
  j["name"] = name;
  j["model"] = {{"name", model_name}, {"params", model_params}};
  j["control"] = {{"kind", to_string(control_kind)},
                  {"u_box", {{"lo", u_box.lo}, {"hi", u_box.hi}}},
                  {"family", family_spec}};
  j["initial"] = initial_spec;
  j["target"] = target_spec;
  j["grid"] = {{"t", t0}, {"T", horizon}, {"steps", steps}};
  j["particles"] = particles;
  j["paths"] = paths;
  j["seeds"] = {{"path", seed_path}, {"draw", seed_draw}, {"control", seed_control}};
  j["tolerances"] = {{"tol", tol},
                     {"delta", delta},
                     {"tol_y", tol_y},
                     {"h_first", h_first},
                     {"h_second", h_second}};
  j["barrier"] = {{"epsilon", barrier_eps}, {"rate", barrier_rate}};
  j["theta"] = theta;
  if (!budget_spec.empty()) j["budget"] = budget_spec;
  if (!sweep_spec.empty()) j["sweep"] = sweep_spec;
  if (!expect.empty()) j["expect"] = expect;
  return j;
}

// ---------------------------------------------------------------------------
// Assembly: scenario -> concrete model, family, initial measure, target

struct Assembled {
  CoefficientModel model;
  std::vector<ControlPolicy> family;
  EmpiricalMeasure initial{1, {0.0}};
  TargetSet target;
  std::vector<double> grid;
  bool embedded = false;
  std::optional<EmbeddedProblem> emb;
  double alpha = 0.0;
};

inline Assembled assemble(const Scenario& sc) {
  Assembled a;
  a.grid = uniform_grid(sc.t0, sc.horizon, sc.steps);

  if (sc.model_name == "mean-constraint-embedded") {
    const double sigma = detail::param(sc.model_params, "sigma", 0.5);
    const double kappa =
        detail::param(sc.model_params, "kappa", sc.target_spec.value("kappa", 1.0));
    const double alpha = detail::param(sc.model_params, "alpha", sigma);
    const int base_dim = static_cast<int>(detail::param(sc.model_params, "dim", 1));

    std::map<std::string, double> base_params{{"dim", double(base_dim)}, {"sigma", sigma}};
    const CoefficientModel base = build_registry_model("threshold-control", base_params);

    Scenario base_sc = sc;
    base_sc.model_name = "threshold-control";
    const auto base_family = build_control_family(base_sc);

    LossFunction loss;
    loss.label = "x1-" + std::to_string(kappa);
    loss.bound = std::abs(kappa) + 10.0;
    loss.value = [kappa](std::span<const double> x) { return x[0] - kappa; };
    a.emb = embed_mean_constraint(base, std::move(loss), {alpha, alpha});
    a.alpha = alpha;
    a.model = a.emb->model;
    a.family = a.emb->lift_family(base_family, alpha);
    a.target = a.emb->target;
    const EmpiricalMeasure base_initial =
        build_initial_measure(sc.initial_spec, base_dim, sc.particles, sc.seed_draw);
    a.initial = a.emb->lift_initial(base_initial, 0.0);
    a.embedded = true;
    return a;
  }

  a.model = build_registry_model(sc.model_name, sc.model_params);
  a.family = build_control_family(sc);
  a.initial = build_initial_measure(sc.initial_spec, a.model.dim, sc.particles, sc.seed_draw);
  a.target = build_target(sc.target_spec, a.model.dim);
  return a;
}

/// Budget problem from the scenario (plain models only).
inline BudgetProblem assemble_budget(const Scenario& sc, const Assembled& a) {
  if (a.embedded) throw invalid_input("budget: not available for embedded scenarios");
  BudgetProblem bp;
  bp.x_model = a.model;
  bp.target_x = a.target;
  bp.grid_times = a.grid;
  const std::string cost = sc.budget_spec.value("cost", "linear");
  const double coeff = sc.budget_spec.value("coeff", 1.0);
  if (cost == "linear")
    bp.cost_rate = [coeff](std::span<const double> u) { return coeff * std::abs(u[0]); };
  else if (cost == "quadratic")
    bp.cost_rate = [coeff](std::span<const double> u) { return coeff * u[0] * u[0]; };
  else if (cost == "constant")
    bp.cost_rate = [coeff](std::span<const double>) { return std::abs(coeff); };
  else
    throw invalid_input("unknown cost '" + cost + "'; known: linear, quadratic, constant");
  return bp;
}

inline std::pair<double, double> budget_bracket(const Scenario& sc, const Assembled& a) {
  if (sc.budget_spec.contains("bracket")) {
    const auto br = detail::get_vector(sc.budget_spec.at("bracket"), "budget.bracket", nullptr);
    if (br.size() != 2 || !(br[0] < br[1]))
      throw invalid_input("budget.bracket: need [lo, hi] with lo < hi");
    return {br[0], br[1]};
  }
  // Default: [-1, max cost rate * horizon + 1], the cost scale probed on the
  // corners of the control box.
  const Scenario& s = sc;
  double max_rate = 0.0;
  const auto bp_cost = assemble_budget(sc, a).cost_rate;
  const auto q = static_cast<std::size_t>(a.family.front().box().dim());
  const auto& box = a.family.front().box();
  for (std::size_t mask = 0; mask < (std::size_t{1} << q); ++mask) {
    std::vector<double> u(q);
    for (std::size_t i = 0; i < q; ++i) u[i] = (mask >> i) & 1 ? box.hi[i] : box.lo[i];
    max_rate = std::max(max_rate, bp_cost(u));
  }
  return {-1.0, max_rate * (s.horizon - s.t0) + 1.0};
}

}  // namespace qmt
