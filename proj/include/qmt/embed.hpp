#pragma once

#include "qmt/model.hpp"
#include "qmt/target_set.hpp"

namespace qmt {

/// Terminal loss whose conditional mean defines the constraint
/// E_B[l(X_T)] >= 0.
struct LossFunction {
  std::function<double(std::span<const double>)> value;
  double bound = 1.0;
  std::string label;
};

/// The mean-constraint problem rewritten as an almost-sure target problem on
/// the extended state (X, Y) with dY = alpha dB: alpha is appended to the
/// control and absorbs the martingale part of E_B[l(X)], and the target
/// becomes {law of (X, Y) : L >= 0} with L(mu) = integral of (l(x) - y).
struct EmbeddedProblem {
  CoefficientModel model;  ///< state dim d+1, control dim q+1 (last coordinate = alpha)
  TargetSet target;
  int base_dim = 1;
  int base_control_dim = 1;
  std::pair<double, double> alpha_bounds{0.0, 0.0};

  /// (x, y0) point cloud from an X-law; Y starts at y0 for every particle.
  EmpiricalMeasure lift_initial(const EmpiricalMeasure& mu_x, double y0 = 0.0) const {
    const auto d = static_cast<std::size_t>(base_dim);
    const std::size_t n = mu_x.size();
    std::vector<double> xs(n * (d + 1));
    for (std::size_t i = 0; i < n; ++i) {
      const auto p = mu_x.point(i);
      for (std::size_t c = 0; c < d; ++c) xs[i * (d + 1) + c] = p[c];
      xs[i * (d + 1) + d] = y0;
    }
    return EmpiricalMeasure(base_dim + 1, std::move(xs), false);
  }

  /// Base policy extended with a constant alpha coordinate; the base map sees
  /// the X-marginal of the extended law.
  ControlPolicy lift_policy(const ControlPolicy& base, double alpha) const {
    const auto q = static_cast<std::size_t>(base_control_dim);
    const auto d = base_dim;
    const Box ext_box = base.box().extended(alpha_bounds.first, alpha_bounds.second);
    return ControlPolicy(
        base.kind(), ext_box,
        [base, alpha, q, d](double t, std::span<const double> x, const EmpiricalMeasure& mu,
                            const PathView& pv, std::span<double> out) {
          const EmpiricalMeasure mu_x = mu.marginal(d);
          const std::span<const double> head =
              x.empty() ? x : x.subspan(0, static_cast<std::size_t>(d));
          base.evaluate(t, head, mu_x, pv, out.subspan(0, q));
          out[q] = alpha;
        },
        base.label() + "+alpha(" + std::to_string(alpha) + ")");
  }

  std::vector<ControlPolicy> lift_family(const std::vector<ControlPolicy>& family,
                                         double alpha) const {
    std::vector<ControlPolicy> out;
    out.reserve(family.size());
    for (const auto& c : family) out.push_back(lift_policy(c, alpha));
    return out;
  }
};

/// Builds the extended coefficient model and target for a base model and a
/// loss l. The extended Brownian motion has d+1 components; the Y row of the
/// diffusion is (alpha, 0, ..., 0) so Y accumulates alpha dB^1, and the extra
/// component drives nothing.
inline EmbeddedProblem embed_mean_constraint(const CoefficientModel& base, LossFunction loss,
                                             std::pair<double, double> alpha_bounds) {
  if (!std::isfinite(alpha_bounds.first) || !std::isfinite(alpha_bounds.second) ||
      alpha_bounds.first > alpha_bounds.second)
    throw invalid_input("embed_mean_constraint: bad alpha bounds");
  const int d = base.dim;
  const int q = base.control_dim;
  const auto du = static_cast<std::size_t>(d);
  const auto qu = static_cast<std::size_t>(q);

  EmbeddedProblem out;
  out.base_dim = d;
  out.base_control_dim = q;
  out.alpha_bounds = alpha_bounds;

  CoefficientModel ext;
  ext.dim = d + 1;
  ext.control_dim = q + 1;
  ext.name = base.name + "+mean-constraint";
  ext.params = base.params;
  ext.lipschitz_L = base.lipschitz_L;
  const double alpha_max =
      std::max(std::abs(alpha_bounds.first), std::abs(alpha_bounds.second));
  ext.bound_M = base.bound_M + alpha_max;

  ext.drift = [base, d, du, qu](double t, std::span<const double> x, const EmpiricalMeasure& mu,
                                std::span<const double> u, std::span<double> b) {
    const EmpiricalMeasure mu_x = mu.marginal(d);
    base.drift(t, x.subspan(0, du), mu_x, u.subspan(0, qu), b.subspan(0, du));
    b[du] = 0.0;
  };
  ext.diffusion = [base, d, du, qu](double t, std::span<const double> x,
                                    const EmpiricalMeasure& mu, std::span<const double> u,
                                    std::span<double> a) {
    const auto dd = du + 1;
    const EmpiricalMeasure mu_x = mu.marginal(d);
    std::vector<double> ax(du * du);
    base.diffusion(t, x.subspan(0, du), mu_x, u.subspan(0, qu), ax);
    for (std::size_t r = 0; r < dd; ++r)
      for (std::size_t c = 0; c < dd; ++c) a[r * dd + c] = 0.0;
    for (std::size_t r = 0; r < du; ++r)
      for (std::size_t c = 0; c < du; ++c) a[r * dd + c] = ax[r * du + c];
    a[du * dd + 0] = u[qu];  // dY = alpha dB^1
  };
  out.model = std::move(ext);

  auto lf = std::make_shared<LossFunction>(std::move(loss));
  TargetSet g;
  g.description = "mean-constraint(" + lf->label + ")";
  auto l_value = [lf, du](const EmpiricalMeasure& mu) {
    return mu.integrate(1, [&](std::span<const double> p, std::span<double> o) {
      o[0] = lf->value(p.subspan(0, du)) - p[du];
    })[0];
  };
  g.membership = [l_value](const EmpiricalMeasure& mu) { return l_value(mu) >= 0.0; };
  g.dilation = [l_value](const EmpiricalMeasure& mu, double delta) {
    return l_value(mu) >= -delta;
  };
  out.target = std::move(g);
  return out;
}

}  // namespace qmt
