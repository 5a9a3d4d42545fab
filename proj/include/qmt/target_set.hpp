#pragma once

#include <functional>
#include <string>

#include "qmt/measure.hpp"
#include "qmt/wasserstein.hpp"

namespace qmt {

/// A closed set of measures, together with an outward dilation used to absorb
/// discretization and sampling error: dilation(mu, 0) == membership(mu) and
/// membership implies dilation for every delta >= 0.
struct TargetSet {
  std::function<bool(const EmpiricalMeasure&)> membership;
  std::function<bool(const EmpiricalMeasure&, double)> dilation;
  std::string description;

  bool contains(const EmpiricalMeasure& mu, double delta = 0.0) const {
    return delta <= 0.0 ? membership(mu) : dilation(mu, delta);
  }
};

/// {mu : c . mean(mu) >= kappa}; the dilation lowers the threshold to
/// kappa - delta.
inline TargetSet half_space_mean_target(std::vector<double> c, double kappa) {
  auto cs = std::make_shared<std::vector<double>>(std::move(c));
  TargetSet g;
  g.description = "half-space-mean(kappa=" + std::to_string(kappa) + ")";
  g.membership = [cs, kappa](const EmpiricalMeasure& mu) {
    return dot(*cs, mu.mean()) >= kappa;
  };
  g.dilation = [cs, kappa](const EmpiricalMeasure& mu, double delta) {
    return dot(*cs, mu.mean()) >= kappa - delta;
  };
  return g;
}

/// {mu : mean(mu) in [lo, hi] componentwise}; the dilation widens the box.
inline TargetSet moment_box_target(std::vector<double> lo, std::vector<double> hi) {
  auto l = std::make_shared<std::vector<double>>(std::move(lo));
  auto h = std::make_shared<std::vector<double>>(std::move(hi));
  TargetSet g;
  g.description = "moment-box";
  auto inside = [l, h](const EmpiricalMeasure& mu, double delta) {
    const auto m = mu.mean();
    for (std::size_t i = 0; i < l->size(); ++i)
      if (m[i] < (*l)[i] - delta || m[i] > (*h)[i] + delta) return false;
    return true;
  };
  g.membership = [inside](const EmpiricalMeasure& mu) { return inside(mu, 0.0); };
  g.dilation = inside;
  return g;
}

/// {mu : W2(mu, center) <= radius}; the dilation grows the radius.
inline TargetSet w2_ball_target(EmpiricalMeasure center, double radius, W2Options opt = {}) {
  auto ref = std::make_shared<EmpiricalMeasure>(std::move(center));
  TargetSet g;
  g.description = "w2-ball(r=" + std::to_string(radius) + ")";
  g.membership = [ref, radius, opt](const EmpiricalMeasure& mu) {
    return wasserstein2(mu, *ref, opt) <= radius;
  };
  g.dilation = [ref, radius, opt](const EmpiricalMeasure& mu, double delta) {
    return wasserstein2(mu, *ref, opt) <= radius + delta;
  };
  return g;
}

/// Value of the reachability indicator at the horizon on a representable
/// measure: 1 - 1_G(mu).
inline int terminal_condition(const EmpiricalMeasure& mu, const TargetSet& g) {
  return g.membership(mu) ? 0 : 1;
}

}  // namespace qmt
