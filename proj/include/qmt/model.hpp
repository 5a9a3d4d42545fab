#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <utility>

#include "qmt/measure.hpp"
#include "qmt/path.hpp"

namespace qmt {

/// The realized noise history available to a control at decision time:
/// increments [0, upto) of the driving path.
struct PathView {
  const CommonNoisePath* path = nullptr;
  std::size_t upto = 0;

  std::vector<double> value() const {
    if (path == nullptr) return {};
    return path->value_at(upto);
  }
};

/// Controlled drift/diffusion pair (b, a) with declared regularity constants.
/// Both maps take (t, x, mu, u); a is returned row-major d x d and multiplies
/// the common Brownian increment.
struct CoefficientModel {
  int dim = 1;
  int control_dim = 1;
  std::function<void(double, std::span<const double>, const EmpiricalMeasure&,
                     std::span<const double>, std::span<double>)>
      drift;
  std::function<void(double, std::span<const double>, const EmpiricalMeasure&,
                     std::span<const double>, std::span<double>)>
      diffusion;
  double lipschitz_L = 0.0;  ///< declared joint (x, mu) Lipschitz constant
  double bound_M = 0.0;      ///< declared uniform bound on |b| and |a|
  std::map<std::string, double> params;
  std::string name;
};

/// Product of closed intervals in R^q; the admissible control set.
struct Box {
  std::vector<double> lo, hi;

  int dim() const { return static_cast<int>(lo.size()); }

  static Box symmetric(int q, double r) {
    Box b;
    b.lo.assign(static_cast<std::size_t>(q), -r);
    b.hi.assign(static_cast<std::size_t>(q), r);
    return b;
  }

  static Box interval(std::vector<double> lo, std::vector<double> hi) {
    if (lo.size() != hi.size() || lo.empty())
      throw invalid_input("Box: lo/hi size mismatch");
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (!(lo[i] <= hi[i])) throw invalid_input("Box: lo > hi");
    Box b;
    b.lo = std::move(lo);
    b.hi = std::move(hi);
    return b;
  }

  bool contains(std::span<const double> u) const {
    for (std::size_t i = 0; i < lo.size(); ++i)
      if (u[i] < lo[i] || u[i] > hi[i]) return false;
    return true;
  }

  /// Project u onto the box in place; returns true when any coordinate moved.
  bool clamp(std::span<double> u) const {
    bool moved = false;
    for (std::size_t i = 0; i < lo.size(); ++i) {
      const double c = clip(u[i], lo[i], hi[i]);
      if (c != u[i]) {
        u[i] = c;
        moved = true;
      }
    }
    return moved;
  }

  /// Extend by one trailing coordinate.
  Box extended(double lo1, double hi1) const {
    Box b = *this;
    b.lo.push_back(lo1);
    b.hi.push_back(hi1);
    return b;
  }
};

enum class ControlKind { feedback, measure_feedback, open_loop_constant };

inline std::string to_string(ControlKind k) {
  switch (k) {
    case ControlKind::feedback: return "feedback";
    case ControlKind::measure_feedback: return "measure-feedback";
    case ControlKind::open_loop_constant: return "open-loop-constant";
  }
  return "?";
}

/// An admissible control map. Outputs are always clamped into the box and
/// every clamp is counted (shared across copies, so a family member passed
/// around by value still aggregates).
class ControlPolicy {
public:
  using Fn = std::function<void(double, std::span<const double>, const EmpiricalMeasure&,
                                const PathView&, std::span<double>)>;

  ControlPolicy() = default;

  ControlPolicy(ControlKind kind, Box box, Fn fn, std::string label = {})
      : kind_(kind), box_(std::move(box)), fn_(std::move(fn)), label_(std::move(label)) {}

  static ControlPolicy constant(std::vector<double> u, Box box, std::string label = {}) {
    if (label.empty()) {
      label = "const(";
      for (std::size_t i = 0; i < u.size(); ++i)
        label += (i ? "," : "") + std::to_string(u[i]);
      label += ")";
    }
    auto vals = std::make_shared<std::vector<double>>(std::move(u));
    return ControlPolicy(
        ControlKind::open_loop_constant, std::move(box),
        [vals](double, std::span<const double>, const EmpiricalMeasure&, const PathView&,
               std::span<double> out) {
          for (std::size_t i = 0; i < out.size(); ++i) out[i] = (*vals)[i];
        },
        std::move(label));
  }

  static ControlPolicy feedback(Fn fn, Box box, std::string label = {}) {
    return ControlPolicy(ControlKind::feedback, std::move(box), std::move(fn), std::move(label));
  }

  /// Control of the restricted class that sees only (t, law, noise history) —
  /// the per-particle position never enters.
  static ControlPolicy measure_feedback(
      std::function<void(double, const EmpiricalMeasure&, const PathView&, std::span<double>)> fn,
      Box box, std::string label = {}) {
    return ControlPolicy(
        ControlKind::measure_feedback, std::move(box),
        [fn = std::move(fn)](double t, std::span<const double>, const EmpiricalMeasure& mu,
                             const PathView& pv, std::span<double> out) { fn(t, mu, pv, out); },
        std::move(label));
  }

  ControlKind kind() const { return kind_; }
  const Box& box() const { return box_; }
  const std::string& label() const { return label_; }
  bool valid() const { return static_cast<bool>(fn_); }

  void evaluate(double t, std::span<const double> x, const EmpiricalMeasure& mu,
                const PathView& pv, std::span<double> out) const {
    fn_(t, x, mu, pv, out);
    if (box_.clamp(out)) clamps_->fetch_add(1, std::memory_order_relaxed);
  }

  std::uint64_t clamp_count() const { return clamps_->load(std::memory_order_relaxed); }
  void reset_clamp_count() const { clamps_->store(0, std::memory_order_relaxed); }

private:
  ControlKind kind_ = ControlKind::open_loop_constant;
  Box box_;
  Fn fn_;
  std::string label_;
  std::shared_ptr<std::atomic<std::uint64_t>> clamps_ =
      std::make_shared<std::atomic<std::uint64_t>>(0);
};

}  // namespace qmt
