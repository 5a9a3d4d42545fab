#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "qmt/errors.hpp"
#include "qmt/math.hpp"

namespace qmt {

/// Equal-weight point cloud on R^d: the computable stand-in for a conditional
/// law with finite second moment. Immutable after construction and safe to
/// share between threads; copies are cheap enough for finite-difference
/// probing.
class EmpiricalMeasure {
public:
  EmpiricalMeasure(int dim, std::vector<double> flat, bool validate = true)
      : dim_(dim), xs_(std::move(flat)), cache_(std::make_unique<Cache>()) {
    if (validate) check();
  }

  static EmpiricalMeasure from_points(const std::vector<std::vector<double>>& pts) {
    if (pts.empty()) throw invalid_input("EmpiricalMeasure: need at least one point");
    const int d = static_cast<int>(pts.front().size());
    std::vector<double> flat;
    flat.reserve(pts.size() * static_cast<std::size_t>(d));
    for (const auto& p : pts) {
      if (static_cast<int>(p.size()) != d)
        throw invalid_input("EmpiricalMeasure: ragged point list");
      flat.insert(flat.end(), p.begin(), p.end());
    }
    return EmpiricalMeasure(d, std::move(flat));
  }

  static EmpiricalMeasure dirac(std::vector<double> x) {
    const int d = static_cast<int>(x.size());
    return EmpiricalMeasure(d, std::move(x));
  }

  EmpiricalMeasure(const EmpiricalMeasure& o)
      : dim_(o.dim_), xs_(o.xs_), cache_(std::make_unique<Cache>()) {}
  EmpiricalMeasure& operator=(const EmpiricalMeasure& o) {
    if (this != &o) {
      dim_ = o.dim_;
      xs_ = o.xs_;
      cache_ = std::make_unique<Cache>();
    }
    return *this;
  }
  EmpiricalMeasure(EmpiricalMeasure&&) noexcept = default;
  EmpiricalMeasure& operator=(EmpiricalMeasure&&) noexcept = default;

  int dim() const { return dim_; }
  std::size_t size() const { return xs_.size() / static_cast<std::size_t>(dim_); }

  std::span<const double> point(std::size_t i) const {
    return {xs_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  std::span<const double> flat() const { return xs_; }

  /// Arithmetic mean of the points; computed once with a permutation-invariant
  /// reduction and cached.
  std::span<const double> mean() const {
    std::call_once(cache_->flag, [this] {
      const std::size_t n = size();
      const auto d = static_cast<std::size_t>(dim_);
      cache_->mean.resize(d);
      std::vector<double> col(n);
      for (std::size_t c = 0; c < d; ++c) {
        for (std::size_t i = 0; i < n; ++i) col[i] = xs_[i * d + c];
        cache_->mean[c] = det_mean(col);
      }
    });
    return cache_->mean;
  }

  /// (1/N) sum |x_i|^2.
  double second_moment() const {
    const std::size_t n = size();
    std::vector<double> terms(n);
    for (std::size_t i = 0; i < n; ++i) terms[i] = dot(point(i), point(i));
    return det_mean(std::move(terms));
  }

  /// Equal-weight quadrature (1/N) sum f(x_i) for a pointwise f: R^d -> R^k.
  std::vector<double> integrate(
      std::size_t out_dim,
      const std::function<void(std::span<const double>, std::span<double>)>& f) const {
    const std::size_t n = size();
    std::vector<double> vals(n * out_dim);
    std::vector<double> buf(out_dim);
    for (std::size_t i = 0; i < n; ++i) {
      f(point(i), buf);
      for (std::size_t c = 0; c < out_dim; ++c) vals[i * out_dim + c] = buf[c];
    }
    if (!all_finite(vals))
      throw numeric_error("integrate: integrand produced a non-finite value");
    std::vector<double> out(out_dim);
    std::vector<double> col(n);
    for (std::size_t c = 0; c < out_dim; ++c) {
      for (std::size_t i = 0; i < n; ++i) col[i] = vals[i * out_dim + c];
      out[c] = det_mean(col);
    }
    return out;
  }

  EmpiricalMeasure translated(std::span<const double> shift) const {
    std::vector<double> ys(xs_);
    const auto d = static_cast<std::size_t>(dim_);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += shift[i % d];
    return EmpiricalMeasure(dim_, std::move(ys), false);
  }

  EmpiricalMeasure scaled(double s) const {
    std::vector<double> ys(xs_);
    for (double& y : ys) y *= s;
    return EmpiricalMeasure(dim_, std::move(ys), false);
  }

  /// Projection onto the first k coordinates.
  EmpiricalMeasure marginal(int first_k) const {
    if (first_k < 1 || first_k > dim_) throw invalid_input("marginal: bad coordinate count");
    const std::size_t n = size();
    const auto d = static_cast<std::size_t>(dim_);
    const auto k = static_cast<std::size_t>(first_k);
    std::vector<double> ys(n * k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) ys[i * k + c] = xs_[i * d + c];
    return EmpiricalMeasure(first_k, std::move(ys), false);
  }

  /// Copy with point i replaced (finite-difference helper).
  EmpiricalMeasure with_point(std::size_t i, std::span<const double> x) const {
    std::vector<double> ys(xs_);
    const auto d = static_cast<std::size_t>(dim_);
    for (std::size_t c = 0; c < d; ++c) ys[i * d + c] = x[c];
    return EmpiricalMeasure(dim_, std::move(ys), false);
  }

  /// Copy with all points displaced by a per-particle field y (N*d values).
  EmpiricalMeasure displaced(std::span<const double> y, double scale) const {
    std::vector<double> ys(xs_);
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] += scale * y[i];
    return EmpiricalMeasure(dim_, std::move(ys), false);
  }

private:
  struct Cache {
    std::once_flag flag;
    std::vector<double> mean;
  };

  void check() const {
    if (dim_ < 1) throw invalid_input("EmpiricalMeasure: dimension must be positive");
    if (xs_.empty() || xs_.size() % static_cast<std::size_t>(dim_) != 0)
      throw invalid_input("EmpiricalMeasure: point buffer size is not a multiple of d");
    if (!all_finite(xs_)) throw invalid_input("EmpiricalMeasure: non-finite coordinate");
  }

  int dim_;
  std::vector<double> xs_;
  mutable std::unique_ptr<Cache> cache_;
};

}  // namespace qmt
