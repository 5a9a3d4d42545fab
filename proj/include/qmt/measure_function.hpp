#pragma once

#include <functional>
#include <string>

#include "qmt/measure.hpp"

namespace qmt {

/// Scalar function w(t, mu) with optional analytic measure derivatives:
///   d_mu(t, mu, x)        in R^d
///   dx_d_mu(t, mu, x)     in R^{d x d}
///   d2_mu(t, mu, x, x')   in R^{d x d}, rows indexing x and columns x', with
///                         the symmetry d2(x, x') = d2(x', x)^T.
/// d2_mu acts as a bilinear form: the pairing of per-particle blocks A_i is
/// A_i^T d2(x_i, x_j) A_j, which is what every quadrature below contracts.
struct MeasureFunction {
  std::function<double(double, const EmpiricalMeasure&)> eval;
  std::function<double(double, const EmpiricalMeasure&)> d_t;
  std::function<void(double, const EmpiricalMeasure&, std::span<const double>, std::span<double>)>
      d_mu;
  std::function<void(double, const EmpiricalMeasure&, std::span<const double>, std::span<double>)>
      dx_d_mu;
  std::function<void(double, const EmpiricalMeasure&, std::span<const double>,
                     std::span<const double>, std::span<double>)>
      d2_mu;
  bool smooth = false;  ///< asserts the regularity the chain rule requires
  std::string label;

  /// Derivative closures bound to one (t, mu); cylindrical functions cache
  /// their inner moments here so repeated per-particle queries are cheap.
  /// A Prepared object must not outlive the measure it was built from.
  struct Prepared {
    double dt_value = 0.0;
    std::function<void(std::size_t, std::span<double>)> d_mu_at;
    std::function<void(std::size_t, std::span<double>)> dx_d_mu_at;
    std::function<void(std::size_t, std::size_t, std::span<double>)> d2_mu_at;
    /// (1/N^2) sum_ij Tr(A_i^T d2(x_i, x_j) A_j) for per-particle d x c blocks.
    std::function<double(std::span<const double>, std::size_t)> d2_bilinear;
  };

  std::function<Prepared(double, const EmpiricalMeasure&)> prepare_hook;

  bool has_derivatives() const {
    return static_cast<bool>(prepare_hook) || (d_t && d_mu && dx_d_mu && d2_mu);
  }

  Prepared prepare(double t, const EmpiricalMeasure& mu) const {
    if (prepare_hook) return prepare_hook(t, mu);
    if (!(d_t && d_mu && dx_d_mu && d2_mu))
      throw invalid_input("MeasureFunction: analytic derivatives are not available");
    Prepared p;
    p.dt_value = d_t(t, mu);
    p.d_mu_at = [this, t, &mu](std::size_t i, std::span<double> out) {
      d_mu(t, mu, mu.point(i), out);
    };
    p.dx_d_mu_at = [this, t, &mu](std::size_t i, std::span<double> out) {
      dx_d_mu(t, mu, mu.point(i), out);
    };
    p.d2_mu_at = [this, t, &mu](std::size_t i, std::size_t j, std::span<double> out) {
      d2_mu(t, mu, mu.point(i), mu.point(j), out);
    };
    p.d2_bilinear = [this, t, &mu](std::span<const double> blocks, std::size_t c) {
      const auto d = static_cast<std::size_t>(mu.dim());
      const std::size_t n = mu.size();
      std::vector<double> m(d * d), terms(n * n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::span<const double> ai{blocks.data() + i * d * c, d * c};
        for (std::size_t j = 0; j < n; ++j) {
          const std::span<const double> aj{blocks.data() + j * d * c, d * c};
          d2_mu(t, mu, mu.point(i), mu.point(j), m);
          // Tr(A_i^T M A_j) over the c columns.
          double acc = 0.0;
          for (std::size_t g = 0; g < c; ++g)
            for (std::size_t r = 0; r < d; ++r) {
              double mv = 0.0;
              for (std::size_t s2 = 0; s2 < d; ++s2) mv += m[r * d + s2] * aj[s2 * c + g];
              acc += ai[r * c + g] * mv;
            }
          terms[i * n + j] = acc;
        }
      }
      const auto nn = static_cast<double>(n);
      return det_sum(std::move(terms)) / (nn * nn);
    };
    return p;
  }
};

/// w(t, mu) = phi(t, <f, mu>) for smooth outer phi: R x R^m -> R and base
/// functions f: R^d -> R^m. Lions derivatives in closed form:
///   d_mu(x)      = Gf(x) grad_phi            with Gf(x) = Jf(x)^T in R^{d x m}
///   dx_d_mu(x)   = sum_p (grad_phi)_p Hess f_p(x)
///   d2_mu(x, x') = Gf(x) Hess_phi Gf(x')^T
struct CylindricalFunction {
  int dim = 1;     // d
  int n_base = 1;  // m
  std::function<void(std::span<const double>, std::span<double>)> f;       // values, m
  std::function<void(std::span<const double>, std::span<double>)> f_jac;   // row-major m x d
  std::function<void(std::span<const double>, std::span<double>)> f_hess;  // m blocks of d x d
  std::function<double(double, std::span<const double>)> phi;
  std::function<void(double, std::span<const double>, std::span<double>)> phi_grad;  // m
  std::function<void(double, std::span<const double>, std::span<double>)> phi_hess;  // m x m
  std::function<double(double, std::span<const double>)> phi_dt;  // omitted -> 0
  std::string label;

  MeasureFunction build() const;
};

namespace detail {

struct CylPrepared {
  std::vector<double> moments;  // m
  std::vector<double> grad;     // m
  std::vector<double> hess;     // m x m
  double dt = 0.0;
};

inline CylPrepared cyl_prepare(const CylindricalFunction& c, double t,
                               const EmpiricalMeasure& mu) {
  CylPrepared p;
  const auto m = static_cast<std::size_t>(c.n_base);
  p.moments = mu.integrate(m, c.f);
  p.grad.resize(m);
  p.hess.resize(m * m);
  c.phi_grad(t, p.moments, p.grad);
  c.phi_hess(t, p.moments, p.hess);
  p.dt = c.phi_dt ? c.phi_dt(t, p.moments) : 0.0;
  return p;
}

}  // namespace detail

inline MeasureFunction CylindricalFunction::build() const {
  const CylindricalFunction c = *this;
  const auto d = static_cast<std::size_t>(c.dim);
  const auto m = static_cast<std::size_t>(c.n_base);

  MeasureFunction w;
  w.smooth = true;
  w.label = label.empty() ? "cylindrical" : label;

  w.eval = [c, m](double t, const EmpiricalMeasure& mu) {
    return c.phi(t, mu.integrate(m, c.f));
  };
  w.d_t = [c, m](double t, const EmpiricalMeasure& mu) {
    return c.phi_dt ? c.phi_dt(t, mu.integrate(m, c.f)) : 0.0;
  };
  w.d_mu = [c, d, m](double t, const EmpiricalMeasure& mu, std::span<const double> x,
                     std::span<double> out) {
    const auto p = detail::cyl_prepare(c, t, mu);
    std::vector<double> jac(m * d);
    c.f_jac(x, jac);
    mat_t_vec(jac, m, d, p.grad, out);  // Jf(x)^T grad_phi
  };
  w.dx_d_mu = [c, d, m](double t, const EmpiricalMeasure& mu, std::span<const double> x,
                        std::span<double> out) {
    const auto p = detail::cyl_prepare(c, t, mu);
    std::vector<double> hess(m * d * d);
    c.f_hess(x, hess);
    for (std::size_t e = 0; e < d * d; ++e) {
      double s = 0.0;
      for (std::size_t pb = 0; pb < m; ++pb) s += p.grad[pb] * hess[pb * d * d + e];
      out[e] = s;
    }
  };
  w.d2_mu = [c, d, m](double t, const EmpiricalMeasure& mu, std::span<const double> x,
                      std::span<const double> xp, std::span<double> out) {
    const auto p = detail::cyl_prepare(c, t, mu);
    std::vector<double> jx(m * d), jxp(m * d);
    c.f_jac(x, jx);
    c.f_jac(xp, jxp);
    // Jf(x)^T Hess_phi Jf(x').
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t s2 = 0; s2 < d; ++s2) {
        double acc = 0.0;
        for (std::size_t pb = 0; pb < m; ++pb)
          for (std::size_t qb = 0; qb < m; ++qb)
            acc += jx[pb * d + r] * p.hess[pb * m + qb] * jxp[qb * d + s2];
        out[r * d + s2] = acc;
      }
  };

  w.prepare_hook = [c, d, m](double t, const EmpiricalMeasure& mu) {
    auto shared = std::make_shared<detail::CylPrepared>(detail::cyl_prepare(c, t, mu));
    MeasureFunction::Prepared p;
    p.dt_value = shared->dt;
    p.d_mu_at = [c, d, m, shared, &mu](std::size_t i, std::span<double> out) {
      std::vector<double> jac(m * d);
      c.f_jac(mu.point(i), jac);
      mat_t_vec(jac, m, d, shared->grad, out);
    };
    p.dx_d_mu_at = [c, d, m, shared, &mu](std::size_t i, std::span<double> out) {
      std::vector<double> hess(m * d * d);
      c.f_hess(mu.point(i), hess);
      for (std::size_t e = 0; e < d * d; ++e) {
        double s = 0.0;
        for (std::size_t pb = 0; pb < m; ++pb) s += shared->grad[pb] * hess[pb * d * d + e];
        out[e] = s;
      }
    };
    p.d2_mu_at = [c, d, m, shared, &mu](std::size_t i, std::size_t j, std::span<double> out) {
      std::vector<double> jx(m * d), jxp(m * d);
      c.f_jac(mu.point(i), jx);
      c.f_jac(mu.point(j), jxp);
      for (std::size_t r = 0; r < d; ++r)
        for (std::size_t s2 = 0; s2 < d; ++s2) {
          double acc = 0.0;
          for (std::size_t pb = 0; pb < m; ++pb)
            for (std::size_t qb = 0; qb < m; ++qb)
              acc += jx[pb * d + r] * shared->hess[pb * m + qb] * jxp[qb * d + s2];
          out[r * d + s2] = acc;
        }
    };
    // (1/N^2) sum_ij Tr(A_i^T Gf(x_i) H Gf(x_j)^T A_j) factors through
    // Bbar = (1/N) sum_i Jf(x_i) A_i, giving Tr(Bbar^T H Bbar).
    p.d2_bilinear = [c, d, m, shared, &mu](std::span<const double> blocks, std::size_t cc) {
      const std::size_t n = mu.size();
      std::vector<double> bbar(m * cc, 0.0);
      std::vector<double> jac(m * d);
      std::vector<double> col(n);
      std::vector<double> contrib(n * m * cc);
      for (std::size_t i = 0; i < n; ++i) {
        c.f_jac(mu.point(i), jac);
        const std::span<const double> ai{blocks.data() + i * d * cc, d * cc};
        for (std::size_t pb = 0; pb < m; ++pb)
          for (std::size_t g = 0; g < cc; ++g) {
            double s = 0.0;
            for (std::size_t r = 0; r < d; ++r) s += jac[pb * d + r] * ai[r * cc + g];
            contrib[i * m * cc + pb * cc + g] = s;
          }
      }
      for (std::size_t e = 0; e < m * cc; ++e) {
        for (std::size_t i = 0; i < n; ++i) col[i] = contrib[i * m * cc + e];
        bbar[e] = det_mean(col);
      }
      double acc = 0.0;
      for (std::size_t pb = 0; pb < m; ++pb)
        for (std::size_t qb = 0; qb < m; ++qb) {
          double colsum = 0.0;
          for (std::size_t g = 0; g < cc; ++g) colsum += bbar[pb * cc + g] * bbar[qb * cc + g];
          acc += shared->hess[pb * m + qb] * colsum;
        }
      return acc;
    };
    return p;
  };

  return w;
}

// ---------------------------------------------------------------------------
// Common cylindrical constructors

/// w(t, mu) = <c, mean(mu)>.
inline MeasureFunction linear_moment_function(std::vector<double> c) {
  CylindricalFunction cf;
  cf.dim = static_cast<int>(c.size());
  cf.n_base = 1;
  const auto d = c.size();
  auto cs = std::make_shared<std::vector<double>>(std::move(c));
  cf.f = [cs](std::span<const double> x, std::span<double> out) { out[0] = dot(*cs, x); };
  cf.f_jac = [cs, d](std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = (*cs)[i];
  };
  cf.f_hess = [d](std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i < d * d; ++i) out[i] = 0.0;
  };
  cf.phi = [](double, std::span<const double> mo) { return mo[0]; };
  cf.phi_grad = [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; };
  cf.phi_hess = [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; };
  cf.label = "linear-moment";
  return cf.build();
}

/// Smooth nondecreasing switch: 0 on (-inf, -eps], 1 on [0, inf), quintic
/// (C^2) in between.
struct SmoothSwitch {
  double eps = 0.05;

  double value(double z) const {
    const double s = (z + eps) / eps;
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
  }
  double d1(double z) const {
    const double s = (z + eps) / eps;
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 30.0 * s * s * (s - 1.0) * (s - 1.0) / eps;
  }
  double d2(double z) const {
    const double s = (z + eps) / eps;
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 60.0 * s * (s - 1.0) * (2.0 * s - 1.0) / (eps * eps);
  }
};

/// Built-in cylindrical test family used by the derivative and chain-rule
/// diagnostics. Entry 0 is the linear moment, entry 1 its square; the rest mix
/// curvature in x, curvature in the measure, and a genuinely coupled pair of
/// base functions.
inline std::vector<MeasureFunction> standard_cylindrical_family(int dim) {
  const auto d = static_cast<std::size_t>(dim);
  std::vector<double> ones(d, 1.0);
  std::vector<double> k(d);
  for (std::size_t i = 0; i < d; ++i) k[i] = 1.0 + 0.5 * double(i);

  auto linear_f = [d](std::shared_ptr<std::vector<double>> c) {
    CylindricalFunction cf;
    cf.dim = static_cast<int>(d);
    cf.n_base = 1;
    cf.f = [c](std::span<const double> x, std::span<double> o) { o[0] = dot(*c, x); };
    cf.f_jac = [c, d](std::span<const double>, std::span<double> o) {
      for (std::size_t i = 0; i < d; ++i) o[i] = (*c)[i];
    };
    cf.f_hess = [d](std::span<const double>, std::span<double> o) {
      for (std::size_t i = 0; i < d * d; ++i) o[i] = 0.0;
    };
    return cf;
  };
  auto cs = std::make_shared<std::vector<double>>(ones);
  auto ks = std::make_shared<std::vector<double>>(k);

  std::vector<MeasureFunction> out;

  {
    CylindricalFunction cf = linear_f(cs);
    cf.phi = [](double, std::span<const double> m) { return m[0]; };
    cf.phi_grad = [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; };
    cf.phi_hess = [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; };
    cf.label = "linear-mean";
    out.push_back(cf.build());
  }
  {
    CylindricalFunction cf = linear_f(cs);
    cf.phi = [](double, std::span<const double> m) { return m[0] * m[0]; };
    cf.phi_grad = [](double, std::span<const double> m, std::span<double> g) { g[0] = 2.0 * m[0]; };
    cf.phi_hess = [](double, std::span<const double>, std::span<double> h) { h[0] = 2.0; };
    cf.label = "mean-square";
    out.push_back(cf.build());
  }
  {
    CylindricalFunction cf;
    cf.dim = dim;
    cf.n_base = 1;
    cf.f = [](std::span<const double> x, std::span<double> o) { o[0] = dot(x, x); };
    cf.f_jac = [d](std::span<const double> x, std::span<double> o) {
      for (std::size_t i = 0; i < d; ++i) o[i] = 2.0 * x[i];
    };
    cf.f_hess = [d](std::span<const double>, std::span<double> o) {
      for (std::size_t i = 0; i < d * d; ++i) o[i] = 0.0;
      for (std::size_t i = 0; i < d; ++i) o[i * d + i] = 2.0;
    };
    cf.phi = [](double, std::span<const double> m) { return m[0]; };
    cf.phi_grad = [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; };
    cf.phi_hess = [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; };
    cf.label = "second-moment";
    out.push_back(cf.build());
  }
  auto cos_f = [d, ks] {
    CylindricalFunction cf;
    cf.dim = static_cast<int>(d);
    cf.n_base = 1;
    cf.f = [ks](std::span<const double> x, std::span<double> o) { o[0] = std::cos(dot(*ks, x)); };
    cf.f_jac = [ks, d](std::span<const double> x, std::span<double> o) {
      const double s = -std::sin(dot(*ks, x));
      for (std::size_t i = 0; i < d; ++i) o[i] = s * (*ks)[i];
    };
    cf.f_hess = [ks, d](std::span<const double> x, std::span<double> o) {
      const double cc = -std::cos(dot(*ks, x));
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) o[i * d + j] = cc * (*ks)[i] * (*ks)[j];
    };
    return cf;
  };
  {
    CylindricalFunction cf = cos_f();
    cf.phi = [](double, std::span<const double> m) { return m[0]; };
    cf.phi_grad = [](double, std::span<const double>, std::span<double> g) { g[0] = 1.0; };
    cf.phi_hess = [](double, std::span<const double>, std::span<double> h) { h[0] = 0.0; };
    cf.label = "cos-moment";
    out.push_back(cf.build());
  }
  {
    // Coupled pair: phi(m1, m2) = m1 m2 with f1 linear and f2 oscillatory.
    CylindricalFunction lin = linear_f(cs);
    CylindricalFunction cos_part = cos_f();
    CylindricalFunction cf;
    cf.dim = dim;
    cf.n_base = 2;
    cf.f = [lin, cos_part](std::span<const double> x, std::span<double> o) {
      lin.f(x, o.subspan(0, 1));
      cos_part.f(x, o.subspan(1, 1));
    };
    cf.f_jac = [lin, cos_part, d](std::span<const double> x, std::span<double> o) {
      lin.f_jac(x, o.subspan(0, d));
      cos_part.f_jac(x, o.subspan(d, d));
    };
    cf.f_hess = [lin, cos_part, d](std::span<const double> x, std::span<double> o) {
      lin.f_hess(x, o.subspan(0, d * d));
      cos_part.f_hess(x, o.subspan(d * d, d * d));
    };
    cf.phi = [](double, std::span<const double> m) { return m[0] * m[1]; };
    cf.phi_grad = [](double, std::span<const double> m, std::span<double> g) {
      g[0] = m[1];
      g[1] = m[0];
    };
    cf.phi_hess = [](double, std::span<const double>, std::span<double> h) {
      h[0] = 0.0;
      h[1] = 1.0;
      h[2] = 1.0;
      h[3] = 0.0;
    };
    cf.label = "mean-times-cos";
    out.push_back(cf.build());
  }
  {
    // Time-weighted exponential of the mean.
    CylindricalFunction cf = linear_f(cs);
    cf.phi = [](double t, std::span<const double> m) { return (1.0 + 0.5 * t) * std::exp(0.5 * m[0]); };
    cf.phi_grad = [](double t, std::span<const double> m, std::span<double> g) {
      g[0] = 0.5 * (1.0 + 0.5 * t) * std::exp(0.5 * m[0]);
    };
    cf.phi_hess = [](double t, std::span<const double> m, std::span<double> h) {
      h[0] = 0.25 * (1.0 + 0.5 * t) * std::exp(0.5 * m[0]);
    };
    cf.phi_dt = [](double, std::span<const double> m) { return 0.5 * std::exp(0.5 * m[0]); };
    cf.label = "exp-mean-timed";
    out.push_back(cf.build());
  }
  return out;
}

/// Barrier for half-space-in-mean targets {mu : c . mean(mu) >= kappa}:
///   w(t, mu) = S(kappa - c . mean(mu) - rate (T - t))
/// with S the smooth switch above. Nonpositive exactly on the set of measures
/// whose mean reaches the target when pushed at `rate` until T, with an eps
/// safety band.
inline MeasureFunction half_space_barrier(std::vector<double> c, double kappa, double horizon_T,
                                          double rate, double eps) {
  CylindricalFunction cf;
  cf.dim = static_cast<int>(c.size());
  cf.n_base = 1;
  const auto d = c.size();
  auto cs = std::make_shared<std::vector<double>>(std::move(c));
  const SmoothSwitch sw{eps};
  cf.f = [cs](std::span<const double> x, std::span<double> out) { out[0] = dot(*cs, x); };
  cf.f_jac = [cs, d](std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i < d; ++i) out[i] = (*cs)[i];
  };
  cf.f_hess = [d](std::span<const double>, std::span<double> out) {
    for (std::size_t i = 0; i < d * d; ++i) out[i] = 0.0;
  };
  auto z_of = [kappa, horizon_T, rate](double t, double mo) {
    return kappa - mo - rate * (horizon_T - t);
  };
  cf.phi = [sw, z_of](double t, std::span<const double> mo) { return sw.value(z_of(t, mo[0])); };
  cf.phi_grad = [sw, z_of](double t, std::span<const double> mo, std::span<double> g) {
    g[0] = -sw.d1(z_of(t, mo[0]));
  };
  cf.phi_hess = [sw, z_of](double t, std::span<const double> mo, std::span<double> h) {
    h[0] = sw.d2(z_of(t, mo[0]));
  };
  cf.phi_dt = [sw, z_of, rate](double t, std::span<const double> mo) {
    return sw.d1(z_of(t, mo[0])) * rate;
  };
  cf.label = "half-space-barrier";
  return cf.build();
}

}  // namespace qmt
