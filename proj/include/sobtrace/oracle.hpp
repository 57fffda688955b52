#pragma once

// Direct quadrature of the concentrating test functions
//   u_eps(y, t) = phi(|x|) [(t + eps)^2 + |y|^2]^{-(N-p)/(2(p-1))}
// over a curved model patch {t > rho(y)}, rho(y) = 1/2 sum l_i y_i^2 + cubic.
//
// Volume integrals use the graph substitution t = rho(y) + s and a
// coordinate-wise sinh stretch (y_i = eps sinh u_i, s = eps sinh v) that
// resolves the eps-scale peak at the origin. When every curvature is equal
// and there is no cubic part the integrands are radial in y and the
// integrals drop to (r, s) and r.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sobtrace/cubature.hpp"
#include "sobtrace/errors.hpp"
#include "sobtrace/extremal.hpp"
#include "sobtrace/gamma.hpp"

namespace sobtrace {

/// phi = 1 on [0, inner], 0 on [outer, inf), quintic smoothstep in between.
struct CutoffProfile {
  double inner = 0.25;
  double outer = 0.5;
  /// false: phi == 1 and the volume is the cylinder {|y| <= outer, 0 <= s <= outer}.
  bool enabled = true;

  double value(double radius) const {
    if (!enabled || radius <= inner) return 1.0;
    if (radius >= outer) return 0.0;
    const double tau = (radius - inner) / (outer - inner);
    // Clamp: rounding near tau = 1 can dip below zero.
    return std::clamp(1.0 - tau * tau * tau * (10.0 + tau * (-15.0 + 6.0 * tau)), 0.0, 1.0);
  }

  double derivative(double radius) const {
    if (!enabled || radius <= inner || radius >= outer) return 0.0;
    const double w = outer - inner;
    const double tau = (radius - inner) / w;
    const double om = 1.0 - tau;
    return -30.0 * tau * tau * om * om / w;
  }
};

/// Curved half-space patch {t > rho(y)} of radius r around the origin.
struct ModelDomain {
  int N = 3;
  double r = 1.0;
  std::vector<double> lambdas;  // N-1 curvatures
  std::vector<double> cubic;    // (N-1)^3 coefficients c_ijk, row-major; empty means 0
  CutoffProfile cutoff{0.25, 0.5, true};

  ModelDomain() = default;
  ModelDomain(int dim, std::vector<double> curvatures, double radius = 1.0)
      : N(dim), r(radius), lambdas(std::move(curvatures)),
        cutoff{radius / 4.0, radius / 2.0, true} {}

  void validate() const {
    if (N < 2 || N > 4) {
      throw DomainError("ModelDomain: oracle supports N in {2, 3, 4}, got " +
                        std::to_string(N));
    }
    const std::size_t n = static_cast<std::size_t>(N - 1);
    if (lambdas.size() != n) throw DomainError("ModelDomain: need N-1 curvatures");
    if (!cubic.empty() && cubic.size() != n * n * n) {
      throw DomainError("ModelDomain: cubic needs (N-1)^3 coefficients");
    }
    if (!(r > 0.0)) throw DomainError("ModelDomain: r must be > 0");
    if (!(cutoff.inner > 0.0) || !(cutoff.outer > cutoff.inner) || cutoff.outer > r) {
      throw DomainError("ModelDomain: need 0 < inner < outer <= r");
    }
  }

  bool has_cubic() const {
    for (double c : cubic)
      if (c != 0.0) return true;
    return false;
  }

  bool radially_symmetric() const {
    if (has_cubic()) return false;
    for (double l : lambdas)
      if (l != lambdas.front()) return false;
    return true;
  }

  double rho(std::span<const double> y) const {
    const std::size_t n = lambdas.size();
    double v = 0.0;
    for (std::size_t i = 0; i < n; ++i) v += 0.5 * lambdas[i] * y[i] * y[i];
    if (!cubic.empty()) {
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k)
            v += cubic[(i * n + j) * n + k] * y[i] * y[j] * y[k];
    }
    return v;
  }

  /// |grad rho(y)|^2.
  double grad_rho_sq(std::span<const double> y) const {
    const std::size_t n = lambdas.size();
    double total = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
      double g = lambdas[l] * y[l];
      if (!cubic.empty()) {
        for (std::size_t j = 0; j < n; ++j)
          for (std::size_t k = 0; k < n; ++k)
            g += (cubic[(l * n + j) * n + k] + cubic[(j * n + l) * n + k] +
                  cubic[(j * n + k) * n + l]) *
                 y[j] * y[k];
      }
      total += g * g;
    }
    return total;
  }

  /// Lower bound of rho on the box |y_i| <= outer.
  double rho_lower_bound() const {
    const double a = cutoff.outer;
    double bound = 0.0;
    for (double l : lambdas)
      if (l < 0.0) bound += 0.5 * l * a * a;
    for (double c : cubic) bound -= std::abs(c) * a * a * a;
    return bound;
  }
};

/// h(x) = h0 + g . (y, t); gradient may be empty.
struct Potential {
  double h0 = 0.0;
  std::vector<double> gradient;

  bool depends_on_y() const {
    for (std::size_t i = 0; i + 1 < gradient.size(); ++i)
      if (gradient[i] != 0.0) return true;
    return false;
  }
};

struct OracleOptions {
  double rel_tol = 1e-10;
  long max_cells = 500000;
  /// Use the full tensor integrator even when the radial reduction applies.
  bool force_tensor = false;
};

namespace detail {

struct ProfileConstants {
  double eps;
  double m;       // (N-p)/(2(p-1))
  double p;
  double pstar;
  double P;       // p(N-1)/(2(p-1))
};

inline ProfileConstants profile_constants(const ProblemParams& params, double eps) {
  return {eps, params.profile_exponent(), params.p(), params.critical_exponent(),
          params.boundary_power()};
}

/// |grad u|^p at a volume point given |y|^2 and t.
inline double gradient_density(const ProfileConstants& k, const CutoffProfile& cut,
                               double r2, double t) {
  const double te = t + k.eps;
  const double W = te * te + r2;
  const double V = std::pow(W, -k.m);
  double cy = -2.0 * k.m * V / W;  // coefficient of y
  double ct = cy * te;
  if (cut.enabled) {
    const double R = std::sqrt(r2 + t * t);
    const double phi = cut.value(R);
    const double dphi = cut.derivative(R);
    cy *= phi;
    ct *= phi;
    if (dphi != 0.0) {
      cy += V * dphi / R;
      ct += V * dphi * t / R;
    }
  }
  const double g2 = r2 * cy * cy + ct * ct;
  return std::pow(g2, 0.5 * k.p);
}

/// |u|^p at a volume point (without h).
inline double mass_density(const ProfileConstants& k, const CutoffProfile& cut,
                           double r2, double t) {
  const double te = t + k.eps;
  const double W = te * te + r2;
  const double phi = cut.value(std::sqrt(r2 + t * t));
  if (phi == 0.0) return 0.0;
  return std::pow(phi, k.p) * std::pow(W, -k.m * k.p);
}

/// |u|^{p_*} sqrt(1 + |grad rho|^2) at a boundary point.
inline double boundary_density(const ProfileConstants& k, const CutoffProfile& cut,
                               double r2, double rho, double grad_rho_sq) {
  const double phi = cut.value(std::sqrt(r2 + rho * rho));
  if (phi == 0.0) return 0.0;
  const double re = rho + k.eps;
  const double W = re * re + r2;
  return std::pow(phi, k.pstar) * std::pow(W, -k.P) * std::sqrt(1.0 + grad_rho_sq);
}

enum class VolumeTerm { kGradient, kMass };

struct StretchedRange {
  double eps;
  double y_max;  // asinh(outer / eps)
  double s_max;  // asinh(s_extent / eps)
};

inline StretchedRange stretched_range(const ModelDomain& dom, double eps) {
  const double outer = dom.cutoff.outer;
  const double s_extent =
      dom.cutoff.enabled ? outer - std::min(0.0, dom.rho_lower_bound()) : outer;
  return {eps, std::asinh(outer / eps), std::asinh(s_extent / eps)};
}

inline double potential_at(const Potential& h, std::span<const double> y, double t) {
  double v = h.h0;
  if (!h.gradient.empty()) {
    for (std::size_t i = 0; i < y.size(); ++i) v += h.gradient[i] * y[i];
    v += h.gradient.back() * t;
  }
  return v;
}

inline double volume_density(VolumeTerm term, const ProfileConstants& k,
                             const ModelDomain& dom, const Potential* h,
                             std::span<const double> y, double r2, double rho,
                             double s) {
  const double t = rho + s;
  if (!dom.cutoff.enabled && r2 > dom.cutoff.outer * dom.cutoff.outer) return 0.0;
  if (dom.cutoff.enabled && r2 + t * t >= dom.cutoff.outer * dom.cutoff.outer) return 0.0;
  if (term == VolumeTerm::kGradient) return gradient_density(k, dom.cutoff, r2, t);
  const double hv = potential_at(*h, y, t);
  if (hv == 0.0) return 0.0;
  return hv * mass_density(k, dom.cutoff, r2, t);
}

/// (r, s) integral with weight omega_{N-2} r^{N-2}; valid when the integrand is radial in y.
inline QuadratureResult reduced_volume(VolumeTerm term, const ModelDomain& dom,
                                       const ProblemParams& params, const Potential* h,
                                       double eps, const OracleOptions& opts) {
  const ProfileConstants k = profile_constants(params, eps);
  const StretchedRange range = stretched_range(dom, eps);
  const double kappa = dom.lambdas.front();
  const double omega = sphere_volume(dom.N - 1);
  const int rpow = dom.N - 2;
  auto f = [&](const Point<2>& x) {
    const double sh_u = std::sinh(x[0]);
    const double r = eps * sh_u;
    const double s = eps * std::sinh(x[1]);
    const double jac = eps * std::cosh(x[0]) * eps * std::cosh(x[1]);
    const double r2 = r * r;
    const double val = volume_density(term, k, dom, h, {}, r2, 0.5 * kappa * r2, s);
    if (val == 0.0) return 0.0;
    return omega * std::pow(r, rpow) * jac * val;
  };
  CubatureOptions co{opts.rel_tol, 0.0, opts.max_cells, 1};
  return adaptive_integrate<2>(f, {0.0, 0.0}, {range.y_max, range.s_max}, co);
}

template <std::size_t Dim>
QuadratureResult tensor_volume(VolumeTerm term, const ModelDomain& dom,
                               const ProblemParams& params, const Potential* h,
                               double eps, const OracleOptions& opts) {
  constexpr std::size_t n = Dim - 1;
  const ProfileConstants k = profile_constants(params, eps);
  const StretchedRange range = stretched_range(dom, eps);
  auto f = [&](const Point<Dim>& x) {
    std::array<double, n> y{};
    double jac = eps * std::cosh(x[n]);
    double r2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = eps * std::sinh(x[i]);
      jac *= eps * std::cosh(x[i]);
      r2 += y[i] * y[i];
    }
    const double s = eps * std::sinh(x[n]);
    const double val = volume_density(term, k, dom, h, y, r2, dom.rho(y), s);
    return val == 0.0 ? 0.0 : val * jac;
  };
  Point<Dim> lo{}, hi{};
  for (std::size_t i = 0; i < n; ++i) {
    lo[i] = -range.y_max;
    hi[i] = range.y_max;
  }
  lo[n] = 0.0;
  hi[n] = range.s_max;
  CubatureOptions co{opts.rel_tol, 0.0, opts.max_cells, 1};
  return adaptive_integrate<Dim>(f, lo, hi, co);
}

inline QuadratureResult volume_term(VolumeTerm term, const ModelDomain& dom,
                                    const ProblemParams& params, const Potential* h,
                                    double eps, const OracleOptions& opts) {
  dom.validate();
  if (params.N() != dom.N) throw DomainError("oracle: params.N differs from domain.N");
  if (!(eps > 0.0)) throw DomainError("oracle: epsilon must be > 0");
  const bool radial = dom.radially_symmetric() &&
                      (h == nullptr || !h->depends_on_y());
  if (radial && !opts.force_tensor) return reduced_volume(term, dom, params, h, eps, opts);
  switch (dom.N) {
    case 2: return tensor_volume<2>(term, dom, params, h, eps, opts);
    case 3: return tensor_volume<3>(term, dom, params, h, eps, opts);
    default: return tensor_volume<4>(term, dom, params, h, eps, opts);
  }
}

template <std::size_t Dim>
QuadratureResult tensor_boundary(const ModelDomain& dom, const ProblemParams& params,
                                 double eps, const OracleOptions& opts) {
  const ProfileConstants k = profile_constants(params, eps);
  const StretchedRange range = stretched_range(dom, eps);
  const double outer2 = dom.cutoff.outer * dom.cutoff.outer;
  auto f = [&](const Point<Dim>& x) {
    std::array<double, Dim> y{};
    double jac = 1.0;
    double r2 = 0.0;
    for (std::size_t i = 0; i < Dim; ++i) {
      y[i] = eps * std::sinh(x[i]);
      jac *= eps * std::cosh(x[i]);
      r2 += y[i] * y[i];
    }
    if (r2 >= outer2) return 0.0;
    return jac * boundary_density(k, dom.cutoff, r2, dom.rho(y), dom.grad_rho_sq(y));
  };
  Point<Dim> lo{}, hi{};
  for (std::size_t i = 0; i < Dim; ++i) {
    lo[i] = -range.y_max;
    hi[i] = range.y_max;
  }
  CubatureOptions co{opts.rel_tol, 0.0, opts.max_cells, 1};
  return adaptive_integrate<Dim>(f, lo, hi, co);
}

inline QuadratureResult reduced_boundary(const ModelDomain& dom,
                                         const ProblemParams& params, double eps,
                                         const OracleOptions& opts) {
  const ProfileConstants k = profile_constants(params, eps);
  const StretchedRange range = stretched_range(dom, eps);
  const double kappa = dom.lambdas.front();
  const double omega = sphere_volume(dom.N - 1);
  const int rpow = dom.N - 2;
  auto f = [&](const Point<1>& x) {
    const double r = eps * std::sinh(x[0]);
    const double r2 = r * r;
    const double val =
        boundary_density(k, dom.cutoff, r2, 0.5 * kappa * r2, kappa * kappa * r2);
    if (val == 0.0) return 0.0;
    return omega * std::pow(r, rpow) * eps * std::cosh(x[0]) * val;
  };
  CubatureOptions co{opts.rel_tol, 0.0, opts.max_cells, 1};
  return adaptive_integrate<1>(f, {0.0}, {range.y_max}, co);
}

}  // namespace detail

/// int |grad u_eps|^p over the model patch.
inline QuadratureResult integrate_gradient_term(const ModelDomain& domain,
                                                const ProblemParams& params,
                                                double epsilon,
                                                const OracleOptions& opts = {}) {
  return detail::volume_term(detail::VolumeTerm::kGradient, domain, params, nullptr,
                             epsilon, opts);
}

/// int h |u_eps|^p over the model patch.
inline QuadratureResult integrate_mass_term(const ModelDomain& domain,
                                            const ProblemParams& params,
                                            const Potential& h, double epsilon,
                                            const OracleOptions& opts = {}) {
  if (!h.gradient.empty() && h.gradient.size() != static_cast<std::size_t>(params.N())) {
    throw DomainError("integrate_mass_term: potential gradient needs N components");
  }
  const bool zero = h.h0 == 0.0 && !h.depends_on_y() &&
                    (h.gradient.empty() || h.gradient.back() == 0.0);
  if (zero) {
    domain.validate();
    return {0.0, 0.0, 0};
  }
  return detail::volume_term(detail::VolumeTerm::kMass, domain, params, &h, epsilon,
                             opts);
}

inline QuadratureResult integrate_mass_term(const ModelDomain& domain,
                                            const ProblemParams& params,
                                            double h_value, double epsilon,
                                            const OracleOptions& opts = {}) {
  return integrate_mass_term(domain, params, Potential{h_value, {}}, epsilon, opts);
}

/// int over |y| < outer of |u_eps|^{p_*} on the graph t = rho(y), with surface element.
inline QuadratureResult integrate_boundary_term(const ModelDomain& domain,
                                                const ProblemParams& params,
                                                double epsilon,
                                                const OracleOptions& opts = {}) {
  domain.validate();
  if (params.N() != domain.N) throw DomainError("oracle: params.N differs from domain.N");
  if (!(epsilon > 0.0)) throw DomainError("oracle: epsilon must be > 0");
  if (domain.radially_symmetric() && !opts.force_tensor) {
    return detail::reduced_boundary(domain, params, epsilon, opts);
  }
  switch (domain.N) {
    case 2: return detail::tensor_boundary<1>(domain, params, epsilon, opts);
    case 3: return detail::tensor_boundary<2>(domain, params, epsilon, opts);
    default: return detail::tensor_boundary<3>(domain, params, epsilon, opts);
  }
}

struct QuotientSample {
  double epsilon = 0.0;
  QuadratureResult gradient;
  QuadratureResult mass;
  QuadratureResult boundary;
  double quotient = 0.0;  // Q(u_eps) / K_p^{-1}
};

/// The three integrals and Q(u_eps) normalized by the sharp constant, so that
/// the flat, h = 0 model tends to 1.
inline QuotientSample evaluate_quotient(const ModelDomain& domain,
                                        const ProblemParams& params,
                                        const Potential& h, double epsilon,
                                        const OracleOptions& opts = {}) {
  QuotientSample out;
  out.epsilon = epsilon;
  out.gradient = integrate_gradient_term(domain, params, epsilon, opts);
  out.mass = integrate_mass_term(domain, params, h, epsilon, opts);
  out.boundary = integrate_boundary_term(domain, params, epsilon, opts);
  const double q = (out.gradient.value + out.mass.value) /
                   std::pow(out.boundary.value, params.p() / params.critical_exponent());
  out.quotient = q / kp_inverse(params);
  return out;
}

inline double rayleigh_quotient_numeric(const ModelDomain& domain,
                                        const ProblemParams& params, double h_value,
                                        double epsilon, const OracleOptions& opts = {}) {
  return evaluate_quotient(domain, params, Potential{h_value, {}}, epsilon, opts).quotient;
}

/// Log-spaced grid from lo to hi (both included), per_decade points per decade.
inline std::vector<double> epsilon_grid(double lo = 1e-3, double hi = 1e-2,
                                        int per_decade = 8) {
  if (!(lo > 0.0) || !(hi > lo) || per_decade < 1) {
    throw DomainError("epsilon_grid: need 0 < lo < hi and per_decade >= 1");
  }
  const double decades = std::log10(hi / lo);
  const int steps = std::max(1, static_cast<int>(std::lround(decades * per_decade)));
  std::vector<double> grid(static_cast<std::size_t>(steps) + 1);
  for (int i = 0; i <= steps; ++i) {
    grid[static_cast<std::size_t>(i)] =
        lo * std::pow(10.0, decades * static_cast<double>(i) / steps);
  }
  grid.back() = hi;
  return grid;
}

/// Half-space quadrature of an extremal norm: integral over a box of half-width R
/// plus an analytic bound on what lies outside.
struct TruncatedIntegral {
  QuadratureResult quadrature;
  double radius = 0.0;
  double tail_bound = 0.0;
  double value() const { return quadrature.value; }
  double error_estimate() const { return quadrature.error_estimate + tail_bound; }
};

namespace detail {

template <std::size_t Dim, class F>
QuadratureResult stretched_box(F&& density, double R, bool last_half,
                               const CubatureOptions& co) {
  const double U = std::asinh(R);
  auto f = [&](const Point<Dim>& x) {
    Point<Dim> z{};
    double jac = 1.0;
    for (std::size_t i = 0; i < Dim; ++i) {
      z[i] = std::sinh(x[i]);
      jac *= std::cosh(x[i]);
    }
    return jac * density(z);
  };
  Point<Dim> lo{}, hi{};
  for (std::size_t i = 0; i < Dim; ++i) {
    lo[i] = -U;
    hi[i] = U;
  }
  if (last_half) lo[Dim - 1] = 0.0;
  return adaptive_integrate<Dim>(f, lo, hi, co);
}

template <std::size_t Dim>
TruncatedIntegral extremal_boundary_impl(const ProblemParams& params, double rel_tol,
                                         long max_cells) {
  const double P = params.boundary_power();
  auto density = [P](const Point<Dim>& y) {
    double r2 = 0.0;
    for (double v : y) r2 += v * v;
    return std::pow(1.0 + r2, -P);
  };
  const int n = params.N() - 1;
  // Outside the ball of radius R: (1+r^2)^{-P} <= r^{-2P}.
  const double expo = 2.0 * P - n;
  const double coef = sphere_volume(n) / expo;
  CubatureOptions coarse{1e-4, 0.0, max_cells, 1};
  const double lower = stretched_box<Dim>(density, 1.0, false, coarse).value;
  const double R = std::max(1.0, std::pow(coef / (1e-8 * lower), 1.0 / expo));
  TruncatedIntegral out;
  out.radius = R;
  out.tail_bound = coef * std::pow(R, -expo);
  out.quadrature =
      stretched_box<Dim>(density, R, false, CubatureOptions{rel_tol, 0.0, max_cells, 1});
  return out;
}

// The integrand depends on (|y|, t) only; integrate in polar coordinates of that
// quarter plane, with rho = e^u on [1, R] so the slow r^{-a} decay is cheap.
inline TruncatedIntegral extremal_gradient_impl(const ProblemParams& params, double rel_tol,
                                                long max_cells) {
  const int N = params.N();
  const double P = params.boundary_power();
  const double a = params.scaling_exponent();  // 2P - N
  const double cp = std::pow(a, params.p());
  const double shell = sphere_volume(N - 1);
  const double half_pi = 0.5 * std::numbers::pi;
  // |grad U|^p = c^p [(t+1)^2 + |y|^2]^{-P}, times the |S^{N-2}| r^{N-2} rho measure.
  auto polar = [=](double rho, double theta) {
    const double r = rho * std::cos(theta), t = rho * std::sin(theta);
    const double w = (t + 1.0) * (t + 1.0) + r * r;
    return shell * cp * std::pow(r, N - 2) * std::pow(w, -P) * rho;
  };
  auto inner = [&](const Point<2>& x) { return polar(x[0], x[1]); };
  auto outer = [&](const Point<2>& x) {
    const double rho = std::exp(x[0]);
    return polar(rho, x[1]) * rho;
  };
  // Beyond rho = R: W >= rho^2 over the half ball.
  const double coef = cp * 0.5 * sphere_volume(N) / a;
  const CubatureOptions co{rel_tol, 0.0, max_cells, 1};
  const QuadratureResult near = adaptive_integrate<2>(inner, {0.0, 0.0}, {1.0, half_pi}, co);
  const double R = std::max(1.0, std::pow(coef / (1e-12 * near.value), 1.0 / a));
  const QuadratureResult far =
      adaptive_integrate<2>(outer, {0.0, 0.0}, {std::log(R), half_pi}, co);
  TruncatedIntegral out;
  out.radius = R;
  out.tail_bound = coef * std::pow(R, -a);
  out.quadrature.value = near.value + far.value;
  out.quadrature.error_estimate = near.error_estimate + far.error_estimate;
  out.quadrature.cells = near.cells + far.cells;
  return out;
}

}  // namespace detail

/// Quadrature of int_{R^{N-1}} U(y,0)^{p_*} dy, N <= 4.
inline TruncatedIntegral extremal_boundary_norm_numeric(const ProblemParams& params,
                                                        double rel_tol = 1e-9,
                                                        long max_cells = 500000) {
  switch (params.N()) {
    case 2: return detail::extremal_boundary_impl<1>(params, rel_tol, max_cells);
    case 3: return detail::extremal_boundary_impl<2>(params, rel_tol, max_cells);
    case 4: return detail::extremal_boundary_impl<3>(params, rel_tol, max_cells);
    default: throw DomainError("extremal_boundary_norm_numeric: N must be <= 4");
  }
}

/// Quadrature of int_{R^N_+} |grad U|^p, N <= 4.
inline TruncatedIntegral extremal_gradient_norm_numeric(const ProblemParams& params,
                                                        double rel_tol = 1e-9,
                                                        long max_cells = 500000) {
  switch (params.N()) {
    case 2:
    case 3:
    case 4: return detail::extremal_gradient_impl(params, rel_tol, max_cells);
    default: throw DomainError("extremal_gradient_norm_numeric: N must be <= 4");
  }
}

}  // namespace sobtrace
