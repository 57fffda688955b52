#pragma once

// The half-space trace extremal U(y, t) = [(t+1)^2 + |y|^2]^{-(N-p)/(2(p-1))},
// its rescalings, closed-form norms and the sharp trace constant.

#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "sobtrace/errors.hpp"
#include "sobtrace/gamma.hpp"

namespace sobtrace {

/// Space dimension N and exponent p with 1 < p < N.
class ProblemParams {
 public:
  ProblemParams(int N, double p) : N_(N), p_(p) {
    if (N < 2) {
      throw DomainError("ProblemParams: N must be >= 2, got " +
                        std::to_string(N));
    }
    if (!(p > 1.0) || !(p < N)) {
      throw DomainError("ProblemParams: p must satisfy 1 < p < N (N = " +
                        std::to_string(N) + ", p = " + std::to_string(p) +
                        ")");
    }
  }

  int N() const { return N_; }
  double p() const { return p_; }

  /// Critical trace exponent p_* = p(N-1)/(N-p).
  double critical_exponent() const { return p_ * (N_ - 1) / (N_ - p_); }

  /// Decay exponent (N-p)/(2(p-1)) of U.
  double profile_exponent() const { return (N_ - p_) / (2.0 * (p_ - 1.0)); }

  /// (N-p)/(p-1): the blow-up order of the gradient term.
  double scaling_exponent() const { return (N_ - p_) / (p_ - 1.0); }

  /// p(N-1)/(2(p-1)): exponent of the boundary integrand.
  double boundary_power() const {
    return p_ * (N_ - 1) / (2.0 * (p_ - 1.0));
  }

  friend bool operator==(const ProblemParams&, const ProblemParams&) = default;

 private:
  int N_;
  double p_;
};

/// A point (y, t) of the closed half-space, y in R^{N-1}, t >= 0.
struct HalfSpacePoint {
  std::vector<double> y;
  double t = 0.0;
};

/// Concentration scale and center of a rescaled extremal.
struct ExtremalParams {
  double epsilon = 1.0;
  std::vector<double> y0;
};

namespace detail {

inline void check_point(const ProblemParams& params, const HalfSpacePoint& pt) {
  if (pt.y.size() != static_cast<std::size_t>(params.N() - 1)) {
    throw DomainError("HalfSpacePoint: y must have N-1 components");
  }
  if (!(pt.t >= 0.0)) {
    throw DomainError("HalfSpacePoint: t must be >= 0");
  }
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

}  // namespace detail

inline double eval_U(const ProblemParams& params, const HalfSpacePoint& pt) {
  detail::check_point(params, pt);
  const double shifted = pt.t + 1.0;
  const double w = shifted * shifted + detail::squared_norm(pt.y);
  return std::pow(w, -params.profile_exponent());
}

/// U_{eps,y0}(y,t) = eps^{(N-p)/(p(p-1))} [(t+eps)^2 + |y-y0|^2]^{-(N-p)/(2(p-1))}.
inline double eval_U_rescaled(const ProblemParams& params,
                              const ExtremalParams& extremal,
                              const HalfSpacePoint& pt) {
  detail::check_point(params, pt);
  if (!(extremal.epsilon > 0.0)) {
    throw DomainError("eval_U_rescaled: epsilon must be > 0");
  }
  if (extremal.y0.size() != pt.y.size()) {
    throw DomainError("eval_U_rescaled: y0 must have N-1 components");
  }
  const double eps = extremal.epsilon;
  double dist2 = 0.0;
  for (std::size_t i = 0; i < pt.y.size(); ++i) {
    const double d = pt.y[i] - extremal.y0[i];
    dist2 += d * d;
  }
  const double shifted = pt.t + eps;
  const double w = shifted * shifted + dist2;
  const double N = params.N();
  const double p = params.p();
  return std::pow(eps, (N - p) / (p * (p - 1.0))) *
         std::pow(w, -params.profile_exponent());
}

/// Gradient (d/dy_1, ..., d/dy_{N-1}, d/dt) of U.
inline std::vector<double> eval_grad_U(const ProblemParams& params,
                                       const HalfSpacePoint& pt) {
  detail::check_point(params, pt);
  const double shifted = pt.t + 1.0;
  const double w = shifted * shifted + detail::squared_norm(pt.y);
  const double factor =
      -params.scaling_exponent() * std::pow(w, -params.profile_exponent() - 1.0);
  std::vector<double> grad(pt.y.size() + 1);
  for (std::size_t i = 0; i < pt.y.size(); ++i) grad[i] = factor * pt.y[i];
  grad.back() = factor * shifted;
  return grad;
}

namespace detail {

/// log of pi^{(N-1)/2} Gamma((N-1)/(2(p-1))) / Gamma(p(N-1)/(2(p-1))).
inline double log_boundary_norm(const ProblemParams& params) {
  const double N = params.N();
  const double p = params.p();
  return 0.5 * (N - 1.0) * std::log(std::numbers::pi) +
         log_gamma((N - 1.0) / (2.0 * (p - 1.0))) -
         log_gamma(params.boundary_power());
}

}  // namespace detail

/// int_{R^{N-1}} U(y,0)^{p_*} dy.
inline double boundary_norm_Lpstar(const ProblemParams& params) {
  return std::exp(detail::log_boundary_norm(params));
}

/// int_{R^N_+} |grad U|^p.
inline double gradient_norm_Lp(const ProblemParams& params) {
  const double p = params.p();
  return std::exp((p - 1.0) * std::log(params.scaling_exponent()) +
                  detail::log_boundary_norm(params));
}

/// Inverse of the sharp trace constant K_p.
inline double kp_inverse(const ProblemParams& params) {
  const double N = params.N();
  const double p = params.p();
  const double log_ratio = log_gamma((N - 1.0) / (2.0 * (p - 1.0))) -
                           log_gamma(params.boundary_power());
  return std::exp((p - 1.0) * std::log(params.scaling_exponent()) +
                  0.5 * (p - 1.0) * std::log(std::numbers::pi) +
                  (p - 1.0) / (N - 1.0) * log_ratio);
}

/// The same constant computed as ||grad U||_p^p / ||U||_{p_*,boundary}^p.
inline double kp_inverse_from_norms(const ProblemParams& params) {
  return gradient_norm_Lp(params) /
         std::pow(boundary_norm_Lpstar(params),
                  params.p() / params.critical_exponent());
}

}  // namespace sobtrace
