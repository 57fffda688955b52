#pragma once

// Gamma-function primitives shared by every closed-form expression in the
// library. All evaluations go through log-Gamma so that ratios of large
// Gamma values stay finite.

#include <cmath>
#include <numbers>
#include <string>

#include "sobtrace/errors.hpp"

namespace sobtrace {

/// log Gamma(x) for x > 0.
inline double log_gamma(double x) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw DomainError("log_gamma: argument must be positive and finite, got " +
                      std::to_string(x));
  }
  return std::lgamma(x);
}

/// Gamma(x) for x > 0. Overflow (x beyond ~171.6) is reported, never returned
/// as inf.
inline double gamma(double x) {
  const double lg = log_gamma(x);
  if (lg > 709.0) {
    throw DomainError("gamma: result overflows double for x = " +
                      std::to_string(x));
  }
  return std::exp(lg);
}

/// Gamma(a) / Gamma(b), computed in the log domain.
inline double gamma_ratio(double a, double b) {
  return std::exp(log_gamma(a) - log_gamma(b));
}

/// Surface measure of the unit sphere S^{n-1} in R^n: 2 pi^{n/2} / Gamma(n/2).
/// sphere_volume(1) = 2 counts the two points of S^0.
inline double sphere_volume(int n) {
  if (n < 1) {
    throw DomainError("sphere_volume: dimension must be >= 1, got " +
                      std::to_string(n));
  }
  const double half = 0.5 * n;
  return 2.0 * std::exp(half * std::log(std::numbers::pi) - log_gamma(half));
}

/// int_0^inf r^alpha / (1 + r^2)^beta dr
///   = Gamma((alpha+1)/2) Gamma((2 beta - alpha - 1)/2) / (2 Gamma(beta)).
inline double half_line_beta_integral(double alpha, double beta) {
  if (!(alpha >= 0.0)) {
    throw DomainError("half_line_beta_integral: alpha must be >= 0");
  }
  if (!(2.0 * beta - alpha > 1.0)) {
    throw DivergentIntegralError(
        "half_line_beta_integral: integral diverges unless 2*beta - alpha > 1");
  }
  const double lg = log_gamma(0.5 * (alpha + 1.0)) +
                    log_gamma(0.5 * (2.0 * beta - alpha - 1.0)) -
                    log_gamma(beta);
  return 0.5 * std::exp(lg);
}

}  // namespace sobtrace
