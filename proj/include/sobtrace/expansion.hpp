#pragma once

// Closed-form asymptotics of the Rayleigh quotient of boundary-concentrating
// test functions: Step-1 coefficients of the three integrals, the combined
// expansion, regime classification in p, and the good-point test.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sobtrace/errors.hpp"
#include "sobtrace/extremal.hpp"
#include "sobtrace/gamma.hpp"

namespace sobtrace {

/// Absolute tolerance used to decide that p sits exactly on a threshold.
inline constexpr double kThresholdTolerance = 1e-12;

/// Second-order boundary data at the concentration point x0.
struct BoundaryGeometry {
  std::vector<double> lambdas;  // principal curvatures, N-1 of them
  double h0 = 0.0;              // potential h(x0)
  bool one_sided = true;        // domain locally on one side of the tangent plane

  double sum() const {
    double s = 0.0;
    for (double l : lambdas) s += l;
    return s;
  }
  double sum_squares() const {
    double s = 0.0;
    for (double l : lambdas) s += l * l;
    return s;
  }
  /// sum_{i<j} lambda_i lambda_j
  double cross_sum() const {
    double s = 0.0;
    for (std::size_t i = 0; i < lambdas.size(); ++i)
      for (std::size_t j = i + 1; j < lambdas.size(); ++j)
        s += lambdas[i] * lambdas[j];
    return s;
  }
  double mean_curvature() const {
    return lambdas.empty() ? 0.0 : sum() / static_cast<double>(lambdas.size());
  }
};

enum class Side { kBelow, kEqual, kAbove };

inline Side compare_threshold(double p, double threshold) {
  if (std::abs(p - threshold) <= kThresholdTolerance) return Side::kEqual;
  return p < threshold ? Side::kBelow : Side::kAbove;
}

/// Case of one Step-1 estimate (gradient, mass or boundary integral).
enum class EstimateCase {
  kPowerRemainder,    // explicit terms + O(eps^k) remainder
  kLogRemainder,      // explicit terms + O(ln 1/eps)
  kBoundedRemainder,  // explicit terms + O(1)
  kLogarithmic,       // leading term of order ln(1/eps) (or only O(ln))
  kBounded,           // integral stays O(1) beyond the leading term
};

/// Case of the combined expansion of K_p^{-1} Q(u_eps).
enum class CombinedRegime {
  kMassAndSecondOrder,  // 1 + c1 eps + (D/A1) eps^p + E eps^2
  kMassOnly,            // 1 + c1 eps + (D/A1) eps^p
  kMassCriticalLog,     // p = sqrt(N), N <= 4: 1 + c1 eps + O(eps^a ln)
  kSecondOrderOnly,     // N >= 5, sqrt(N) <= p < (N+2)/3: 1 + c1 eps + E eps^2
  kFirstOrderOnly,      // 1 + c1 eps + remainder
  kLogarithmic,         // p = (N+1)/2
  kSupercritical,       // p > (N+1)/2
};

struct RegimeLabel {
  EstimateCase gradient_regime;
  EstimateCase mass_regime;
  EstimateCase boundary_regime;
  CombinedRegime combined_regime;
};

inline std::string to_string(EstimateCase c) {
  switch (c) {
    case EstimateCase::kPowerRemainder: return "power_remainder";
    case EstimateCase::kLogRemainder: return "log_remainder";
    case EstimateCase::kBoundedRemainder: return "bounded_remainder";
    case EstimateCase::kLogarithmic: return "logarithmic";
    case EstimateCase::kBounded: return "bounded";
  }
  return "unknown";
}

inline std::string to_string(CombinedRegime c) {
  switch (c) {
    case CombinedRegime::kMassAndSecondOrder: return "mass_and_second_order";
    case CombinedRegime::kMassOnly: return "mass_only";
    case CombinedRegime::kMassCriticalLog: return "mass_critical_log";
    case CombinedRegime::kSecondOrderOnly: return "second_order_only";
    case CombinedRegime::kFirstOrderOnly: return "first_order_only";
    case CombinedRegime::kLogarithmic: return "logarithmic";
    case CombinedRegime::kSupercritical: return "supercritical";
  }
  return "unknown";
}

/// The thresholds in p at which the asymptotic cases change.
struct RegimeThresholds {
  double gradient;  // (N+3)/4
  double boundary;  // (N+2)/3
  double critical;  // (N+1)/2
  double mass;      // sqrt(N)
  double mass_log;  // (-1 + sqrt(4N+5))/2

  explicit RegimeThresholds(int N)
      : gradient((N + 3) / 4.0),
        boundary((N + 2) / 3.0),
        critical((N + 1) / 2.0),
        mass(std::sqrt(static_cast<double>(N))),
        mass_log(0.5 * (-1.0 + std::sqrt(4.0 * N + 5.0))) {}
};

namespace detail {

/// Three-way split below a threshold, then the critical / supercritical tail.
inline EstimateCase split_case(double p, double inner, double outer) {
  const Side at_outer = compare_threshold(p, outer);
  if (at_outer == Side::kEqual) return EstimateCase::kLogarithmic;
  if (at_outer == Side::kAbove) return EstimateCase::kBounded;
  switch (compare_threshold(p, inner)) {
    case Side::kBelow: return EstimateCase::kPowerRemainder;
    case Side::kEqual: return EstimateCase::kLogRemainder;
    case Side::kAbove: return EstimateCase::kBoundedRemainder;
  }
  return EstimateCase::kBounded;
}

}  // namespace detail

inline RegimeLabel classify_regime(const ProblemParams& params) {
  const int N = params.N();
  const double p = params.p();
  const RegimeThresholds th(N);

  RegimeLabel label{};
  label.gradient_regime = detail::split_case(p, th.gradient, th.critical);
  label.mass_regime = detail::split_case(p, th.mass_log, th.mass);
  label.boundary_regime = detail::split_case(p, th.boundary, th.critical);

  const Side crit = compare_threshold(p, th.critical);
  if (crit == Side::kAbove) {
    label.combined_regime = CombinedRegime::kSupercritical;
  } else if (crit == Side::kEqual) {
    label.combined_regime = CombinedRegime::kLogarithmic;
  } else if (N <= 4) {
    const Side mass = compare_threshold(p, th.mass);
    if (compare_threshold(p, th.boundary) == Side::kBelow &&
        mass == Side::kBelow) {
      label.combined_regime = CombinedRegime::kMassAndSecondOrder;
    } else if (mass == Side::kBelow) {
      label.combined_regime = CombinedRegime::kMassOnly;
    } else if (mass == Side::kEqual) {
      label.combined_regime = CombinedRegime::kMassCriticalLog;
    } else {
      label.combined_regime = CombinedRegime::kFirstOrderOnly;
    }
  } else {
    if (compare_threshold(p, th.mass) == Side::kBelow) {
      label.combined_regime = CombinedRegime::kMassAndSecondOrder;
    } else if (compare_threshold(p, th.boundary) == Side::kBelow) {
      label.combined_regime = CombinedRegime::kSecondOrderOnly;
    } else {
      label.combined_regime = CombinedRegime::kFirstOrderOnly;
    }
  }
  return label;
}

/// Big-O / little-o remainder of the combined expansion, eps^exponent
/// (times ln(1/eps) when logarithmic). Never added to the prediction.
struct RemainderOrder {
  double exponent = 0.0;
  bool logarithmic = false;
  bool little_o = false;
};

inline RemainderOrder expansion_remainder(const ProblemParams& params) {
  const double p = params.p();
  const double a = params.scaling_exponent();
  switch (classify_regime(params).combined_regime) {
    case CombinedRegime::kSupercritical: return {a, false, false};
    case CombinedRegime::kLogarithmic: return {1.0, true, true};
    case CombinedRegime::kMassAndSecondOrder:
      if (params.N() <= 4) return {1.0 + p, false, false};
      return compare_threshold(p, 2.0) == Side::kAbove
                 ? RemainderOrder{p, false, true}
                 : RemainderOrder{2.0, false, true};
    case CombinedRegime::kMassOnly: return {a, false, false};
    case CombinedRegime::kMassCriticalLog: return {a, true, false};
    case CombinedRegime::kSecondOrderOnly: return {2.0, false, true};
    case CombinedRegime::kFirstOrderOnly:
      return params.N() <= 4 ? RemainderOrder{a, false, false}
                             : RemainderOrder{2.0, false, false};
  }
  return {};
}

/// Step-1 coefficients. Absent entries are excluded by the regime (their
/// closed forms would hit a Gamma pole or do not enter the estimate).
struct ExpansionCoefficients {
  double A1 = 0.0;
  std::optional<double> A2, A2prime, A3;
  double B1 = 0.0;
  double B2 = 0.0;
  std::optional<double> B3, B4;
  std::optional<double> D;
  std::optional<double> E;
  double cNp = 0.0;
};

namespace detail {

inline void check_geometry(const ProblemParams& params,
                           const BoundaryGeometry& geom) {
  if (geom.lambdas.size() != static_cast<std::size_t>(params.N() - 1)) {
    throw DomainError("BoundaryGeometry: expected N-1 = " +
                      std::to_string(params.N() - 1) + " curvatures, got " +
                      std::to_string(geom.lambdas.size()));
  }
  for (double l : geom.lambdas) {
    if (!std::isfinite(l)) throw DomainError("BoundaryGeometry: non-finite curvature");
  }
  if (!std::isfinite(geom.h0)) throw DomainError("BoundaryGeometry: non-finite h0");
}

inline double closed_form_E(const ProblemParams& params, const BoundaryGeometry& geom) {
  const double N = params.N();
  const double p = params.p();
  const double pref = (N - p) * (p - 1.0) / (4.0 * (N - 1.0) * (N - 2.0 * p + 1.0));
  return pref * ((p + N - 2.0) / (N - 1.0) * geom.sum_squares() -
                 2.0 * geom.cross_sum());
}

}  // namespace detail

inline ExpansionCoefficients coefficients(const ProblemParams& params,
                                          const BoundaryGeometry& geom) {
  detail::check_geometry(params, geom);
  const double N = params.N();
  const double p = params.p();
  const double c = params.scaling_exponent();        // (N-p)/(p-1)
  const double P = params.boundary_power();          // p(N-1)/(2(p-1))
  const double g = (N - 2.0 * p + 1.0) / (2.0 * (p - 1.0));
  const double omega = sphere_volume(params.N() - 1);  // omega_{N-2}
  const double H = geom.mean_curvature();
  const double S1 = geom.sum();
  const double S2 = geom.sum_squares();
  const double Sc = geom.cross_sum();
  const RegimeThresholds th(params.N());

  const double lg_half = log_gamma((N - 1.0) / 2.0);
  const double lg_top = log_gamma((N - 1.0) / (2.0 * (p - 1.0)));
  const double lg_P = log_gamma(P);

  ExpansionCoefficients out;
  out.A1 = 0.5 * std::pow(c, p - 1.0) * omega * std::exp(lg_half + lg_top - lg_P);
  out.B1 = omega * std::exp(lg_half + lg_top - lg_P) / 2.0;
  out.B2 = -omega * S1 / 8.0 * (2.0 * P) *
           std::exp(lg_half + lg_top - log_gamma(1.0 + P));
  out.cNp = -P / 2.0 * (P + 1.0);

  const Side crit = compare_threshold(p, th.critical);
  if (crit == Side::kBelow) {
    const double lg_g = log_gamma(g);
    out.A2 = -H * omega / 4.0 * std::pow(c, p) *
             std::exp(log_gamma((N + 1.0) / 2.0) + lg_g - lg_P);
    out.A3 = omega / 16.0 * std::pow(c, p) * std::exp(lg_half + lg_g - lg_P) *
             (1.5 * S2 + Sc);
    const double k = (N - 2.0 * p + 1.0) / (p - 1.0);
    out.B3 = omega / 32.0 * std::exp(lg_half + lg_g - lg_P) *
             ((1.0 + 3.0 * k) * S2 + (-2.0 + 2.0 * k) * Sc);
  } else if (crit == Side::kEqual) {
    out.A2prime = -H * omega / 2.0 * std::pow(c, p);
    // The explicit part only; the o(1) inside the braces is not evaluated.
    out.B4 = omega / 2.0 * ((1.0 / (N - 1.0) - P / 2.0) * S2 - P * Sc);
  }

  if (compare_threshold(p, th.mass) == Side::kBelow) {
    const double lg_num = log_gamma((N - p * p + p - 1.0) / (2.0 * (p - 1.0)));
    const double lg_den = log_gamma(p * (N - p) / (2.0 * (p - 1.0)));
    out.D = geom.h0 * (p - 1.0) / (N - p * p) * omega *
            std::exp(lg_half + lg_num - lg_den) / 2.0;
  }

  if (compare_threshold(p, th.boundary) == Side::kBelow) {
    out.E = detail::closed_form_E(params, geom);
  }
  return out;
}

/// -(N-p)(p-1)/(N-2p+1) H(0): the eps-coefficient of the combined expansion.
inline double first_order_coefficient(const ProblemParams& params,
                                      const BoundaryGeometry& geom) {
  detail::check_geometry(params, geom);
  const double N = params.N();
  const double p = params.p();
  if (compare_threshold(p, RegimeThresholds(params.N()).critical) != Side::kBelow) {
    throw RegimeError("first_order_coefficient: requires p < (N+1)/2");
  }
  return -(N - p) * (p - 1.0) / (N - 2.0 * p + 1.0) * geom.mean_curvature();
}

/// A2/A1 - (N-p)/(N-1) B2/B1 computed from the Gamma-form coefficients.
inline double first_order_from_coefficients(const ProblemParams& params,
                                            const BoundaryGeometry& geom) {
  const ExpansionCoefficients co = coefficients(params, geom);
  if (!co.A2) throw RegimeError("first_order_from_coefficients: requires p < (N+1)/2");
  const double N = params.N();
  const double p = params.p();
  return *co.A2 / co.A1 - (N - p) / (N - 1.0) * co.B2 / co.B1;
}

/// E = (N-p)(p-1)/(4(N-1)(N-2p+1)) {(p+N-2)/(N-1) sum l_i^2 - 2 sum_{i<j} l_i l_j}.
inline double second_order_E(const ProblemParams& params,
                             const BoundaryGeometry& geom) {
  detail::check_geometry(params, geom);
  if (compare_threshold(params.p(), RegimeThresholds(params.N()).boundary) !=
      Side::kBelow) {
    throw RegimeError("second_order_E: requires p < (N+2)/3");
  }
  return detail::closed_form_E(params, geom);
}

/// The eps^2 coefficient obtained by expanding A/B^{(N-p)/(N-1)} with the
/// Gamma-form A2, A3, B2, B3:
///   k[(k+1)/2 (B2/B1)^2 - B3/B1 - (B2/B1)(A2/A1)] + A3/A1,  k = (N-p)/(N-1).
inline double second_order_from_coefficients(const ProblemParams& params,
                                             const BoundaryGeometry& geom) {
  const ExpansionCoefficients co = coefficients(params, geom);
  if (!co.A2 || !co.A3 || !co.B3) {
    throw RegimeError("second_order_from_coefficients: requires p < (N+1)/2");
  }
  const double k = (params.N() - params.p()) / (params.N() - 1.0);
  const double a2 = *co.A2 / co.A1;
  const double b2 = co.B2 / co.B1;
  return k * (0.5 * (k + 1.0) * b2 * b2 - *co.B3 / co.B1 - b2 * a2) +
         *co.A3 / co.A1;
}

/// Simplified closed forms of the coefficient ratios, written directly in
/// terms of the curvature sums (no Gamma functions).
struct CoefficientRatios {
  double A2_A1 = 0.0;
  double A3_A1 = 0.0;
  double B2_B1 = 0.0;
  double B3_B1 = 0.0;
};

inline CoefficientRatios simplified_ratio_forms(const ProblemParams& params,
                                                const BoundaryGeometry& geom) {
  detail::check_geometry(params, geom);
  const double N = params.N();
  const double p = params.p();
  if (compare_threshold(p, RegimeThresholds(params.N()).critical) != Side::kBelow) {
    throw RegimeError("simplified_ratio_forms: requires p < (N+1)/2");
  }
  const double d = N - 2.0 * p + 1.0;
  const double S1 = geom.sum();
  const double S2 = geom.sum_squares();
  const double Sc = geom.cross_sum();
  CoefficientRatios r;
  r.A2_A1 = -0.5 * (N - p) / d * S1;
  r.A3_A1 = 0.25 * (N - p) / d * (1.5 * S2 - 2.0 * Sc);
  r.B2_B1 = -0.5 * S1;
  r.B3_B1 = ((3.0 * N - 5.0 * p + 2.0) * S2 - 4.0 * (N - p) * Sc) / (8.0 * d);
  return r;
}

/// The same ratios taken from the Gamma-form coefficients.
inline CoefficientRatios ratios_from_coefficients(const ProblemParams& params,
                                                  const BoundaryGeometry& geom) {
  const ExpansionCoefficients co = coefficients(params, geom);
  if (!co.A2 || !co.A3 || !co.B3) {
    throw RegimeError("ratios_from_coefficients: requires p < (N+1)/2");
  }
  return {*co.A2 / co.A1, *co.A3 / co.A1, co.B2 / co.B1, *co.B3 / co.B1};
}

/// Truncated prediction of K_p^{-1} Q(u_eps). Only terms with explicit
/// constants are summed; see expansion_remainder() for what is dropped.
inline double rayleigh_expansion(const ProblemParams& params,
                                 const BoundaryGeometry& geom, double epsilon) {
  detail::check_geometry(params, geom);
  if (!(epsilon > 0.0)) throw DomainError("rayleigh_expansion: epsilon must be > 0");
  const double N = params.N();
  const double p = params.p();
  const RegimeLabel label = classify_regime(params);
  switch (label.combined_regime) {
    case CombinedRegime::kSupercritical:
      return 1.0;
    case CombinedRegime::kLogarithmic:
      return 1.0 - 0.5 * (N - 1.0) * geom.mean_curvature() * epsilon *
                       std::log(1.0 / epsilon);
    default:
      break;
  }
  const ExpansionCoefficients co = coefficients(params, geom);
  double value = 1.0 + first_order_coefficient(params, geom) * epsilon;
  const bool with_mass = label.combined_regime == CombinedRegime::kMassAndSecondOrder ||
                         label.combined_regime == CombinedRegime::kMassOnly;
  const bool with_E = label.combined_regime == CombinedRegime::kMassAndSecondOrder ||
                      label.combined_regime == CombinedRegime::kSecondOrderOnly;
  if (with_mass) {
    if (!co.D) throw RegimeError("rayleigh_expansion: mass coefficient unavailable");
    value += *co.D / co.A1 * std::pow(epsilon, p);
  }
  if (with_E) {
    if (!co.E) throw RegimeError("rayleigh_expansion: E unavailable");
    value += *co.E * epsilon * epsilon;
  }
  return value;
}

struct GoodPointVerdict {
  bool good = false;
  std::string reason;
};

/// Local criterion at x0 guaranteeing lambda < K_p^{-1}; valid for
/// 1 < p < (N+1)/2.
inline GoodPointVerdict is_good_point(const ProblemParams& params,
                                      const BoundaryGeometry& geom) {
  detail::check_geometry(params, geom);
  const int N = params.N();
  const double p = params.p();
  const RegimeThresholds th(N);
  if (compare_threshold(p, th.critical) != Side::kBelow) {
    throw RegimeError("is_good_point: method range is 1 < p < (N+1)/2");
  }
  if (!geom.one_sided) {
    return {false, "domain does not lie on one side of the tangent plane"};
  }
  const double H = geom.mean_curvature();
  if (H > kThresholdTolerance) return {true, "H > 0"};
  if (H < -kThresholdTolerance) return {false, "H < 0"};

  const double h0 = geom.h0;
  const double S2 = geom.sum_squares();
  const double Sc = geom.cross_sum();
  if (N <= 4) {
    if (compare_threshold(p, th.mass) == Side::kBelow) {
      return h0 < 0.0 ? GoodPointVerdict{true, "H = 0, N <= 4, p < sqrt(N), h(x0) < 0"}
                      : GoodPointVerdict{false, "H = 0, N <= 4, p < sqrt(N), h(x0) >= 0"};
    }
    return {false, "H = 0, N <= 4, p >= sqrt(N)"};
  }
  const Side at_two = compare_threshold(p, 2.0);
  if (at_two == Side::kBelow) {
    return h0 < 0.0 ? GoodPointVerdict{true, "H = 0, N >= 5, p < 2, h(x0) < 0"}
                    : GoodPointVerdict{false, "H = 0, N >= 5, p < 2, h(x0) >= 0"};
  }
  if (at_two == Side::kEqual) {
    const double lhs = N / (N - 1.0) * S2 - 2.0 * Sc;
    const double rhs = -8.0 * (N - 1.0) * h0 / ((N - 2.0) * (N - 4.0));
    return lhs < rhs
               ? GoodPointVerdict{true, "H = 0, N >= 5, p = 2, curvature bound below -8(N-1)h/((N-2)(N-4))"}
               : GoodPointVerdict{false, "H = 0, N >= 5, p = 2, curvature bound violated"};
  }
  if (compare_threshold(p, th.boundary) == Side::kBelow) {
    const double lhs = (p + N - 2.0) / (N - 1.0) * S2 - 2.0 * Sc;
    return lhs < 0.0
               ? GoodPointVerdict{true, "H = 0, N >= 5, 2 < p < (N+2)/3, curvature form negative"}
               : GoodPointVerdict{false, "H = 0, N >= 5, 2 < p < (N+2)/3, curvature form nonnegative"};
  }
  return {false, "H = 0, N >= 5, p >= (N+2)/3"};
}

/// Quotient of u = 1: int h / |boundary|^{p/p_*}, an upper bound for lambda.
inline double constant_testfunction_bound(double volume, double boundary_area,
                                          double h_integral,
                                          const ProblemParams& params) {
  if (!(volume > 0.0) || !(boundary_area > 0.0)) {
    throw DomainError("constant_testfunction_bound: measures must be positive");
  }
  return h_integral /
         std::pow(boundary_area, params.p() / params.critical_exponent());
}

}  // namespace sobtrace
