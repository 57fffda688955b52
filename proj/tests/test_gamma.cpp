#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>

#include "sobtrace/cubature.hpp"
#include "sobtrace/gamma.hpp"
#include "test_support.hpp"

namespace sobtrace {
namespace {

using testing::Gen;
using testing::rel_err;

constexpr double kPi = std::numbers::pi;

TEST(Gamma, KnownValues) {
  EXPECT_NEAR(gamma(1.0), 1.0, 1e-15);
  EXPECT_LT(rel_err(gamma(0.5), std::sqrt(kPi)), 1e-14);
  EXPECT_LT(rel_err(gamma(5.0), 24.0), 1e-14);
  EXPECT_LT(rel_err(gamma(50.0), 6.082818640342675608e62), 1e-12);
}

TEST(Gamma, RejectsNonPositive) {
  EXPECT_THROW(gamma(0.0), DomainError);
  EXPECT_THROW(gamma(-1.5), DomainError);
  EXPECT_THROW(gamma(std::numeric_limits<double>::quiet_NaN()), DomainError);
  EXPECT_THROW(log_gamma(-3.0), DomainError);
  EXPECT_THROW(gamma(200.0), DomainError);
}

TEST(Gamma, RecurrenceProperty) {
  Gen gen(11);
  for (int i = 0; i < 2000; ++i) {
    const double x = gen.uniform(1e-3, 40.0);
    EXPECT_LT(rel_err(gamma(x + 1.0), x * gamma(x)), 1e-12) << "x = " << x;
  }
}

TEST(Gamma, DuplicationProperty) {
  Gen gen(12);
  for (int i = 0; i < 2000; ++i) {
    const double z = gen.uniform(1e-3, 10.0);
    const double lhs = gamma(z) * gamma(z + 0.5);
    const double rhs = std::pow(2.0, 1.0 - 2.0 * z) * std::sqrt(kPi) * gamma(2.0 * z);
    EXPECT_LT(std::abs(lhs - rhs) / gamma(2.0 * z), 1e-10) << "z = " << z;
  }
}

TEST(Gamma, RatioMatchesQuotient) {
  EXPECT_LT(rel_err(gamma_ratio(7.5, 3.25), gamma(7.5) / gamma(3.25)), 1e-13);
  EXPECT_LT(rel_err(gamma_ratio(300.0, 299.0), 299.0), 1e-10);
}

TEST(SphereVolume, LowDimensions) {
  EXPECT_LT(rel_err(sphere_volume(1), 2.0), 1e-15);
  EXPECT_LT(rel_err(sphere_volume(2), 2.0 * kPi), 1e-15);
  EXPECT_LT(rel_err(sphere_volume(3), 4.0 * kPi), 1e-15);
  EXPECT_LT(rel_err(sphere_volume(4), 2.0 * kPi * kPi), 1e-14);
  EXPECT_THROW(sphere_volume(0), DomainError);
}

TEST(HalfLineBeta, ClosedFormExamples) {
  EXPECT_LT(rel_err(half_line_beta_integral(0.0, 1.0), kPi / 2.0), 1e-14);
  EXPECT_LT(rel_err(half_line_beta_integral(1.0, 2.0), 0.5), 1e-14);
  EXPECT_LT(rel_err(half_line_beta_integral(2.0, 2.0), kPi / 4.0), 1e-14);
}

TEST(HalfLineBeta, Errors) {
  EXPECT_THROW(half_line_beta_integral(1.0, 1.0), DivergentIntegralError);
  EXPECT_THROW(half_line_beta_integral(0.0, 0.5), DivergentIntegralError);
  EXPECT_THROW(half_line_beta_integral(-0.5, 3.0), DomainError);
}

/// int_0^inf r^a (1+r^2)^{-b} dr through r = e^x, with both exponential tails
/// added from their leading terms.
double beta_by_quadrature(double a, double b) {
  const double decay = 2.0 * b - a - 1.0;
  const double right = 60.0 / std::min(1.0, decay) + 20.0;
  const double left = -60.0 / (a + 1.0);
  auto f = [&](const Point<1>& x) {
    const double u = x[0];
    const double log1p_e2 = u > 0.0 ? 2.0 * u + std::log1p(std::exp(-2.0 * u))
                                    : std::log1p(std::exp(2.0 * u));
    return std::exp((a + 1.0) * u - b * log1p_e2);
  };
  const QuadratureResult q =
      adaptive_integrate<1>(f, {left}, {right}, CubatureOptions{1e-13, 0.0, 100000, 8});
  const double tail_right = std::exp(-decay * right) / decay;
  const double tail_left = std::exp((a + 1.0) * left) / (a + 1.0);
  return q.value + tail_right + tail_left;
}

TEST(HalfLineBeta, AgreesWithQuadratureOnGrid) {
  for (double a : {0.0, 0.5, 1.0, 2.5, 4.0}) {
    for (double gap : {1.1, 2.0, 5.0, 12.0, 20.0}) {
      const double b = 0.5 * (gap + a);
      const double closed = half_line_beta_integral(a, b);
      EXPECT_LT(rel_err(closed, beta_by_quadrature(a, b)), 1e-8)
          << "alpha = " << a << ", beta = " << b;
    }
  }
}

}  // namespace
}  // namespace sobtrace
