#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "sobtrace/expansion.hpp"
#include "test_support.hpp"

namespace sobtrace {
namespace {

using testing::Gen;
using testing::rel_err;

BoundaryGeometry geometry(std::vector<double> l, double h0 = 0.0, bool one_sided = true) {
  return {std::move(l), h0, one_sided};
}

/// Random (N, p) with 1 < p < (N+1)/2, kept away from every threshold.
ProblemParams subcritical_params(Gen& gen, int n_lo = 2, int n_hi = 9) {
  for (;;) {
    const int N = gen.integer(n_lo, n_hi);
    const double p = gen.uniform(1.05, std::min<double>(N - 0.05, (N + 1) / 2.0 - 0.05));
    const RegimeThresholds th(N);
    bool near = false;
    for (double t : {th.gradient, th.boundary, th.mass, th.mass_log, 2.0})
      if (std::abs(p - t) < 1e-3) near = true;
    if (!near) return ProblemParams(N, p);
  }
}

TEST(Geometry, DerivedSums) {
  Gen gen(31);
  for (int i = 0; i < 100; ++i) {
    const auto g = geometry(gen.vector(gen.integer(1, 8), -3.0, 3.0));
    EXPECT_NEAR(g.sum() * g.sum(), g.sum_squares() + 2.0 * g.cross_sum(), 1e-10);
  }
  EXPECT_DOUBLE_EQ(geometry({1.0, -1.0, 1.0, -1.0}).cross_sum(), -2.0);
}

TEST(ClassifyRegime, Examples) {
  EXPECT_EQ(classify_regime(ProblemParams(5, 3.0)).combined_regime,
            CombinedRegime::kLogarithmic);
  EXPECT_EQ(classify_regime(ProblemParams(5, 2.0)).combined_regime,
            CombinedRegime::kMassAndSecondOrder);
  EXPECT_EQ(classify_regime(ProblemParams(3, 2.5)).combined_regime,
            CombinedRegime::kSupercritical);
}

TEST(ClassifyRegime, ThresholdEqualities) {
  // N = 5: (N+3)/4 = 2, sqrt(5), (N+2)/3 = 7/3, (N+1)/2 = 3.
  const RegimeLabel at_grad = classify_regime(ProblemParams(5, 2.0));
  EXPECT_EQ(at_grad.gradient_regime, EstimateCase::kLogRemainder);
  const RegimeLabel at_bdry = classify_regime(ProblemParams(5, 7.0 / 3.0));
  EXPECT_EQ(at_bdry.boundary_regime, EstimateCase::kLogRemainder);
  EXPECT_EQ(at_bdry.combined_regime, CombinedRegime::kFirstOrderOnly);
  const RegimeLabel at_mass = classify_regime(ProblemParams(5, std::sqrt(5.0)));
  EXPECT_EQ(at_mass.mass_regime, EstimateCase::kLogarithmic);
  EXPECT_EQ(at_mass.combined_regime, CombinedRegime::kSecondOrderOnly);
  const double mass_log = 0.5 * (-1.0 + std::sqrt(25.0));
  EXPECT_EQ(classify_regime(ProblemParams(5, mass_log)).mass_regime,
            EstimateCase::kLogRemainder);
  const RegimeLabel crit = classify_regime(ProblemParams(5, 3.0));
  EXPECT_EQ(crit.gradient_regime, EstimateCase::kLogarithmic);
  EXPECT_EQ(crit.boundary_regime, EstimateCase::kLogarithmic);
  // N = 3: p = sqrt(3) is the logarithmic mass case.
  EXPECT_EQ(classify_regime(ProblemParams(3, std::sqrt(3.0))).combined_regime,
            CombinedRegime::kMassCriticalLog);
  EXPECT_EQ(classify_regime(ProblemParams(3, 1.7)).combined_regime,
            CombinedRegime::kMassOnly);
  EXPECT_EQ(classify_regime(ProblemParams(3, 1.9)).combined_regime,
            CombinedRegime::kFirstOrderOnly);
  // Round-off sized offsets still land on the threshold.
  EXPECT_EQ(classify_regime(ProblemParams(5, 3.0 + 1e-14)).combined_regime,
            CombinedRegime::kLogarithmic);
}

TEST(ClassifyRegime, ExactlyOneCombinedCaseProperty) {
  Gen gen(32);
  for (int i = 0; i < 500; ++i) {
    const int N = gen.integer(2, 10);
    const ProblemParams pp(N, gen.uniform(1.01, N - 0.01));
    const RegimeLabel l = classify_regime(pp);
    const double crit = (N + 1) / 2.0;
    if (pp.p() > crit + 1e-12) {
      EXPECT_EQ(l.combined_regime, CombinedRegime::kSupercritical);
    } else if (pp.p() < crit - 1e-12) {
      EXPECT_NE(l.combined_regime, CombinedRegime::kSupercritical);
      EXPECT_NE(l.combined_regime, CombinedRegime::kLogarithmic);
    }
  }
}

TEST(Coefficients, RatioExamples) {
  const auto co = coefficients(ProblemParams(5, 2.0), geometry({1, 1, 1, 1}));
  ASSERT_TRUE(co.A2.has_value());
  EXPECT_LT(rel_err(*co.A2 / co.A1, -3.0), 1e-12);
  EXPECT_LT(rel_err(co.B2 / co.B1, -2.0), 1e-12);
  EXPECT_GT(co.A1, 0.0);
  EXPECT_GT(co.B1, 0.0);
}

TEST(Coefficients, LeadingCoefficientsAreExtremalNorms) {
  Gen gen(33);
  for (int i = 0; i < 100; ++i) {
    const int N = gen.integer(2, 9);
    const ProblemParams pp(N, gen.uniform(1.05, N - 0.05));
    const auto co = coefficients(pp, geometry(std::vector<double>(N - 1, 0.0)));
    EXPECT_LT(rel_err(co.A1, gradient_norm_Lp(pp)), 1e-12);
    EXPECT_LT(rel_err(co.B1, boundary_norm_Lpstar(pp)), 1e-12);
  }
}

TEST(Coefficients, PresenceFollowsRegime) {
  const auto sub = coefficients(ProblemParams(5, 2.0), geometry({1, 1, 1, 1}));
  EXPECT_TRUE(sub.A3 && sub.B3 && sub.D && sub.E);
  EXPECT_FALSE(sub.A2prime || sub.B4);
  const auto crit = coefficients(ProblemParams(5, 3.0), geometry({1, 1, 1, 1}));
  EXPECT_TRUE(crit.A2prime && crit.B4);
  EXPECT_FALSE(crit.A2 || crit.A3 || crit.B3 || crit.D || crit.E);
  const auto super = coefficients(ProblemParams(3, 2.5), geometry({1, 1}));
  EXPECT_FALSE(super.A2 || super.A2prime || super.D || super.E);
  EXPECT_THROW(coefficients(ProblemParams(3, 1.5), geometry({1})), DomainError);
}

TEST(Coefficients, MassSignProperty) {
  EXPECT_LT(*coefficients(ProblemParams(5, 1.5), geometry({0, 0, 0, 0}, -1.0)).D, 0.0);
  Gen gen(34);
  for (int i = 0; i < 200; ++i) {
    const ProblemParams pp = subcritical_params(gen);
    const double h0 = gen.uniform(-2.0, 2.0);
    const auto co = coefficients(pp, geometry(std::vector<double>(pp.N() - 1, 0.3), h0));
    if (pp.p() < std::sqrt(static_cast<double>(pp.N()))) {
      ASSERT_TRUE(co.D.has_value());
      EXPECT_EQ(std::signbit(*co.D), std::signbit(h0 / (pp.N() - pp.p() * pp.p())));
    } else {
      EXPECT_FALSE(co.D.has_value());
    }
  }
}

TEST(Coefficients, MassRatioAtPTwo) {
  for (int N = 5; N <= 10; ++N) {
    for (double h0 : {-1.0, 0.5, 2.0}) {
      const auto co =
          coefficients(ProblemParams(N, 2.0), geometry(std::vector<double>(N - 1, 0.0), h0));
      ASSERT_TRUE(co.D.has_value());
      EXPECT_LT(rel_err(*co.D / co.A1, 2.0 * h0 / ((N - 3.0) * (N - 4.0))), 1e-12);
    }
  }
}

TEST(FirstOrder, Examples) {
  EXPECT_LT(rel_err(first_order_coefficient(ProblemParams(5, 2.0), geometry({1, 1, 1, 1})),
                    -1.5),
            1e-14);
  EXPECT_EQ(first_order_coefficient(ProblemParams(5, 2.0), geometry({1, -1, 2, -2})), 0.0);
  EXPECT_LT(rel_err(first_order_coefficient(ProblemParams(3, 1.5), geometry({2, 2})), -1.5),
            1e-14);
  EXPECT_THROW(first_order_coefficient(ProblemParams(5, 3.0), geometry({1, 1, 1, 1})),
               RegimeError);
}

TEST(FirstOrder, MatchesGammaCombinationProperty) {
  Gen gen(35);
  for (int i = 0; i < 300; ++i) {
    const ProblemParams pp = subcritical_params(gen);
    const auto g = geometry(gen.vector(pp.N() - 1, -3.0, 3.0));
    const double closed = first_order_coefficient(pp, g);
    const double combined = first_order_from_coefficients(pp, g);
    EXPECT_NEAR(closed, combined, 1e-10 * std::max(1.0, std::abs(closed)));
    // Sign is opposite to H because N - 2p + 1 > 0 here.
    if (g.mean_curvature() > 1e-9) {
      EXPECT_LT(closed, 0.0);
    }
    if (g.mean_curvature() < -1e-9) {
      EXPECT_GT(closed, 0.0);
    }
  }
}

TEST(SecondOrderE, Examples) {
  EXPECT_LT(rel_err(second_order_E(ProblemParams(5, 2.0), geometry({1, 1, 1, 1})),
                    -21.0 / 32.0),
            1e-14);
  EXPECT_EQ(second_order_E(ProblemParams(5, 2.0), geometry({0, 0, 0, 0})), 0.0);
  EXPECT_LT(rel_err(second_order_E(ProblemParams(5, 2.0), geometry({1, -1, 1, -1})),
                    27.0 / 32.0),
            1e-14);
  EXPECT_THROW(second_order_E(ProblemParams(5, 2.5), geometry({1, 1, 1, 1})), RegimeError);
}

TEST(SecondOrderE, MatchesCoefficientCombinationWithoutCrossTerms) {
  Gen gen(36);
  for (int i = 0; i < 200; ++i) {
    const ProblemParams pp = subcritical_params(gen, 2, 9);
    if (pp.p() >= (pp.N() + 2) / 3.0) continue;
    // A single nonzero curvature makes every cross product vanish.
    std::vector<double> l(pp.N() - 1, 0.0);
    l[gen.integer(0, pp.N() - 2)] = gen.uniform(-3.0, 3.0);
    const auto g = geometry(l);
    const double E = second_order_E(pp, g);
    EXPECT_NEAR(second_order_from_coefficients(pp, g), E, 1e-10 * std::max(1.0, std::abs(E)));
  }
}

TEST(Ratios, LowOrderMatchSimplifiedForms) {
  Gen gen(37);
  for (int i = 0; i < 300; ++i) {
    const ProblemParams pp = subcritical_params(gen);
    const auto g = geometry(gen.vector(pp.N() - 1, -3.0, 3.0));
    const CoefficientRatios s = simplified_ratio_forms(pp, g);
    const CoefficientRatios c = ratios_from_coefficients(pp, g);
    EXPECT_NEAR(c.A2_A1, s.A2_A1, 1e-10 * std::max(1.0, std::abs(s.A2_A1)));
    EXPECT_NEAR(c.B2_B1, s.B2_B1, 1e-10 * std::max(1.0, std::abs(s.B2_B1)));
  }
}

TEST(Ratios, SecondOrderMatchSimplifiedFormsWithoutCrossTerms) {
  Gen gen(38);
  for (int i = 0; i < 300; ++i) {
    const ProblemParams pp = subcritical_params(gen);
    std::vector<double> l(pp.N() - 1, 0.0);
    l[gen.integer(0, pp.N() - 2)] = gen.uniform(-3.0, 3.0);
    const auto g = geometry(l);
    const CoefficientRatios s = simplified_ratio_forms(pp, g);
    const CoefficientRatios c = ratios_from_coefficients(pp, g);
    EXPECT_NEAR(c.A3_A1, s.A3_A1, 1e-10 * std::max(1.0, std::abs(s.A3_A1)));
    EXPECT_NEAR(c.B3_B1, s.B3_B1, 1e-10 * std::max(1.0, std::abs(s.B3_B1)));
  }
}

// With cross terms the Gamma-form coefficients reduce to
//   A3/A1 = (N-p)/(4(N-2p+1)) (3/2 S2 + Sc),
//   B3/B1 = ((3N-5p+2) S2 + (2N-6p+4) Sc) / (8(N-2p+1)).
TEST(Ratios, SecondOrderGeneralCurvatures) {
  Gen gen(39);
  for (int i = 0; i < 300; ++i) {
    const ProblemParams pp = subcritical_params(gen, 3, 9);
    const auto g = geometry(gen.vector(pp.N() - 1, -3.0, 3.0));
    const double N = pp.N(), p = pp.p(), d = N - 2.0 * p + 1.0;
    const double a3 = 0.25 * (N - p) / d * (1.5 * g.sum_squares() + g.cross_sum());
    const double b3 =
        ((3 * N - 5 * p + 2) * g.sum_squares() + (2 * N - 6 * p + 4) * g.cross_sum()) /
        (8 * d);
    const CoefficientRatios c = ratios_from_coefficients(pp, g);
    EXPECT_NEAR(c.A3_A1, a3, 1e-10 * std::max(1.0, std::abs(a3)));
    EXPECT_NEAR(c.B3_B1, b3, 1e-10 * std::max(1.0, std::abs(b3)));
  }
}

TEST(RayleighExpansion, Examples) {
  EXPECT_DOUBLE_EQ(rayleigh_expansion(ProblemParams(5, 2.0), geometry({0, 0, 0, 0}), 0.01),
                   1.0);
  EXPECT_LT(rel_err(rayleigh_expansion(ProblemParams(5, 3.0), geometry({1, 1, 1, 1}), 0.01),
                    0.9078965962802381),
            1e-14);
  EXPECT_LT(rel_err(rayleigh_expansion(ProblemParams(5, 2.0), geometry({1, 1, 1, 1}), 0.01),
                    0.984934375),
            1e-14);
  EXPECT_DOUBLE_EQ(rayleigh_expansion(ProblemParams(3, 2.5), geometry({1, 1}), 0.01), 1.0);
  EXPECT_THROW(rayleigh_expansion(ProblemParams(5, 2.0), geometry({1, 1, 1, 1}), 0.0),
               DomainError);
}

TEST(RayleighExpansion, TendsToOneProperty) {
  Gen gen(40);
  for (int i = 0; i < 200; ++i) {
    const int N = gen.integer(2, 9);
    const ProblemParams pp(N, gen.uniform(1.05, N - 0.05));
    const auto g = geometry(gen.vector(N - 1, -2.0, 2.0), gen.uniform(-2.0, 2.0));
    const double far = std::abs(rayleigh_expansion(pp, g, 1e-4) - 1.0);
    const double near = std::abs(rayleigh_expansion(pp, g, 1e-8) - 1.0);
    EXPECT_LE(near, far + 1e-15);
    EXPECT_LT(near, 1e-5);
  }
}

TEST(Remainder, Examples) {
  const RemainderOrder r1 = expansion_remainder(ProblemParams(3, 1.5));
  EXPECT_DOUBLE_EQ(r1.exponent, 2.5);
  const RemainderOrder r2 = expansion_remainder(ProblemParams(5, 3.0));
  EXPECT_TRUE(r2.logarithmic);
  EXPECT_TRUE(r2.little_o);
  const RemainderOrder r3 = expansion_remainder(ProblemParams(3, 2.5));
  EXPECT_DOUBLE_EQ(r3.exponent, 1.0 / 3.0);
}

TEST(GoodPoint, Examples) {
  EXPECT_TRUE(is_good_point(ProblemParams(3, 1.5), geometry({1, 0.5})).good);
  EXPECT_TRUE(is_good_point(ProblemParams(3, 1.5), geometry({0, 0}, -0.5)).good);
  EXPECT_FALSE(is_good_point(ProblemParams(3, 1.5), geometry({0, 0}, 0.5)).good);
  EXPECT_FALSE(is_good_point(ProblemParams(3, 1.5), geometry({1, 1}, 0.0, false)).good);
  EXPECT_TRUE(is_good_point(ProblemParams(5, 2.0), geometry({1, -1, 1, -1}, -1.0)).good);
  EXPECT_FALSE(is_good_point(ProblemParams(5, 2.0), geometry({1, -1, 1, -1}, 0.0)).good);
  // Boundary of the p = 2 condition sits at h0 = -27/32.
  EXPECT_FALSE(is_good_point(ProblemParams(5, 2.0), geometry({1, -1, 1, -1}, -0.84)).good);
  EXPECT_TRUE(is_good_point(ProblemParams(5, 2.0), geometry({1, -1, 1, -1}, -0.85)).good);
  EXPECT_THROW(is_good_point(ProblemParams(5, 3.0), geometry({1, 1, 1, 1})), RegimeError);
  EXPECT_THROW(is_good_point(ProblemParams(3, 2.5), geometry({1, 1})), RegimeError);
}

TEST(GoodPoint, PositiveMeanCurvatureAlwaysGoodProperty) {
  Gen gen(41);
  for (int i = 0; i < 300; ++i) {
    const ProblemParams pp = subcritical_params(gen);
    auto l = gen.vector(pp.N() - 1, -1.0, 3.0);
    const auto g = geometry(l, gen.uniform(-3.0, 3.0));
    if (g.mean_curvature() > 1e-6) {
      EXPECT_TRUE(is_good_point(pp, g).good);
    }
  }
}

TEST(GoodPoint, MatchesSignOfEProperty) {
  Gen gen(42);
  int checked = 0;
  for (int i = 0; i < 2000; ++i) {
    const int N = gen.integer(5, 12);
    const double p = gen.uniform(2.0 + 1e-3, (N + 2) / 3.0 - 1e-3);
    if (p >= (N + 1) / 2.0) continue;
    auto l = gen.vector(N - 1, -2.0, 2.0);
    double mean = 0.0;
    for (double v : l) mean += v / (N - 1);
    for (double& v : l) v -= mean;
    auto g = geometry(l, gen.uniform(-2.0, 2.0));
    if (std::abs(g.mean_curvature()) > 1e-12) continue;
    const ProblemParams pp(N, p);
    EXPECT_EQ(is_good_point(pp, g).good, second_order_E(pp, g) < 0.0);
    ++checked;
  }
  EXPECT_GT(checked, 100);
}

TEST(GoodPoint, ExpansionBelowOneNearZeroProperty) {
  Gen gen(43);
  int good = 0;
  std::vector<double> grid;
  for (int k = 0; k <= 32; ++k) grid.push_back(1e-6 * std::pow(10.0, k / 8.0));
  for (int i = 0; i < 3000 && good < 200; ++i) {
    const ProblemParams pp = subcritical_params(gen);
    if (std::abs(pp.p() - 2.0) < 0.1) continue;
    auto l = gen.vector(pp.N() - 1, -1.0, 1.0);
    if (gen.uniform(0.0, 1.0) < 0.5) {
      double mean = 0.0;
      for (double v : l) mean += v / (pp.N() - 1);
      for (double& v : l) v -= mean;
    }
    // |h0| >= 0.2 keeps the mass term visible on the grid when H = 0.
    const double h0 = gen.uniform(0.0, 1.0) < 0.7 ? gen.uniform(-2.0, -0.2) : gen.uniform(0.2, 1.0);
    const auto g = geometry(l, h0);
    if (!is_good_point(pp, g).good) continue;
    ++good;
    // The expansion is below one at the smallest grid point, so some eps_0 works.
    EXPECT_LT(rayleigh_expansion(pp, g, grid.front()), 1.0)
        << "N = " << pp.N() << ", p = " << pp.p();
  }
  EXPECT_GT(good, 50);
}

TEST(ConstantTestFunction, Examples) {
  EXPECT_LT(rel_err(constant_testfunction_bound(1.0, 4.0, 1.0, ProblemParams(2, 1.5)), 0.5),
            1e-15);
  EXPECT_EQ(constant_testfunction_bound(1.0, 4.0, 0.0, ProblemParams(2, 1.5)), 0.0);
  const double pi = std::numbers::pi;
  EXPECT_LT(rel_err(constant_testfunction_bound(pi, 2 * pi, pi, ProblemParams(2, 1.5)),
                    1.2533141373155003),
            1e-14);
  EXPECT_THROW(constant_testfunction_bound(0.0, 4.0, 1.0, ProblemParams(2, 1.5)),
               DomainError);
}

}  // namespace
}  // namespace sobtrace
