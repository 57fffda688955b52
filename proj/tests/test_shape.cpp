#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "brute_force.hpp"
#include "sobtrace/shape.hpp"
#include "test_support.hpp"

namespace sobtrace {
namespace {

using testing::Gen;
using testing::rel_err;

const ProblemParams kP15(2, 1.5);

TEST(HoleSet, MakeSortsAndMeasures) {
  const Mesh m = generate_mesh(MeshShape::kSquare, 2);
  const HoleSet hole = make_hole(m, {6, 1, 6});
  EXPECT_EQ(hole.element_indices, (std::vector<int>{1, 6}));
  EXPECT_NEAR(hole.measure, 0.25, 1e-15);
  EXPECT_THROW(make_hole(m, {8}), DomainError);
  const std::vector<bool> free = free_mask(m, hole);
  EXPECT_EQ(free, (std::vector<bool>{false, true, true, false, false, false, true, true, false}));
}

TEST(SolveWithHole, EmptyHoleIsMinimize) {
  const Mesh m = generate_mesh(MeshShape::kDisk, 3);
  const PotentialField h = PotentialField::constant(m, 1.0);
  const EigenSolution a = minimize(m, kP15, h, 2.0);
  const EigenSolution b = solve_with_hole(m, HoleSet{}, kP15, h, 2.0);
  EXPECT_EQ(a.lambda, b.lambda);
  EXPECT_EQ(a.dofs, b.dofs);
}

TEST(SolveWithHole, MatchesBruteForceOnDiagonalBand) {
  // Square, resolution 2, hole = the two diagonal triangles of the lower-left and
  // upper-right cells. Free dofs are the corners 1, 2, 6, 7.
  const Mesh m = generate_mesh(MeshShape::kSquare, 2);
  const PotentialField h = PotentialField::constant(m, 1.0);
  const HoleSet hole = make_hole(m, {1, 6});
  const double q = 2.0;
  const detail::Discretization disc(m, h, 1.5, q);
  const int free_ids[4] = {1, 2, 6, 7};
  auto f = [&](const std::vector<double>& x) {
    std::vector<double> u(m.num_vertices(), 0.0);
    for (int k = 0; k < 4; ++k) u[static_cast<std::size_t>(free_ids[k])] = x[static_cast<std::size_t>(k)];
    const auto parts = disc.evaluate(u);
    if (!(parts.boundary > 0.0)) return std::numeric_limits<double>::infinity();
    return disc.quotient(parts);
  };
  const testing::BruteForceResult bf = testing::brute_force_minimum(f, 4, 41);
  const EigenSolution sol = solve_with_hole(m, hole, kP15, h, q);
  EXPECT_LT(rel_err(sol.lambda, bf.value), 1e-4);
  EXPECT_LE(sol.lambda, bf.value * (1 + 1e-9));
  for (int v : {0, 3, 4, 5, 8}) EXPECT_EQ(sol.dofs[static_cast<std::size_t>(v)], 0.0);
  EXPECT_GT(sol.lambda, minimize(m, kP15, h, q).lambda);
}

TEST(SolveWithHole, InfeasibleWhenEveryBoundaryVertexIsFixed) {
  const Mesh m = generate_mesh(MeshShape::kSquare, 1);
  const PotentialField h = PotentialField::constant(m, 1.0);
  EXPECT_THROW(solve_with_hole(m, make_hole(m, {0, 1}), kP15, h, 2.0), InfeasibleError);
}

TEST(UpdateHole, PicksZerosFirstAndIsIdempotent) {
  const Mesh m = generate_mesh(MeshShape::kSquare, 2);
  std::vector<double> u(m.num_vertices(), 1.0);
  for (int v : {0, 3, 4, 5, 8}) u[static_cast<std::size_t>(v)] = 0.0;
  const HoleSet hole = update_hole(m, u, 0.2);
  // Mean |u| is zero on elements 1 and 6 only; 0.2 needs two of area 0.125.
  EXPECT_EQ(hole.element_indices, (std::vector<int>{1, 6}));
  EXPECT_EQ(update_hole(m, u, 0.2), hole);
  EXPECT_TRUE(update_hole(m, u, 0.125).element_indices == std::vector<int>{1});
  EXPECT_TRUE(update_hole(m, u, 0.0).empty());
  EXPECT_TRUE(update_hole(m, u, 0.12).empty());
  EXPECT_THROW(update_hole(m, u, 1.0), DomainError);
}

TEST(UpdateHole, SublevelSetProperty) {
  Gen gen(91);
  for (int trial = 0; trial < 50; ++trial) {
    const Mesh m = generate_mesh(trial % 2 ? MeshShape::kDisk : MeshShape::kAnnulus, 3);
    const std::vector<double> u = gen.vector(m.num_vertices(), -1.0, 1.0);
    const double alpha = gen.uniform(0.02, 0.5) * m.area();
    const HoleSet hole = update_hole(m, u, alpha);
    auto level = [&](std::size_t t) {
      double s = 0.0;
      for (int v : m.triangles[t]) s += std::abs(u[static_cast<std::size_t>(v)]);
      return s / 3.0;
    };
    double inside = 0.0, outside = std::numeric_limits<double>::infinity(), max_area = 0.0;
    std::vector<bool> in(m.num_triangles(), false);
    for (int e : hole.element_indices) in[static_cast<std::size_t>(e)] = true;
    for (std::size_t t = 0; t < m.num_triangles(); ++t) {
      (in[t] ? inside : outside) = in[t] ? std::max(inside, level(t)) : std::min(outside, level(t));
      max_area = std::max(max_area, m.signed_area(t));
    }
    EXPECT_LE(inside, outside);
    EXPECT_GE(hole.measure, alpha);
    EXPECT_LT(hole.measure, alpha + max_area);
    EXPECT_EQ(update_hole(m, u, alpha), hole);
  }
}

TEST(UpdateHole, ProtectedElementsStayOut) {
  const Mesh m = generate_mesh(MeshShape::kDisk, 3);
  const std::vector<bool> arc = boundary_arc_elements(m, -0.5, 0.5);
  std::size_t count = 0;
  for (bool b : arc) count += b;
  EXPECT_GT(count, 0u);
  std::mt19937_64 rng(3);
  const std::vector<double> u(m.num_vertices(), 1.0);
  for (const HoleSet& hole : {update_hole(m, u, 0.4 * m.area(), arc),
                              random_hole(m, 0.4 * m.area(), rng, arc)}) {
    for (int e : hole.element_indices) EXPECT_FALSE(arc[static_cast<std::size_t>(e)]);
  }
}

TEST(RandomHole, MeasureAndDeterminism) {
  const Mesh m = generate_mesh(MeshShape::kDisk, 3);
  std::mt19937_64 a(7), b(7);
  const HoleSet ha = random_hole(m, 0.3, a), hb = random_hole(m, 0.3, b);
  EXPECT_EQ(ha, hb);
  EXPECT_GE(ha.measure, 0.3);
}

class ShapeRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    mesh_ = new Mesh(generate_mesh(MeshShape::kDisk, 3));
    h_ = new PotentialField(PotentialField::constant(*mesh_, 1.0));
    base_ = new EigenSolution(minimize(*mesh_, kP15, *h_, kQ, ShapeOptions{}.solver));
    const double area = mesh_->area();
    sweep_ = new std::vector<ShapeRunRecord>(
        alpha_sweep(*mesh_, {0.0, 0.05 * area, 0.1 * area, 0.2 * area, 0.3 * area}, kP15, *h_, kQ));
  }
  static void TearDownTestSuite() {
    delete sweep_;
    delete base_;
    delete h_;
    delete mesh_;
  }
  static constexpr double kQ = 3.0;
  static Mesh* mesh_;
  static PotentialField* h_;
  static EigenSolution* base_;
  static std::vector<ShapeRunRecord>* sweep_;
};

Mesh* ShapeRun::mesh_ = nullptr;
PotentialField* ShapeRun::h_ = nullptr;
EigenSolution* ShapeRun::base_ = nullptr;
std::vector<ShapeRunRecord>* ShapeRun::sweep_ = nullptr;

TEST_F(ShapeRun, HistoryIsMonotoneAndRecordConsistent) {
  for (const ShapeRunRecord& rec : *sweep_) {
    ASSERT_FALSE(rec.history.empty());
    for (std::size_t i = 1; i < rec.history.size(); ++i) {
      EXPECT_LE(rec.history[i].lambda, rec.history[i - 1].lambda);
    }
    EXPECT_EQ(rec.lambda_alpha, rec.history.back().lambda);
    EXPECT_EQ(rec.best_hole, rec.history.back().hole);
    // Recorded lambda is the quotient of the recorded dofs.
    EXPECT_LT(rel_err(rayleigh_quotient(*mesh_, rec.best_dofs, kP15, *h_, kQ), rec.lambda_alpha),
              1e-12);
    for (int e : rec.best_hole.element_indices) {
      for (int v : mesh_->triangles[static_cast<std::size_t>(e)]) {
        EXPECT_EQ(rec.best_dofs[static_cast<std::size_t>(v)], 0.0);
      }
    }
    EXPECT_TRUE(rec.stabilized || rec.cycle_detected || rec.rejected_increase ||
                static_cast<int>(rec.history.size()) == ShapeOptions{}.max_outer);
  }
}

TEST_F(ShapeRun, MeasureWithinOneElement) {
  double max_area = 0.0;
  for (std::size_t t = 0; t < mesh_->num_triangles(); ++t) {
    max_area = std::max(max_area, mesh_->signed_area(t));
  }
  for (const ShapeRunRecord& rec : *sweep_) {
    if (rec.alpha == 0.0) continue;
    EXPECT_GE(rec.best_hole.measure, rec.alpha);
    EXPECT_LT(rec.best_hole.measure, rec.alpha + max_area);
  }
}

TEST_F(ShapeRun, MonotoneInAlphaAndAboveHoleFree) {
  EXPECT_EQ((*sweep_)[0].lambda_alpha, base_->lambda);
  EXPECT_TRUE((*sweep_)[0].best_hole.empty());
  for (std::size_t k = 1; k < sweep_->size(); ++k) {
    EXPECT_GE((*sweep_)[k].lambda_alpha, (*sweep_)[k - 1].lambda_alpha) << "k = " << k;
  }
}

TEST_F(ShapeRun, BeatsRandomHoles) {
  std::mt19937_64 rng(11);
  for (std::size_t k = 1; k < sweep_->size(); k += 2) {
    const ShapeRunRecord& rec = (*sweep_)[k];
    for (int i = 0; i < 20; ++i) {
      const HoleSet hole = random_hole(*mesh_, rec.alpha, rng);
      const EigenSolution sol = solve_with_hole(*mesh_, hole, kP15, *h_, kQ, ShapeOptions{}.solver);
      EXPECT_LE(rec.lambda_alpha, sol.lambda * (1 + 1e-9)) << "alpha = " << rec.alpha;
    }
  }
}

TEST_F(ShapeRun, RandomStartsNeverHurt) {
  ShapeOptions guided;
  guided.hole_restarts = 0;
  for (double f : {0.05, 0.3}) {
    const double alpha = f * mesh_->area();
    const ShapeRunRecord g = optimize_shape(*mesh_, alpha, kP15, *h_, kQ, guided);
    const ShapeRunRecord all = optimize_shape(*mesh_, alpha, kP15, *h_, kQ);
    EXPECT_EQ(g.start, 0);
    EXPECT_LE(all.lambda_alpha, g.lambda_alpha);
    EXPECT_EQ(all.start == 0, all.lambda_alpha == g.lambda_alpha);
  }
}

TEST_F(ShapeRun, TinyAlphaGivesHoleFreeLambda) {
  const ShapeRunRecord rec = optimize_shape(*mesh_, 1e-6, kP15, *h_, kQ);
  EXPECT_TRUE(rec.best_hole.empty());
  EXPECT_EQ(rec.lambda_alpha, base_->lambda);
}

TEST_F(ShapeRun, Deterministic) {
  const double alpha = 0.1 * mesh_->area();
  const ShapeRunRecord a = optimize_shape(*mesh_, alpha, kP15, *h_, kQ);
  const ShapeRunRecord b = optimize_shape(*mesh_, alpha, kP15, *h_, kQ);
  EXPECT_EQ(a.lambda_alpha, b.lambda_alpha);
  EXPECT_EQ(a.best_hole, b.best_hole);
  std::ostringstream sa, sb;
  write_hole_csv(sa, a);
  write_hole_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());
  EXPECT_EQ(sa.str().rfind("element_index\n", 0), 0u);
}

}  // namespace
}  // namespace sobtrace
