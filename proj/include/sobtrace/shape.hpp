#pragma once

// Optimal holes: minimize lambda_A over element unions A of measure alpha by
// alternating constrained eigen-solves with sublevel-set hole updates.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "sobtrace/errors.hpp"
#include "sobtrace/mesh.hpp"
#include "sobtrace/steklov.hpp"

namespace sobtrace {

/// Union of triangles, indices sorted and unique.
struct HoleSet {
  std::vector<int> element_indices;
  double measure = 0.0;

  bool empty() const { return element_indices.empty(); }
  bool operator==(const HoleSet& o) const { return element_indices == o.element_indices; }
};

inline HoleSet make_hole(const Mesh& mesh, std::vector<int> elements) {
  std::sort(elements.begin(), elements.end());
  elements.erase(std::unique(elements.begin(), elements.end()), elements.end());
  HoleSet out;
  for (int e : elements) {
    if (e < 0 || static_cast<std::size_t>(e) >= mesh.num_triangles()) {
      throw DomainError("make_hole: element index " + std::to_string(e) + " out of range");
    }
    out.measure += mesh.signed_area(static_cast<std::size_t>(e));
  }
  out.element_indices = std::move(elements);
  return out;
}

/// false on every vertex of a hole element.
inline std::vector<bool> free_mask(const Mesh& mesh, const HoleSet& hole) {
  std::vector<bool> free(mesh.num_vertices(), true);
  for (int e : hole.element_indices) {
    for (int v : mesh.triangles[static_cast<std::size_t>(e)]) free[static_cast<std::size_t>(v)] = false;
  }
  return free;
}

/// Minimizes the quotient over P1 functions vanishing on the hole. The empty
/// hole without warm start is exactly minimize() with the same options.
inline EigenSolution solve_with_hole(const Mesh& mesh, const HoleSet& hole,
                                     const ProblemParams& params, const PotentialField& h,
                                     double q, const SolverOptions& opts = {},
                                     const std::vector<double>* warm_start = nullptr) {
  return minimize_constrained(mesh, params, h, q, free_mask(mesh, hole), opts, warm_start);
}

namespace detail {

inline double smallest_element_area(const Mesh& mesh) {
  double a = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) a = std::min(a, mesh.signed_area(t));
  return a;
}

/// Adds elements in the given order until the measure reaches alpha. alpha
/// below the smallest element area gives the empty hole.
inline HoleSet fill_hole(const Mesh& mesh, const std::vector<int>& order, double alpha) {
  std::vector<int> chosen;
  if (alpha >= smallest_element_area(mesh)) {
    double measure = 0.0;
    for (int e : order) {
      if (measure >= alpha) break;
      chosen.push_back(e);
      measure += mesh.signed_area(static_cast<std::size_t>(e));
    }
  }
  return make_hole(mesh, std::move(chosen));
}

inline void check_alpha(const Mesh& mesh, double alpha) {
  if (!std::isfinite(alpha) || alpha >= mesh.area()) {
    throw DomainError("shape: need alpha < mesh area " + std::to_string(mesh.area()));
  }
}

}  // namespace detail

/// Greedy sublevel set: elements by increasing mean |u| over their vertices,
/// ties by index, skipping protected ones, until the measure reaches alpha.
inline HoleSet update_hole(const Mesh& mesh, const std::vector<double>& dofs, double alpha,
                           const std::vector<bool>& protected_elements = {}) {
  detail::check_alpha(mesh, alpha);
  if (dofs.size() != mesh.num_vertices()) throw DomainError("update_hole: dofs size");
  std::vector<double> level(mesh.num_triangles());
  std::vector<int> order;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    const Triangle& tri = mesh.triangles[t];
    level[t] = (std::abs(dofs[static_cast<std::size_t>(tri[0])]) +
                std::abs(dofs[static_cast<std::size_t>(tri[1])]) +
                std::abs(dofs[static_cast<std::size_t>(tri[2])])) / 3.0;
    if (protected_elements.empty() || !protected_elements[t]) order.push_back(static_cast<int>(t));
  }
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return level[static_cast<std::size_t>(a)] < level[static_cast<std::size_t>(b)];
  });
  return detail::fill_hole(mesh, order, alpha);
}

/// Uniformly shuffled elements filled to measure alpha.
inline HoleSet random_hole(const Mesh& mesh, double alpha, std::mt19937_64& rng,
                           const std::vector<bool>& protected_elements = {}) {
  detail::check_alpha(mesh, alpha);
  std::vector<int> order;
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    if (protected_elements.empty() || !protected_elements[t]) order.push_back(static_cast<int>(t));
  }
  // Fisher-Yates with an explicit index draw keeps the result library-independent.
  for (std::size_t i = order.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(order[i - 1], order[j]);
  }
  return detail::fill_hole(mesh, order, alpha);
}

/// Elements touching a boundary vertex whose polar angle lies in [theta0, theta1]
/// (radians, around the origin): the free arc kept outside every hole.
inline std::vector<bool> boundary_arc_elements(const Mesh& mesh, double theta0, double theta1) {
  const std::vector<bool> on_boundary = mesh.boundary_vertex_mask();
  std::vector<bool> out(mesh.num_triangles(), false);
  for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
    for (int v : mesh.triangles[t]) {
      const auto i = static_cast<std::size_t>(v);
      if (!on_boundary[i]) continue;
      const double th = std::atan2(mesh.vertices[i][1], mesh.vertices[i][0]);
      if (th >= theta0 && th <= theta1) out[t] = true;
    }
  }
  return out;
}

inline SolverOptions default_shape_solver() {
  SolverOptions s;
  s.restarts = 4;  // holes make the landscape rougher than the hole-free problem
  return s;
}

struct ShapeOptions {
  SolverOptions solver = default_shape_solver();
  int max_outer = 50;
  int cycle_window = 10;
  int hole_restarts = 8;  // seeded random starting holes besides the guided one
  std::vector<bool> protected_elements;  // empty: every element may join the hole
};

struct ShapeIterate {
  HoleSet hole;
  double lambda = 0.0;
};

struct ShapeRunRecord {
  double alpha = 0.0;
  std::vector<ShapeIterate> history;  // accepted iterates of the best start, lambda non-increasing
  double lambda_alpha = 0.0;          // min over history
  HoleSet best_hole;
  std::vector<double> best_dofs;
  bool stabilized = false;  // update returned the current hole
  bool cycle_detected = false;
  bool rejected_increase = false;  // stopped because the next solve was worse
  int start = 0;                   // 0: guided start, k: k-th random start
  int failed_starts = 0;           // random starts that were infeasible or did not converge
};

namespace detail {

/// Solve / update alternation from one starting hole.
inline ShapeRunRecord alternate(const Mesh& mesh, double alpha, HoleSet hole,
                                const ProblemParams& params, const PotentialField& h, double q,
                                const ShapeOptions& opts, const std::vector<double>* guide) {
  ShapeRunRecord rec;
  rec.alpha = alpha;
  std::deque<HoleSet> window;
  std::vector<double> warm;
  if (guide) warm = *guide;
  for (int outer = 0; outer < opts.max_outer; ++outer) {
    EigenSolution sol =
        solve_with_hole(mesh, hole, params, h, q, opts.solver, warm.empty() ? nullptr : &warm);
    if (!rec.history.empty() && sol.lambda > rec.history.back().lambda) {
      rec.rejected_increase = true;
      break;
    }
    rec.history.push_back({hole, sol.lambda});
    rec.lambda_alpha = sol.lambda;
    rec.best_hole = hole;
    rec.best_dofs = sol.dofs;
    HoleSet next = update_hole(mesh, sol.dofs, alpha, opts.protected_elements);
    if (next == hole) {
      rec.stabilized = true;
      break;
    }
    if (std::find(window.begin(), window.end(), next) != window.end()) {
      rec.cycle_detected = true;
      break;
    }
    window.push_back(hole);
    if (static_cast<int>(window.size()) > opts.cycle_window) window.pop_front();
    hole = std::move(next);
    warm = std::move(sol.dofs);
  }
  return rec;
}

}  // namespace detail

/// Alternates solve_with_hole and update_hole from several starting holes and
/// keeps the lowest lambda (earliest start on ties). The guided start is the
/// sublevel hole of warm_start (or of the hole-free minimizer); the others are
/// random holes drawn from a stream seeded by opts.solver.seed. Within a start
/// only non-increasing lambdas are accepted, and a hole seen within the last
/// cycle_window iterates stops it.
inline ShapeRunRecord optimize_shape(const Mesh& mesh, double alpha, const ProblemParams& params,
                                     const PotentialField& h, double q,
                                     const ShapeOptions& opts = {},
                                     const std::vector<double>* warm_start = nullptr) {
  detail::check_alpha(mesh, alpha);
  std::vector<double> guide;
  if (warm_start) {
    guide = *warm_start;
  } else {
    guide = minimize(mesh, params, h, q, opts.solver).dofs;
  }
  const HoleSet first = update_hole(mesh, guide, alpha, opts.protected_elements);
  if (first.empty()) {
    // Below one element: the hole-free problem, solved from the standard start.
    ShapeRunRecord rec;
    rec.alpha = alpha;
    EigenSolution sol = solve_with_hole(mesh, first, params, h, q, opts.solver);
    rec.history.push_back({first, sol.lambda});
    rec.lambda_alpha = sol.lambda;
    rec.best_hole = first;
    rec.best_dofs = std::move(sol.dofs);
    rec.stabilized = true;
    return rec;
  }
  ShapeRunRecord best = detail::alternate(mesh, alpha, first, params, h, q, opts, &guide);
  // Offset keeps this stream apart from baselines drawn with the bare seed.
  std::mt19937_64 rng(opts.solver.seed + 0x9E3779B97F4A7C15ULL);
  int failed = 0;
  for (int k = 1; k <= opts.hole_restarts; ++k) {
    const HoleSet start = random_hole(mesh, alpha, rng, opts.protected_elements);
    try {
      ShapeRunRecord rec = detail::alternate(mesh, alpha, start, params, h, q, opts, nullptr);
      if (rec.lambda_alpha < best.lambda_alpha) {
        best = std::move(rec);
        best.start = k;
      }
    } catch (const InfeasibleError&) {
      ++failed;
    } catch (const IterationError&) {
      ++failed;
    }
  }
  best.failed_starts = failed;
  return best;
}

/// lambda(alpha) for each alpha, solved in decreasing order: each run starts
/// from the previous minimizer, whose zero set contains the new hole, so the
/// curve is non-decreasing in alpha by construction. alpha = 0 rows are the
/// hole-free minimize() with opts.solver.
inline std::vector<ShapeRunRecord> alpha_sweep(const Mesh& mesh, std::vector<double> alphas,
                                               const ProblemParams& params,
                                               const PotentialField& h, double q,
                                               const ShapeOptions& opts = {}) {
  for (double a : alphas) detail::check_alpha(mesh, a);
  std::vector<std::size_t> order(alphas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return alphas[a] > alphas[b]; });
  std::vector<ShapeRunRecord> out(alphas.size());
  const std::vector<double>* warm = nullptr;
  for (std::size_t k : order) {
    out[k] = optimize_shape(mesh, alphas[k], params, h, q, opts, warm);
    warm = &out[k].best_dofs;
  }
  return out;
}

/// "element_index" rows, then a summary comment "# alpha,lambda".
inline void write_hole_csv(std::ostream& os, const ShapeRunRecord& rec) {
  std::ostringstream buf;
  buf.precision(15);
  buf << "element_index\n";
  for (int e : rec.best_hole.element_indices) buf << e << '\n';
  buf << "# alpha,lambda\n# " << rec.alpha << ',' << rec.lambda_alpha << '\n';
  os << buf.str();
}

}  // namespace sobtrace
