#pragma once

// P1 finite elements for the trace Rayleigh quotient on planar meshes (N = 2):
//   Q(u) = (int |grad u|^p + h |u|^p) / (int_boundary |u|^q)^{p/q},  1 < q <= p_*.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "sobtrace/errors.hpp"
#include "sobtrace/expansion.hpp"
#include "sobtrace/extremal.hpp"
#include "sobtrace/mesh.hpp"

namespace sobtrace {

/// Potential h sampled at mesh vertices, interpolated linearly.
struct PotentialField {
  std::vector<double> values;

  static PotentialField constant(const Mesh& mesh, double c) {
    return {std::vector<double>(mesh.num_vertices(), c)};
  }
  double min() const {
    return values.empty() ? 0.0 : *std::min_element(values.begin(), values.end());
  }
};

struct CoercivityWitness {
  bool certified = false;
  double constant = 0.0;  // c with int |grad u|^p + h|u|^p >= c ||u||_{W^{1,p}}^p
  std::string note;
};

/// min h > 0 gives c = min(1, min h); otherwise the case is flagged, not decided.
inline CoercivityWitness coercivity_witness(const PotentialField& h) {
  const double lo = h.min();
  if (lo > 0.0) return {true, std::min(1.0, lo), "h >= " + std::to_string(lo) + " > 0"};
  return {false, 0.0, "min h <= 0: coercivity not certified"};
}

/// Search direction and first trial step; Armijo backtracking guards all of them.
///   kArmijo: H^1 Riesz gradient, step doubled after each success.
///   kBarzilaiBorwein: H^1 Riesz gradient, Barzilai-Borwein trial step.
///   kLinearized: direction from the p-Laplacian linearized at the iterate, trial step 1.
enum class StepRule { kArmijo, kBarzilaiBorwein, kLinearized };

struct SolverOptions {
  int max_iters = 5000;
  StepRule step_rule = StepRule::kLinearized;
  double tol = 1e-8;           // relative quotient decrease
  double residual_tol = 1e-6;  // Euler-Lagrange residual, dual norm
  std::uint64_t seed = 0;
  int restarts = 0;  // seeded random starts on top of u = 1
};

struct EigenSolution {
  double lambda = 0.0;
  std::vector<double> dofs;
  double exponent_q = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> history;  // quotient after each accepted step, first entry the start
};

namespace detail {

/// Neumaier summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    comp_ += std::abs(sum_) >= std::abs(x) ? (sum_ - t) + x : (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0, comp_ = 0.0;
};

/// Triangle rule as barycentric points and weights summing to 1 (fraction of area):
/// collapsed 5x5 Gauss-Legendre, exact for degree 8.
struct TriangleRule {
  std::vector<std::array<double, 3>> bary;
  std::vector<double> weight;
};

inline const TriangleRule& triangle_rule() {
  static const TriangleRule rule = [] {
    const double s = 2.0 * std::sqrt(10.0 / 7.0);
    const double a = std::sqrt(5.0 - s) / 3.0, b = std::sqrt(5.0 + s) / 3.0;
    const double wa = (322.0 + 13.0 * std::sqrt(70.0)) / 900.0;
    const double wb = (322.0 - 13.0 * std::sqrt(70.0)) / 900.0;
    const std::array<double, 5> x{-b, -a, 0.0, a, b};
    const std::array<double, 5> w{wb, wa, 128.0 / 225.0, wa, wb};
    TriangleRule r;
    for (std::size_t i = 0; i < 5; ++i) {
      const double xi = 0.5 * (1.0 + x[i]);
      for (std::size_t j = 0; j < 5; ++j) {
        const double eta = (1.0 - xi) * 0.5 * (1.0 + x[j]);
        r.bary.push_back({1.0 - xi - eta, xi, eta});
        r.weight.push_back(w[i] * w[j] * (1.0 - xi) * 0.5);
      }
    }
    return r;
  }();
  return rule;
}

/// sign(v) |v|^{e}.
inline double signed_pow(double v, double e) {
  return v == 0.0 ? 0.0 : std::copysign(std::pow(std::abs(v), e), v);
}

/// int_0^1 |a + (b - a)s|^q ds and its partials in a and b. Exact through the
/// antiderivative x|x|^q / (q+1); three-point Gauss when a and b are close, where
/// the integrand is smooth and the closed form cancels.
struct EdgePower {
  double value, da, db;
};

inline EdgePower edge_power(double a, double b, double q) {
  const double d = b - a;
  const double scale = std::max(std::abs(a), std::abs(b));
  if (scale == 0.0) return {0.0, 0.0, 0.0};
  if (std::abs(d) <= 0.02 * scale) {
    static const double g = 0.5 * std::sqrt(0.6);
    const std::array<double, 3> s{0.5 - g, 0.5, 0.5 + g};
    const std::array<double, 3> w{5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    EdgePower e{0.0, 0.0, 0.0};
    for (std::size_t k = 0; k < 3; ++k) {
      const double v = a + d * s[k];
      e.value += w[k] * std::pow(std::abs(v), q);
      const double dv = w[k] * q * signed_pow(v, q - 1.0);
      e.da += dv * (1.0 - s[k]);
      e.db += dv * s[k];
    }
    return e;
  }
  const double Ga = a * std::pow(std::abs(a), q) / (q + 1.0);
  const double Gb = b * std::pow(std::abs(b), q) / (q + 1.0);
  const double mean = (Gb - Ga) / d;
  return {mean, (mean - std::pow(std::abs(a), q)) / d,
          (std::pow(std::abs(b), q) - mean) / d};
}

/// Precomputed element data for one (mesh, h, p, q).
class Discretization {
 public:
  struct Parts {
    double gradient = 0.0;
    double mass = 0.0;
    double boundary = 0.0;
  };

  Discretization(const Mesh& mesh, const PotentialField& h, double p, double q)
      : mesh_(mesh), p_(p), q_(q) {
    if (h.values.size() != mesh.num_vertices()) {
      throw DomainError("PotentialField: need one value per mesh vertex");
    }
    const TriangleRule& rule = triangle_rule();
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
      const Triangle& tri = mesh.triangles[t];
      const Vertex& a = mesh.vertices[static_cast<std::size_t>(tri[0])];
      const Vertex& b = mesh.vertices[static_cast<std::size_t>(tri[1])];
      const Vertex& c = mesh.vertices[static_cast<std::size_t>(tri[2])];
      const double area = mesh.signed_area(t);
      if (!(area > 0.0)) throw DomainError("Discretization: triangle with nonpositive area");
      Element e;
      e.area = area;
      // grad phi_k = rot90(opposite edge) / (2 area).
      const std::array<const Vertex*, 3> v{&a, &b, &c};
      for (std::size_t k = 0; k < 3; ++k) {
        const Vertex& p1 = *v[(k + 1) % 3];
        const Vertex& p2 = *v[(k + 2) % 3];
        e.grad[k] = {(p1[1] - p2[1]) / (2.0 * area), (p2[0] - p1[0]) / (2.0 * area)};
      }
      for (std::size_t i = 0; i < rule.weight.size(); ++i) {
        double hv = 0.0;
        for (std::size_t k = 0; k < 3; ++k) {
          hv += rule.bary[i][k] * h.values[static_cast<std::size_t>(tri[k])];
        }
        e.h_weight.push_back(rule.weight[i] * area * hv);
      }
      elements_.push_back(std::move(e));
    }
    for (const Edge& ed : mesh.boundary_edges) edge_length_.push_back(mesh.edge_length(ed));
    vertex_elements_.resize(mesh.num_vertices());
    vertex_edges_.resize(mesh.num_vertices());
    for (std::size_t t = 0; t < mesh.num_triangles(); ++t) {
      for (int v : mesh.triangles[t]) vertex_elements_[static_cast<std::size_t>(v)].push_back(t);
    }
    for (std::size_t k = 0; k < mesh.boundary_edges.size(); ++k) {
      for (int v : mesh.boundary_edges[k]) vertex_edges_[static_cast<std::size_t>(v)].push_back(k);
    }
  }

  double p() const { return p_; }
  double q() const { return q_; }
  const Mesh& mesh() const { return mesh_; }

  /// Integrals, optionally with gradients of gradient + mass (dF) and boundary (dB).
  Parts evaluate(std::span<const double> u, std::vector<double>* dF = nullptr,
                 std::vector<double>* dB = nullptr) const {
    if (u.size() != mesh_.num_vertices()) throw DomainError("dofs size differs from mesh");
    if (dF) dF->assign(u.size(), 0.0);
    if (dB) dB->assign(u.size(), 0.0);
    Sums out;
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const Triangle& tri = mesh_.triangles[t];
      std::array<double, 3> local{0.0, 0.0, 0.0};
      element_terms(t, u, out, dF ? &local : nullptr);
      if (dF) {
        for (std::size_t k = 0; k < 3; ++k) (*dF)[static_cast<std::size_t>(tri[k])] += local[k];
      }
    }
    for (std::size_t k = 0; k < mesh_.boundary_edges.size(); ++k) {
      const Edge& ed = mesh_.boundary_edges[k];
      const std::size_t i = static_cast<std::size_t>(ed[0]), j = static_cast<std::size_t>(ed[1]);
      const EdgePower ep = edge_power(u[i], u[j], q_);
      out.boundary.add(edge_length_[k] * ep.value);
      if (dB) {
        (*dB)[i] += edge_length_[k] * ep.da;
        (*dB)[j] += edge_length_[k] * ep.db;
      }
    }
    return {out.gradient.value(), out.mass.value(), out.boundary.value()};
  }

  /// Partial derivative of F/p - lambda B/q in dof i, from incident cells only.
  double local_residual(std::span<const double> u, std::size_t i, double lambda) const {
    double dF = 0.0, dB = 0.0;
    Sums scratch;
    for (std::size_t t : vertex_elements_[i]) {
      std::array<double, 3> local{0.0, 0.0, 0.0};
      element_terms(t, u, scratch, &local);
      const Triangle& tri = mesh_.triangles[t];
      for (std::size_t k = 0; k < 3; ++k) {
        if (static_cast<std::size_t>(tri[k]) == i) dF += local[k];
      }
    }
    for (std::size_t k : vertex_edges_[i]) {
      const Edge& ed = mesh_.boundary_edges[k];
      const std::size_t a = static_cast<std::size_t>(ed[0]), b = static_cast<std::size_t>(ed[1]);
      const EdgePower ep = edge_power(u[a], u[b], q_);
      if (a == i) dB += edge_length_[k] * ep.da;
      if (b == i) dB += edge_length_[k] * ep.db;
    }
    return dF / p_ - lambda * dB / q_;
  }

 private:
  // Compensated sums keep quotient comparisons faithful near convergence.
  struct Sums {
    CompensatedSum gradient, mass, boundary;
  };

  void element_terms(std::size_t t, std::span<const double> u, Sums& out,
                     std::array<double, 3>* local) const {
    const TriangleRule& rule = triangle_rule();
    const Element& e = elements_[t];
    const Triangle& tri = mesh_.triangles[t];
    const std::array<double, 3> uk{u[static_cast<std::size_t>(tri[0])],
                                   u[static_cast<std::size_t>(tri[1])],
                                   u[static_cast<std::size_t>(tri[2])]};
    double gx = 0.0, gy = 0.0;
    for (std::size_t k = 0; k < 3; ++k) {
      gx += uk[k] * e.grad[k][0];
      gy += uk[k] * e.grad[k][1];
    }
    const double g2 = gx * gx + gy * gy;
    out.gradient.add(e.area * std::pow(g2, 0.5 * p_));
    if (local && g2 > 0.0) {
      const double c = e.area * p_ * std::pow(g2, 0.5 * p_ - 1.0);
      for (std::size_t k = 0; k < 3; ++k) {
        (*local)[k] += c * (gx * e.grad[k][0] + gy * e.grad[k][1]);
      }
    }
    for (std::size_t i = 0; i < e.h_weight.size(); ++i) {
      if (e.h_weight[i] == 0.0) continue;
      const auto& lam = rule.bary[i];
      const double v = lam[0] * uk[0] + lam[1] * uk[1] + lam[2] * uk[2];
      out.mass.add(e.h_weight[i] * std::pow(std::abs(v), p_));
      if (local) {
        const double c = e.h_weight[i] * p_ * signed_pow(v, p_ - 1.0);
        for (std::size_t k = 0; k < 3; ++k) (*local)[k] += c * lam[k];
      }
    }
  }

 public:

  double quotient(const Parts& parts) const {
    if (!(parts.boundary > 0.0)) {
      throw DomainError("rayleigh_quotient: boundary trace vanishes");
    }
    return (parts.gradient + parts.mass) / std::pow(parts.boundary, p_ / q_);
  }

  /// H^1 Gram matrix (stiffness + P1 mass) over all vertices.
  Eigen::SparseMatrix<double> gram() const {
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const Element& e = elements_[t];
      const Triangle& tri = mesh_.triangles[t];
      for (std::size_t a = 0; a < 3; ++a) {
        for (std::size_t b = 0; b < 3; ++b) {
          const double k = e.area * (e.grad[a][0] * e.grad[b][0] + e.grad[a][1] * e.grad[b][1]);
          const double m = e.area * (a == b ? 2.0 : 1.0) / 12.0;
          trip.emplace_back(tri[a], tri[b], k + m);
        }
      }
    }
    const auto n = static_cast<Eigen::Index>(mesh_.num_vertices());
    Eigen::SparseMatrix<double> g(n, n);
    g.setFromTriplets(trip.begin(), trip.end());
    return g;
  }

  /// Preconditioner for int |grad u|^p + |h| |u|^p at u: stiffness weighted by
  /// c (|grad u|^2 + d^2)^{(p-2)/2} per element with c = p max(1, p-1), lumped
  /// mass weighted likewise in |u|. d regularizes flat elements.
  Eigen::SparseMatrix<double> linearized(std::span<const double> u) const {
    double gmax = 0.0, umax = 0.0;
    std::vector<double> g2(elements_.size());
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const Element& e = elements_[t];
      const Triangle& tri = mesh_.triangles[t];
      double gx = 0.0, gy = 0.0;
      for (std::size_t k = 0; k < 3; ++k) {
        const double uk = u[static_cast<std::size_t>(tri[k])];
        gx += uk * e.grad[k][0];
        gy += uk * e.grad[k][1];
        umax = std::max(umax, std::abs(uk));
      }
      g2[t] = gx * gx + gy * gy;
      gmax = std::max(gmax, g2[t]);
    }
    const double dg2 = 1e-20 * std::max(gmax, umax * umax);
    const double du2 = 1e-20 * umax * umax;
    // Secant weight for p < 2: the Newton weight p(p-1) sends u to -u near zeros.
    const double c = p_ * std::max(1.0, p_ - 1.0);
    std::vector<Eigen::Triplet<double>> trip;
    for (std::size_t t = 0; t < elements_.size(); ++t) {
      const Element& e = elements_[t];
      const Triangle& tri = mesh_.triangles[t];
      const double w = c * std::pow(g2[t] + dg2, 0.5 * p_ - 1.0);
      double habs = 0.0;
      for (double hw : e.h_weight) habs += std::abs(hw);
      for (std::size_t a = 0; a < 3; ++a) {
        const double ua = u[static_cast<std::size_t>(tri[a])];
        const double lumped = c * habs / 3.0 * std::pow(ua * ua + du2, 0.5 * p_ - 1.0);
        trip.emplace_back(tri[a], tri[a], lumped);
        for (std::size_t b = 0; b < 3; ++b) {
          const double k = e.area * (e.grad[a][0] * e.grad[b][0] + e.grad[a][1] * e.grad[b][1]);
          trip.emplace_back(tri[a], tri[b], w * k);
        }
      }
    }
    const auto n = static_cast<Eigen::Index>(mesh_.num_vertices());
    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trip.begin(), trip.end());
    return a;
  }

 private:
  struct Element {
    double area = 0.0;
    std::array<std::array<double, 2>, 3> grad{};
    std::vector<double> h_weight;  // rule weight * area * h at each rule point
  };

  const Mesh& mesh_;
  double p_, q_;
  std::vector<Element> elements_;
  std::vector<double> edge_length_;
  std::vector<std::vector<std::size_t>> vertex_elements_, vertex_edges_;
};

inline void check_exponents(const ProblemParams& params, double q) {
  if (params.N() != 2) throw DomainError("steklov: finite elements are planar, need N = 2");
  const double pstar = params.critical_exponent();
  if (!(q > 1.0) || q > pstar * (1.0 + 1e-14)) {
    throw DomainError("steklov: need 1 < q <= p_* = " + std::to_string(pstar));
  }
}

/// Dofs that may move, and the H^1 Riesz map restricted to them.
class FreeSpace {
 public:
  FreeSpace(const Discretization& disc, const std::vector<bool>& free) : free_(free) {
    const std::size_t n = free.size();
    index_.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
      if (free[i]) {
        index_[i] = static_cast<long>(dofs_.size());
        dofs_.push_back(i);
      }
    }
    if (dofs_.empty()) throw InfeasibleError("steklov: no free dofs");
    gram_ = restrict_matrix(disc.gram());
    solver_.compute(gram_);
    if (solver_.info() != Eigen::Success) throw DomainError("steklov: Gram matrix factorization failed");
  }

  Eigen::SparseMatrix<double> restrict_matrix(const Eigen::SparseMatrix<double>& full) const {
    std::vector<Eigen::Triplet<double>> trip;
    for (int k = 0; k < full.outerSize(); ++k) {
      for (Eigen::SparseMatrix<double>::InnerIterator it(full, k); it; ++it) {
        const long r = index_[static_cast<std::size_t>(it.row())];
        const long c = index_[static_cast<std::size_t>(it.col())];
        if (r >= 0 && c >= 0) trip.emplace_back(r, c, it.value());
      }
    }
    const auto m = static_cast<Eigen::Index>(dofs_.size());
    Eigen::SparseMatrix<double> out(m, m);
    out.setFromTriplets(trip.begin(), trip.end());
    return out;
  }

  std::size_t size() const { return dofs_.size(); }
  const std::vector<std::size_t>& dofs() const { return dofs_; }

  Eigen::VectorXd restrict(const std::vector<double>& v) const {
    Eigen::VectorXd out(static_cast<Eigen::Index>(dofs_.size()));
    for (std::size_t k = 0; k < dofs_.size(); ++k) out[static_cast<Eigen::Index>(k)] = v[dofs_[k]];
    return out;
  }

  void add_to(std::vector<double>& u, const Eigen::VectorXd& d, double t) const {
    for (std::size_t k = 0; k < dofs_.size(); ++k) u[dofs_[k]] += t * d[static_cast<Eigen::Index>(k)];
  }

  Eigen::VectorXd riesz(const Eigen::VectorXd& r) const { return solver_.solve(r); }
  const Eigen::SparseMatrix<double>& gram() const { return gram_; }

 private:
  std::vector<bool> free_;
  std::vector<long> index_;
  std::vector<std::size_t> dofs_;
  Eigen::SparseMatrix<double> gram_;
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver_;
};

/// State at a normalized iterate: quotient, its gradient over all dofs, and
/// the weak residual r = dF/p - lambda dB/q.
struct Iterate {
  std::vector<double> u;
  double lambda = 0.0;
  std::vector<double> grad;
  std::vector<double> residual;
};

inline Iterate make_iterate(const Discretization& disc, std::vector<double> u) {
  Discretization::Parts parts = disc.evaluate(u);
  if (!(parts.boundary > 0.0)) throw DomainError("steklov: boundary trace vanishes");
  // Already normalized input (a warm start) is kept bit-for-bit.
  if (std::abs(parts.boundary - 1.0) > 1e-15) {
    const double s = std::pow(parts.boundary, -1.0 / disc.q());
    for (double& x : u) x *= s;
  }
  std::vector<double> dF, dB;
  parts = disc.evaluate(u, &dF, &dB);
  Iterate it;
  it.lambda = disc.quotient(parts);
  const double B = parts.boundary;  // 1 up to rounding
  const double Bpq = std::pow(B, disc.p() / disc.q());
  it.grad.resize(u.size());
  it.residual.resize(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    it.grad[i] = (dF[i] - disc.p() / disc.q() * it.lambda * Bpq / B * dB[i]) / Bpq;
    it.residual[i] = dF[i] / disc.p() - it.lambda * dB[i] / disc.q();
  }
  it.u = std::move(u);
  return it;
}

/// Sets free values below a relative threshold to exactly zero; the first
/// threshold that changes u without raising the quotient wins.
inline std::optional<Iterate> snap_small_values(const Discretization& disc, const Iterate& cur) {
  double umax = 0.0;
  for (double x : cur.u) umax = std::max(umax, std::abs(x));
  for (double rel : {1e-9, 1e-7, 1e-5}) {
    std::vector<double> u = cur.u;
    bool changed = false;
    for (double& x : u) {
      if (x != 0.0 && std::abs(x) <= rel * umax) {
        x = 0.0;
        changed = true;
      }
    }
    if (!changed) continue;
    const Discretization::Parts parts = disc.evaluate(u);
    if (!(parts.boundary > 0.0)) continue;
    Iterate next = make_iterate(disc, std::move(u));
    if (next.lambda <= cur.lambda) return next;
  }
  return std::nullopt;
}

/// Solves the Euler-Lagrange equation dof by dof (lambda frozen) on free values
/// below 1e-6 max|u|. Their energy sits below the rounding of the quotient, so
/// descent on the quotient cannot place them.
inline std::optional<Iterate> polish_small_values(const Discretization& disc,
                                                  const FreeSpace& space, const Iterate& cur) {
  double umax = 0.0;
  for (double x : cur.u) umax = std::max(umax, std::abs(x));
  std::vector<std::size_t> small;
  for (std::size_t i : space.dofs()) {
    if (std::abs(cur.u[i]) <= 1e-6 * umax) small.push_back(i);
  }
  if (small.empty()) return std::nullopt;
  std::vector<double> u = cur.u;
  bool changed = false;
  for (int sweep = 0; sweep < 4; ++sweep) {
    for (std::size_t i : small) {
      const double x0 = u[i];
      const double r0 = disc.local_residual(u, i, cur.lambda);
      if (r0 == 0.0) continue;
      // Bracket the root on the side the residual points to, then bisect.
      const double dir = r0 > 0.0 ? -1.0 : 1.0;
      double width = std::max(2.0 * std::abs(x0), 1e-30 * umax);
      double far = x0 + dir * width;
      bool bracketed = false;
      while (width <= 1e-3 * umax) {
        u[i] = far;
        const double r = disc.local_residual(u, i, cur.lambda);
        if ((r > 0.0) != (r0 > 0.0) || r == 0.0) {
          bracketed = true;
          break;
        }
        width *= 2.0;
        far = x0 + dir * width;
      }
      if (!bracketed) {
        u[i] = x0;
        continue;
      }
      double a = x0, b = far;
      for (int k = 0; k < 200; ++k) {
        const double m = 0.5 * (a + b);
        if (m == a || m == b) break;
        u[i] = m;
        const double r = disc.local_residual(u, i, cur.lambda);
        if ((r > 0.0) == (r0 > 0.0) && r != 0.0) {
          a = m;
        } else {
          b = m;
        }
      }
      u[i] = b;
      changed |= u[i] != x0;
    }
  }
  if (!changed) return std::nullopt;
  const Discretization::Parts parts = disc.evaluate(u);
  if (!(parts.boundary > 0.0)) return std::nullopt;
  Iterate next = make_iterate(disc, std::move(u));
  if (next.lambda > cur.lambda) return std::nullopt;
  return next;
}

inline double dual_norm(const FreeSpace& space, const std::vector<double>& r) {
  const Eigen::VectorXd rf = space.restrict(r);
  return std::sqrt(std::max(0.0, rf.dot(space.riesz(rf))));
}

/// Preconditioned descent on {B(u) = 1} from one start; monotone by Armijo.
inline EigenSolution descend(const Discretization& disc, const FreeSpace& space,
                             std::vector<double> start, const SolverOptions& opts) {
  constexpr double kArmijo = 1e-4;
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr int kMaxFlatSteps = 20;
  int flat_steps = 0;
  EigenSolution sol;
  sol.exponent_q = disc.q();
  Iterate cur = make_iterate(disc, std::move(start));
  sol.history.push_back(cur.lambda);
  double res = dual_norm(space, cur.residual);
  double step = 1.0;
  Eigen::VectorXd prev_u, prev_g, prev_z, prev_d;
  double prev_gz = 0.0;
  double last_decrease = std::numeric_limits<double>::infinity();
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (res <= opts.residual_tol && last_decrease <= opts.tol) {
      sol.converged = true;
      break;
    }
    const Eigen::VectorXd g = space.restrict(cur.grad);
    Eigen::VectorXd d;
    if (opts.step_rule == StepRule::kLinearized) {
      Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> lin(
          space.restrict_matrix(disc.linearized(cur.u)) + 1e-10 * space.gram());
      Eigen::VectorXd z;
      if (lin.info() == Eigen::Success) z = lin.solve(g);
      if (lin.info() != Eigen::Success || !z.allFinite()) z = space.riesz(g);
      d = -z;
      // Polak-Ribiere+ on the preconditioned gradient, restarted when not descent.
      if (prev_z.size() == z.size() && prev_gz > 0.0) {
        const double beta = std::max(0.0, g.dot(z - prev_z) / prev_gz);
        const Eigen::VectorXd dc = d + beta * prev_d;
        if (g.dot(dc) < 0.0) d = dc;
      }
      prev_z = z;
      prev_gz = g.dot(z);
      prev_d = d;
      step = 1.0;
    } else {
      d = -space.riesz(g);
    }
    const double slope = g.dot(d);
    if (!(slope < 0.0)) {
      sol.converged = res <= opts.residual_tol;
      break;
    }
    const Eigen::VectorXd uf = space.restrict(cur.u);
    if (opts.step_rule == StepRule::kBarzilaiBorwein && prev_u.size() > 0) {
      const Eigen::VectorXd s = uf - prev_u, y = g - prev_g;
      const double sy = s.dot(y);
      const double sMs = s.dot(space.gram() * s);
      if (sy > 0.0 && std::isfinite(sMs / sy)) step = std::clamp(sMs / sy, 1e-12, 1e6);
    }
    bool accepted = false;
    std::vector<double> trial;
    double trial_q = 0.0;
    for (int k = 0; k < 60; ++k, step *= 0.5) {
      trial = cur.u;
      space.add_to(trial, d, step);
      const Discretization::Parts parts = disc.evaluate(trial);
      if (!(parts.boundary > 0.0)) continue;
      trial_q = disc.quotient(parts);
      if (trial_q <= cur.lambda + kArmijo * step * slope) {
        accepted = true;
        break;
      }
    }
    if (accepted && opts.step_rule == StepRule::kLinearized) {
      // Extrapolate along flat directions with the quadratic through
      // phi(0), phi'(0) and phi(step).
      for (int k = 0; k < 8; ++k) {
        const double curv = trial_q - cur.lambda - slope * step;
        if (!(curv > 0.0)) break;
        const double t = std::min(-slope * step * step / (2.0 * curv), 16.0 * step);
        if (!(t > 1.5 * step)) break;
        std::vector<double> ext = cur.u;
        space.add_to(ext, d, t);
        const Discretization::Parts parts = disc.evaluate(ext);
        if (!(parts.boundary > 0.0)) break;
        const double ext_q = disc.quotient(parts);
        if (!(ext_q < trial_q)) break;
        trial = std::move(ext);
        trial_q = ext_q;
        step = t;
      }
    }
    const double old = cur.lambda;
    std::optional<Iterate> next;
    if (accepted) {
      next = make_iterate(disc, std::move(trial));
      // Renormalization rounding can undo a decrease below machine precision.
      if (next->lambda > old) next.reset();
    }
    const bool flat = !next || old - next->lambda <= 4.0 * kEps * std::abs(old);
    if (flat) {
      // The quotient no longer resolves tiny values, which often belong to
      // exact zeros of the discrete minimizer.
      std::optional<Iterate> fixed = snap_small_values(disc, cur);
      if (!fixed) fixed = polish_small_values(disc, space, cur);
      if (fixed && dual_norm(space, fixed->residual) < res) {
        next = std::move(fixed);
        flat_steps = 0;
      } else if (!next || ++flat_steps > kMaxFlatSteps) {
        sol.converged = res <= opts.residual_tol;
        break;
      }
    } else {
      flat_steps = 0;
    }
    prev_u = uf;
    prev_g = g;
    cur = std::move(*next);
    last_decrease = (old - cur.lambda) / std::abs(old);
    res = dual_norm(space, cur.residual);
    sol.history.push_back(cur.lambda);
    sol.iterations = iter + 1;
    if (opts.step_rule == StepRule::kArmijo) step = std::min(1e6, 2.0 * step);
  }
  if (!sol.converged && res <= opts.residual_tol && last_decrease <= opts.tol) {
    sol.converged = true;
  }
  sol.lambda = cur.lambda;
  sol.dofs = std::move(cur.u);
  sol.residual = res;
  return sol;
}

}  // namespace detail

/// Discrete quotient of the P1 function with vertex values dofs.
inline double rayleigh_quotient(const Mesh& mesh, std::span<const double> dofs,
                                const ProblemParams& params, const PotentialField& h,
                                double q) {
  detail::check_exponents(params, q);
  const detail::Discretization disc(mesh, h, params.p(), q);
  return disc.quotient(disc.evaluate(dofs));
}

/// Minimizes the quotient over P1 functions vanishing where free is false.
/// Starts from u = 1 on free dofs, the warm start if given, and opts.restarts
/// seeded random starts, and returns the best (earliest on ties); throws
/// IterationError if the best did not converge.
inline EigenSolution minimize_constrained(const Mesh& mesh, const ProblemParams& params,
                                          const PotentialField& h, double q,
                                          const std::vector<bool>& free,
                                          const SolverOptions& opts = {},
                                          const std::vector<double>* warm_start = nullptr) {
  detail::check_exponents(params, q);
  if (free.size() != mesh.num_vertices()) throw DomainError("minimize: free mask size");
  const std::vector<bool> on_boundary = mesh.boundary_vertex_mask();
  bool trace_possible = false;
  for (std::size_t i = 0; i < free.size(); ++i) trace_possible |= free[i] && on_boundary[i];
  if (!trace_possible) throw InfeasibleError("minimize: every boundary vertex is constrained");
  const detail::Discretization disc(mesh, h, params.p(), q);
  const detail::FreeSpace space(disc, free);
  std::vector<std::vector<double>> starts;
  std::vector<double> ones(mesh.num_vertices(), 0.0);
  for (std::size_t i = 0; i < free.size(); ++i) ones[i] = free[i] ? 1.0 : 0.0;
  if (warm_start) {
    std::vector<double> w = *warm_start;
    if (w.size() != free.size()) throw DomainError("minimize: warm start size");
    for (std::size_t i = 0; i < free.size(); ++i)
      if (!free[i]) w[i] = 0.0;
    double trace = 0.0;
    for (std::size_t i = 0; i < free.size(); ++i)
      if (on_boundary[i]) trace += std::abs(w[i]);
    starts.push_back(ones);
    if (trace > 0.0) starts.push_back(std::move(w));
  } else {
    starts.push_back(ones);
  }
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> jitter(0.5, 1.5);
  for (int r = 0; r < opts.restarts; ++r) {
    std::vector<double> u(mesh.num_vertices(), 0.0);
    for (std::size_t i = 0; i < free.size(); ++i)
      if (free[i]) u[i] = jitter(rng);
    starts.push_back(std::move(u));
  }
  EigenSolution best;
  bool have = false;
  for (const auto& s : starts) {
    EigenSolution sol = detail::descend(disc, space, s, opts);
    if (!have || sol.lambda < best.lambda) {
      best = std::move(sol);
      have = true;
    }
  }
  if (!best.converged) {
    throw IterationError("minimize: no convergence within " + std::to_string(opts.max_iters) +
                             " iterations (residual " + std::to_string(best.residual) + ")",
                         best.lambda, best.dofs);
  }
  return best;
}

inline EigenSolution minimize(const Mesh& mesh, const ProblemParams& params,
                              const PotentialField& h, double q,
                              const SolverOptions& opts = {}) {
  return minimize_constrained(mesh, params, h, q, std::vector<bool>(mesh.num_vertices(), true),
                              opts);
}

/// Dual H^1 norm of the weak Euler-Lagrange residual over the free dofs,
/// using solution.lambda and the normalized solution.dofs.
inline double el_residual(const Mesh& mesh, const EigenSolution& solution,
                          const ProblemParams& params, const PotentialField& h, double q,
                          const std::vector<bool>* free = nullptr) {
  detail::check_exponents(params, q);
  const detail::Discretization disc(mesh, h, params.p(), q);
  const std::vector<bool> all(mesh.num_vertices(), true);
  const detail::FreeSpace space(disc, free ? *free : all);
  std::vector<double> u = solution.dofs;
  const double B = disc.evaluate(u).boundary;
  if (!(B > 0.0)) throw DomainError("el_residual: boundary trace vanishes");
  for (double& x : u) x *= std::pow(B, -1.0 / q);
  std::vector<double> dF, dB;
  disc.evaluate(u, &dF, &dB);
  std::vector<double> r(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    r[i] = dF[i] / params.p() - solution.lambda * dB[i] / q;
  }
  return detail::dual_norm(space, r);
}

struct CriticalityReport {
  Side side = Side::kEqual;  // lambda relative to K_p^{-1}
  double margin = 0.0;       // lambda - K_p^{-1}
  double kp_inverse = 0.0;
};

inline CriticalityReport compare_to_threshold(double lambda, double threshold) {
  const double margin = lambda - threshold;
  return {margin < 0.0 ? Side::kBelow : (margin > 0.0 ? Side::kAbove : Side::kEqual), margin,
          threshold};
}

/// lambda < K_p^{-1} is the existence criterion at the critical exponent.
inline CriticalityReport criticality_check(const EigenSolution& solution,
                                           const ProblemParams& params) {
  const double pstar = params.critical_exponent();
  if (std::abs(solution.exponent_q - pstar) > 1e-12 * pstar) {
    throw DomainError("criticality_check: solution must use q = p_*");
  }
  return compare_to_threshold(solution.lambda, kp_inverse(params));
}

/// CSV "vertex_index,x,y,u", 15 significant digits.
inline void write_solution_csv(std::ostream& os, const Mesh& mesh,
                               std::span<const double> dofs) {
  std::ostringstream buf;
  buf.precision(15);
  buf << "vertex_index,x,y,u\n";
  for (std::size_t i = 0; i < mesh.num_vertices(); ++i) {
    buf << i << ',' << mesh.vertices[i][0] << ',' << mesh.vertices[i][1] << ',' << dofs[i]
        << '\n';
  }
  os << buf.str();
}

}  // namespace sobtrace
