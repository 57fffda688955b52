#pragma once

// Conforming P1 triangulations of 2D domains: generation, audit, text I/O.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <map>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "sobtrace/errors.hpp"

namespace sobtrace {

using Vertex = std::array<double, 2>;
using Triangle = std::array<int, 3>;
using Edge = std::array<int, 2>;

/// Triangles are counter-clockwise; each boundary edge (i, j) has the domain on its left.
struct Mesh {
  std::vector<Vertex> vertices;
  std::vector<Triangle> triangles;
  std::vector<Edge> boundary_edges;

  std::size_t num_vertices() const { return vertices.size(); }
  std::size_t num_triangles() const { return triangles.size(); }

  /// Signed area, positive for counter-clockwise triangles.
  double signed_area(std::size_t t) const {
    const Vertex& a = vertices[static_cast<std::size_t>(triangles[t][0])];
    const Vertex& b = vertices[static_cast<std::size_t>(triangles[t][1])];
    const Vertex& c = vertices[static_cast<std::size_t>(triangles[t][2])];
    return 0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]));
  }

  double edge_length(const Edge& e) const {
    const Vertex& a = vertices[static_cast<std::size_t>(e[0])];
    const Vertex& b = vertices[static_cast<std::size_t>(e[1])];
    return std::hypot(b[0] - a[0], b[1] - a[1]);
  }

  double area() const {
    double s = 0.0;
    for (std::size_t t = 0; t < triangles.size(); ++t) s += signed_area(t);
    return s;
  }

  double boundary_length() const {
    double s = 0.0;
    for (const Edge& e : boundary_edges) s += edge_length(e);
    return s;
  }

  std::vector<bool> boundary_vertex_mask() const {
    std::vector<bool> mask(vertices.size(), false);
    for (const Edge& e : boundary_edges) {
      mask[static_cast<std::size_t>(e[0])] = true;
      mask[static_cast<std::size_t>(e[1])] = true;
    }
    return mask;
  }
};

enum class MeshShape { kSquare, kDisk, kAnnulus };

inline std::string to_string(MeshShape s) {
  switch (s) {
    case MeshShape::kSquare: return "square";
    case MeshShape::kDisk: return "disk";
    case MeshShape::kAnnulus: return "annulus";
  }
  return "unknown";
}

inline MeshShape parse_mesh_shape(const std::string& name) {
  if (name == "square") return MeshShape::kSquare;
  if (name == "disk") return MeshShape::kDisk;
  if (name == "annulus") return MeshShape::kAnnulus;
  throw ConfigError("unknown mesh shape '" + name + "' (square, disk, annulus)");
}

namespace detail {

/// Edges seen once in the triangle list, oriented as in their triangle, chained
/// into loops; each loop starts at its smallest vertex index.
inline std::vector<Edge> topological_boundary(const Mesh& m) {
  std::map<std::pair<int, int>, int> count;
  for (const Triangle& t : m.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
      ++count[{std::min(a, b), std::max(a, b)}];
    }
  }
  std::map<int, int> next;
  for (const Triangle& t : m.triangles) {
    for (int k = 0; k < 3; ++k) {
      const int a = t[static_cast<std::size_t>(k)], b = t[static_cast<std::size_t>((k + 1) % 3)];
      if (count[{std::min(a, b), std::max(a, b)}] == 1) next[a] = b;
    }
  }
  std::vector<Edge> out;
  std::map<int, bool> used;
  for (const auto& [start, unused] : next) {
    (void)unused;
    if (used[start]) continue;
    int v = start;
    do {
      used[v] = true;
      const auto it = next.find(v);
      if (it == next.end()) break;
      out.push_back({v, it->second});
      v = it->second;
    } while (v != start && !used[v]);
  }
  return out;
}

inline void orient_counter_clockwise(Mesh& m) {
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    if (m.signed_area(t) < 0.0) std::swap(m.triangles[t][1], m.triangles[t][2]);
  }
}

inline Mesh square_mesh(int resolution) {
  const int n = 1 << (resolution - 1);
  Mesh m;
  for (int j = 0; j <= n; ++j)
    for (int i = 0; i <= n; ++i)
      m.vertices.push_back({static_cast<double>(i) / n, static_cast<double>(j) / n});
  auto id = [n](int i, int j) { return j * (n + 1) + i; };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      m.triangles.push_back({id(i, j), id(i + 1, j), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i, j + 1)});
    }
  }
  return m;
}

/// Regular hexagon inscribed in the unit circle, red-refined, boundary
/// midpoints pushed onto the circle.
inline Mesh disk_mesh(int resolution) {
  Mesh m;
  m.vertices.push_back({0.0, 0.0});
  for (int k = 0; k < 6; ++k) {
    const double th = k * std::numbers::pi / 3.0;
    m.vertices.push_back({std::cos(th), std::sin(th)});
  }
  for (int k = 0; k < 6; ++k) m.triangles.push_back({0, 1 + k, 1 + (k + 1) % 6});
  for (int level = 1; level < resolution; ++level) {
    std::map<std::pair<int, int>, bool> on_circle;
    for (const Edge& e : topological_boundary(m)) {
      on_circle[{std::min(e[0], e[1]), std::max(e[0], e[1])}] = true;
    }
    std::map<std::pair<int, int>, int> mid;
    auto midpoint = [&](int a, int b) {
      const std::pair<int, int> key{std::min(a, b), std::max(a, b)};
      const auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      const Vertex& va = m.vertices[static_cast<std::size_t>(a)];
      const Vertex& vb = m.vertices[static_cast<std::size_t>(b)];
      Vertex c{0.5 * (va[0] + vb[0]), 0.5 * (va[1] + vb[1])};
      const int id = static_cast<int>(m.vertices.size());
      m.vertices.push_back(c);
      mid.emplace(key, id);
      return id;
    };
    std::vector<Triangle> fine;
    fine.reserve(4 * m.triangles.size());
    for (const Triangle& t : m.triangles) {
      const int ab = midpoint(t[0], t[1]), bc = midpoint(t[1], t[2]), ca = midpoint(t[2], t[0]);
      fine.push_back({t[0], ab, ca});
      fine.push_back({ab, t[1], bc});
      fine.push_back({ca, bc, t[2]});
      fine.push_back({ab, bc, ca});
    }
    m.triangles = std::move(fine);
    for (const auto& [key, id] : mid) {
      if (!on_circle.count(key)) continue;
      Vertex& v = m.vertices[static_cast<std::size_t>(id)];
      const double len = std::hypot(v[0], v[1]);
      v[0] /= len;
      v[1] /= len;
    }
  }
  return m;
}

/// Annulus 0.5 < |x| < 1 with 2^{k-1} radial layers and 8 2^{k-1} sectors.
inline Mesh annulus_mesh(int resolution) {
  const int nr = 1 << (resolution - 1);
  const int nt = 8 * nr;
  const double r_in = 0.5, r_out = 1.0;
  Mesh m;
  for (int i = 0; i <= nr; ++i) {
    const double r = r_in + (r_out - r_in) * i / nr;
    for (int j = 0; j < nt; ++j) {
      const double th = 2.0 * std::numbers::pi * j / nt;
      m.vertices.push_back({r * std::cos(th), r * std::sin(th)});
    }
  }
  auto id = [nt](int i, int j) { return i * nt + (j % nt); };
  for (int i = 0; i < nr; ++i) {
    for (int j = 0; j < nt; ++j) {
      m.triangles.push_back({id(i, j), id(i, j + 1), id(i + 1, j + 1)});
      m.triangles.push_back({id(i, j), id(i + 1, j + 1), id(i + 1, j)});
    }
  }
  return m;
}

}  // namespace detail

/// square: unit square with 2^{k-1} cells per side; disk: unit disk from a
/// hexagon refined k-1 times; annulus: 0.5 < |x| < 1. Vertex sets are nested
/// across resolutions; for the square the P1 spaces are nested as well.
inline Mesh generate_mesh(MeshShape shape, int resolution) {
  if (resolution < 1) throw DomainError("generate_mesh: resolution must be >= 1");
  if (resolution > 12) throw DomainError("generate_mesh: resolution must be <= 12");
  Mesh m;
  switch (shape) {
    case MeshShape::kSquare: m = detail::square_mesh(resolution); break;
    case MeshShape::kDisk: m = detail::disk_mesh(resolution); break;
    case MeshShape::kAnnulus: m = detail::annulus_mesh(resolution); break;
  }
  detail::orient_counter_clockwise(m);
  m.boundary_edges = detail::topological_boundary(m);
  return m;
}

/// Affine stretch x -> (sx x, sy y); sx, sy > 0 keep orientation.
inline Mesh scale_mesh(Mesh m, double sx, double sy) {
  if (!(sx > 0.0) || !(sy > 0.0)) throw DomainError("scale_mesh: factors must be > 0");
  for (Vertex& v : m.vertices) {
    v[0] *= sx;
    v[1] *= sy;
  }
  return m;
}

struct MeshAudit {
  bool ok = true;
  std::vector<std::string> problems;
};

/// Checks indices, positive areas, conformity (every edge shared by at most two
/// triangles with opposite orientation), and that boundary_edges is exactly the
/// set of unshared edges, oriented with the domain on the left, forming closed loops.
inline MeshAudit audit_mesh(const Mesh& m) {
  MeshAudit out;
  auto fail = [&out](std::string msg) {
    out.ok = false;
    out.problems.push_back(std::move(msg));
  };
  const int nv = static_cast<int>(m.vertices.size());
  if (m.triangles.empty()) fail("no triangles");
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    for (int v : m.triangles[t]) {
      if (v < 0 || v >= nv) {
        fail("triangle " + std::to_string(t) + " has an invalid vertex index");
        return out;
      }
    }
    if (!(m.signed_area(t) > 0.0)) {
      fail("triangle " + std::to_string(t) + " has nonpositive area");
    }
  }
  std::map<std::pair<int, int>, int> directed;
  for (const Triangle& t : m.triangles) {
    for (int k = 0; k < 3; ++k) {
      ++directed[{t[static_cast<std::size_t>(k)], t[static_cast<std::size_t>((k + 1) % 3)]}];
    }
  }
  std::map<std::pair<int, int>, int> expected;
  for (const auto& [e, c] : directed) {
    if (c > 1) fail("edge traversed twice in the same direction");
    if (!directed.count({e.second, e.first})) expected[e] = 1;
  }
  std::map<std::pair<int, int>, int> listed;
  std::map<int, int> out_degree, in_degree;
  for (const Edge& e : m.boundary_edges) {
    if (e[0] < 0 || e[0] >= nv || e[1] < 0 || e[1] >= nv) {
      fail("boundary edge has an invalid vertex index");
      return out;
    }
    ++listed[{e[0], e[1]}];
    ++out_degree[e[0]];
    ++in_degree[e[1]];
  }
  if (listed != expected) {
    fail("boundary edges differ from the topological boundary (" +
         std::to_string(m.boundary_edges.size()) + " listed, " +
         std::to_string(expected.size()) + " expected)");
  }
  for (const auto& [v, d] : out_degree) {
    if (d != 1 || in_degree[v] != 1) fail("boundary loops are not closed simple cycles");
  }
  for (const auto& [v, d] : in_degree) {
    if (!out_degree.count(v)) fail("boundary loops are not closed");
    (void)d;
  }
  return out;
}

/// "Nv Nt Nb", then Nv lines "x y", Nt lines "i j k", Nb lines "i j" (0-based).
inline void write_mesh(std::ostream& os, const Mesh& m) {
  std::ostringstream buf;
  buf.precision(17);
  buf << m.vertices.size() << ' ' << m.triangles.size() << ' ' << m.boundary_edges.size()
      << '\n';
  for (const Vertex& v : m.vertices) buf << v[0] << ' ' << v[1] << '\n';
  for (const Triangle& t : m.triangles) buf << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
  for (const Edge& e : m.boundary_edges) buf << e[0] << ' ' << e[1] << '\n';
  os << buf.str();
}

/// Parses the text format and audits the result.
inline Mesh read_mesh(std::istream& is) {
  long nv = -1, nt = -1, nb = -1;
  if (!(is >> nv >> nt >> nb) || nv < 3 || nt < 1 || nb < 3) {
    throw ConfigError("read_mesh: bad header, expected 'N_vertices N_triangles N_boundary_edges'");
  }
  Mesh m;
  m.vertices.resize(static_cast<std::size_t>(nv));
  m.triangles.resize(static_cast<std::size_t>(nt));
  m.boundary_edges.resize(static_cast<std::size_t>(nb));
  for (Vertex& v : m.vertices)
    if (!(is >> v[0] >> v[1])) throw ConfigError("read_mesh: truncated vertex block");
  for (Triangle& t : m.triangles)
    if (!(is >> t[0] >> t[1] >> t[2])) throw ConfigError("read_mesh: truncated triangle block");
  for (Edge& e : m.boundary_edges)
    if (!(is >> e[0] >> e[1])) throw ConfigError("read_mesh: truncated boundary block");
  const MeshAudit a = audit_mesh(m);
  if (!a.ok) throw DomainError("read_mesh: invalid mesh: " + a.problems.front());
  return m;
}

}  // namespace sobtrace
