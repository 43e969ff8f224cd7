#pragma once

// Point-to-mesh distance queries over an axis-aligned bounding volume
// hierarchy, with sign from angle-weighted pseudo-normals.

#include <printchain/geometry.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <unordered_map>
#include <vector>

namespace printchain {

enum class Feature : std::uint8_t { face, edge, vertex };

struct ClosestPoint {
  Point3 point;
  Feature feature = Feature::face;
  // Local corner indices: vertex -> a; edge -> (a, b); face -> unused.
  int a = 0;
  int b = 0;
};

/// Closest point on triangle (p0, p1, p2) to p, classified by Voronoi region.
inline ClosestPoint closest_point_on_triangle(const Point3 &p, const Point3 &p0, const Point3 &p1, const Point3 &p2) {
  const Point3 ab = p1 - p0, ac = p2 - p0, ap = p - p0;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0)
    return {p0, Feature::vertex, 0, 0};
  const Point3 bp = p - p1;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3)
    return {p1, Feature::vertex, 1, 1};
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    const double v = d1 / (d1 - d3);
    return {p0 + ab * v, Feature::edge, 0, 1};
  }
  const Point3 cp = p - p2;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6)
    return {p2, Feature::vertex, 2, 2};
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    const double w = d2 / (d2 - d6);
    return {p0 + ac * w, Feature::edge, 0, 2};
  }
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    return {p1 + (p2 - p1) * w, Feature::edge, 1, 2};
  }
  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  return {p0 + ab * v + ac * w, Feature::face, 0, 0};
}

struct MeshQuery {
  double distance = 0.0; // signed when the mesh is watertight
  Point3 closest;
  std::size_t triangle = 0;
};

/// Read-only spatial index over a mesh. Safe to query from many threads.
class MeshDistance {
public:
  explicit MeshDistance(TriangleMesh mesh) : mesh_(std::move(mesh)) {
    if (mesh_.empty())
      throw InvalidArgument("distance queries need a non-empty mesh");
    build_normals();
    build_tree();
  }

  const TriangleMesh &mesh() const { return mesh_; }
  bool signed_distances() const { return mesh_.watertight(); }

  /// Nearest surface point; distance positive outside, negative inside (only
  /// when the mesh is watertight, otherwise unsigned).
  MeshQuery query(const Point3 &p) const {
    double best = std::numeric_limits<double>::infinity();
    ClosestPoint best_cp;
    std::size_t best_tri = 0;
    std::size_t stack[128];
    std::size_t top = 0;
    stack[top++] = 0;
    while (top > 0) {
      const Node &node = nodes_[stack[--top]];
      if (box_distance2(node, p) >= best)
        continue;
      if (node.count > 0) {
        for (std::uint32_t k = 0; k < node.count; ++k) {
          const std::size_t tri = order_[node.first + k];
          const auto [a, b, c] = mesh_.corners(tri);
          const auto cp = closest_point_on_triangle(p, a, b, c);
          const Point3 d = p - cp.point;
          const double d2 = dot(d, d);
          if (d2 < best) {
            best = d2;
            best_cp = cp;
            best_tri = tri;
          }
        }
        continue;
      }
      const Node &l = nodes_[node.first];
      const Node &r = nodes_[node.first + 1];
      const double dl = box_distance2(l, p), dr = box_distance2(r, p);
      // Push the farther child first so the nearer one is visited next.
      if (dl <= dr) {
        stack[top++] = node.first + 1;
        stack[top++] = node.first;
      } else {
        stack[top++] = node.first;
        stack[top++] = node.first + 1;
      }
    }
    MeshQuery q;
    q.closest = best_cp.point;
    q.triangle = best_tri;
    const double d = std::sqrt(best);
    q.distance = d;
    if (signed_distances() && d > 0.0) {
      const Point3 n = pseudo_normal(best_tri, best_cp);
      if (dot(p - best_cp.point, n) < 0.0)
        q.distance = -d;
    }
    return q;
  }

  double signed_distance(const Point3 &p) const { return query(p).distance; }

  /// Angle-weighted pseudo-normal of the feature holding the closest point.
  Point3 pseudo_normal(std::size_t tri, const ClosestPoint &cp) const {
    const auto &t = mesh_.triangles()[tri];
    switch (cp.feature) {
    case Feature::vertex:
      return vertex_normals_[t[cp.a]];
    case Feature::edge: {
      auto it = edge_normals_.find(key(t[cp.a], t[cp.b]));
      return it != edge_normals_.end() ? it->second : face_normals_[tri];
    }
    default:
      return face_normals_[tri];
    }
  }

private:
  struct Node {
    Point3 lo, hi;
    std::uint32_t first = 0; // child index (inner) or first entry in order_ (leaf)
    std::uint32_t count = 0; // triangles in leaf, 0 for inner nodes
  };

  static std::uint64_t key(std::uint32_t a, std::uint32_t b) {
    if (a > b)
      std::swap(a, b);
    return (static_cast<std::uint64_t>(a) << 32) | b;
  }

  static double box_distance2(const Node &n, const Point3 &p) {
    const double dx = std::max({n.lo.x - p.x, 0.0, p.x - n.hi.x});
    const double dy = std::max({n.lo.y - p.y, 0.0, p.y - n.hi.y});
    const double dz = std::max({n.lo.z - p.z, 0.0, p.z - n.hi.z});
    return dx * dx + dy * dy + dz * dz;
  }

  void build_normals() {
    const auto &V = mesh_.vertices();
    const auto &T = mesh_.triangles();
    face_normals_.resize(T.size());
    vertex_normals_.assign(V.size(), Point3{});
    for (std::size_t i = 0; i < T.size(); ++i) {
      const Point3 n = normalized(mesh_.area_normal(i));
      face_normals_[i] = n;
      for (int k = 0; k < 3; ++k) {
        const Point3 &v = V[T[i][k]];
        const Point3 e1 = normalized(V[T[i][(k + 1) % 3]] - v);
        const Point3 e2 = normalized(V[T[i][(k + 2) % 3]] - v);
        const double angle = std::acos(std::clamp(dot(e1, e2), -1.0, 1.0));
        vertex_normals_[T[i][k]] += n * angle;
        edge_normals_[key(T[i][k], T[i][(k + 1) % 3])] += n;
      }
    }
  }

  void build_tree() {
    const std::size_t n = mesh_.triangles().size();
    order_.resize(n);
    centroids_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      order_[i] = static_cast<std::uint32_t>(i);
      const auto [a, b, c] = mesh_.corners(i);
      centroids_[i] = (a + b + c) * (1.0 / 3.0);
    }
    nodes_.reserve(2 * n);
    nodes_.push_back({});
    build(0, 0, n, 0);
  }

  void build(std::size_t node, std::size_t begin, std::size_t end, int depth) {
    Point3 lo{INFINITY, INFINITY, INFINITY}, hi{-INFINITY, -INFINITY, -INFINITY};
    Point3 clo = lo, chi = hi;
    for (std::size_t i = begin; i < end; ++i) {
      for (const auto &v : mesh_.corners(order_[i])) {
        lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
        hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
      }
      const Point3 &c = centroids_[order_[i]];
      clo = {std::min(clo.x, c.x), std::min(clo.y, c.y), std::min(clo.z, c.z)};
      chi = {std::max(chi.x, c.x), std::max(chi.y, c.y), std::max(chi.z, c.z)};
    }
    nodes_[node].lo = lo;
    nodes_[node].hi = hi;
    const std::size_t count = end - begin;
    if (count <= 4 || depth >= 60) {
      nodes_[node].first = static_cast<std::uint32_t>(begin);
      nodes_[node].count = static_cast<std::uint32_t>(count);
      return;
    }
    const Point3 ext = chi - clo;
    const int axis = ext.x >= ext.y && ext.x >= ext.z ? 0 : (ext.y >= ext.z ? 1 : 2);
    const auto coord = [&](std::uint32_t t) {
      const Point3 &c = centroids_[t];
      return axis == 0 ? c.x : (axis == 1 ? c.y : c.z);
    };
    const std::size_t mid = begin + count / 2;
    std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin), order_.begin() + static_cast<std::ptrdiff_t>(mid),
                     order_.begin() + static_cast<std::ptrdiff_t>(end), [&](std::uint32_t l, std::uint32_t r) {
                       const double cl = coord(l), cr = coord(r);
                       return cl < cr || (cl == cr && l < r);
                     });
    const auto left = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back({});
    nodes_.push_back({});
    nodes_[node].first = left;
    nodes_[node].count = 0;
    build(left, begin, mid, depth + 1);
    build(left + 1, mid, end, depth + 1);
  }

  TriangleMesh mesh_;
  std::vector<Point3> face_normals_;
  std::vector<Point3> vertex_normals_;
  std::unordered_map<std::uint64_t, Point3> edge_normals_;
  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<Point3> centroids_;
};

} // namespace printchain
