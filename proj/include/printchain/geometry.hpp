#pragma once

// Shared geometric types: points, triangle meshes, polylines and planar contours.
// Units: millimetres throughout.

#include <printchain/error.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace printchain {

inline constexpr double kPointSeparation = 1e-9;    // mm, minimum distinct-point distance
inline constexpr double kMinTriangleArea = 1e-9;    // mm^2

struct Point3 {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  constexpr Point3 &operator+=(const Point3 &o) { x += o.x; y += o.y; z += o.z; return *this; }
  constexpr Point3 &operator-=(const Point3 &o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
  constexpr Point3 &operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

  friend constexpr Point3 operator+(Point3 a, const Point3 &b) { return a += b; }
  friend constexpr Point3 operator-(Point3 a, const Point3 &b) { return a -= b; }
  friend constexpr Point3 operator*(Point3 a, double s) { return a *= s; }
  friend constexpr Point3 operator*(double s, Point3 a) { return a *= s; }
  friend constexpr Point3 operator-(const Point3 &a) { return {-a.x, -a.y, -a.z}; }
  friend constexpr bool operator==(const Point3 &, const Point3 &) = default;
};

inline constexpr double dot(const Point3 &a, const Point3 &b) { return a.x * b.x + a.y * b.y + a.z * b.z; }
inline constexpr Point3 cross(const Point3 &a, const Point3 &b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
inline double norm(const Point3 &a) { return std::sqrt(dot(a, a)); }
inline double distance(const Point3 &a, const Point3 &b) { return norm(b - a); }
inline Point3 lerp(const Point3 &a, const Point3 &b, double t) { return a + (b - a) * t; }
inline bool is_finite(const Point3 &p) { return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z); }
inline Point3 normalized(const Point3 &a) {
  const double n = norm(a);
  return n > 0.0 ? a * (1.0 / n) : Point3{};
}

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend constexpr Vec2 operator+(Vec2 a, const Vec2 &b) { return {a.x + b.x, a.y + b.y}; }
  friend constexpr Vec2 operator-(Vec2 a, const Vec2 &b) { return {a.x - b.x, a.y - b.y}; }
  friend constexpr Vec2 operator*(Vec2 a, double s) { return {a.x * s, a.y * s}; }
  friend constexpr Vec2 operator*(double s, Vec2 a) { return {a.x * s, a.y * s}; }
  friend constexpr bool operator==(const Vec2 &, const Vec2 &) = default;
};

inline constexpr double dot(const Vec2 &a, const Vec2 &b) { return a.x * b.x + a.y * b.y; }
inline constexpr double cross(const Vec2 &a, const Vec2 &b) { return a.x * b.y - a.y * b.x; }
inline double norm(const Vec2 &a) { return std::hypot(a.x, a.y); }
inline double distance(const Vec2 &a, const Vec2 &b) { return norm(b - a); }
inline Vec2 lerp(const Vec2 &a, const Vec2 &b, double t) { return a + (b - a) * t; }

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// ---------------------------------------------------------------------------
// TriangleMesh

using Triangle = std::array<std::uint32_t, 3>;

/// Indexed triangle mesh. Validated on construction; `watertight()` is true when
/// every undirected edge is shared by exactly two triangles.
class TriangleMesh {
public:
  TriangleMesh() = default;

  TriangleMesh(std::vector<Point3> vertices, std::vector<Triangle> triangles)
      : vertices_(std::move(vertices)), triangles_(std::move(triangles)) {
    for (const auto &v : vertices_) {
      if (!is_finite(v))
        throw InvalidArgument("mesh vertex has non-finite coordinate");
    }
    for (std::size_t i = 0; i < triangles_.size(); ++i) {
      const auto &t = triangles_[i];
      for (auto idx : t) {
        if (idx >= vertices_.size())
          throw InvalidArgument("triangle " + std::to_string(i) + " references vertex " + std::to_string(idx) +
                                " out of range");
      }
      if (triangle_area(i) <= kMinTriangleArea)
        throw InvalidArgument("triangle " + std::to_string(i) + " is degenerate");
    }
    watertight_ = compute_watertight();
  }

  const std::vector<Point3> &vertices() const { return vertices_; }
  const std::vector<Triangle> &triangles() const { return triangles_; }
  bool watertight() const { return watertight_; }
  bool empty() const { return triangles_.empty(); }

  std::array<Point3, 3> corners(std::size_t tri) const {
    const auto &t = triangles_[tri];
    return {vertices_[t[0]], vertices_[t[1]], vertices_[t[2]]};
  }

  /// Unnormalised normal (twice the area times unit normal), right-hand rule.
  Point3 area_normal(std::size_t tri) const {
    const auto [a, b, c] = corners(tri);
    return cross(b - a, c - a);
  }

  double triangle_area(std::size_t tri) const { return 0.5 * norm(area_normal(tri)); }

  std::pair<Point3, Point3> bounds() const {
    Point3 lo{INFINITY, INFINITY, INFINITY};
    Point3 hi{-INFINITY, -INFINITY, -INFINITY};
    for (const auto &v : vertices_) {
      lo = {std::min(lo.x, v.x), std::min(lo.y, v.y), std::min(lo.z, v.z)};
      hi = {std::max(hi.x, v.x), std::max(hi.y, v.y), std::max(hi.z, v.z)};
    }
    return {lo, hi};
  }

  /// Enclosed volume by the divergence theorem (meaningful for watertight meshes).
  double volume() const {
    double v = 0.0;
    for (std::size_t i = 0; i < triangles_.size(); ++i) {
      const auto [a, b, c] = corners(i);
      v += dot(a, cross(b, c));
    }
    return v / 6.0;
  }

private:
  bool compute_watertight() const {
    if (triangles_.empty())
      return false;
    std::unordered_map<std::uint64_t, int> edge_use;
    edge_use.reserve(triangles_.size() * 3);
    for (const auto &t : triangles_) {
      for (int k = 0; k < 3; ++k) {
        std::uint64_t a = t[k], b = t[(k + 1) % 3];
        if (a > b)
          std::swap(a, b);
        ++edge_use[(a << 32) | b];
      }
    }
    return std::all_of(edge_use.begin(), edge_use.end(), [](const auto &kv) { return kv.second == 2; });
  }

  std::vector<Point3> vertices_;
  std::vector<Triangle> triangles_;
  bool watertight_ = false;
};

// ---------------------------------------------------------------------------
// Polyline3

class Polyline3 {
public:
  Polyline3(std::vector<Point3> points, bool closed) : points_(std::move(points)), closed_(closed) {
    if (points_.size() < 2)
      throw InvalidArgument("polyline needs at least 2 points");
    for (std::size_t i = 0; i < points_.size(); ++i) {
      if (!is_finite(points_[i]))
        throw InvalidArgument("polyline point " + std::to_string(i) + " is not finite");
      if (i > 0 && distance(points_[i - 1], points_[i]) <= kPointSeparation)
        throw InvalidArgument("polyline points " + std::to_string(i - 1) + " and " + std::to_string(i) +
                              " coincide");
    }
    if (closed_ && distance(points_.front(), points_.back()) <= kPointSeparation)
      throw InvalidArgument("closed polyline must not repeat its first point");
  }

  const std::vector<Point3> &points() const { return points_; }
  bool closed() const { return closed_; }
  std::size_t size() const { return points_.size(); }
  std::size_t segment_count() const { return closed_ ? points_.size() : points_.size() - 1; }

  std::pair<Point3, Point3> segment(std::size_t i) const {
    return {points_[i], points_[(i + 1) % points_.size()]};
  }

private:
  std::vector<Point3> points_;
  bool closed_;
};

/// Sum of segment lengths, closing segment included for closed polylines.
inline double polyline_length(const Polyline3 &line) {
  double total = 0.0;
  for (std::size_t i = 0; i < line.segment_count(); ++i) {
    const auto [a, b] = line.segment(i);
    total += distance(a, b);
  }
  return total;
}

/// Splits every segment longer than `max_segment` into equal parts. Original
/// vertices are kept, so the traced geometry is unchanged.
inline Polyline3 resample_polyline(const Polyline3 &line, double max_segment) {
  if (!(max_segment > 0.0))
    throw InvalidArgument("max_segment must be positive");
  std::vector<Point3> out;
  out.reserve(line.size());
  const auto &pts = line.points();
  for (std::size_t i = 0; i < line.segment_count(); ++i) {
    const auto [a, b] = line.segment(i);
    out.push_back(a);
    const double len = distance(a, b);
    const auto parts = static_cast<std::size_t>(std::max(1.0, std::ceil(len / max_segment * (1.0 - 1e-12))));
    for (std::size_t k = 1; k < parts; ++k)
      out.push_back(lerp(a, b, static_cast<double>(k) / static_cast<double>(parts)));
  }
  if (!line.closed())
    out.push_back(pts.back());
  return Polyline3(std::move(out), line.closed());
}

// ---------------------------------------------------------------------------
// Planar polygon helpers

inline double signed_area(std::span<const Vec2> pts) {
  double a = 0.0;
  const std::size_t n = pts.size();
  for (std::size_t i = 0; i < n; ++i)
    a += cross(pts[i], pts[(i + 1) % n]);
  return 0.5 * a;
}

inline Vec2 polygon_centroid(std::span<const Vec2> pts) {
  const double area = signed_area(pts);
  const std::size_t n = pts.size();
  if (std::abs(area) < 1e-15) {
    Vec2 c{};
    for (const auto &p : pts)
      c = c + p;
    return c * (1.0 / static_cast<double>(n));
  }
  double cx = 0.0, cy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto &p = pts[i];
    const auto &q = pts[(i + 1) % n];
    const double w = cross(p, q);
    cx += (p.x + q.x) * w;
    cy += (p.y + q.y) * w;
  }
  return {cx / (6.0 * area), cy / (6.0 * area)};
}

namespace detail {

inline int orient(const Vec2 &a, const Vec2 &b, const Vec2 &c) {
  const double v = cross(b - a, c - a);
  return (v > 0.0) - (v < 0.0);
}

inline bool on_segment(const Vec2 &a, const Vec2 &b, const Vec2 &p) {
  return std::min(a.x, b.x) <= p.x && p.x <= std::max(a.x, b.x) && std::min(a.y, b.y) <= p.y &&
         p.y <= std::max(a.y, b.y);
}

inline bool segments_touch(const Vec2 &a, const Vec2 &b, const Vec2 &c, const Vec2 &d) {
  const int o1 = orient(a, b, c), o2 = orient(a, b, d), o3 = orient(c, d, a), o4 = orient(c, d, b);
  if (o1 != o2 && o3 != o4)
    return true;
  return (o1 == 0 && on_segment(a, b, c)) || (o2 == 0 && on_segment(a, b, d)) ||
         (o3 == 0 && on_segment(c, d, a)) || (o4 == 0 && on_segment(c, d, b));
}

} // namespace detail

/// True when the closed polygon has no self-intersections. Segments are swept
/// in order of their minimum x so only x-overlapping pairs are tested.
inline bool is_simple_polygon(std::span<const Vec2> pts) {
  const std::size_t n = pts.size();
  if (n < 3)
    return false;
  struct Seg {
    double xmin, xmax;
    std::size_t i;
  };
  std::vector<Seg> segs(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto &a = pts[i];
    const auto &b = pts[(i + 1) % n];
    segs[i] = {std::min(a.x, b.x), std::max(a.x, b.x), i};
  }
  std::sort(segs.begin(), segs.end(), [](const Seg &l, const Seg &r) { return l.xmin < r.xmin; });
  for (std::size_t s = 0; s < n; ++s) {
    const std::size_t i = segs[s].i;
    const Vec2 a = pts[i], b = pts[(i + 1) % n];
    for (std::size_t u = s + 1; u < n && segs[u].xmin <= segs[s].xmax; ++u) {
      const std::size_t j = segs[u].i;
      const Vec2 c = pts[j], d = pts[(j + 1) % n];
      const bool next = (i + 1) % n == j;
      const bool prev = (j + 1) % n == i;
      if (next || prev) {
        // Adjacent edges may only share their common vertex; a fold-back overlaps.
        const Vec2 shared = next ? b : a;
        const Vec2 p = next ? a : b;
        const Vec2 q = next ? d : c;
        if (detail::orient(p, shared, q) == 0 && dot(p - shared, q - shared) > 0.0)
          return false;
        continue;
      }
      if (detail::segments_touch(a, b, c, d))
        return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Contour2

enum class Orientation { outer, hole };

/// Closed planar polygon at height z. Counter-clockwise contours are outer
/// boundaries; clockwise ones are holes. The orientation is derived from the
/// signed area so the two can never disagree.
class Contour2 {
public:
  Contour2(double z, std::vector<Vec2> points) : z_(z), points_(std::move(points)) {
    if (!std::isfinite(z_))
      throw InvalidArgument("contour z is not finite");
    if (points_.size() < 3)
      throw InvalidArgument("contour needs at least 3 points");
    const std::size_t n = points_.size();
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(points_[i].x) || !std::isfinite(points_[i].y))
        throw InvalidArgument("contour point is not finite");
      if (distance(points_[i], points_[(i + 1) % n]) <= kPointSeparation)
        throw InvalidArgument("contour has coincident consecutive points at index " + std::to_string(i));
    }
    area_ = printchain::signed_area(points_);
    if (std::abs(area_) <= kMinTriangleArea)
      throw InvalidArgument("contour has zero area");
    if (!is_simple_polygon(points_))
      throw GeometryError("contour at z=" + std::to_string(z_) + " self-intersects");
  }

  double z() const { return z_; }
  const std::vector<Vec2> &points() const { return points_; }
  std::size_t size() const { return points_.size(); }
  double signed_area() const { return area_; }
  double area() const { return std::abs(area_); }
  Orientation orientation() const { return area_ > 0.0 ? Orientation::outer : Orientation::hole; }

  double perimeter() const {
    double p = 0.0;
    for (std::size_t i = 0; i < points_.size(); ++i)
      p += distance(points_[i], points_[(i + 1) % points_.size()]);
    return p;
  }

  Vec2 centroid() const { return polygon_centroid(points_); }

  Contour2 reversed() const {
    std::vector<Vec2> r(points_.rbegin(), points_.rend());
    return Contour2(z_, std::move(r));
  }

  Polyline3 to_polyline() const { return to_polyline(z_); }

  Polyline3 to_polyline(double z) const {
    std::vector<Point3> p;
    p.reserve(points_.size());
    for (const auto &v : points_)
      p.push_back({v.x, v.y, z});
    return Polyline3(std::move(p), true);
  }

private:
  double z_;
  std::vector<Vec2> points_;
  double area_ = 0.0;
};

} // namespace printchain
