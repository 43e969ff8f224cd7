#pragma once

// Parametric generators: oscillating circle, woven layer stack, rectangle-to-circle
// twisted prism, plus lofting of a layer stack into a closed mesh.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

namespace printchain {

struct OscillationParams {
  double base_radius = 0.0; // R_c, mm
  double amplitude = 0.0;   // a, mm
  int frequency = 0;        // n, cycles per revolution
  int samples = 360;        // points per revolution

  void validate() const {
    if (!(base_radius > 0.0))
      throw InvalidArgument("oscillation base radius must be positive");
    if (!(amplitude >= 0.0))
      throw InvalidArgument("oscillation amplitude must be non-negative");
    if (!(amplitude < base_radius))
      throw InvalidArgument("oscillation amplitude must be smaller than the base radius");
    if (frequency < 0)
      throw InvalidArgument("oscillation frequency must be non-negative");
    if (samples < 16)
      throw InvalidArgument("oscillation needs at least 16 samples per revolution");
  }

  double radius_at(double theta) const { return base_radius + amplitude * std::sin(frequency * theta); }
};

namespace detail {

inline std::vector<Vec2> oscillating_points(const OscillationParams &p) {
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(p.samples));
  for (int k = 0; k < p.samples; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / p.samples;
    const double r = p.radius_at(theta);
    pts.push_back({r * std::cos(theta), r * std::sin(theta)});
  }
  return pts;
}

} // namespace detail

/// Closed CCW polyline at height z with radius R_c + a*sin(n*theta).
inline Polyline3 gen_oscillating_circle(const OscillationParams &params, double z) {
  params.validate();
  std::vector<Point3> pts;
  for (const auto &v : detail::oscillating_points(params))
    pts.push_back({v.x, v.y, z});
  return Polyline3(std::move(pts), true);
}

inline Contour2 oscillating_contour(const OscillationParams &params, double z) {
  params.validate();
  return Contour2(z, detail::oscillating_points(params));
}

/// Regular polygon approximating a circle, first vertex on +x, CCW.
inline Contour2 circle_contour(double radius, int samples, double z = 0.0) {
  return oscillating_contour({radius, 0.0, 0, samples}, z);
}

// ---------------------------------------------------------------------------
// Woven pattern

struct WeaveParams {
  Contour2 base;                            // star-shaped about its centroid, CCW
  double amplitude = 0.0;                   // mm
  int frequency = 1;                        // cycles per revolution
  double layer_phase_shift = std::numbers::pi; // radians per layer index

  /// Smallest distance from the base centroid to any base edge.
  double inradius() const {
    const auto &pts = base.points();
    const Vec2 c = base.centroid();
    double best = INFINITY;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      const Vec2 a = pts[i], b = pts[(i + 1) % pts.size()];
      const Vec2 ab = b - a;
      const double t = std::clamp(dot(c - a, ab) / dot(ab, ab), 0.0, 1.0);
      best = std::min(best, distance(c, a + ab * t));
    }
    return best;
  }

  void validate() const {
    if (!(amplitude >= 0.0))
      throw InvalidArgument("weave amplitude must be non-negative");
    if (frequency < 1)
      throw InvalidArgument("weave frequency must be at least 1");
    if (!std::isfinite(layer_phase_shift))
      throw InvalidArgument("weave phase shift must be finite");
    if (base.orientation() != Orientation::outer)
      throw InvalidArgument("weave base contour must be counter-clockwise");
    if (amplitude > 0.0 && !(amplitude < inradius()))
      throw GeometryError("weave amplitude " + std::to_string(amplitude) + " mm reaches the base inradius " +
                          std::to_string(inradius()) + " mm: layers would self-intersect");
  }
};

/// Layer `index` of the woven stack: each base vertex is pushed radially (about
/// the base centroid) by amplitude*sin(frequency*theta + index*phase_shift).
inline Contour2 woven_layer(const WeaveParams &params, std::size_t index, double z) {
  params.validate();
  const Vec2 c = params.base.centroid();
  std::vector<Vec2> pts;
  pts.reserve(params.base.size());
  for (const auto &v : params.base.points()) {
    const Vec2 d = v - c;
    const double theta = std::atan2(d.y, d.x);
    const double offset =
        params.amplitude * std::sin(params.frequency * theta + static_cast<double>(index) * params.layer_phase_shift);
    pts.push_back(v + d * (offset / norm(d)));
  }
  return Contour2(z, std::move(pts));
}

/// Woven stack at mid-layer heights z_i = h/2 + i*h.
inline std::vector<Contour2> gen_woven_layers(const WeaveParams &params, std::size_t layer_count, double layer_height) {
  if (layer_count < 1)
    throw InvalidArgument("woven stack needs at least one layer");
  if (!(layer_height > 0.0))
    throw InvalidArgument("layer height must be positive");
  params.validate();
  std::vector<Contour2> layers;
  layers.reserve(layer_count);
  for (std::size_t i = 0; i < layer_count; ++i)
    layers.push_back(woven_layer(params, i, layer_height / 2 + static_cast<double>(i) * layer_height));
  return layers;
}

// ---------------------------------------------------------------------------
// Twisted rectangle-to-circle prism

struct TwistParams {
  double rect_width = 0.0;   // mm, along x
  double rect_depth = 0.0;   // mm, along y
  double circle_radius = 0.0;
  double height = 0.0;
  double total_twist = 0.0;  // degrees over the full height
  int samples = 360;

  void validate() const {
    if (!(rect_width > 0.0 && rect_depth > 0.0 && circle_radius > 0.0 && height > 0.0))
      throw InvalidArgument("twisted prism dimensions must be positive");
    if (!std::isfinite(total_twist))
      throw InvalidArgument("twist angle must be finite");
    if (samples < 16)
      throw InvalidArgument("twisted prism needs at least 16 samples per loop");
  }

  /// Polar radius of the axis-aligned rectangle boundary.
  double rect_radius(double theta) const {
    const double c = std::abs(std::cos(theta));
    const double s = std::abs(std::sin(theta));
    const double rx = c > 0.0 ? rect_width / (2.0 * c) : INFINITY;
    const double ry = s > 0.0 ? rect_depth / (2.0 * s) : INFINITY;
    return std::min(rx, ry);
  }

  /// Blended radius before rotation at blend parameter s = z/height.
  double radius_at(double theta, double s) const { return (1.0 - s) * rect_radius(theta) + s * circle_radius; }
};

/// Cross-section at height z: polar blend of rectangle and circle, rotated by
/// total_twist * s.
inline Contour2 twisted_section(const TwistParams &params, double z) {
  params.validate();
  const double s = std::clamp(z / params.height, 0.0, 1.0);
  const double rot = deg_to_rad(params.total_twist) * s;
  std::vector<Vec2> pts;
  pts.reserve(static_cast<std::size_t>(params.samples));
  for (int k = 0; k < params.samples; ++k) {
    const double theta = 2.0 * std::numbers::pi * k / params.samples;
    const double r = params.radius_at(theta, s);
    pts.push_back({r * std::cos(theta + rot), r * std::sin(theta + rot)});
  }
  return Contour2(z, std::move(pts));
}

/// Number of whole layers of height h that fit in `height`.
inline std::size_t layer_count_for(double height, double layer_height) {
  if (!(layer_height > 0.0))
    throw InvalidArgument("layer height must be positive");
  return static_cast<std::size_t>(std::floor(height / layer_height + 1e-9));
}

inline std::vector<Contour2> gen_twisted_prism(const TwistParams &params, double layer_height) {
  params.validate();
  const std::size_t n = layer_count_for(params.height, layer_height);
  std::vector<Contour2> layers;
  layers.reserve(n);
  for (std::size_t k = 0; k < n; ++k)
    layers.push_back(twisted_section(params, layer_height / 2 + static_cast<double>(k) * layer_height));
  return layers;
}

// ---------------------------------------------------------------------------
// Lofting

/// Closes a list of rings (equal point counts, CCW, matching start vertex) into
/// a watertight mesh: side bands between consecutive rings and fan caps about
/// the end-ring centroids. Rings must be star-shaped about their centroids.
inline TriangleMesh loft_rings(const std::vector<Contour2> &rings) {
  if (rings.size() < 2)
    throw InvalidArgument("loft needs at least two rings");
  const std::size_t n = rings.front().size();
  for (std::size_t r = 0; r < rings.size(); ++r) {
    if (rings[r].size() != n)
      throw InvalidArgument("loft rings must have equal point counts");
    if (rings[r].orientation() != Orientation::outer)
      throw InvalidArgument("loft rings must be counter-clockwise");
    if (r > 0 && !(rings[r].z() > rings[r - 1].z()))
      throw InvalidArgument("loft rings must have increasing z");
  }
  std::vector<Point3> verts;
  std::vector<Triangle> tris;
  verts.reserve(rings.size() * n + 2);
  for (const auto &ring : rings)
    for (const auto &p : ring.points())
      verts.push_back({p.x, p.y, ring.z()});
  const auto at = [n](std::size_t r, std::size_t k) { return static_cast<std::uint32_t>(r * n + k % n); };
  for (std::size_t r = 0; r + 1 < rings.size(); ++r) {
    for (std::size_t k = 0; k < n; ++k) {
      tris.push_back({at(r, k), at(r, k + 1), at(r + 1, k + 1)});
      tris.push_back({at(r, k), at(r + 1, k + 1), at(r + 1, k)});
    }
  }
  const Vec2 cb = rings.front().centroid();
  const Vec2 ct = rings.back().centroid();
  const auto bottom = static_cast<std::uint32_t>(verts.size());
  verts.push_back({cb.x, cb.y, rings.front().z()});
  const auto top = static_cast<std::uint32_t>(verts.size());
  verts.push_back({ct.x, ct.y, rings.back().z()});
  const std::size_t last = rings.size() - 1;
  for (std::size_t k = 0; k < n; ++k) {
    tris.push_back({bottom, at(0, k + 1), at(0, k)});
    tris.push_back({top, at(last, k), at(last, k + 1)});
  }
  return TriangleMesh(std::move(verts), std::move(tris));
}

/// Mesh of a mid-layer contour stack spanning [0, layers*h]: the first and last
/// contours are repeated at the bottom and top faces.
inline TriangleMesh loft_layers(const std::vector<Contour2> &layers, double layer_height) {
  if (layers.empty())
    throw InvalidArgument("cannot loft an empty layer stack");
  std::vector<Contour2> rings;
  rings.reserve(layers.size() + 2);
  rings.emplace_back(layers.front().z() - layer_height / 2, layers.front().points());
  for (const auto &c : layers)
    rings.push_back(c);
  rings.emplace_back(layers.back().z() + layer_height / 2, layers.back().points());
  return loft_rings(rings);
}

} // namespace printchain
