#pragma once

// Planar, parametric and helical slicing.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>
#include <printchain/param_design.hpp>
#include <printchain/parallel.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

namespace printchain {

enum class SliceMode { planar, helical };

struct SlicePlan {
  double layer_height = 0.0;
  SliceMode mode = SliceMode::planar;
  int samples_per_turn = 360;
  bool flat_first_layer = true;

  void validate() const {
    if (!(layer_height > 0.0))
      throw InvalidArgument("layer height must be positive");
    if (samples_per_turn < 36)
      throw InvalidArgument("helical slicing needs at least 36 samples per turn");
  }
};

struct Layer {
  double z = 0.0; // mid-layer height
  std::vector<Contour2> contours;
};

/// Ordered layers at uniform spacing `layer_height`, z strictly increasing.
class LayerStack {
public:
  LayerStack(double layer_height, std::vector<Layer> layers) : layer_height_(layer_height), layers_(std::move(layers)) {
    if (!(layer_height_ > 0.0))
      throw InvalidArgument("layer height must be positive");
    for (std::size_t i = 1; i < layers_.size(); ++i) {
      const double dz = layers_[i].z - layers_[i - 1].z;
      if (!(dz > 0.0))
        throw InvalidArgument("layer z values must be strictly increasing");
      if (std::abs(dz - layer_height_) > 1e-9 * std::max(1.0, layer_height_))
        throw InvalidArgument("layer spacing " + std::to_string(dz) + " differs from layer height " +
                              std::to_string(layer_height_));
    }
  }

  double layer_height() const { return layer_height_; }
  const std::vector<Layer> &layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  const Layer &operator[](std::size_t i) const { return layers_[i]; }

  /// Height of the bottom face of the first layer.
  double base_z() const { return layers_.empty() ? 0.0 : layers_.front().z - layer_height_ / 2; }

private:
  double layer_height_;
  std::vector<Layer> layers_;
};

// ---------------------------------------------------------------------------
// Planar slicing

namespace detail {

inline std::uint64_t edge_key(std::uint32_t a, std::uint32_t b) {
  if (a > b)
    std::swap(a, b);
  return (static_cast<std::uint64_t>(a) << 32) | b;
}

struct SliceSegment {
  std::uint64_t from_edge;
  std::uint64_t to_edge;
  Vec2 from;
  Vec2 to;
};

inline Vec2 edge_crossing(const Point3 &a, const Point3 &b, double z) {
  const double t = (z - a.z) / (b.z - a.z);
  return {a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t};
}

/// One oriented segment per crossed triangle. With the triangle wound
/// counter-clockwise about its outward normal, segments run so that material
/// lies on their left; outer loops come out CCW and holes CW.
inline std::vector<SliceSegment> triangle_segments(const TriangleMesh &mesh, double z) {
  std::vector<SliceSegment> segs;
  const auto &V = mesh.vertices();
  for (const auto &t : mesh.triangles()) {
    const bool up[3] = {V[t[0]].z >= z, V[t[1]].z >= z, V[t[2]].z >= z};
    const int count = up[0] + up[1] + up[2];
    if (count == 0 || count == 3)
      continue;
    // The lone vertex is the one whose side differs from the other two.
    int lone = 0;
    for (int k = 0; k < 3; ++k)
      if (up[k] != up[(k + 1) % 3] && up[k] != up[(k + 2) % 3])
        lone = k;
    const auto a = t[lone], b = t[(lone + 1) % 3], c = t[(lone + 2) % 3];
    const auto cross_ab = edge_crossing(V[a], V[b], z);
    const auto cross_ca = edge_crossing(V[c], V[a], z);
    if (up[lone])
      segs.push_back({edge_key(a, b), edge_key(c, a), cross_ab, cross_ca});
    else
      segs.push_back({edge_key(c, a), edge_key(a, b), cross_ca, cross_ab});
  }
  return segs;
}

inline std::vector<Contour2> stitch_segments(const std::vector<SliceSegment> &segs, double z) {
  std::unordered_map<std::uint64_t, std::size_t> by_start;
  by_start.reserve(segs.size());
  for (std::size_t i = 0; i < segs.size(); ++i)
    by_start.emplace(segs[i].from_edge, i);
  std::vector<char> used(segs.size(), 0);
  std::vector<Contour2> loops;
  for (std::size_t s = 0; s < segs.size(); ++s) {
    if (used[s])
      continue;
    std::vector<Vec2> pts;
    std::size_t cur = s;
    while (true) {
      used[cur] = 1;
      if (pts.empty() || distance(pts.back(), segs[cur].from) > kPointSeparation)
        pts.push_back(segs[cur].from);
      if (segs[cur].to_edge == segs[s].from_edge)
        break;
      auto it = by_start.find(segs[cur].to_edge);
      if (it == by_start.end() || used[it->second]) {
        double gap = distance(segs[cur].to, segs[s].from);
        for (std::size_t o = 0; o < segs.size(); ++o)
          if (!used[o])
            gap = std::min(gap, distance(segs[cur].to, segs[o].from));
        throw GeometryError("cannot stitch slice contour at z=" + std::to_string(z) + ": open chain with gap " +
                            std::to_string(gap) + " mm");
      }
      cur = it->second;
    }
    while (pts.size() > 1 && distance(pts.front(), pts.back()) <= kPointSeparation)
      pts.pop_back();
    if (pts.size() < 3 || std::abs(signed_area(pts)) <= kMinTriangleArea)
      continue;
    loops.emplace_back(z, std::move(pts));
  }
  std::sort(loops.begin(), loops.end(), [](const Contour2 &l, const Contour2 &r) {
    if (l.orientation() != r.orientation())
      return l.orientation() == Orientation::outer;
    const auto lm = *std::min_element(l.points().begin(), l.points().end(),
                                      [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    const auto rm = *std::min_element(r.points().begin(), r.points().end(),
                                      [](Vec2 a, Vec2 b) { return a.x < b.x || (a.x == b.x && a.y < b.y); });
    return lm.x < rm.x || (lm.x == rm.x && lm.y < rm.y);
  });
  return loops;
}

} // namespace detail

/// Contours of the mesh cut by the plane at height z.
inline std::vector<Contour2> slice_at(const TriangleMesh &mesh, double z) {
  return detail::stitch_segments(detail::triangle_segments(mesh, z), z);
}

/// Slices a watertight mesh at mid-layer planes z_k = zmin + h/2 + k*h.
inline LayerStack slice_planar(const TriangleMesh &mesh, const SlicePlan &plan, unsigned threads = 1) {
  plan.validate();
  if (!mesh.watertight())
    throw GeometryError("mesh is not watertight; planar slicing refused");
  const auto [lo, hi] = mesh.bounds();
  const double h = plan.layer_height;
  const std::size_t n = layer_count_for(hi.z - lo.z, h);
  std::vector<Layer> layers(n);
  parallel_for(n, threads, [&](std::size_t k) {
    const double z = lo.z + h / 2 + static_cast<double>(k) * h;
    layers[k] = Layer{z, slice_at(mesh, z)};
  });
  return LayerStack(h, std::move(layers));
}

// ---------------------------------------------------------------------------
// Parametric slicing

using ContourFn = std::function<std::vector<Contour2>(std::size_t layer, double z)>;

/// Evaluates a generator at each mid-layer height of [0, height]; no mesh.
inline LayerStack slice_parametric(const ContourFn &fn, double height, const SlicePlan &plan) {
  plan.validate();
  const double h = plan.layer_height;
  const std::size_t n = layer_count_for(height, h);
  std::vector<Layer> layers;
  layers.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double z = h / 2 + static_cast<double>(k) * h;
    try {
      layers.push_back({z, fn(k, z)});
    } catch (const InvalidArgument &e) {
      throw InvalidArgument("layer " + std::to_string(k) + ": " + e.what());
    } catch (const GeometryError &e) {
      throw GeometryError("layer " + std::to_string(k) + ": " + e.what());
    }
  }
  return LayerStack(h, std::move(layers));
}

// ---------------------------------------------------------------------------
// Helical slicing

/// Resamples a contour to `count` points at equal arc-length spacing, starting
/// where the ray from the centroid along +x leaves the contour, going CCW.
inline std::vector<Vec2> resample_from_x_axis(const Contour2 &contour, int count) {
  const Contour2 ccw = contour.orientation() == Orientation::outer ? contour : contour.reversed();
  const auto &p = ccw.points();
  const std::size_t n = p.size();
  const Vec2 c = ccw.centroid();
  std::optional<std::pair<std::size_t, double>> start;
  double best_x = -INFINITY;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec2 a = p[i], b = p[(i + 1) % n];
    if ((a.y >= c.y) == (b.y >= c.y))
      continue;
    const double t = (c.y - a.y) / (b.y - a.y);
    const double x = a.x + (b.x - a.x) * t;
    if (x > c.x && x > best_x) {
      best_x = x;
      start = {i, t};
    }
  }
  if (!start)
    throw GeometryError("contour at z=" + std::to_string(contour.z()) + " does not cross the +x axis of its centroid");
  const auto [edge, t0] = *start;
  // Walk: start point, then vertices edge+1 ... edge (wrapping), back to start.
  std::vector<Vec2> ring;
  ring.reserve(n + 2);
  const Vec2 s = lerp(p[edge], p[(edge + 1) % n], t0);
  ring.push_back(s);
  for (std::size_t k = 1; k <= n; ++k)
    ring.push_back(p[(edge + k) % n]);
  ring.push_back(s);
  std::vector<double> cum(ring.size(), 0.0);
  for (std::size_t k = 1; k < ring.size(); ++k)
    cum[k] = cum[k - 1] + distance(ring[k - 1], ring[k]);
  const double total = cum.back();
  std::vector<Vec2> out;
  out.reserve(static_cast<std::size_t>(count));
  std::size_t seg = 0;
  for (int j = 0; j < count; ++j) {
    const double target = total * j / count;
    while (seg + 2 < ring.size() && cum[seg + 1] < target)
      ++seg;
    const double len = cum[seg + 1] - cum[seg];
    const double u = len > 0.0 ? (target - cum[seg]) / len : 0.0;
    out.push_back(lerp(ring[seg], ring[seg + 1], std::clamp(u, 0.0, 1.0)));
  }
  return out;
}

/// One continuous path through a single-perimeter stack. Each turn samples
/// `samples_per_turn` points, ramps z by one layer height and blends the shape
/// from the previous layer's contour to the current one. With
/// `flat_first_layer`, turn 0 stays at the top of layer 0 before ramping.
/// Nozzle heights are layer tops, so the path ends at the stack's top face.
inline Polyline3 slice_helical(const LayerStack &stack, const SlicePlan &plan) {
  plan.validate();
  if (stack.empty())
    throw InvalidArgument("helical slicing needs a non-empty layer stack");
  for (std::size_t k = 0; k < stack.size(); ++k) {
    const auto &cs = stack[k].contours;
    if (cs.size() != 1)
      throw GeometryError("unsupported topology for helical slicing: layer " + std::to_string(k) + " has " +
                          std::to_string(cs.size()) + " contours (exactly one outer contour required)");
    if (cs.front().orientation() != Orientation::outer)
      throw GeometryError("unsupported topology for helical slicing: layer " + std::to_string(k) +
                          " contour is a hole");
  }
  const int N = plan.samples_per_turn;
  const double h = stack.layer_height();
  const double base = stack.base_z();
  std::vector<std::vector<Vec2>> rings;
  rings.reserve(stack.size());
  for (const auto &layer : stack.layers())
    rings.push_back(resample_from_x_axis(layer.contours.front(), N));

  const std::size_t turns = stack.size();
  std::vector<Point3> pts;
  pts.reserve(turns * static_cast<std::size_t>(N) + 1);
  for (std::size_t k = 0; k < turns; ++k) {
    const auto &to = rings[k];
    const auto &from = k == 0 ? rings[0] : rings[k - 1];
    const bool flat = plan.flat_first_layer && k == 0;
    for (int j = 0; j < N; ++j) {
      const double f = static_cast<double>(j) / N;
      const Vec2 xy = lerp(from[j], to[j], f);
      const double z = flat ? base + h : base + static_cast<double>(k) * h + h * f;
      pts.push_back({xy.x, xy.y, z});
    }
  }
  const Vec2 end = rings.back()[0];
  pts.push_back({end.x, end.y, base + static_cast<double>(turns) * h});
  return Polyline3(std::move(pts), false);
}

} // namespace printchain
