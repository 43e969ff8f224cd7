#pragma once

// Same-layer material overlap: pairwise bead-footprint collision detection and
// a raster deposition simulation.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>
#include <printchain/parallel.hpp>
#include <printchain/toolpath.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <vector>

namespace printchain {

struct CollisionEvent {
  double layer_z = 0.0;        // mean nozzle height of the pair
  std::size_t move_a = 0;      // closest pair of toolpath moves, move_a < move_b
  std::size_t move_b = 0;
  double distance = 0.0;       // plan-view centreline distance, mm
  double overlap_length = 0.0; // mm of the earlier bead's centreline inside the intrusion band
  std::size_t pairs = 1;       // colliding segment pairs merged into this event
};

namespace detail {

/// Extruding segments of a toolpath together with their position along the
/// continuous extrusion run they belong to.
struct BeadSegment {
  std::size_t move = 0;
  Vec2 a, b;
  double z = 0.0; // mean height
  std::size_t run = 0;
  double run_start = 0.0; // arc length at segment start within the run
  double run_end = 0.0;
};

struct BeadIndex {
  std::vector<BeadSegment> segs;
  std::vector<double> run_length;
  std::vector<char> run_closed;
  double width = 0.0;
  double height = 0.0;
  double threshold = 0.0; // collision distance w * (1 - tolerance)
  double exclusion = 0.0; // path distance below which segments count as adjacent
};

inline BeadIndex index_beads(const Toolpath &path) {
  BeadIndex idx;
  const auto &cfg = path.config();
  idx.width = cfg.bead_width;
  idx.height = cfg.bead_height;
  idx.threshold = cfg.bead_width * (1.0 - cfg.overlap_tolerance);
  idx.exclusion = 2.0 * cfg.bead_width;
  bool in_run = false;
  Point3 run_origin;
  double along = 0.0;
  const auto close_run = [&](const Point3 &end) {
    idx.run_length.push_back(along);
    idx.run_closed.push_back(distance(end, run_origin) <= kPointSeparation ? 1 : 0);
  };
  for (std::size_t k = 0; k < path.moves().size(); ++k) {
    const bool ext = path.moves()[k].extruding;
    if (!ext) {
      if (in_run)
        close_run(path.vertex(k));
      in_run = false;
      continue;
    }
    if (!in_run) {
      in_run = true;
      run_origin = path.vertex(k);
      along = 0.0;
    }
    const Point3 &p = path.vertex(k);
    const Point3 &q = path.vertex(k + 1);
    const double len = distance(p, q);
    idx.segs.push_back({k, {p.x, p.y}, {q.x, q.y}, 0.5 * (p.z + q.z), idx.run_length.size(), along, along + len});
    along += len;
  }
  if (in_run)
    close_run(path.vertex(path.moves().size()));
  return idx;
}

/// Consecutive moves share an endpoint; along one run, segments closer than
/// the exclusion length are treated the same way (smooth curves sampled
/// finer than the bead width would otherwise flag themselves).
inline bool adjacent(const BeadIndex &idx, const BeadSegment &s, const BeadSegment &t) {
  if (s.move + 1 == t.move || t.move + 1 == s.move)
    return true;
  if (s.run != t.run)
    return false;
  const auto &lo = s.move < t.move ? s : t;
  const auto &hi = s.move < t.move ? t : s;
  double gap = hi.run_start - lo.run_end;
  if (idx.run_closed[s.run])
    gap = std::min(gap, idx.run_length[s.run] - hi.run_end + lo.run_start);
  return gap < idx.exclusion;
}

inline bool same_layer(const BeadIndex &idx, const BeadSegment &s, const BeadSegment &t) {
  return std::abs(s.z - t.z) < idx.height / 2;
}

inline double point_segment_distance(const Vec2 &p, const Vec2 &a, const Vec2 &b) {
  const Vec2 ab = b - a;
  const double len2 = dot(ab, ab);
  const double t = len2 > 0.0 ? std::clamp(dot(p - a, ab) / len2, 0.0, 1.0) : 0.0;
  return distance(p, a + ab * t);
}

/// Closest points between two plane segments; returns (distance, param on s1).
inline std::pair<double, double> segment_distance(const Vec2 &p1, const Vec2 &q1, const Vec2 &p2, const Vec2 &q2) {
  const Vec2 d1 = q1 - p1, d2 = q2 - p2, r = p1 - p2;
  const double a = dot(d1, d1), e = dot(d2, d2), f = dot(d2, r);
  double s = 0.0, t = 0.0;
  if (a <= 1e-30 && e <= 1e-30)
    return {distance(p1, p2), 0.0};
  if (a <= 1e-30) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = dot(d1, r);
    if (e <= 1e-30) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = dot(d1, d2);
      const double denom = a * e - b * b;
      s = denom > 1e-12 * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  // Crossing segments: the formula above already gives distance 0.
  return {distance(p1 + d1 * s, p2 + d2 * t), s};
}

/// Parameter interval of segment (a, b) lying strictly within `limit` of
/// segment (c, d). Distance to a segment is convex along a line, so the set is
/// an interval around the closest parameter; its ends are found by bisection.
inline std::optional<std::pair<double, double>> interval_within(const Vec2 &a, const Vec2 &b, const Vec2 &c,
                                                                const Vec2 &d, double limit, double s_min) {
  const auto f = [&](double s) { return point_segment_distance(lerp(a, b, s), c, d); };
  if (!(f(s_min) < limit))
    return std::nullopt;
  const auto edge = [&](double inside, double outside) {
    if (f(outside) < limit)
      return outside;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (inside + outside);
      (f(mid) < limit ? inside : outside) = mid;
    }
    return 0.5 * (inside + outside);
  };
  return std::pair{edge(s_min, 0.0), edge(s_min, 1.0)};
}

inline double length_within(const Vec2 &a, const Vec2 &b, const Vec2 &c, const Vec2 &d, double limit, double s_min) {
  const auto iv = interval_within(a, b, c, d, limit, s_min);
  return iv ? (iv->second - iv->first) * distance(a, b) : 0.0;
}

struct CollidingPair {
  std::size_t first = 0;  // segment index, earlier move
  std::size_t second = 0; // segment index, later move
  double distance = 0.0;
  double lo = 0.0, hi = 0.0; // parameter interval of `first` inside the band
};

/// Pairs of same-layer non-adjacent segments closer than the collision
/// threshold, sorted by (first, second).
inline std::vector<CollidingPair> colliding_pairs(const BeadIndex &idx, unsigned threads) {
  const auto &segs = idx.segs;
  std::vector<std::size_t> order(segs.size());
  for (std::size_t i = 0; i < order.size(); ++i)
    order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t l, std::size_t r) { return segs[l].z < segs[r].z; });
  std::vector<std::vector<CollidingPair>> found(order.size());
  parallel_for(order.size(), threads, [&](std::size_t oi) {
    const auto &s = segs[order[oi]];
    const double sxmin = std::min(s.a.x, s.b.x) - idx.threshold, sxmax = std::max(s.a.x, s.b.x) + idx.threshold;
    const double symin = std::min(s.a.y, s.b.y) - idx.threshold, symax = std::max(s.a.y, s.b.y) + idx.threshold;
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const auto &t = segs[order[oj]];
      if (t.z - s.z >= idx.height / 2)
        break;
      if (std::max(t.a.x, t.b.x) < sxmin || std::min(t.a.x, t.b.x) > sxmax || std::max(t.a.y, t.b.y) < symin ||
          std::min(t.a.y, t.b.y) > symax)
        continue;
      if (!same_layer(idx, s, t) || adjacent(idx, s, t))
        continue;
      const bool s_first = s.move < t.move;
      const auto &f = s_first ? s : t;
      const auto &g = s_first ? t : s;
      const auto [dist, f_param] = segment_distance(f.a, f.b, g.a, g.b);
      if (!(dist < idx.threshold))
        continue;
      const auto iv = interval_within(f.a, f.b, g.a, g.b, idx.threshold, f_param);
      const auto [lo, hi] = iv.value_or(std::pair{f_param, f_param});
      found[oi].push_back({s_first ? order[oi] : order[oj], s_first ? order[oj] : order[oi], dist, lo, hi});
    }
  });
  std::vector<CollidingPair> out;
  for (auto &v : found)
    out.insert(out.end(), v.begin(), v.end());
  std::sort(out.begin(), out.end(), [](const CollidingPair &l, const CollidingPair &r) {
    return l.first < r.first || (l.first == r.first && l.second < r.second);
  });
  return out;
}

/// Segments adjacent to segment k (same run, path gap below the exclusion
/// length), k itself included.
inline std::vector<std::size_t> neighbourhood(const BeadIndex &idx, std::size_t k) {
  const auto &segs = idx.segs;
  std::vector<std::size_t> out{k};
  const auto walk = [&](std::size_t from, int step) {
    for (std::size_t j = from;;) {
      if ((step < 0 && j == 0) || (step > 0 && j + 1 >= segs.size()))
        break;
      j = step < 0 ? j - 1 : j + 1;
      if (segs[j].run != segs[k].run || !adjacent(idx, segs[k], segs[j]))
        break;
      out.push_back(j);
    }
  };
  walk(k, -1);
  walk(k, +1);
  if (idx.run_closed[segs[k].run]) {
    // Wrap-around neighbours at the far end of a closed run.
    std::size_t first = k, last = k;
    while (first > 0 && segs[first - 1].run == segs[k].run)
      --first;
    while (last + 1 < segs.size() && segs[last + 1].run == segs[k].run)
      ++last;
    for (std::size_t j = last; j > k && adjacent(idx, segs[k], segs[j]); --j)
      out.push_back(j);
    for (std::size_t j = first; j < k && adjacent(idx, segs[k], segs[j]); ++j)
      out.push_back(j);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

} // namespace detail

/// Over-deposition events: pairs of non-adjacent extruding segments in the
/// same layer (|dz| < h/2) whose centrelines come closer than
/// w * (1 - overlap_tolerance), grouped so that one crossing or one doubly
/// traced stretch is one event. Two pairs belong to the same event when their
/// segments are adjacent on both sides.
inline std::vector<CollisionEvent> detect_overdeposition(const Toolpath &path, unsigned threads = 1) {
  const auto idx = detail::index_beads(path);
  const auto pairs = detail::colliding_pairs(idx, threads);
  if (pairs.empty())
    return {};
  std::vector<std::vector<std::size_t>> incident(idx.segs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    incident[pairs[p].first].push_back(p);
    incident[pairs[p].second].push_back(p);
  }
  std::vector<std::size_t> parent(pairs.size());
  for (std::size_t p = 0; p < parent.size(); ++p)
    parent[p] = p;
  const auto find = [&](std::size_t p) {
    while (parent[p] != p)
      p = parent[p] = parent[parent[p]];
    return p;
  };
  const auto near = [&](std::size_t a, std::size_t b) {
    return a == b || (idx.segs[a].run == idx.segs[b].run && detail::adjacent(idx, idx.segs[a], idx.segs[b]));
  };
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    for (std::size_t side = 0; side < 2; ++side) {
      const std::size_t a = side == 0 ? pairs[p].first : pairs[p].second;
      const std::size_t b = side == 0 ? pairs[p].second : pairs[p].first;
      for (std::size_t s : detail::neighbourhood(idx, a))
        for (std::size_t q : incident[s]) {
          const std::size_t other = pairs[q].first == s ? pairs[q].second : pairs[q].first;
          if (near(b, other)) {
            const std::size_t rp = find(p), rq = find(q);
            if (rp != rq)
              parent[std::max(rp, rq)] = std::min(rp, rq);
          }
        }
    }
  }
  // Group by root; roots are the smallest member index, so iteration order
  // (and therefore output order) is deterministic.
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t p = 0; p < pairs.size(); ++p)
    groups[find(p)].push_back(p);
  std::vector<CollisionEvent> events;
  for (const auto &[root, members] : groups) {
    const auto *best = &pairs[members.front()];
    std::map<std::size_t, std::vector<std::pair<double, double>>> spans;
    for (std::size_t p : members) {
      if (pairs[p].distance < best->distance)
        best = &pairs[p];
      spans[pairs[p].first].emplace_back(pairs[p].lo, pairs[p].hi);
    }
    double overlap = 0.0;
    for (auto &[seg, iv] : spans) {
      std::sort(iv.begin(), iv.end());
      double covered = 0.0, lo = iv.front().first, hi = iv.front().second;
      for (const auto &[l, h] : iv) {
        if (l > hi) {
          covered += hi - lo;
          lo = l;
        }
        hi = std::max(hi, h);
      }
      covered += hi - lo;
      const auto &s = idx.segs[seg];
      overlap += covered * distance(s.a, s.b);
    }
    const auto &f = idx.segs[best->first];
    const auto &g = idx.segs[best->second];
    events.push_back({0.5 * (f.z + g.z), f.move, g.move, best->distance, overlap, members.size()});
  }
  return events;
}

// ---------------------------------------------------------------------------
// Raster deposition

struct LayerDeposition {
  double z = 0.0;        // nominal nozzle height of the layer
  double origin_x = 0.0; // lower-left corner of cell (0, 0)
  double origin_y = 0.0;
  std::size_t nx = 0, ny = 0;
  std::vector<std::uint32_t> counts;  // beads covering each cell, row-major (y * nx + x)
  std::vector<std::uint8_t> over;     // 1 where non-adjacent colliding beads overlap
  std::size_t covered_cells = 0;
  std::size_t over_cells = 0;
  std::uint32_t max_count = 0;

  double coverage_fraction() const { return counts.empty() ? 0.0 : static_cast<double>(covered_cells) / counts.size(); }
  double over_fraction() const {
    return covered_cells == 0 ? 0.0 : static_cast<double>(over_cells) / static_cast<double>(covered_cells);
  }
};

struct DepositionGrid {
  double cell_size = 0.0;
  std::vector<LayerDeposition> layers;

  std::size_t covered_cells() const {
    std::size_t n = 0;
    for (const auto &l : layers)
      n += l.covered_cells;
    return n;
  }
  std::size_t over_cells() const {
    std::size_t n = 0;
    for (const auto &l : layers)
      n += l.over_cells;
    return n;
  }
  std::uint32_t max_count() const {
    std::uint32_t m = 0;
    for (const auto &l : layers)
      m = std::max(m, l.max_count);
    return m;
  }
  double coverage_fraction() const {
    std::size_t total = 0;
    for (const auto &l : layers)
      total += l.counts.size();
    return total == 0 ? 0.0 : static_cast<double>(covered_cells()) / static_cast<double>(total);
  }
  double over_fraction() const {
    const auto c = covered_cells();
    return c == 0 ? 0.0 : static_cast<double>(over_cells()) / static_cast<double>(c);
  }
};

/// Rasterises every extruding segment's capsule footprint (width w) into a
/// per-layer grid. A cell is over-deposited when two footprints covering it
/// belong to a non-adjacent pair that breaks the overlap tolerance. Layers are
/// binned by mean nozzle height rounded to whole bead heights.
inline DepositionGrid simulate_deposition(const Toolpath &path, double cell_size, unsigned threads = 1) {
  const auto idx = detail::index_beads(path);
  if (!(cell_size > 0.0 && cell_size <= idx.width / 4))
    throw InvalidArgument("cell size must be positive and at most a quarter of the bead width");
  std::map<long long, std::vector<std::size_t>> bins;
  for (std::size_t i = 0; i < idx.segs.size(); ++i)
    bins[std::llround(idx.segs[i].z / idx.height)].push_back(i);

  DepositionGrid grid;
  grid.cell_size = cell_size;
  std::vector<std::vector<std::size_t>> members;
  for (auto &[key, list] : bins) {
    LayerDeposition layer;
    layer.z = static_cast<double>(key) * idx.height;
    grid.layers.push_back(std::move(layer));
    members.push_back(std::move(list));
  }
  const double r = idx.width / 2;
  parallel_for(grid.layers.size(), threads, [&](std::size_t li) {
    auto &layer = grid.layers[li];
    const auto &ids = members[li];
    double xmin = INFINITY, ymin = INFINITY, xmax = -INFINITY, ymax = -INFINITY;
    for (auto i : ids) {
      const auto &s = idx.segs[i];
      xmin = std::min({xmin, s.a.x, s.b.x});
      xmax = std::max({xmax, s.a.x, s.b.x});
      ymin = std::min({ymin, s.a.y, s.b.y});
      ymax = std::max({ymax, s.a.y, s.b.y});
    }
    layer.origin_x = xmin - r - cell_size;
    layer.origin_y = ymin - r - cell_size;
    layer.nx = static_cast<std::size_t>(std::ceil((xmax + r + cell_size - layer.origin_x) / cell_size));
    layer.ny = static_cast<std::size_t>(std::ceil((ymax + r + cell_size - layer.origin_y) / cell_size));
    layer.counts.assign(layer.nx * layer.ny, 0);
    layer.over.assign(layer.nx * layer.ny, 0);
    // (cell, segment) incidences, sorted by cell so overlaps can be examined.
    std::vector<std::pair<std::size_t, std::size_t>> hits;
    for (auto i : ids) {
      const auto &s = idx.segs[i];
      const auto cx0 = static_cast<std::size_t>(std::max(0.0, std::floor((std::min(s.a.x, s.b.x) - r - layer.origin_x) / cell_size)));
      const auto cx1 = std::min(layer.nx - 1, static_cast<std::size_t>(std::floor((std::max(s.a.x, s.b.x) + r - layer.origin_x) / cell_size)));
      const auto cy0 = static_cast<std::size_t>(std::max(0.0, std::floor((std::min(s.a.y, s.b.y) - r - layer.origin_y) / cell_size)));
      const auto cy1 = std::min(layer.ny - 1, static_cast<std::size_t>(std::floor((std::max(s.a.y, s.b.y) + r - layer.origin_y) / cell_size)));
      for (std::size_t cy = cy0; cy <= cy1; ++cy)
        for (std::size_t cx = cx0; cx <= cx1; ++cx) {
          const Vec2 c{layer.origin_x + (static_cast<double>(cx) + 0.5) * cell_size,
                       layer.origin_y + (static_cast<double>(cy) + 0.5) * cell_size};
          if (detail::point_segment_distance(c, s.a, s.b) < r)
            hits.emplace_back(cy * layer.nx + cx, i);
        }
    }
    std::sort(hits.begin(), hits.end());
    for (std::size_t h = 0; h < hits.size();) {
      std::size_t e = h;
      while (e < hits.size() && hits[e].first == hits[h].first)
        ++e;
      const std::size_t cell = hits[h].first;
      layer.counts[cell] = static_cast<std::uint32_t>(e - h);
      for (std::size_t p = h; p < e && !layer.over[cell]; ++p)
        for (std::size_t q = p + 1; q < e; ++q) {
          const auto &s = idx.segs[hits[p].second];
          const auto &t = idx.segs[hits[q].second];
          if (!detail::same_layer(idx, s, t) || detail::adjacent(idx, s, t))
            continue;
          if (detail::segment_distance(s.a, s.b, t.a, t.b).first < idx.threshold) {
            layer.over[cell] = 1;
            break;
          }
        }
      h = e;
    }
    for (std::size_t c = 0; c < layer.counts.size(); ++c) {
      if (layer.counts[c] > 0)
        ++layer.covered_cells;
      if (layer.over[c])
        ++layer.over_cells;
      layer.max_count = std::max(layer.max_count, layer.counts[c]);
    }
  });
  return grid;
}

} // namespace printchain
