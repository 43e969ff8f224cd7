#pragma once

// Timed machine program: planning from sliced geometry, reach checks, G-code
// and event-series export.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>
#include <printchain/slicer.hpp>
#include <printchain/stl.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace printchain {

struct PrintConfig {
  double print_speed = 0.0;  // mm/s
  double travel_speed = 0.0; // mm/s
  double bead_width = 0.0;   // mm
  double bead_height = 0.0;  // mm, equals the layer height
  double overlap_tolerance = 0.10; // fraction of bead width that may overlap

  double flow_rate() const { return bead_width * bead_height * print_speed; } // mm^3/s

  void validate() const {
    if (!(print_speed > 0.0 && travel_speed > 0.0 && bead_width > 0.0 && bead_height > 0.0))
      throw InvalidArgument("print speeds and bead dimensions must be positive");
    if (!(travel_speed >= print_speed))
      throw InvalidArgument("travel speed must be at least the print speed");
    if (!(overlap_tolerance >= 0.0 && overlap_tolerance < 1.0))
      throw InvalidArgument("overlap tolerance must be in [0, 1)");
  }
};

struct Move {
  Point3 target;
  double feed = 0.0; // mm/s
  bool extruding = false;
};

/// Ordered moves from a start point with derived timestamps: times()[0] = 0 at
/// the start point, times()[k+1] = times()[k] + length_k / feed_k.
class Toolpath {
public:
  Toolpath(Point3 start, std::vector<Move> moves, PrintConfig config)
      : start_(start), moves_(std::move(moves)), config_(config) {
    config_.validate();
    if (!is_finite(start_))
      throw InvalidArgument("toolpath start point is not finite");
    times_.reserve(moves_.size() + 1);
    times_.push_back(0.0);
    Point3 cur = start_;
    for (std::size_t k = 0; k < moves_.size(); ++k) {
      const auto &m = moves_[k];
      if (!is_finite(m.target) || !(m.feed > 0.0))
        throw InvalidArgument("move " + std::to_string(k) + " has invalid target or feed");
      if (m.extruding && m.feed != config_.print_speed)
        throw InvalidArgument("extruding move " + std::to_string(k) + " must run at the print speed");
      const double len = distance(cur, m.target);
      const double t = times_.back() + len / m.feed;
      if (!(t > times_.back()))
        throw InvalidArgument("move " + std::to_string(k) + " has zero duration");
      times_.push_back(t);
      cur = m.target;
    }
  }

  const Point3 &start() const { return start_; }
  const std::vector<Move> &moves() const { return moves_; }
  const std::vector<double> &times() const { return times_; }
  const PrintConfig &config() const { return config_; }
  double duration() const { return times_.back(); }
  bool empty() const { return moves_.empty(); }

  /// Vertex i of the path: 0 is the start point, i > 0 the target of move i-1.
  const Point3 &vertex(std::size_t i) const { return i == 0 ? start_ : moves_[i - 1].target; }
  std::size_t vertex_count() const { return moves_.size() + 1; }

  double move_length(std::size_t k) const { return distance(vertex(k), vertex(k + 1)); }

  double extrusion_time() const {
    double t = 0.0;
    for (std::size_t k = 0; k < moves_.size(); ++k)
      if (moves_[k].extruding)
        t += times_[k + 1] - times_[k];
    return t;
  }
  double travel_time() const { return duration() - extrusion_time(); }
  std::size_t travel_count() const {
    return static_cast<std::size_t>(std::count_if(moves_.begin(), moves_.end(), [](const Move &m) { return !m.extruding; }));
  }

  /// Index of the move active at time t (moves own [t_k, t_{k+1}); the final
  /// instant belongs to the last move).
  std::size_t move_at(double t) const {
    if (moves_.empty())
      throw InvalidArgument("empty toolpath has no moves");
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t k = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    return std::min(k, moves_.size() - 1);
  }

  Point3 position_at(double t) const {
    if (moves_.empty())
      return start_;
    const std::size_t k = move_at(t);
    const double u = std::clamp((t - times_[k]) / (times_[k + 1] - times_[k]), 0.0, 1.0);
    return lerp(vertex(k), vertex(k + 1), u);
  }

private:
  Point3 start_;
  std::vector<Move> moves_;
  PrintConfig config_;
  std::vector<double> times_;
};

// ---------------------------------------------------------------------------
// Planning

/// Extrudes along each polyline in order, with a travel move between the end of
/// one and the start of the next.
inline Toolpath plan_toolpath(std::span<const Polyline3> paths, const PrintConfig &config) {
  config.validate();
  if (paths.empty())
    throw InvalidArgument("cannot plan a toolpath from empty geometry");
  const Point3 start = paths.front().points().front();
  Point3 cur = start;
  std::vector<Move> moves;
  for (const auto &path : paths) {
    const auto &pts = path.points();
    if (distance(cur, pts.front()) > kPointSeparation)
      moves.push_back({pts.front(), config.travel_speed, false});
    for (std::size_t i = 1; i < pts.size(); ++i)
      moves.push_back({pts[i], config.print_speed, true});
    if (path.closed())
      moves.push_back({pts.front(), config.print_speed, true});
    cur = moves.empty() ? start : moves.back().target;
  }
  return Toolpath(start, std::move(moves), config);
}

inline Toolpath plan_toolpath(const Polyline3 &helix, const PrintConfig &config) {
  return plan_toolpath(std::span<const Polyline3>(&helix, 1), config);
}

/// Prints every contour of every layer at the nozzle height of the layer top.
/// Each contour after the first starts at the vertex nearest the previous end
/// point to keep travel short.
inline Toolpath plan_toolpath(const LayerStack &stack, const PrintConfig &config) {
  if (stack.empty())
    throw InvalidArgument("cannot plan a toolpath from an empty layer stack");
  std::vector<Polyline3> paths;
  std::optional<Point3> cur;
  for (const auto &layer : stack.layers()) {
    const double z = layer.z + stack.layer_height() / 2;
    for (const auto &contour : layer.contours) {
      const auto &pts = contour.points();
      std::size_t first = 0;
      if (cur) {
        double best = INFINITY;
        for (std::size_t i = 0; i < pts.size(); ++i) {
          const double d = distance(*cur, Point3{pts[i].x, pts[i].y, z});
          if (d < best) {
            best = d;
            first = i;
          }
        }
      }
      std::vector<Point3> p3;
      p3.reserve(pts.size());
      for (std::size_t i = 0; i < pts.size(); ++i) {
        const auto &v = pts[(first + i) % pts.size()];
        p3.push_back({v.x, v.y, z});
      }
      cur = p3.front();
      paths.emplace_back(std::move(p3), true);
    }
  }
  if (paths.empty())
    throw InvalidArgument("layer stack contains no contours");
  return plan_toolpath(std::span<const Polyline3>(paths), config);
}

// ---------------------------------------------------------------------------
// Workspace

/// Annular-cylinder reach envelope about the robot base. Radii are horizontal
/// distances from the base; z limits are relative to the base height.
struct WorkspaceEnvelope {
  Point3 base;
  double r_min = 0.0;
  double r_max = 0.0;
  double z_min = 0.0;
  double z_max = 0.0;

  void validate() const {
    if (!is_finite(base))
      throw InvalidArgument("workspace base is not finite");
    if (!(r_min >= 0.0 && r_min < r_max))
      throw InvalidArgument("workspace needs 0 <= r_min < r_max");
    if (!(z_min < z_max))
      throw InvalidArgument("workspace needs z_min < z_max");
  }
};

struct WorkspaceViolation {
  double time = 0.0;
  Point3 point;
  std::string reason;
};

/// Tests every toolpath vertex against the envelope, in path order.
inline std::vector<WorkspaceViolation> check_workspace(const Toolpath &path, const WorkspaceEnvelope &env) {
  env.validate();
  std::vector<WorkspaceViolation> out;
  for (std::size_t i = 0; i < path.vertex_count(); ++i) {
    const Point3 &p = path.vertex(i);
    const double r = std::hypot(p.x - env.base.x, p.y - env.base.y);
    const double z = p.z - env.base.z;
    const double t = path.times()[i];
    if (r < env.r_min)
      out.push_back({t, p, "inside r_min"});
    if (r > env.r_max)
      out.push_back({t, p, "outside r_max"});
    if (z < env.z_min)
      out.push_back({t, p, "below z_min"});
    if (z > env.z_max)
      out.push_back({t, p, "above z_max"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// G-code

namespace detail {
inline double clean_zero(double v) { return v == 0.0 ? 0.0 : v; }
} // namespace detail

/// G0 travel / G1 extrusion. E is the cumulative extruded volume in cm^3.
inline std::string gcode_text(const Toolpath &path) {
  const auto &cfg = path.config();
  std::string out;
  out += "; printchain\n";
  out += fmt::format("; bead_width_mm: {}\n", cfg.bead_width);
  out += fmt::format("; bead_height_mm: {}\n", cfg.bead_height);
  out += fmt::format("; flow_rate_mm3_per_s: {}\n", cfg.flow_rate());
  out += "; E = cumulative extruded volume in cm3 (bead_width * bead_height * length / 1000)\n";
  const auto xyz = [](const Point3 &p) {
    return fmt::format("X{:.4f} Y{:.4f} Z{:.4f}", detail::clean_zero(p.x), detail::clean_zero(p.y),
                       detail::clean_zero(p.z));
  };
  out += fmt::format("G0 {} F{}\n", xyz(path.start()), cfg.travel_speed * 60.0);
  double e = 0.0;
  for (std::size_t k = 0; k < path.moves().size(); ++k) {
    const auto &m = path.moves()[k];
    if (m.extruding) {
      e += cfg.bead_width * cfg.bead_height * path.move_length(k) / 1000.0;
      out += fmt::format("G1 {} F{} E{:.5f}\n", xyz(m.target), m.feed * 60.0, e);
    } else {
      out += fmt::format("G0 {} F{}\n", xyz(m.target), m.feed * 60.0);
    }
  }
  return out;
}

inline void export_gcode(const Toolpath &path, const std::filesystem::path &file) {
  detail::write_file(file, gcode_text(path));
}

// ---------------------------------------------------------------------------
// Event series

struct EventRow {
  double t = 0.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  int state = 0; // 1 extruding, 0 travel
};

/// Time-stamped activation records; t strictly increasing, state in {0, 1}.
class EventSeries {
public:
  EventSeries() = default;
  explicit EventSeries(std::vector<EventRow> rows) : rows_(std::move(rows)) {
    for (std::size_t i = 0; i < rows_.size(); ++i) {
      const auto &r = rows_[i];
      if (r.state != 0 && r.state != 1)
        throw InvalidArgument("event row " + std::to_string(i) + " has state other than 0/1");
      if (!std::isfinite(r.t) || !std::isfinite(r.x) || !std::isfinite(r.y) || !std::isfinite(r.z))
        throw InvalidArgument("event row " + std::to_string(i) + " is not finite");
      if (i > 0 && !(r.t > rows_[i - 1].t))
        throw InvalidArgument("event times must be strictly increasing (row " + std::to_string(i) + ")");
    }
  }

  const std::vector<EventRow> &rows() const { return rows_; }
  std::size_t size() const { return rows_.size(); }
  bool empty() const { return rows_.empty(); }

private:
  std::vector<EventRow> rows_;
};

/// Samples the toolpath at t = 0, dt, 2dt, ... and at every move boundary.
/// Samples within 1e-9 s of a boundary are merged into the boundary row. The
/// state at a boundary is that of the move starting there.
inline EventSeries make_event_series(const Toolpath &path, double sample_interval) {
  if (!(sample_interval > 0.0))
    throw InvalidArgument("event sample interval must be positive");
  if (path.empty())
    return EventSeries({{0.0, path.start().x, path.start().y, path.start().z, 0}});
  const auto &bounds = path.times();
  const double end = path.duration();
  std::vector<double> times(bounds.begin(), bounds.end());
  const auto steps = static_cast<std::size_t>(std::floor(end / sample_interval));
  for (std::size_t i = 0; i <= steps; ++i)
    times.push_back(static_cast<double>(i) * sample_interval);
  std::sort(times.begin(), times.end());
  std::vector<double> merged;
  merged.reserve(times.size());
  for (double t : times) {
    if (t > end)
      continue;
    if (!merged.empty() && t - merged.back() <= 1e-9) {
      // Keep the exact boundary value when a sample lands on it.
      if (std::binary_search(bounds.begin(), bounds.end(), t))
        merged.back() = t;
      continue;
    }
    merged.push_back(t);
  }
  std::vector<EventRow> rows;
  rows.reserve(merged.size());
  for (double t : merged) {
    const std::size_t k = path.move_at(t);
    const Point3 p = path.position_at(t);
    rows.push_back({t, p.x, p.y, p.z, path.moves()[k].extruding ? 1 : 0});
  }
  return EventSeries(std::move(rows));
}

/// CSV rows `time,x,y,z,state`, %.6g fields, no header. Rows whose times
/// print identically at six digits collapse into one line; a row carrying a
/// state change replaces the line before it so transitions survive.
inline std::string event_series_csv(const EventSeries &series) {
  std::vector<std::string> lines;
  std::string last_time;
  int last_state = -1;
  for (const auto &r : series.rows()) {
    auto time = fmt::format("{:.6g}", r.t);
    auto line = fmt::format("{},{:.6g},{:.6g},{:.6g},{}\n", time, detail::clean_zero(r.x), detail::clean_zero(r.y),
                            detail::clean_zero(r.z), r.state);
    if (!lines.empty() && time == last_time) {
      if (r.state != last_state) {
        lines.back() = std::move(line);
        last_state = r.state;
      }
      continue;
    }
    lines.push_back(std::move(line));
    last_time = std::move(time);
    last_state = r.state;
  }
  std::string out;
  for (const auto &l : lines)
    out += l;
  return out;
}

/// Reads `time,x,y,z,state` rows as written by event_series_csv.
inline EventSeries parse_event_series(std::string_view text) {
  std::vector<EventRow> rows;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos)
      nl = text.size();
    std::string line(text.substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    EventRow r;
    char tail = 0;
    if (std::sscanf(line.c_str(), "%lf,%lf,%lf,%lf,%d%c", &r.t, &r.x, &r.y, &r.z, &r.state, &tail) != 5)
      throw ParseError("event series line " + std::to_string(line_no) + ": expected time,x,y,z,state");
    rows.push_back(r);
  }
  try {
    return EventSeries(std::move(rows));
  } catch (const InvalidArgument &e) {
    throw ParseError(std::string("event series: ") + e.what());
  }
}

inline EventSeries load_event_series(const std::filesystem::path &file) {
  return parse_event_series(detail::read_file(file));
}

inline EventSeries export_event_series(const Toolpath &path, double sample_interval, const std::filesystem::path &file) {
  auto series = make_event_series(path, sample_interval);
  detail::write_file(file, event_series_csv(series));
  return series;
}

} // namespace printchain
