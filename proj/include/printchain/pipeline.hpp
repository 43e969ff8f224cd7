#pragma once

// End-to-end chain: design -> slice -> toolpath -> stability -> inspection.
// Each stage reads and writes plain files in an output directory; `run_chain`
// executes them in order, halts at the first failing stage and writes a
// manifest of every artifact with its SHA-256.

#include <printchain/config.hpp>
#include <printchain/deposition.hpp>
#include <printchain/error.hpp>
#include <printchain/inspection.hpp>
#include <printchain/mesh_distance.hpp>
#include <printchain/param_design.hpp>
#include <printchain/slicer.hpp>
#include <printchain/stability.hpp>
#include <printchain/stl.hpp>
#include <printchain/toolpath.hpp>

#include <fmt/format.h>
#include <json.hpp>
#include <openssl/evp.h>

#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace printchain {

namespace fs = std::filesystem;

// ---------------------------------------------------------------------------
// Layer stack and polyline text formats

/// CSV `layer,z,contour,x,y`, one row per contour vertex, shortest round-trip
/// number formatting.
inline std::string layer_stack_csv(const LayerStack &stack) {
  std::string out = "layer,z,contour,x,y\n";
  for (std::size_t k = 0; k < stack.size(); ++k)
    for (std::size_t c = 0; c < stack[k].contours.size(); ++c)
      for (const auto &p : stack[k].contours[c].points())
        out += fmt::format("{},{},{},{},{}\n", k, stack[k].z, c, p.x, p.y);
  return out;
}

namespace detail {

inline std::vector<std::string> split_csv(const std::string &line) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    out.push_back(line.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
    if (comma == std::string::npos)
      break;
    pos = comma + 1;
  }
  return out;
}

inline double csv_number(const std::string &tok, std::size_t line_no) {
  char *end = nullptr;
  const double v = std::strtod(tok.c_str(), &end);
  if (tok.empty() || end != tok.c_str() + tok.size() || !std::isfinite(v))
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + tok + "'");
  return v;
}

inline std::size_t csv_index(const std::string &tok, std::size_t line_no) {
  const double v = csv_number(tok, line_no);
  if (v < 0.0 || v != std::floor(v))
    throw ParseError("line " + std::to_string(line_no) + ": bad index '" + tok + "'");
  return static_cast<std::size_t>(v);
}

} // namespace detail

inline LayerStack parse_layer_stack_csv(std::string_view text, double layer_height) {
  const auto lines = detail::split_lines(text);
  if (lines.empty() || lines.front() != "layer,z,contour,x,y")
    throw ParseError("layer file must start with header 'layer,z,contour,x,y'");
  std::map<std::size_t, std::pair<double, std::map<std::size_t, std::vector<Vec2>>>> rows;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    if (lines[i].empty())
      continue;
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != 5)
      throw ParseError("line " + std::to_string(i + 1) + ": expected 5 fields, found " + std::to_string(f.size()));
    const std::size_t k = detail::csv_index(f[0], i + 1);
    const double z = detail::csv_number(f[1], i + 1);
    auto [it, fresh] = rows.try_emplace(k, z, std::map<std::size_t, std::vector<Vec2>>{});
    if (!fresh && it->second.first != z)
      throw ParseError("line " + std::to_string(i + 1) + ": layer " + std::to_string(k) + " has two z values");
    it->second.second[detail::csv_index(f[2], i + 1)].push_back(
        {detail::csv_number(f[3], i + 1), detail::csv_number(f[4], i + 1)});
  }
  std::vector<Layer> layers;
  try {
    for (auto &[k, body] : rows) {
      if (k != layers.size())
        throw ParseError("layer indices must run 0, 1, 2, ... without gaps (missing " + std::to_string(layers.size()) +
                         ")");
      Layer layer{body.first, {}};
      for (auto &[c, pts] : body.second)
        layer.contours.emplace_back(body.first, std::move(pts));
      layers.push_back(std::move(layer));
    }
    if (layers.empty())
      throw ParseError("layer file holds no points");
    return LayerStack(layer_height, std::move(layers));
  } catch (const InvalidArgument &e) {
    throw ParseError(std::string("layer file: ") + e.what());
  }
}

/// `x,y,z` per line.
inline std::string polyline_csv(const Polyline3 &line) {
  std::string out;
  for (const auto &p : line.points())
    out += fmt::format("{},{},{}\n", p.x, p.y, p.z);
  return out;
}

inline Polyline3 parse_polyline_csv(std::string_view text) {
  const auto lines = detail::split_lines(text);
  std::vector<Point3> pts;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty())
      continue;
    const auto f = detail::split_csv(lines[i]);
    if (f.size() != 3)
      throw ParseError("line " + std::to_string(i + 1) + ": expected x,y,z");
    pts.push_back({detail::csv_number(f[0], i + 1), detail::csv_number(f[1], i + 1), detail::csv_number(f[2], i + 1)});
  }
  if (pts.size() < 2)
    throw ParseError("path file needs at least two points");
  try {
    return Polyline3(std::move(pts), false);
  } catch (const InvalidArgument &e) {
    throw ParseError(std::string("path file: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Configuration

enum class DesignKind { oscillating_circle, woven, twisted_prism };

struct DesignConfig {
  DesignKind kind = DesignKind::oscillating_circle;
  double height = 0.0;
  OscillationParams oscillation;
  // woven: regular polygon base, modulated radially per layer
  double weave_radius = 0.0;
  int weave_samples = 360;
  double weave_amplitude = 0.0;
  int weave_frequency = 1;
  double weave_phase_shift = 180.0; // degrees per layer
  TwistParams twist;
};

struct PipelineConfig {
  fs::path base_dir; // relative input paths resolve against this
  fs::path out_dir = "out";
  std::optional<DesignConfig> design;
  std::optional<fs::path> mesh; // STL input when there is no design
  std::optional<SlicePlan> slice;
  std::optional<PrintConfig> print;
  double event_interval = 1.0;
  double cell_size = 0.0; // 0 selects bead_width / 8
  std::optional<WorkspaceEnvelope> workspace;
  std::optional<MaterialModel> material;
  double time_step = 1.0;
  std::optional<InspectOptions> inspect;
  std::optional<fs::path> scan;
  std::optional<fs::path> reference;
};

namespace detail {

inline ConfigError config_error(const std::string &key, const std::string &what) {
  return ConfigError("config key `" + key + "`: " + what);
}

inline double positive(const Config &c, const std::string &s, const std::string &k) {
  const double v = c.number(s, k);
  if (!(v > 0.0))
    throw config_error(s + "." + k, "must be positive");
  return v;
}

inline double non_negative(const Config &c, const std::string &s, const std::string &k, double fallback) {
  const double v = c.number_or(s, k, fallback);
  if (!(v >= 0.0))
    throw config_error(s + "." + k, "must be non-negative");
  return v;
}

inline fs::path resolve(const fs::path &base, const std::string &p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

} // namespace detail

/// Parses and validates every section before anything runs. Errors name the
/// offending `section.key`.
inline PipelineConfig parse_pipeline_config(std::string_view text, const fs::path &base_dir = {}) {
  const Config c = Config::parse(text);
  for (const auto &name : c.section_names())
    if (name != "io" && name != "design" && name != "slice" && name != "print" && name != "workspace" &&
        name != "material" && name != "inspect")
      throw ConfigError("unknown config section [" + name + "]");
  PipelineConfig out;
  out.base_dir = base_dir;

  c.require_known("io", {"out_dir", "mesh"});
  if (c.has("io", "out_dir"))
    out.out_dir = c.string("io", "out_dir");
  if (c.has("io", "mesh"))
    out.mesh = detail::resolve(base_dir, c.string("io", "mesh"));

  if (c.has("design")) {
    c.require_known("design", {"kind", "height", "R_c", "a", "n", "samples", "base_radius", "amplitude", "frequency",
                               "phase_shift", "rect_width", "rect_depth", "circle_radius", "total_twist"});
    DesignConfig d;
    const std::string kind = c.string("design", "kind");
    d.height = detail::positive(c, "design", "height");
    if (kind == "oscillating_circle") {
      d.kind = DesignKind::oscillating_circle;
      d.oscillation.base_radius = detail::positive(c, "design", "R_c");
      d.oscillation.amplitude = detail::non_negative(c, "design", "a", 0.0);
      d.oscillation.frequency = c.integer_or("design", "n", 0);
      d.oscillation.samples = c.integer_or("design", "samples", 360);
      if (d.oscillation.amplitude >= d.oscillation.base_radius)
        throw detail::config_error("design.a", "must be smaller than design.R_c");
      if (d.oscillation.frequency < 0)
        throw detail::config_error("design.n", "must be non-negative");
      if (d.oscillation.samples < 16)
        throw detail::config_error("design.samples", "must be at least 16");
    } else if (kind == "woven") {
      d.kind = DesignKind::woven;
      d.weave_radius = detail::positive(c, "design", "base_radius");
      d.weave_samples = c.integer_or("design", "samples", 360);
      d.weave_amplitude = detail::non_negative(c, "design", "amplitude", 0.0);
      d.weave_frequency = c.integer_or("design", "frequency", 1);
      d.weave_phase_shift = c.number_or("design", "phase_shift", 180.0);
      if (d.weave_samples < 16)
        throw detail::config_error("design.samples", "must be at least 16");
      if (d.weave_frequency < 1)
        throw detail::config_error("design.frequency", "must be at least 1");
    } else if (kind == "twisted_prism") {
      d.kind = DesignKind::twisted_prism;
      d.twist.rect_width = detail::positive(c, "design", "rect_width");
      d.twist.rect_depth = detail::positive(c, "design", "rect_depth");
      d.twist.circle_radius = detail::positive(c, "design", "circle_radius");
      d.twist.total_twist = c.number_or("design", "total_twist", 0.0);
      d.twist.samples = c.integer_or("design", "samples", 360);
      d.twist.height = d.height;
      if (d.twist.samples < 16)
        throw detail::config_error("design.samples", "must be at least 16");
    } else {
      throw detail::config_error("design.kind", "unknown design '" + kind +
                                                    "' (expected oscillating_circle, woven or twisted_prism)");
    }
    out.design = d;
  }

  if (c.has("slice")) {
    c.require_known("slice", {"layer_height", "mode", "samples_per_turn", "flat_first_layer"});
    SlicePlan p;
    p.layer_height = detail::positive(c, "slice", "layer_height");
    const std::string mode = c.string_or("slice", "mode", "planar");
    if (mode == "planar")
      p.mode = SliceMode::planar;
    else if (mode == "helical")
      p.mode = SliceMode::helical;
    else
      throw detail::config_error("slice.mode", "must be \"planar\" or \"helical\"");
    p.samples_per_turn = c.integer_or("slice", "samples_per_turn", 360);
    if (p.samples_per_turn < 36)
      throw detail::config_error("slice.samples_per_turn", "must be at least 36");
    p.flat_first_layer = c.boolean_or("slice", "flat_first_layer", true);
    out.slice = p;
  }

  if (c.has("print")) {
    c.require_known("print", {"print_speed", "travel_speed", "bead_width", "bead_height", "overlap_tolerance",
                              "event_interval", "cell_size"});
    PrintConfig p;
    p.print_speed = detail::positive(c, "print", "print_speed");
    p.travel_speed = detail::positive(c, "print", "travel_speed");
    p.bead_width = detail::positive(c, "print", "bead_width");
    if (c.has("print", "bead_height"))
      p.bead_height = detail::positive(c, "print", "bead_height");
    else if (out.slice)
      p.bead_height = out.slice->layer_height;
    else
      throw ConfigError("missing config key `print.bead_height` (or `slice.layer_height`)");
    p.overlap_tolerance = c.number_or("print", "overlap_tolerance", 0.10);
    if (!(p.overlap_tolerance >= 0.0 && p.overlap_tolerance < 1.0))
      throw detail::config_error("print.overlap_tolerance", "must be in [0, 1)");
    out.event_interval = c.has("print", "event_interval") ? detail::positive(c, "print", "event_interval") : 1.0;
    out.cell_size = c.has("print", "cell_size") ? detail::positive(c, "print", "cell_size") : p.bead_width / 8;
    if (out.cell_size > p.bead_width / 4)
      throw detail::config_error("print.cell_size", "must not exceed print.bead_width / 4");
    out.print = p;
  }

  if (c.has("workspace")) {
    c.require_known("workspace", {"base_x", "base_y", "base_z", "r_min", "r_max", "z_min", "z_max"});
    WorkspaceEnvelope w;
    w.base = {c.number_or("workspace", "base_x", 0.0), c.number_or("workspace", "base_y", 0.0),
              c.number_or("workspace", "base_z", 0.0)};
    w.r_min = detail::non_negative(c, "workspace", "r_min", 0.0);
    w.r_max = detail::positive(c, "workspace", "r_max");
    w.z_min = c.number("workspace", "z_min");
    w.z_max = c.number("workspace", "z_max");
    if (!(w.r_min < w.r_max))
      throw detail::config_error("workspace.r_max", "must exceed workspace.r_min");
    if (!(w.z_min < w.z_max))
      throw detail::config_error("workspace.z_max", "must exceed workspace.z_min");
    out.workspace = w;
  }

  if (c.has("material")) {
    c.require_known("material",
                    {"C0", "C_rate", "phi0", "phi_rate", "E0", "E_rate", "nu", "nu_rate", "rho", "psi", "g", "time_step"});
    MaterialModel m;
    if (!c.has("material", "C0"))
      throw ConfigError("missing config key `material.C0`");
    m.cohesion0 = detail::non_negative(c, "material", "C0", 0.0);
    m.cohesion_rate = c.number_or("material", "C_rate", 0.0);
    m.friction0 = c.number("material", "phi0");
    if (!(m.friction0 >= 0.0 && m.friction0 < 90.0))
      throw detail::config_error("material.phi0", "must be in [0, 90) degrees");
    m.friction_rate = c.number_or("material", "phi_rate", 0.0);
    m.young0 = detail::positive(c, "material", "E0");
    m.young_rate = c.number_or("material", "E_rate", 0.0);
    m.poisson = c.number_or("material", "nu", 0.0);
    if (!(m.poisson >= 0.0 && m.poisson < 0.5))
      throw detail::config_error("material.nu", "must be in [0, 0.5)");
    m.poisson_rate = c.number_or("material", "nu_rate", 0.0);
    m.density = detail::positive(c, "material", "rho");
    m.dilatancy = c.number_or("material", "psi", 0.0);
    if (!(m.dilatancy >= 0.0 && m.dilatancy < 90.0))
      throw detail::config_error("material.psi", "must be in [0, 90) degrees");
    m.gravity = c.has("material", "g") ? detail::positive(c, "material", "g") : 9.81;
    out.time_step = c.has("material", "time_step") ? detail::positive(c, "material", "time_step") : 1.0;
    out.material = m;
  }

  if (c.has("inspect")) {
    c.require_known("inspect", {"tolerance", "align", "pass_fraction", "max_iterations", "icp_tolerance", "scan",
                                "reference"});
    InspectOptions o;
    o.tolerance = c.has("inspect", "tolerance") ? detail::positive(c, "inspect", "tolerance") : 1.0;
    o.align = c.boolean_or("inspect", "align", false);
    o.pass_fraction = c.number_or("inspect", "pass_fraction", 0.95);
    if (!(o.pass_fraction > 0.0 && o.pass_fraction <= 1.0))
      throw detail::config_error("inspect.pass_fraction", "must be in (0, 1]");
    o.icp.max_iterations = c.integer_or("inspect", "max_iterations", 50);
    if (o.icp.max_iterations < 1)
      throw detail::config_error("inspect.max_iterations", "must be at least 1");
    o.icp.tolerance = c.has("inspect", "icp_tolerance") ? detail::positive(c, "inspect", "icp_tolerance") : 1e-6;
    if (c.has("inspect", "scan"))
      out.scan = detail::resolve(base_dir, c.string("inspect", "scan"));
    if (c.has("inspect", "reference"))
      out.reference = detail::resolve(base_dir, c.string("inspect", "reference"));
    out.inspect = o;
  }

  // Cross-section requirements.
  if (out.design && !out.slice)
    throw ConfigError("missing config key `slice.layer_height` (needed by [design])");
  if (out.design && out.slice && layer_count_for(out.design->height, out.slice->layer_height) < 1)
    throw detail::config_error("design.height", "must hold at least one layer of slice.layer_height");
  if (out.material && !out.print)
    throw ConfigError("missing config section [print] (needed by [material] for `print.bead_width`)");
  return out;
}

inline PipelineConfig load_pipeline_config(const fs::path &file) {
  const std::string text = detail::read_file(file);
  return parse_pipeline_config(text, file.parent_path());
}

// ---------------------------------------------------------------------------
// Stages

enum class StageStatus { ok, warning, failed, skipped };

inline const char *to_string(StageStatus s) {
  switch (s) {
  case StageStatus::ok:
    return "ok";
  case StageStatus::warning:
    return "warning";
  case StageStatus::failed:
    return "failed";
  default:
    return "skipped";
  }
}

struct StageResult {
  std::string name;
  StageStatus status = StageStatus::ok;
  std::string message;
  std::vector<fs::path> artifacts; // relative to the output directory
};

struct RunOptions {
  fs::path out_dir;
  bool force = false;
  unsigned threads = 1;
  std::function<void(const std::string &)> log; // verbose progress, may be empty
};

namespace detail {

inline void note(const RunOptions &o, const std::string &msg) {
  if (o.log)
    o.log(msg);
}

inline void emit(const RunOptions &o, StageResult &r, const std::string &name, std::string_view data) {
  write_file(o.out_dir / name, data);
  r.artifacts.emplace_back(name);
  note(o, "wrote " + (o.out_dir / name).string());
}

template <typename T> const T &need(const std::optional<T> &v, const char *what) {
  if (!v)
    throw ConfigError(std::string("missing config section [") + what + "]");
  return *v;
}

} // namespace detail

inline LayerStack design_stack(const PipelineConfig &cfg) {
  const auto &d = detail::need(cfg.design, "design");
  const auto &plan = detail::need(cfg.slice, "slice");
  ContourFn fn;
  switch (d.kind) {
  case DesignKind::oscillating_circle:
    fn = [&](std::size_t, double z) { return std::vector<Contour2>{oscillating_contour(d.oscillation, z)}; };
    break;
  case DesignKind::woven: {
    WeaveParams w{circle_contour(d.weave_radius, d.weave_samples), d.weave_amplitude, d.weave_frequency,
                  deg_to_rad(d.weave_phase_shift)};
    w.validate();
    return slice_parametric([&](std::size_t k, double z) { return std::vector<Contour2>{woven_layer(w, k, z)}; },
                            d.height, plan);
  }
  case DesignKind::twisted_prism:
    fn = [&](std::size_t, double z) { return std::vector<Contour2>{twisted_section(d.twist, z)}; };
    break;
  }
  return slice_parametric(fn, d.height, plan);
}

/// Design stage: layer stack `design_layers.csv` and lofted `design.stl`.
inline StageResult stage_generate(const PipelineConfig &cfg, const RunOptions &opt) {
  StageResult r{"generate", StageStatus::ok, {}, {}};
  const LayerStack stack = design_stack(cfg);
  std::vector<Contour2> contours;
  for (const auto &l : stack.layers())
    contours.push_back(l.contours.front());
  const TriangleMesh mesh = loft_layers(contours, stack.layer_height());
  detail::emit(opt, r, "design_layers.csv", layer_stack_csv(stack));
  detail::emit(opt, r, "design.stl", stl_bytes(mesh));
  r.message = fmt::format("{} layers, {} triangles, watertight={}", stack.size(), mesh.triangles().size(),
                          mesh.watertight() ? "true" : "false");
  return r;
}

/// Default slicing input: the generated layer stack, else the configured mesh.
inline fs::path default_slice_input(const PipelineConfig &cfg, const fs::path &out_dir) {
  if (cfg.design)
    return out_dir / "design_layers.csv";
  if (cfg.mesh)
    return *cfg.mesh;
  throw ConfigError("nothing to slice: set [design] or `io.mesh`");
}

/// Slicing stage: `layers.csv` (planar) or `helix.csv` (helical). STL inputs
/// are sliced at mid-layer planes; layer-stack inputs pass straight through.
inline StageResult stage_slice(const PipelineConfig &cfg, const RunOptions &opt, const fs::path &input) {
  StageResult r{"slice", StageStatus::ok, {}, {}};
  const auto &plan = detail::need(cfg.slice, "slice");
  const std::string data = detail::read_file(input);
  const bool is_stack = data.rfind("layer,z,contour,x,y", 0) == 0;
  const LayerStack stack = is_stack ? parse_layer_stack_csv(data, plan.layer_height)
                                    : slice_planar(parse_stl(data), plan, opt.threads);
  detail::note(opt, fmt::format("{} layers from {}", stack.size(), input.string()));
  if (plan.mode == SliceMode::planar) {
    detail::emit(opt, r, "layers.csv", layer_stack_csv(stack));
    std::size_t contours = 0;
    for (const auto &l : stack.layers())
      contours += l.contours.size();
    r.message = fmt::format("planar: {} layers, {} contours", stack.size(), contours);
  } else {
    const Polyline3 helix = slice_helical(stack, plan);
    detail::emit(opt, r, "helix.csv", polyline_csv(helix));
    r.message = fmt::format("helical: {} turns, {} points, length {:.6g} mm", stack.size(), helix.size(),
                            polyline_length(helix));
  }
  return r;
}

inline fs::path default_toolpath_input(const PipelineConfig &cfg, const fs::path &out_dir) {
  const auto &plan = detail::need(cfg.slice, "slice");
  return out_dir / (plan.mode == SliceMode::helical ? "helix.csv" : "layers.csv");
}

/// Toolpath stage: `toolpath.gcode`, `events.csv` and `checks.txt`. Fails on
/// over-deposition or workspace violations unless forced.
inline StageResult stage_toolpath(const PipelineConfig &cfg, const RunOptions &opt, const fs::path &input) {
  StageResult r{"toolpath", StageStatus::ok, {}, {}};
  const auto &print = detail::need(cfg.print, "print");
  const std::string data = detail::read_file(input);
  Toolpath path = [&] {
    if (data.rfind("layer,z,contour,x,y", 0) == 0) {
      const double h = cfg.slice ? cfg.slice->layer_height : print.bead_height;
      return plan_toolpath(parse_layer_stack_csv(data, h), print);
    }
    return plan_toolpath(parse_polyline_csv(data), print);
  }();
  detail::emit(opt, r, "toolpath.gcode", gcode_text(path));
  detail::emit(opt, r, "events.csv", event_series_csv(make_event_series(path, cfg.event_interval)));

  const auto collisions = detect_overdeposition(path, opt.threads);
  const auto grid = simulate_deposition(path, cfg.cell_size, opt.threads);
  std::vector<WorkspaceViolation> violations;
  if (cfg.workspace)
    violations = check_workspace(path, *cfg.workspace);

  std::string checks = "# printchain toolpath checks\n";
  checks += fmt::format("moves: {}\n", path.moves().size());
  checks += fmt::format("duration_s: {:.6g}\n", path.duration());
  checks += fmt::format("extrusion_time_s: {:.6g}\n", path.extrusion_time());
  checks += fmt::format("travel_moves: {}\n", path.travel_count());
  checks += fmt::format("collisions: {}\n", collisions.size());
  for (const auto &c : collisions)
    checks += fmt::format("  collision z={:.6g} moves={},{} distance_mm={:.6g} overlap_mm={:.6g} pairs={}\n", c.layer_z,
                          c.move_a, c.move_b, c.distance, c.overlap_length, c.pairs);
  checks += fmt::format("deposition_cell_mm: {:.6g}\n", cfg.cell_size);
  checks += fmt::format("deposition_covered_cells: {}\n", grid.covered_cells());
  checks += fmt::format("deposition_over_cells: {}\n", grid.over_cells());
  checks += fmt::format("deposition_over_fraction: {:.6g}\n", grid.over_fraction());
  if (cfg.workspace) {
    checks += fmt::format("workspace_violations: {}\n", violations.size());
    for (const auto &v : violations)
      checks += fmt::format("  violation t={:.6g} at ({:.4f}, {:.4f}, {:.4f}): {}\n", v.time, v.point.x, v.point.y,
                            v.point.z, v.reason);
  } else {
    checks += "workspace_violations: not-checked\n";
  }
  detail::emit(opt, r, "checks.txt", checks);

  r.message = fmt::format("{} moves, {:.6g} s, {} collisions, {} workspace violations", path.moves().size(),
                          path.duration(), collisions.size(), violations.size());
  if (!collisions.empty() || !violations.empty())
    r.status = opt.force ? StageStatus::warning : StageStatus::failed;
  return r;
}

/// Stability stage: `stability.txt` and `utilization.csv` from an event series.
inline StageResult stage_stability(const PipelineConfig &cfg, const RunOptions &opt, const fs::path &input) {
  StageResult r{"stability", StageStatus::ok, {}, {}};
  const auto &m = detail::need(cfg.material, "material");
  const auto &print = detail::need(cfg.print, "print");
  const auto series = parse_event_series(detail::read_file(input));
  const auto timeline = timeline_from_events(series, print.bead_height, print.bead_width);
  const auto rep = run_stability(timeline, m, cfg.time_step);
  detail::emit(opt, r, "stability.txt", stability_report_text(rep));
  detail::emit(opt, r, "utilization.csv", utilization_csv(rep));
  if (rep.failed) {
    r.status = StageStatus::failed;
    r.message = fmt::format("{} at t={:.6g} s, layer {}", to_string(rep.mode), rep.failure_time, rep.failure_layer);
  } else {
    r.message = fmt::format("stable over {} layers, max U_plastic {:.6g}", timeline.size(), rep.max_plastic);
  }
  return r;
}

/// Inspection stage: `deviation.txt`, `deviations.csv` and `heatmap.ply`.
inline StageResult stage_inspect(const PipelineConfig &cfg, const RunOptions &opt, const fs::path &scan,
                                 const fs::path &reference) {
  StageResult r{"inspect", StageStatus::ok, {}, {}};
  const InspectOptions o = cfg.inspect.value_or(InspectOptions{});
  const PointCloud cloud = load_pointcloud(scan);
  const MeshDistance ref(load_stl(reference));
  const auto rep = deviation_report(cloud, ref, o, opt.threads);
  detail::emit(opt, r, "deviation.txt", deviation_report_text(rep));
  detail::emit(opt, r, "deviations.csv", deviations_csv(rep.cloud));
  detail::emit(opt, r, "heatmap.ply", heatmap_ply_text(rep.cloud, o.tolerance));
  r.message = fmt::format("{} points, {:.4g}% within {:.6g} mm", cloud.size(), 100.0 * rep.fraction_within, o.tolerance);
  if (!rep.passed)
    r.status = StageStatus::failed;
  return r;
}

// ---------------------------------------------------------------------------
// Full chain and manifest

inline std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  std::string hex;
  for (unsigned int i = 0; i < len; ++i)
    hex += fmt::format("{:02x}", digest[i]);
  return hex;
}

inline std::string manifest_json(const std::vector<StageResult> &stages, const fs::path &out_dir) {
  nlohmann::ordered_json doc;
  doc["tool"] = "printchain";
  auto &list = doc["stages"] = nlohmann::ordered_json::array();
  for (const auto &s : stages) {
    nlohmann::ordered_json st;
    st["name"] = s.name;
    st["status"] = to_string(s.status);
    st["message"] = s.message;
    st["artifacts"] = nlohmann::ordered_json::array();
    for (const auto &a : s.artifacts) {
      const std::string data = detail::read_file(out_dir / a);
      st["artifacts"].push_back({{"path", a.generic_string()}, {"bytes", data.size()}, {"sha256", sha256_hex(data)}});
    }
    list.push_back(st);
  }
  return doc.dump(2) + "\n";
}

struct ChainResult {
  std::vector<StageResult> stages;
  bool ok() const {
    for (const auto &s : stages)
      if (s.status == StageStatus::failed)
        return false;
    return true;
  }
};

/// Runs every configured stage in order. A failing stage stops the chain; the
/// remaining stages are listed as skipped. `manifest.json` is always written,
/// also when a stage throws (the error is rethrown afterwards).
inline ChainResult run_chain(const PipelineConfig &cfg, const RunOptions &opt) {
  fs::create_directories(opt.out_dir);
  ChainResult res;
  using StageFn = std::function<StageResult()>;
  std::vector<std::pair<std::string, StageFn>> plan;
  if (cfg.design)
    plan.emplace_back("generate", [&] { return stage_generate(cfg, opt); });
  plan.emplace_back("slice", [&] { return stage_slice(cfg, opt, default_slice_input(cfg, opt.out_dir)); });
  plan.emplace_back("toolpath", [&] { return stage_toolpath(cfg, opt, default_toolpath_input(cfg, opt.out_dir)); });
  if (cfg.material)
    plan.emplace_back("stability", [&] { return stage_stability(cfg, opt, opt.out_dir / "events.csv"); });
  if (cfg.inspect && cfg.scan && cfg.reference)
    plan.emplace_back("inspect", [&] { return stage_inspect(cfg, opt, *cfg.scan, *cfg.reference); });

  const auto write_manifest = [&] {
    detail::write_file(opt.out_dir / "manifest.json", manifest_json(res.stages, opt.out_dir));
  };
  bool halted = false;
  for (auto &[name, fn] : plan) {
    if (halted) {
      res.stages.push_back({name, StageStatus::skipped, "not run: an earlier stage failed", {}});
      continue;
    }
    detail::note(opt, "stage " + name);
    try {
      res.stages.push_back(fn());
    } catch (const std::exception &e) {
      res.stages.push_back({name, StageStatus::failed, e.what(), {}});
      write_manifest();
      throw;
    }
    const auto &last = res.stages.back();
    detail::note(opt, fmt::format("stage {}: {} ({})", name, to_string(last.status), last.message));
    if (last.status == StageStatus::failed)
      halted = true;
  }
  write_manifest();
  return res;
}

} // namespace printchain
