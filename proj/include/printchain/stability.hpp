#pragma once

// Early-age stability of a printed wall on a layer-stack idealisation:
// Mohr-Coulomb plastic collapse under self-weight and elastic self-weight
// buckling of a base-clamped wall, with properties evolving with layer age.
//
// Units: stresses and moduli in kPa, time in s, geometry in mm at the
// interface (converted to m internally), density kg/m^3, angles in degrees.

#include <printchain/error.hpp>
#include <printchain/geometry.hpp>
#include <printchain/toolpath.hpp>

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace printchain {

/// Clamped ceiling for the friction angle, degrees.
inline constexpr double kMaxFrictionAngle = 89.9;

/// Critical value of q*L^3/(E*I) for a heavy column clamped at the base and
/// free at the top.
inline constexpr double kGreenhillConstant = 7.8373;

struct MaterialModel {
  double cohesion0 = 0.0;      // C0, kPa
  double cohesion_rate = 0.0;  // kPa/s
  double friction0 = 0.0;      // phi0, degrees
  double friction_rate = 0.0;  // degrees/s
  double young0 = 0.0;         // E0, kPa
  double young_rate = 0.0;     // kPa/s
  double poisson = 0.0;        // nu
  double poisson_rate = 0.0;   // 1/s, zero keeps nu constant
  double density = 0.0;        // rho, kg/m^3
  double dilatancy = 0.0;      // psi, degrees; carried for completeness only
  double gravity = 9.81;       // m/s^2

  void validate() const {
    const double all[] = {cohesion0, cohesion_rate, friction0, friction_rate, young0, young_rate,
                          poisson,   poisson_rate,  density,   dilatancy,     gravity};
    for (double v : all)
      if (!std::isfinite(v))
        throw InvalidArgument("material parameters must be finite");
    if (!(cohesion0 >= 0.0))
      throw InvalidArgument("material cohesion C0 must be non-negative");
    if (!(young0 > 0.0))
      throw InvalidArgument("material Young's modulus E0 must be positive");
    if (!(poisson >= 0.0 && poisson < 0.5))
      throw InvalidArgument("material Poisson ratio must be in [0, 0.5)");
    if (!(friction0 >= 0.0 && friction0 < 90.0))
      throw InvalidArgument("material friction angle must be in [0, 90) degrees");
    if (!(dilatancy >= 0.0 && dilatancy < 90.0))
      throw InvalidArgument("material dilatancy angle must be in [0, 90) degrees");
    if (!(density > 0.0))
      throw InvalidArgument("material density must be positive");
    if (!(gravity > 0.0))
      throw InvalidArgument("gravity must be positive");
  }
};

struct MaterialState {
  double cohesion = 0.0; // kPa
  double friction = 0.0; // degrees
  double young = 0.0;    // kPa
  double poisson = 0.0;
};

/// Linear evolution with age, each property clamped to its admissible range.
inline MaterialState material_at(const MaterialModel &m, double age) {
  if (!(age >= 0.0))
    throw InvalidArgument("material age must be non-negative");
  MaterialState s;
  s.cohesion = std::max(0.0, m.cohesion0 + m.cohesion_rate * age);
  s.friction = std::clamp(m.friction0 + m.friction_rate * age, 0.0, kMaxFrictionAngle);
  s.young = std::max(std::numeric_limits<double>::min(), m.young0 + m.young_rate * age);
  s.poisson = std::clamp(m.poisson + m.poisson_rate * age, 0.0, 0.499);
  return s;
}

/// Shear yield stress tau_y = C + sigma_n * tan(phi); compression positive.
inline double mohr_coulomb_tau_y(double cohesion, double friction_deg, double sigma_n) {
  if (!(friction_deg >= 0.0 && friction_deg < 90.0))
    throw DomainError("friction angle must be in [0, 90) degrees");
  if (!(sigma_n >= 0.0))
    throw DomainError("normal stress must be non-negative (compression positive)");
  return cohesion + sigma_n * std::tan(deg_to_rad(friction_deg));
}

/// Uniaxial compressive strength implied by Mohr-Coulomb: 2C cos(phi) / (1 - sin(phi)).
inline double unconfined_strength(double cohesion, double friction_deg) {
  if (!(friction_deg >= 0.0 && friction_deg < 90.0))
    throw DomainError("friction angle must be in [0, 90) degrees");
  const double phi = deg_to_rad(friction_deg);
  return 2.0 * cohesion * std::cos(phi) / (1.0 - std::sin(phi));
}

/// Self-weight critical height (m) of a base-clamped wall strip of thickness
/// `thickness_mm`, using the plane-strain modulus E / (1 - nu^2).
inline double critical_height(double young_kpa, double poisson, double thickness_mm, double density, double gravity) {
  const double w = thickness_mm / 1000.0;
  const double e_bar = young_kpa * 1000.0 / (1.0 - poisson * poisson);
  const double inertia = w * w * w / 12.0;
  const double area = w;
  return std::cbrt(kGreenhillConstant * e_bar * inertia / (density * gravity * area));
}

// ---------------------------------------------------------------------------
// Build timeline

struct LayerRecord {
  std::size_t index = 0;
  double z = 0.0;             // nozzle height at the layer top, mm
  double height = 0.0;        // layer thickness, mm
  double t_start = 0.0;       // deposition start, s
  double t_end = 0.0;         // deposition end, s
  double perimeter = 0.0;     // extruded length, mm
  double wall_thickness = 0.0; // bead width, mm
  double area = 0.0;          // cross-section, mm^2 (perimeter * thickness)
  Vec2 centroid;
  double mean_radius = 0.0;   // mean distance of the bead from the centroid, mm
};

class BuildTimeline {
public:
  BuildTimeline() = default;
  explicit BuildTimeline(std::vector<LayerRecord> layers) : layers_(std::move(layers)) {
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto &l = layers_[i];
      if (!(l.height > 0.0) || !(l.t_end >= l.t_start) || !(l.wall_thickness > 0.0))
        throw InvalidArgument("layer record " + std::to_string(i) + " is invalid");
      if (i > 0 && !(l.t_start > layers_[i - 1].t_start))
        throw InvalidArgument("layer deposition times must be strictly increasing");
    }
  }

  const std::vector<LayerRecord> &layers() const { return layers_; }
  std::size_t size() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }
  const LayerRecord &operator[](std::size_t i) const { return layers_[i]; }

  /// Deposited thickness (mm) of layer i at time t, growing linearly over
  /// [t_start, t_end].
  double deposited(std::size_t i, double t) const {
    const auto &l = layers_[i];
    if (t < l.t_start)
      return 0.0;
    if (t >= l.t_end)
      return l.height;
    return l.height * (t - l.t_start) / (l.t_end - l.t_start);
  }

  /// Uniform wall: n layers of thickness h printed back to back in T_l each.
  static BuildTimeline uniform(std::size_t n, double layer_height, double layer_time, double wall_thickness,
                               double perimeter) {
    std::vector<LayerRecord> ls;
    for (std::size_t i = 0; i < n; ++i) {
      LayerRecord r;
      r.index = i;
      r.height = layer_height;
      r.z = layer_height * static_cast<double>(i + 1);
      r.t_start = layer_time * static_cast<double>(i);
      r.t_end = layer_time * static_cast<double>(i + 1);
      r.perimeter = perimeter;
      r.wall_thickness = wall_thickness;
      r.area = perimeter * wall_thickness;
      r.mean_radius = perimeter / (2.0 * std::numbers::pi);
      ls.push_back(r);
    }
    return BuildTimeline(std::move(ls));
  }

private:
  std::vector<LayerRecord> layers_;
};

/// Groups extruding rows into layers by nozzle height measured from the build
/// plate at z = 0: rows with z in ((k)h, (k+1)h] belong to layer k.
inline BuildTimeline timeline_from_events(const EventSeries &series, double layer_height, double wall_thickness) {
  if (!(layer_height > 0.0 && wall_thickness > 0.0))
    throw InvalidArgument("layer height and wall thickness must be positive");
  const auto &rows = series.rows();
  struct Acc {
    bool seen = false;
    double t0 = 0.0, t1 = 0.0, length = 0.0, cx = 0.0, cy = 0.0, weight = 0.0, ztop = 0.0;
    std::vector<Vec2> pts;
  };
  std::vector<Acc> acc;
  const auto layer_of = [&](double z) {
    const double k = std::ceil(z / layer_height - 1e-6) - 1.0;
    return static_cast<std::size_t>(std::max(0.0, k));
  };
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto &r = rows[i];
    if (r.state != 1 && !(i > 0 && rows[i - 1].state == 1))
      continue;
    // A row ends the segment that started at the previous row; the segment was
    // extruding when the previous row's state was 1.
    const std::size_t k = layer_of(r.z);
    if (acc.size() <= k)
      acc.resize(k + 1);
    auto &a = acc[k];
    if (!a.seen) {
      a.seen = true;
      a.t0 = r.t;
    }
    a.t1 = r.t;
    a.ztop = std::max(a.ztop, r.z);
    a.pts.push_back({r.x, r.y});
    if (i > 0 && rows[i - 1].state == 1 && layer_of(rows[i - 1].z) == k) {
      const auto &p = rows[i - 1];
      const double len = std::hypot(r.x - p.x, r.y - p.y);
      a.length += len;
      a.cx += 0.5 * (r.x + p.x) * len;
      a.cy += 0.5 * (r.y + p.y) * len;
      a.weight += len;
    }
  }
  std::vector<LayerRecord> out;
  for (std::size_t k = 0; k < acc.size(); ++k) {
    const auto &a = acc[k];
    if (!a.seen)
      continue;
    LayerRecord l;
    l.index = k;
    l.height = layer_height;
    l.z = layer_height * static_cast<double>(k + 1);
    l.t_start = a.t0;
    l.t_end = a.t1;
    l.perimeter = a.length;
    l.wall_thickness = wall_thickness;
    l.area = a.length * wall_thickness;
    if (a.weight > 0.0)
      l.centroid = {a.cx / a.weight, a.cy / a.weight};
    double rsum = 0.0;
    for (const auto &p : a.pts)
      rsum += distance(p, l.centroid);
    l.mean_radius = a.pts.empty() ? 0.0 : rsum / static_cast<double>(a.pts.size());
    out.push_back(l);
  }
  if (out.empty())
    throw InvalidArgument("event series contains no extrusion");
  return BuildTimeline(std::move(out));
}

inline BuildTimeline timeline_from_toolpath(const Toolpath &path) {
  const auto series = make_event_series(path, path.duration() + 1.0);
  return timeline_from_events(series, path.config().bead_height, path.config().bead_width);
}

// ---------------------------------------------------------------------------
// Checks

/// Vertical self-weight stress (kPa) at the bottom of layer i at time t.
inline double vertical_stress(const BuildTimeline &tl, const MaterialModel &m, std::size_t i, double t) {
  double above_mm = 0.0;
  for (std::size_t j = i; j < tl.size(); ++j)
    above_mm += tl.deposited(j, t);
  return m.density * m.gravity * (above_mm / 1000.0) / 1000.0;
}

/// U_plastic = sigma_v / sigma_c per layer; layers not yet started report 0.
inline std::vector<double> plastic_collapse_check(const BuildTimeline &tl, const MaterialModel &m, double t) {
  m.validate();
  if (tl.empty() || t < tl[0].t_start)
    throw InvalidArgument("plastic collapse check requested before any deposition");
  std::vector<double> u(tl.size(), 0.0);
  // Accumulate from the top down so each layer's load is a running sum.
  double above_mm = 0.0;
  for (std::size_t k = tl.size(); k-- > 0;) {
    above_mm += tl.deposited(k, t);
    if (t < tl[k].t_start)
      continue;
    const auto s = material_at(m, t - tl[k].t_start);
    const double sigma_v = m.density * m.gravity * (above_mm / 1000.0) / 1000.0;
    const double sigma_c = unconfined_strength(s.cohesion, s.friction);
    u[k] = sigma_c > 0.0 ? sigma_v / sigma_c : (sigma_v > 0.0 ? std::numeric_limits<double>::infinity() : 0.0);
  }
  return u;
}

/// Thin-wall test for the buckling idealisation: every layer is long compared
/// with its thickness and the wall leans less than `max_inclination_deg`.
inline bool is_thin_wall(const BuildTimeline &tl, double max_inclination_deg = 20.0) {
  const double slope = std::tan(deg_to_rad(max_inclination_deg));
  for (std::size_t i = 0; i < tl.size(); ++i) {
    const auto &l = tl[i];
    if (!(l.perimeter >= 10.0 * l.wall_thickness))
      return false;
    if (i > 0) {
      const auto &p = tl[i - 1];
      const double lean = std::max(std::abs(l.mean_radius - p.mean_radius), distance(l.centroid, p.centroid));
      if (lean > slope * l.height)
        return false;
    }
  }
  return true;
}

struct BucklingState {
  bool evaluated = false;
  double height = 0.0;          // current built height, m
  double effective_young = 0.0; // height-weighted mean E, kPa
  double effective_poisson = 0.0;
  double critical_height = 0.0; // m
  double utilization = 0.0;     // height / critical_height
};

/// Self-weight buckling of the built wall with a height-weighted mean modulus.
inline BucklingState buckling_check(const BuildTimeline &tl, const MaterialModel &m, double t) {
  m.validate();
  if (tl.empty() || t < tl[0].t_start)
    throw InvalidArgument("buckling check requested before any deposition");
  BucklingState b;
  if (!is_thin_wall(tl))
    return b;
  b.evaluated = true;
  double h_mm = 0.0, e_sum = 0.0, nu_sum = 0.0, w_mm = 0.0;
  for (std::size_t i = 0; i < tl.size(); ++i) {
    const double d = tl.deposited(i, t);
    if (d <= 0.0)
      continue;
    const auto s = material_at(m, t - tl[i].t_start);
    h_mm += d;
    e_sum += d * s.young;
    nu_sum += d * s.poisson;
    w_mm += d * tl[i].wall_thickness;
  }
  if (h_mm <= 0.0)
    return b;
  b.height = h_mm / 1000.0;
  b.effective_young = e_sum / h_mm;
  b.effective_poisson = nu_sum / h_mm;
  b.critical_height = critical_height(b.effective_young, b.effective_poisson, w_mm / h_mm, m.density, m.gravity);
  b.utilization = b.height / b.critical_height;
  return b;
}

// ---------------------------------------------------------------------------
// Time march

enum class FailureMode { none, plastic_collapse, elastic_buckling };

inline const char *to_string(FailureMode m) {
  switch (m) {
  case FailureMode::plastic_collapse:
    return "plastic_collapse";
  case FailureMode::elastic_buckling:
    return "elastic_buckling";
  default:
    return "none";
  }
}

struct UtilizationSample {
  double t = 0.0;
  std::size_t layer = 0; // layer with the highest plastic utilization
  double plastic = 0.0;
  double buckling = 0.0;
};

struct StabilityReport {
  FailureMode mode = FailureMode::none;
  bool failed = false;
  double failure_time = 0.0;
  std::size_t failure_layer = 0;  // 1-based count of layers started at failure
  std::size_t critical_layer = 0; // index of the layer whose plastic utilization governs
  bool buckling_evaluated = false;
  double time_step = 0.0;
  double max_plastic = 0.0;
  double max_buckling = 0.0;
  std::vector<double> layer_plastic; // per-layer U_plastic at failure (or at the end)
  std::vector<UtilizationSample> history;
};

/// Marches t from the first deposition to the end of the build with steps no
/// longer than `time_step`, also stopping at every layer start and end.
/// The first time either utilization reaches 1 is reported; a simultaneous
/// trip is attributed to plastic collapse.
inline StabilityReport run_stability(const BuildTimeline &tl, const MaterialModel &m, double time_step) {
  m.validate();
  if (tl.empty())
    throw InvalidArgument("stability analysis needs a non-empty timeline");
  if (!(time_step > 0.0))
    throw InvalidArgument("stability time step must be positive");
  const double t0 = tl[0].t_start;
  double t_end = t0;
  for (const auto &l : tl.layers())
    t_end = std::max(t_end, l.t_end);
  std::vector<double> times;
  const auto steps = static_cast<std::size_t>(std::ceil((t_end - t0) / time_step));
  for (std::size_t i = 0; i <= steps; ++i)
    times.push_back(std::min(t_end, t0 + static_cast<double>(i) * time_step));
  for (const auto &l : tl.layers()) {
    times.push_back(l.t_start);
    times.push_back(l.t_end);
  }
  std::sort(times.begin(), times.end());
  times.erase(std::unique(times.begin(), times.end()), times.end());

  StabilityReport rep;
  rep.time_step = time_step;
  rep.buckling_evaluated = is_thin_wall(tl);
  for (double t : times) {
    auto u = plastic_collapse_check(tl, m, t);
    const auto b = buckling_check(tl, m, t);
    const auto top = static_cast<std::size_t>(std::max_element(u.begin(), u.end()) - u.begin());
    rep.history.push_back({t, top, u[top], b.utilization});
    rep.max_plastic = std::max(rep.max_plastic, u[top]);
    rep.max_buckling = std::max(rep.max_buckling, b.utilization);
    const bool plastic = u[top] >= 1.0;
    const bool buckled = b.evaluated && b.utilization >= 1.0;
    rep.layer_plastic = std::move(u);
    if (plastic || buckled) {
      rep.failed = true;
      rep.mode = plastic ? FailureMode::plastic_collapse : FailureMode::elastic_buckling;
      rep.failure_time = t;
      rep.critical_layer = top;
      std::size_t started = 0;
      for (const auto &l : tl.layers())
        if (l.t_start <= t)
          ++started;
      rep.failure_layer = started;
      break;
    }
  }
  return rep;
}

/// Human-readable summary.
inline std::string stability_report_text(const StabilityReport &r) {
  std::string out;
  out += "# printchain stability report\n";
  out += fmt::format("mode: {}\n", to_string(r.mode));
  out += fmt::format("failed: {}\n", r.failed ? "true" : "false");
  if (r.failed) {
    out += fmt::format("failure_time_s: {:.6g}\n", r.failure_time);
    out += fmt::format("failure_layer: {}\n", r.failure_layer);
    out += fmt::format("critical_layer_index: {}\n", r.critical_layer);
  }
  out += fmt::format("time_step_s: {:.6g}\n", r.time_step);
  out += fmt::format("max_U_plastic: {:.6g}\n", r.max_plastic);
  if (r.buckling_evaluated) {
    out += fmt::format("max_U_buckling: {:.6g}\n", r.max_buckling);
  } else {
    out += "buckling: not-evaluated (geometry is not a thin vertical wall; the self-weight column "
           "idealisation does not apply)\n";
  }
  return out;
}

/// CSV `t,layer,U_plastic,U_buckling` with one row per march step for the
/// governing layer.
inline std::string utilization_csv(const StabilityReport &r) {
  std::string out = "t,layer,U_plastic,U_buckling\n";
  for (const auto &h : r.history)
    out += fmt::format("{:.6g},{},{:.6g},{:.6g}\n", h.t, h.layer, h.plastic, h.buckling);
  return out;
}

} // namespace printchain
