// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any failure.

#include "fixtures.hpp"
#include "oracles.hpp"

#include <printchain/deposition.hpp>
#include <printchain/inspection.hpp>
#include <printchain/mesh_distance.hpp>
#include <printchain/pipeline.hpp>
#include <printchain/slicer.hpp>
#include <printchain/stability.hpp>
#include <printchain/toolpath.hpp>

#include <fmt/format.h>

#include <functional>
#include <random>

using namespace printchain;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string &what) {
    if (!ok && pass) {
      pass = false;
      detail = what;
    }
  }
};

// Cylinder R=50, H=20 sliced at h=2 into one helix with 360 samples per turn.
Polyline3 helix_cylinder() {
  const SlicePlan plan{2.0, SliceMode::helical, 360, true};
  return slice_helical(slice_planar(fixture::cylinder(50, 20, 360), plan), plan);
}

Outcome helical_continuity() {
  Outcome o;
  const auto helix = helix_cylinder();
  const auto &p = helix.points();
  o.check(!helix.closed(), "helix is closed");
  double max_step = 0.0;
  for (std::size_t i = 1; i < p.size(); ++i) {
    const double dz = p[i].z - p[i - 1].z;
    o.check(dz >= 0.0, fmt::format("z decreases at sample {}", i));
    max_step = std::max(max_step, dz);
  }
  o.check(std::abs(max_step - 2.0 / 360) <= 1e-9, fmt::format("max z-step {} != h/360", max_step));
  // A planar seam shows up as a vertical jump of a full layer at one (x, y).
  for (std::size_t i = 1; i < p.size(); ++i)
    o.check(!(std::hypot(p[i].x - p[i - 1].x, p[i].y - p[i - 1].y) < 1e-9 && p[i].z - p[i - 1].z >= 2.0 - 1e-9),
            fmt::format("planar seam at sample {}", i));
  o.detail = o.pass ? fmt::format("{} samples, max dz {:.9g} mm", p.size(), max_step) : o.detail;
  return o;
}

Outcome helical_length() {
  Outcome o;
  const double len = polyline_length(helix_cylinder());
  const double ref = oracle::helix_length(50, 2, 10);
  const double rel = std::abs(len - ref) / ref;
  o.check(rel <= 0.005, fmt::format("relative error {:.3g}", rel));
  o.detail = o.pass ? fmt::format("{:.4f} mm vs {:.4f} mm, rel {:.3g}", len, ref, rel) : o.detail;
  return o;
}

Outcome overdeposition() {
  Outcome o;
  const auto cfg = fixture::print_config(50, 10, 10);
  std::vector<Point3> eight;
  for (int k = 0; k < 200; ++k) {
    const double t = 2 * std::numbers::pi * (k + 0.5) / 200;
    eight.push_back({100 * std::sin(t), 100 * std::sin(t) * std::cos(t), 10});
  }
  const auto fig = plan_toolpath(Polyline3(eight, true), cfg);
  const auto ev = detect_overdeposition(fig);
  o.check(ev.size() == 1, fmt::format("figure-eight flags {} collisions", ev.size()));
  o.check(simulate_deposition(fig, 10.0 / 8).over_cells() > 0, "figure-eight grid shows no over-deposited cell");

  std::vector<Layer> layers{{5.0, {circle_contour(100, 180, 5.0), circle_contour(80, 180, 5.0)}}};
  const auto rings = plan_toolpath(LayerStack(10.0, layers), cfg);
  o.check(detect_overdeposition(rings).empty(), "concentric rings flagged");
  o.check(simulate_deposition(rings, 10.0 / 8).over_cells() == 0, "concentric rings over-deposited in the grid");

  std::mt19937 rng(2024);
  std::uniform_real_distribution<double> u(0, 400);
  int flagged = 0;
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Point3> pts;
    for (int i = 0; i < 3 + trial % 5; ++i)
      pts.push_back({u(rng), u(rng), 10});
    const auto path = plan_toolpath(resample_polyline(Polyline3(pts, false), 5.0), cfg);
    const bool hit = !detect_overdeposition(path).empty();
    flagged += hit;
    o.check(hit == (simulate_deposition(path, 10.0 / 8).over_cells() > 0),
            fmt::format("detector and grid disagree on random path {}", trial));
  }
  o.detail = o.pass ? fmt::format("figure-eight 1, rings 0, {}/50 random paths flagged, grid agrees", flagged) : o.detail;
  return o;
}

Outcome event_sync() {
  Outcome o;
  std::mt19937 rng(77);
  std::uniform_real_distribution<double> u(-500, 500), z(0, 300), dt(0.05, 2.0);
  std::uniform_int_distribution<int> count(1, 40), coin(0, 2);
  const auto cfg = fixture::print_config(80, 10, 10);
  double worst = 0.0;
  std::size_t rows = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const Point3 start{u(rng), u(rng), z(rng)};
    std::vector<Move> moves;
    std::vector<oracle::Leg> legs;
    Point3 cur = start;
    for (int k = count(rng); k > 0; --k) {
      Point3 next{u(rng), u(rng), z(rng)};
      if (printchain::norm(next - cur) < 1e-3)
        continue;
      const bool ext = coin(rng) != 0;
      const double speed = ext ? cfg.print_speed : cfg.travel_speed;
      moves.push_back({next, speed, ext});
      legs.push_back({next, speed});
      cur = next;
    }
    if (moves.empty())
      continue;
    const Toolpath path(start, moves, cfg);
    const auto series = make_event_series(path, dt(rng));
    const auto &r = series.rows();
    rows += r.size();
    for (std::size_t i = 0; i < r.size(); ++i) {
      const Point3 ref = oracle::replay(start, legs, r[i].t);
      const double err = printchain::norm(Point3{r[i].x, r[i].y, r[i].z} - ref);
      worst = std::max(worst, err);
      o.check(err <= 1e-9, fmt::format("trial {} row {} off by {:.3g} mm", trial, i, err));
      if (i > 0)
        o.check(r[i].t > r[i - 1].t, fmt::format("trial {} row {} time not increasing", trial, i));
    }
    // Every on/off switch happens at a move boundary that must be a row.
    double clock = 0.0;
    for (std::size_t k = 0; k < moves.size(); ++k) {
      if (k > 0 && moves[k].extruding != moves[k - 1].extruding) {
        const auto it = std::find_if(r.begin(), r.end(), [&](const EventRow &e) { return e.t == path.times()[k]; });
        o.check(it != r.end() && it->state == (moves[k].extruding ? 1 : 0),
                fmt::format("trial {} transition at move {} missing", trial, k));
      }
      clock = path.times()[k + 1];
    }
    o.check(r.back().t == clock, fmt::format("trial {} does not end at the final move", trial));
  }
  o.detail = o.pass ? fmt::format("{} rows, worst replay error {:.3g} mm", rows, worst) : o.detail;
  return o;
}

Outcome mohr_coulomb() {
  Outcome o;
  std::mt19937 rng(1);
  std::uniform_real_distribution<double> C(0, 50), phi(0, 60), s(0, 200);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double c = C(rng), p = phi(rng), n = s(rng);
    const double ref = oracle::tau_y(c, p, n);
    const double rel = ref == 0.0 ? std::abs(mohr_coulomb_tau_y(c, p, n)) : std::abs(mohr_coulomb_tau_y(c, p, n) - ref) / std::abs(ref);
    worst = std::max(worst, rel);
  }
  o.check(worst <= 1e-12, fmt::format("relative error {:.3g}", worst));
  for (double c : {0.0, 1.5, 3.0, 47.25})
    for (double n : {0.0, 10.0, 1e4})
      o.check(mohr_coulomb_tau_y(c, 0.0, n) == c, "phi = 0 does not reduce to C");
  o.detail = o.pass ? fmt::format("1000 triples, worst relative error {:.3g}", worst) : o.detail;
  return o;
}

MaterialModel weak_constant() {
  MaterialModel m;
  m.cohesion0 = 3.0;
  m.friction0 = 20.0;
  m.young0 = 1e9;
  m.density = 2100.0;
  return m;
}

Outcome plastic_collapse() {
  Outcome o;
  const double h = 10, T = 30;
  const double k = 2100 * 9.81 * (h / 1000) / T / 1000;
  const auto tl = BuildTimeline::uniform(400, h, T, 40, 3000);
  const auto m = weak_constant();
  const auto rep = run_stability(BuildTimeline::uniform(80, h, T, 40, 3000), m, 0.1);
  const double t_star = oracle::sigma_c(3, 20) / k;
  o.check(rep.failed && rep.mode == FailureMode::plastic_collapse, "constant strength: no plastic collapse");
  o.check(std::abs(rep.failure_time - t_star) <= T, fmt::format("constant strength: {} vs {}", rep.failure_time, t_star));
  o.check(std::abs(rep.failure_time - 1247.9) <= 0.05, fmt::format("worked instance t = {}", rep.failure_time));
  o.check(rep.failure_layer == 42, fmt::format("worked instance layer {}", rep.failure_layer));
  double worst = 0.0;
  for (double rate : {0.0005, 0.001, 0.002}) {
    MaterialModel g = m;
    g.cohesion_rate = rate;
    const auto r = run_stability(tl, g, 0.1);
    const double ref = oracle::linear_collapse_time(oracle::sigma_c(3, 20), oracle::sigma_c(rate, 20), k);
    o.check(r.failed && std::abs(r.failure_time - ref) <= T, fmt::format("C_rate {}: {} vs {}", rate, r.failure_time, ref));
    worst = std::max(worst, std::abs(r.failure_time - ref));
  }
  o.detail = o.pass ? fmt::format("t = {:.1f} s (t* {:.4f}), layer {}, linear growth worst {:.3g} s", rep.failure_time,
                                  t_star, rep.failure_layer, worst)
                    : o.detail;
  return o;
}

Outcome buckling() {
  Outcome o;
  const double fd_const = oracle::heavy_column_constant(400);
  double worst = 0.0;
  for (double E : {50.0, 100.0, 400.0})
    for (double w : {30.0, 40.0, 60.0}) {
      const double ref = oracle::heavy_column_height(E, 0.0, w, 2100, 9.81, 400);
      const double rel = std::abs(critical_height(E, 0.0, w, 2100, 9.81) - ref) / ref;
      worst = std::max(worst, rel);
    }
  o.check(worst <= 0.01, fmt::format("FD column differs by {:.3g}", worst));
  const double h = critical_height(100, 0, 40, 2100, 9.81);
  for (double f : {2.0, 8.0, 0.125})
    o.check(std::abs(critical_height(100 * f, 0, 40, 2100, 9.81) / h - std::cbrt(f)) <= 1e-12, "cube-root scaling in E");
  o.check(std::abs(h - 0.1716) <= 0.01 * 0.1716, fmt::format("worked instance H_crit {}", h));
  o.detail = o.pass ? fmt::format("H_crit {:.6f} m, FD constant {:.5f}, worst rel {:.3g}", h, fd_const, worst) : o.detail;
  return o;
}

MaterialModel scaled(MaterialModel m, double f) {
  m.density *= f;
  m.cohesion0 *= f;
  m.cohesion_rate *= f;
  m.young0 *= f;
  m.young_rate *= f;
  return m;
}

Outcome scaling_invariance() {
  Outcome o;
  MaterialModel m;
  m.cohesion0 = 2;
  m.cohesion_rate = 0.002;
  m.friction0 = 25;
  m.young0 = 150;
  m.young_rate = 0.05;
  m.poisson = 0.2;
  m.density = 2100;
  // Thin wall that buckles, and a thick wall that collapses plastically.
  MaterialModel thick = m;
  thick.cohesion0 = 0.5;
  thick.cohesion_rate = 0.001;
  const std::vector<std::pair<double, MaterialModel>> cases{{40.0, m}, {400.0, thick}};
  for (const auto &[wall, mat] : cases) {
    const auto tl = BuildTimeline::uniform(100, 10, 30, wall, 3000);
    const auto a = run_stability(tl, mat, 0.5), b = run_stability(tl, scaled(mat, 10), 0.5);
    o.check(a.failed, fmt::format("wall {}: reference case does not fail", wall));
    o.check(a.mode == b.mode && a.failure_time == b.failure_time && a.failure_layer == b.failure_layer,
            fmt::format("wall {}: {} {} {} vs {} {} {}", wall, to_string(a.mode), a.failure_time, a.failure_layer,
                        to_string(b.mode), b.failure_time, b.failure_layer));
    o.check(a.history.size() == b.history.size(), "history lengths differ");
    for (std::size_t i = 0; i < std::min(a.history.size(), b.history.size()); ++i) {
      const auto &x = a.history[i], &y = b.history[i];
      o.check(std::abs(x.plastic - y.plastic) <= 1e-12 * std::max(1.0, std::abs(x.plastic)) &&
                  std::abs(x.buckling - y.buckling) <= 1e-12 * std::max(1.0, std::abs(x.buckling)),
              fmt::format("utilisation differs at t = {}", x.t));
    }
    if (o.pass)
      o.detail += fmt::format("{}wall {} mm: {} at {} s, layer {}", o.detail.empty() ? "" : "; ", wall,
                              to_string(a.mode), a.failure_time, a.failure_layer);
  }
  return o;
}

Outcome inspection() {
  Outcome o;
  const auto box = fixture::box(100, 80, 60);
  const MeshDistance ref(box);
  const auto s = oracle::surface_samples(box.vertices(), box.triangles(), 2000);
  std::vector<Point3> exact, offset;
  for (const auto &x : s) {
    exact.push_back(x.p);
    offset.push_back(x.p + x.n * 0.5);
  }
  InspectOptions opt;
  const auto a = deviation_report(PointCloud(exact), ref, opt);
  o.check(a.mean_abs < 1e-9, fmt::format("exact samples mean |d| {:.3g}", a.mean_abs));
  const auto b = deviation_report(PointCloud(offset), ref, opt);
  o.check(std::abs(b.signed_mean - 0.5) <= 1e-6, fmt::format("offset signed mean {:.9g}", b.signed_mean));

  const auto wedge = fixture::wedge_block();
  const MeshDistance wref(wedge);
  std::vector<Point3> wpts;
  for (const auto &x : oracle::surface_samples(wedge.vertices(), wedge.triangles(), 3000))
    wpts.push_back(x.p);
  const auto applied = RigidTransform::about_z(5.0, {2, 0, 0});
  IcpOptions icp;
  icp.max_iterations = 500;
  icp.tolerance = 1e-12;
  const auto res = align_icp(transform_cloud(PointCloud(wpts), applied), wref, icp);
  const auto residual = res.transform.compose(applied);
  o.check(residual.angle_deg() <= 1e-3 && residual.translation.norm() <= 1e-3,
          fmt::format("ICP residual {:.3g} deg, {:.3g} mm", residual.angle_deg(), residual.translation.norm()));

  double worst = 0.0;
  std::mt19937 rng(9);
  for (const auto &mesh : {fixture::cylinder(40, 30, 64), fixture::cone(20, 35, 48), wedge}) {
    o.check(mesh.triangles().size() < 1000, "oracle mesh too large");
    const MeshDistance d(mesh);
    const auto [lo, hi] = mesh.bounds();
    std::uniform_real_distribution<double> x(lo.x - 10, hi.x + 10), y(lo.y - 10, hi.y + 10), z(lo.z - 10, hi.z + 10);
    for (int i = 0; i < 500; ++i) {
      const Point3 p{x(rng), y(rng), z(rng)};
      worst = std::max(worst, std::abs(d.signed_distance(p) - oracle::brute_signed_distance(p, mesh.vertices(), mesh.triangles())));
    }
  }
  o.check(worst <= 1e-9, fmt::format("signed distance differs from brute force by {:.3g}", worst));
  o.detail = o.pass ? fmt::format("mean |d| {:.3g}, offset {:.9f}, ICP {} iterations residual {:.2g} deg, brute {:.3g}",
                                  a.mean_abs, b.signed_mean, res.iterations, residual.angle_deg(), worst)
                    : o.detail;
  return o;
}

Outcome chain_determinism() {
  Outcome o;
  const auto cfg = load_pipeline_config(fs::path(PRINTCHAIN_DEMO_DIR) / "demo.toml");
  const auto dir = fixture::scratch("acceptance_chain");
  std::vector<std::pair<std::string, unsigned>> runs{{"t1a", 1}, {"t1b", 1}, {"t4", 4}};
  std::vector<ChainResult> results;
  for (const auto &[name, threads] : runs) {
    RunOptions opt;
    opt.out_dir = dir / name;
    opt.threads = threads;
    results.push_back(run_chain(cfg, opt));
  }
  o.check(results[0].ok(), "demo chain fails");
  std::size_t files = 0;
  for (const auto &entry : fs::directory_iterator(dir / "t1a")) {
    const auto name = entry.path().filename();
    ++files;
    const auto ref = detail::read_file(entry.path());
    for (const char *other : {"t1b", "t4"})
      o.check(fs::exists(dir / other / name) && detail::read_file(dir / other / name) == ref,
              fmt::format("{} differs in run {}", name.string(), other));
  }
  o.check(files >= 7, fmt::format("only {} output files", files));
  o.detail = o.pass ? fmt::format("{} files byte-identical over 3 runs (threads 1, 1, 4)", files) : o.detail;
  return o;
}

} // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"helical continuity", helical_continuity},
      {"helical length", helical_length},
      {"over-deposition detection", overdeposition},
      {"event-series synchronisation", event_sync},
      {"Mohr-Coulomb yield stress", mohr_coulomb},
      {"plastic collapse time", plastic_collapse},
      {"elastic buckling height", buckling},
      {"failure-mode scaling invariance", scaling_invariance},
      {"scan inspection", inspection},
      {"chain determinism", chain_determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception &e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    fmt::print("[{}] {:2} {}: {}\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, o.detail);
  }
  fmt::print("{}/{} criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
