#include "fixtures.hpp"

#include <printchain/config.hpp>
#include <printchain/pipeline.hpp>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

#include <cstdlib>
#include <fstream>
#include <sys/wait.h>

using namespace printchain;
namespace fs = std::filesystem;

namespace {

const char *const kSmallDesign = R"(
[design]
kind = "oscillating_circle"
height = 60.0
R_c = 80.0
a = 4.0
n = 5
samples = 120

[slice]
layer_height = 10.0
mode = "helical"
samples_per_turn = 120
flat_first_layer = false

[print]
print_speed = 100.0
travel_speed = 200.0
bead_width = 30.0
)";

const char *const kStrongMaterial = R"(
[material]
C0 = 5.0
C_rate = 0.01
phi0 = 20.0
E0 = 500.0
rho = 2100.0
time_step = 0.5
)";

void write(const fs::path &p, const std::string &s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::string slurp(const fs::path &p) { return detail::read_file(p); }

/// Runs the command-line tool, returns its exit status and keeps stdout and
/// stderr in `dir/cli.log`.
int cli(const fs::path &dir, const std::string &args) {
  const std::string cmd = std::string(PRINTCHAIN_CLI) + " " + args + " > " + (dir / "cli.log").string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

std::string cli_log(const fs::path &dir) { return slurp(dir / "cli.log"); }

PipelineConfig config_in(const fs::path &dir, const std::string &text) {
  write(dir / "c.toml", text);
  return load_pipeline_config(dir / "c.toml");
}

RunOptions options(const fs::path &out, unsigned threads = 1) {
  RunOptions o;
  o.out_dir = out;
  o.threads = threads;
  return o;
}

std::string config_error(const std::string &text) {
  try {
    parse_pipeline_config(text);
  } catch (const Error &e) {
    return e.what();
  }
  return "";
}

} // namespace

TEST(Config, ParsesSubsetOfToml) {
  const auto c = Config::parse("# top\n[a]\nx = 1.5 # note\nname = \"p # q\"\nflag = true\n\n[b]\nn = -3\n");
  EXPECT_DOUBLE_EQ(c.number("a", "x"), 1.5);
  EXPECT_EQ(c.string("a", "name"), "p # q");
  EXPECT_TRUE(c.boolean("a", "flag"));
  EXPECT_EQ(c.integer("b", "n"), -3);
  EXPECT_EQ(c.number_or("b", "missing", 7.0), 7.0);
  EXPECT_THROW(c.number("a", "name"), ConfigError);
  EXPECT_THROW(Config::parse("x = 1\n"), ParseError);
  EXPECT_THROW(Config::parse("[a]\nx = 1\nx = 2\n"), ParseError);
  EXPECT_THROW(Config::parse("[a]\nx 1\n"), ParseError);
}

TEST(Config, ErrorsNameTheKey) {
  const std::string base = std::string(kSmallDesign);
  std::string missing = base;
  missing.replace(missing.find("R_c = 80.0"), 10, "");
  EXPECT_NE(config_error(missing).find("design.R_c"), std::string::npos) << config_error(missing);
  std::string bad = base;
  bad.replace(bad.find("bead_width = 30.0"), 17, "bead_width = -1");
  EXPECT_NE(config_error(bad).find("print.bead_width"), std::string::npos) << config_error(bad);
  EXPECT_NE(config_error(base + "[print2]\n").find("print2"), std::string::npos);
  EXPECT_NE(config_error(base + "[io]\nmesh_file = \"x\"\n").find("mesh_file"), std::string::npos);
  EXPECT_NE(config_error("[design]\nkind = \"woven\"\nheight = 10\nbase_radius = 50\n").find("slice"),
            std::string::npos);
  EXPECT_EQ(config_error(base + kStrongMaterial), "");
}

TEST(Config, CellSizeBound) {
  const std::string base = kSmallDesign;
  EXPECT_EQ(parse_pipeline_config(base).cell_size, 30.0 / 8);
  EXPECT_NE(config_error(base.substr(0, base.size()) + "cell_size = 8.0\n").find("print.cell_size"), std::string::npos);
}

TEST(LayerCsv, RoundTrip) {
  SlicePlan plan;
  plan.layer_height = 10;
  const auto stack = slice_planar(fixture::cylinder(30, 40, 24), plan);
  const auto back = parse_layer_stack_csv(layer_stack_csv(stack), 10);
  EXPECT_EQ(layer_stack_csv(back), layer_stack_csv(stack));
  EXPECT_THROW(parse_layer_stack_csv("layer,z,contour,x,y\n0,5,0,1\n", 10), ParseError);
}

TEST(Chain, DeterministicAcrossRunsAndThreads) {
  const auto dir = fixture::scratch("chain_det");
  const auto cfg = config_in(dir, std::string(kSmallDesign) + kStrongMaterial);
  const auto a = run_chain(cfg, options(dir / "a", 1));
  const auto b = run_chain(cfg, options(dir / "b", 1));
  const auto c = run_chain(cfg, options(dir / "c", 3));
  ASSERT_TRUE(a.ok());
  ASSERT_EQ(a.stages.size(), 4u);
  for (const auto &s : a.stages) {
    EXPECT_EQ(s.status, StageStatus::ok) << s.name << ": " << s.message;
    for (const auto &f : s.artifacts) {
      EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
      EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "c" / f)) << f;
    }
  }
  EXPECT_EQ(slurp(dir / "a/manifest.json"), slurp(dir / "b/manifest.json"));
  EXPECT_EQ(slurp(dir / "a/manifest.json"), slurp(dir / "c/manifest.json"));
  const auto m = nlohmann::json::parse(slurp(dir / "a/manifest.json"));
  std::size_t artifacts = 0;
  for (const auto &s : m["stages"])
    for (const auto &f : s["artifacts"]) {
      ++artifacts;
      EXPECT_EQ(f["sha256"].get<std::string>(), sha256_hex(slurp(dir / "a" / f["path"].get<std::string>())));
    }
  EXPECT_GE(artifacts, 6u);
}

TEST(Chain, FileHandoffsReproduceRun) {
  const auto dir = fixture::scratch("chain_handoff");
  const auto cfg = config_in(dir, std::string(kSmallDesign) + kStrongMaterial);
  run_chain(cfg, options(dir / "run"));
  const auto opt = options(dir / "step");
  fs::create_directories(opt.out_dir);
  stage_generate(cfg, opt);
  stage_slice(cfg, opt, opt.out_dir / "design_layers.csv");
  stage_toolpath(cfg, opt, opt.out_dir / "helix.csv");
  stage_stability(cfg, opt, opt.out_dir / "events.csv");
  for (const char *f : {"design.stl", "helix.csv", "toolpath.gcode", "events.csv", "checks.txt", "stability.txt",
                        "utilization.csv"})
    EXPECT_EQ(slurp(dir / "run" / f), slurp(dir / "step" / f)) << f;
}

TEST(Chain, FailingStageSkipsTheRest) {
  const auto dir = fixture::scratch("chain_fail");
  save_stl(fixture::unit_cube(), dir / "ref.stl");
  write(dir / "scan.xyz", "0.5 0.5 1\n0.5 0 0.5\n1 0.5 0.5\n");
  const std::string weak = "[material]\nC0 = 0.3\nphi0 = 10.0\nE0 = 1e6\nrho = 2100.0\ntime_step = 0.5\n";
  const std::string insp = "[inspect]\ntolerance = 1.0\nscan = \"scan.xyz\"\nreference = \"ref.stl\"\n";
  const auto cfg = config_in(dir, std::string(kSmallDesign) + weak + insp);
  const auto res = run_chain(cfg, options(dir / "out"));
  EXPECT_FALSE(res.ok());
  ASSERT_EQ(res.stages.size(), 5u);
  EXPECT_EQ(res.stages[3].name, "stability");
  EXPECT_EQ(res.stages[3].status, StageStatus::failed);
  EXPECT_EQ(res.stages[4].status, StageStatus::skipped);
  const auto m = nlohmann::json::parse(slurp(dir / "out/manifest.json"));
  EXPECT_EQ(m["stages"][3]["status"], "failed");
  EXPECT_EQ(m["stages"][4]["status"], "skipped");
}

TEST(Cli, ExitCodes) {
  const auto dir = fixture::scratch("cli_codes");
  write(dir / "ok.toml", std::string(kSmallDesign) + kStrongMaterial);
  EXPECT_EQ(cli(dir, "--config " + (dir / "ok.toml").string() + " run"), 0) << cli_log(dir);
  EXPECT_TRUE(fs::exists(dir / "out/manifest.json"));
  EXPECT_EQ(cli(dir, "--config " + (dir / "missing.toml").string() + " run"), 2);
  EXPECT_EQ(cli(dir, "--config " + (dir / "ok.toml").string()), 2);
  EXPECT_EQ(cli(dir, "--config " + (dir / "ok.toml").string() + " --threads x run"), 2);
  write(dir / "bad.toml", "[design]\nkind = \"oscillating_circle\"\nheight = 10\n[slice]\nlayer_height = 10\n");
  EXPECT_EQ(cli(dir, "--config " + (dir / "bad.toml").string() + " generate"), 2);
  EXPECT_NE(cli_log(dir).find("design.R_c"), std::string::npos) << cli_log(dir);
}

TEST(Cli, SliceRejectsOpenMeshAndHelicalTubes) {
  const auto dir = fixture::scratch("cli_slice");
  auto tris = fixture::box(50, 50, 40).triangles();
  tris.pop_back();
  save_stl(TriangleMesh(fixture::box(50, 50, 40).vertices(), tris), dir / "open.stl");
  write(dir / "open.toml", "[io]\nmesh = \"open.stl\"\n[slice]\nlayer_height = 10.0\nmode = \"planar\"\n");
  EXPECT_EQ(cli(dir, "--config " + (dir / "open.toml").string() + " slice"), 3);
  EXPECT_NE(cli_log(dir).find("not watertight"), std::string::npos) << cli_log(dir);

  // Tube: outer wall and inner hole give two contours per layer.
  const auto outer = fixture::cylinder(60, 40, 48);
  const auto inner = fixture::cylinder(40, 40, 48);
  std::vector<Point3> v = outer.vertices();
  std::vector<Triangle> t = outer.triangles();
  const auto off = static_cast<std::uint32_t>(v.size());
  v.insert(v.end(), inner.vertices().begin(), inner.vertices().end());
  for (const auto &tri : inner.triangles())
    t.push_back({tri[0] + off, tri[2] + off, tri[1] + off});
  save_stl(TriangleMesh(v, t), dir / "tube.stl");
  write(dir / "tube.toml", "[io]\nmesh = \"tube.stl\"\n[slice]\nlayer_height = 10.0\nmode = \"helical\"\n");
  EXPECT_EQ(cli(dir, "--config " + (dir / "tube.toml").string() + " slice"), 3);
  EXPECT_NE(cli_log(dir).find("unsupported topology"), std::string::npos) << cli_log(dir);
}

TEST(Cli, ToolpathFindingsAndForce) {
  const auto dir = fixture::scratch("cli_toolpath");
  const std::string print = "[print]\nprint_speed = 50.0\ntravel_speed = 100.0\nbead_width = 10.0\nbead_height = 10.0\n";
  write(dir / "p.toml", print);
  write(dir / "cross.csv", "0,0,10\n100,100,10\n100,0,10\n0,100,10\n");
  const std::string args = "--config " + (dir / "p.toml").string() + " toolpath --input " + (dir / "cross.csv").string();
  EXPECT_EQ(cli(dir, args), 1) << cli_log(dir);
  EXPECT_NE(slurp(dir / "out/checks.txt").find("collisions: 1"), std::string::npos);
  EXPECT_EQ(cli(dir, "--force " + args), 0) << cli_log(dir);
  EXPECT_NE(cli_log(dir).find("warning"), std::string::npos);

  write(dir / "w.toml", print + "[workspace]\nbase_x = 0.0\nbase_y = 0.0\nbase_z = 0.0\nr_min = 0.0\n"
                                "r_max = 50.0\nz_min = 0.0\nz_max = 100.0\n");
  write(dir / "line.csv", "0,0,10\n100,0,10\n");
  const std::string wargs = "--config " + (dir / "w.toml").string() + " toolpath --input " + (dir / "line.csv").string();
  EXPECT_EQ(cli(dir, wargs), 1) << cli_log(dir);
  EXPECT_NE(slurp(dir / "out/checks.txt").find("workspace_violations: 1"), std::string::npos)
      << slurp(dir / "out/checks.txt");
  EXPECT_EQ(cli(dir, "--force " + wargs), 0);

  write(dir / "garbage.csv", "0,0,10\n1,zz,10\n");
  EXPECT_EQ(cli(dir, "--config " + (dir / "p.toml").string() + " toolpath --input " + (dir / "garbage.csv").string()), 3);
}

TEST(Cli, StabilityStage) {
  const auto dir = fixture::scratch("cli_stability");
  const std::string cfg = std::string(PRINTCHAIN_DEMO_DIR) + "/weak_constant.toml";
  EXPECT_EQ(cli(dir, "--config " + cfg + " --out-dir " + (dir / "weak").string() + " run"), 1) << cli_log(dir);
  const auto report = slurp(dir / "weak/stability.txt");
  EXPECT_NE(report.find("mode: plastic_collapse"), std::string::npos) << report;
  EXPECT_NE(report.find("failure_layer: 42\n"), std::string::npos) << report;

  const std::string stubby = std::string(PRINTCHAIN_DEMO_DIR) + "/stubby.toml";
  EXPECT_EQ(cli(dir, "--config " + stubby + " --out-dir " + (dir / "stubby").string() + " run"), 0) << cli_log(dir);
  EXPECT_NE(slurp(dir / "stubby/stability.txt").find("buckling: not-evaluated"), std::string::npos);
}

TEST(Cli, InspectStage) {
  const auto dir = fixture::scratch("cli_inspect");
  save_stl(fixture::unit_cube(), dir / "ref.stl");
  write(dir / "scan.xyz", "0.5 0.5 1\n0.5 0 0.5\n1 0.5 0.5\n0.5 0.5 1.2\n");
  write(dir / "i.toml", "[inspect]\ntolerance = 0.1\npass_fraction = 0.7\n");
  const std::string args = "--config " + (dir / "i.toml").string() + " inspect --scan " + (dir / "scan.xyz").string() +
                           " --reference " + (dir / "ref.stl").string();
  EXPECT_EQ(cli(dir, args), 0) << cli_log(dir);
  EXPECT_TRUE(fs::exists(dir / "out/heatmap.ply"));
  write(dir / "i.toml", "[inspect]\ntolerance = 0.1\npass_fraction = 0.9\n");
  EXPECT_EQ(cli(dir, args), 1) << cli_log(dir);
}
