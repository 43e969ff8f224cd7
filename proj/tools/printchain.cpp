// printchain: command-line front end for the design-to-inspection chain.
//
// Exit codes: 0 success, 1 analysis failure (collision, workspace violation,
// structural failure, inspection fail, failed chain stage), 2 usage or
// configuration error, 3 input/output or geometry parse error.

#include <printchain/pipeline.hpp>

#include <CLI11.hpp>
#include <fmt/format.h>

#include <cstdio>
#include <iostream>
#include <thread>

namespace pc = printchain;

namespace {

enum Exit { kOk = 0, kAnalysis = 1, kUsage = 2, kIo = 3 };

int report(const pc::StageResult &r) {
  fmt::print("{}: {} - {}\n", r.name, pc::to_string(r.status), r.message);
  return r.status == pc::StageStatus::failed ? kAnalysis : kOk;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"printchain: parametric design, slicing, toolpaths, stability and inspection for concrete printing"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_file, out_dir;
  bool force = false, verbose = false;
  unsigned threads = 1;
  app.add_option("--config", config_file, "TOML configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--out-dir", out_dir, "output directory (overrides io.out_dir)");
  app.add_flag("--force", force, "continue past collision and workspace findings");
  app.add_option("--threads", threads, "worker threads, 0 = hardware concurrency")->check(CLI::Range(0u, 1024u));
  app.add_flag("-v,--verbose", verbose, "progress messages on stderr");

  auto *gen = app.add_subcommand("generate", "write design_layers.csv and design.stl from [design]");
  std::string slice_in, path_in, events_in, scan_in, ref_in;
  auto *slice = app.add_subcommand("slice", "slice a mesh or layer stack into layers.csv or helix.csv");
  slice->add_option("--input", slice_in, "STL mesh or layer CSV (default: generated stack or io.mesh)");
  auto *tool = app.add_subcommand("toolpath", "plan the toolpath, write G-code, events and checks");
  tool->add_option("--input", path_in, "layers.csv or helix.csv (default from slice.mode)");
  auto *stab = app.add_subcommand("stability", "check plastic collapse and buckling during the build");
  stab->add_option("--input", events_in, "event series CSV (default: events.csv in the output directory)");
  auto *insp = app.add_subcommand("inspect", "compare a scan against the reference mesh");
  insp->add_option("--scan", scan_in, "point cloud (.xyz or ASCII .ply)");
  insp->add_option("--reference", ref_in, "reference STL");
  auto *run = app.add_subcommand("run", "run every configured stage and write manifest.json");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return kUsage;
  }

  try {
    const pc::PipelineConfig cfg = pc::load_pipeline_config(config_file);
    pc::RunOptions opt;
    opt.out_dir = out_dir.empty() ? cfg.base_dir / cfg.out_dir : std::filesystem::path(out_dir);
    opt.force = force;
    opt.threads = threads == 0 ? std::max(1u, std::thread::hardware_concurrency()) : threads;
    if (verbose)
      opt.log = [](const std::string &msg) { fmt::print(stderr, "[printchain] {}\n", msg); };
    std::filesystem::create_directories(opt.out_dir);

    if (*gen)
      return report(pc::stage_generate(cfg, opt));
    if (*slice)
      return report(
          pc::stage_slice(cfg, opt, slice_in.empty() ? pc::default_slice_input(cfg, opt.out_dir) : std::filesystem::path(slice_in)));
    if (*tool)
      return report(
          pc::stage_toolpath(cfg, opt, path_in.empty() ? pc::default_toolpath_input(cfg, opt.out_dir) : std::filesystem::path(path_in)));
    if (*stab)
      return report(pc::stage_stability(cfg, opt, events_in.empty() ? opt.out_dir / "events.csv" : std::filesystem::path(events_in)));
    if (*insp) {
      const auto scan = scan_in.empty() ? cfg.scan : std::optional<std::filesystem::path>(scan_in);
      const auto ref = ref_in.empty() ? cfg.reference : std::optional<std::filesystem::path>(ref_in);
      if (!scan || !ref)
        throw pc::ConfigError("inspect needs a scan and a reference (`inspect.scan`, `inspect.reference` or flags)");
      return report(pc::stage_inspect(cfg, opt, *scan, *ref));
    }
    if (*run) {
      const auto res = pc::run_chain(cfg, opt);
      for (const auto &s : res.stages)
        report(s);
      fmt::print("manifest: {}\n", (opt.out_dir / "manifest.json").string());
      return res.ok() ? kOk : kAnalysis;
    }
  } catch (const pc::InvalidArgument &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const pc::DomainError &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kUsage;
  } catch (const pc::Error &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kIo;
  } catch (const std::filesystem::filesystem_error &e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return kIo;
  }
  return kUsage;
}
