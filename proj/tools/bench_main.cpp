#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "activemap/bench.hpp"
#include "activemap/explore.hpp"
#include "activemap/scene.hpp"

namespace fs = std::filesystem;
using namespace activemap;

namespace {

int cmd_run(const fs::path& config_path, const fs::path& out, bool oracle, std::optional<std::uint64_t> seed,
            const std::string& noise, bool ply, bool quiet) {
  BenchConfig config = load_bench_config(config_path);
  if (oracle) config.oracle_association = true;
  if (seed) config.seed = *seed;
  if (!noise.empty()) {
    noise_from_name(noise);
    config.noise = noise;
  }
  if (ply) config.write_ply = true;

  BenchRunOptions opts;
  opts.out_dir = out;
  if (!quiet) opts.progress = [](const std::string& line) { std::cerr << line << '\n'; };
  const BenchmarkReport report = run_benchmark(config, opts);
  std::cout << report_table(report);
  for (const auto& row : report.cells)
    for (const auto& c : row)
      if (!c.ok) return 2;
  return 0;
}

int cmd_generate(std::uint64_t seed, int min_count, int max_count, const std::string& spacing, const fs::path& out) {
  const DeskScene scene = generate_scene(seed, min_count, max_count, spacing_from_string(spacing));
  if (out.empty())
    std::cout << serialize_scene(scene);
  else
    save_scene(out, scene);
  return 0;
}

int cmd_explore(const fs::path& scene_path, const std::string& strategy, int budget, const std::string& noise,
                std::uint64_t seed, bool oracle, const fs::path& out) {
  const DeskScene scene = load_scene(scene_path);
  ExplorationConfig ec;
  ec.strategy = strategy_from_string(strategy);
  ec.budget = budget;
  ec.noise = noise_from_name(noise);
  ec.seed = seed;
  ec.oracle_association = oracle;
  const ExplorationResult res = run_exploration(scene, ec);

  const auto results = evaluate_map(res.map, scene);
  for (const auto& r : results) {
    if (!r.estimate_id) {
      fmt::print("gt {:>3} {:<8} missed\n", r.gt_id, r.label);
      continue;
    }
    fmt::print("gt {:>3} {:<8} est {:>3}  iou3d {:.3f}  iou2d {:.3f}  cde {:6.2f} cm  yae {}\n", r.gt_id, r.label,
               *r.estimate_id, r.metrics.iou3d, r.metrics.iou2d, r.metrics.cde,
               r.metrics.yae ? fmt::format("{:.2f} deg", *r.metrics.yae) : std::string("NA"));
  }
  const MetricSummary s = summarize(results);
  fmt::print("{} views, termination: {}; mean iou3d {:.3f}, cde {:.2f} cm\n", res.steps.size(), res.termination,
             s.iou3d, s.cde);
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(out / "trajectory.csv") << trajectory_csv(res, ec.strategy);
    std::ofstream(out / "map.json") << export_map_json(res.map);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active object mapping workbench"};
  app.require_subcommand(1);

  fs::path config_path, out_dir;
  bool oracle = false, ply = false, quiet = false;
  std::optional<std::uint64_t> seed;
  std::string noise;
  auto* run = app.add_subcommand("run", "Run a benchmark config and write reports");
  run->add_option("--config", config_path, "Benchmark config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--out", out_dir, "Output directory")->required();
  run->add_flag("--oracle-association", oracle, "Use ground-truth ids for association");
  run->add_option("--seed", seed, "Override the config seed");
  run->add_option("--noise", noise, "Override the noise preset")->check(CLI::IsMember({"low", "med", "off"}));
  run->add_flag("--ply", ply, "Dump observed point clouds");
  run->add_flag("-q,--quiet", quiet, "No per-run progress");

  std::uint64_t gen_seed = 0;
  int gen_min = 5, gen_max = 8;
  std::string spacing = "sparse";
  fs::path gen_out;
  auto* gen = app.add_subcommand("generate", "Generate a scene file");
  gen->add_option("--seed", gen_seed);
  gen->add_option("--min", gen_min);
  gen->add_option("--max", gen_max);
  gen->add_option("--spacing", spacing)->check(CLI::IsMember({"sparse", "clustered", "uneven"}));
  gen->add_option("--out", gen_out, "Scene file (stdout if omitted)");

  fs::path scene_path, explore_out;
  std::string strategy = "object_driven", explore_noise = "med";
  int budget = 10;
  std::uint64_t explore_seed = 0;
  bool explore_oracle = false;
  auto* exp = app.add_subcommand("explore", "Run one exploration on a scene file");
  exp->add_option("--scene", scene_path)->required()->check(CLI::ExistingFile);
  exp->add_option("--strategy", strategy)
      ->check(CLI::IsMember({"object_driven", "randomized", "coverage", "init_only"}));
  exp->add_option("--budget", budget);
  exp->add_option("--noise", explore_noise)->check(CLI::IsMember({"low", "med", "off"}));
  exp->add_option("--seed", explore_seed);
  exp->add_flag("--oracle-association", explore_oracle);
  exp->add_option("--out", explore_out, "Directory for trajectory.csv and map.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) return cmd_run(config_path, out_dir, oracle, seed, noise, ply, quiet);
    if (*gen) return cmd_generate(gen_seed, gen_min, gen_max, spacing, gen_out);
    if (*exp) return cmd_explore(scene_path, strategy, budget, explore_noise, explore_seed, explore_oracle, explore_out);
  } catch (const activemap::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
