#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "activemap/explore.hpp"
#include "activemap/scene.hpp"

namespace activemap {

// Top-view IoU of two upright cuboids' footprints (roll/pitch ignored).
double iou2d_top(const ObjectPose& a, const ObjectPose& b);
// 3D IoU of two upright cuboids: footprint intersection times z overlap.
double iou3d_upright(const ObjectPose& a, const ObjectPose& b);
// Axis-aligned top-view IoU of the footprints' bounding rectangles.
double iou2d_aabb(const ObjectPose& a, const ObjectPose& b);

struct PoseMetrics {
  double cde = 0.0;           // cm
  std::optional<double> yae;  // degrees in [0, 45]; none for cylinders
  double iou2d = 0.0;
  double iou3d = 0.0;
};

PoseMetrics evaluate(const ObjectPose& est, const ObjectPose& gt, Shape gt_shape = Shape::cuboid);

struct ObjectResult {
  int gt_id = 0;
  std::string label;
  Shape shape = Shape::cuboid;
  std::optional<int> estimate_id;  // none: missed
  PoseMetrics metrics;
};

// Each ground-truth object takes the estimate whose points mostly came from
// it (largest vote count wins). Missed objects score zero IoU.
std::vector<ObjectResult> evaluate_map(const GlobalObjectMap& map, const DeskScene& scene);

struct MetricSummary {
  double iou3d = 0.0;  // over all ground-truth objects
  double iou2d = 0.0;
  double cde = 0.0;  // over found objects
  double yae = 0.0;  // over found cuboids
  int objects = 0;
  int found = 0;
  int yae_count = 0;
};

MetricSummary summarize(std::span<const ObjectResult> results);

// ---------------------------------------------------------------------------
// Configuration

struct SceneSpec {
  std::string name;
  std::optional<std::filesystem::path> file;
  std::uint64_t generator_seed = 0;
  int min_count = 5;
  int max_count = 8;
  Spacing spacing = Spacing::sparse;
};

struct BenchConfig {
  std::vector<SceneSpec> scenes;
  std::vector<Strategy> strategies{Strategy::object_driven, Strategy::randomized, Strategy::coverage,
                                   Strategy::init_only};
  std::string noise = "med";
  int repetitions = 1;
  int budget = 10;
  std::uint64_t seed = 0;
  int candidates = 64;
  bool oracle_association = false;
  bool write_ply = false;
};

NoiseModel noise_from_name(const std::string& name);

// Relative scene paths resolve against `base_dir`. Throws ParseError.
BenchConfig parse_bench_config(const std::string& text, const std::filesystem::path& base_dir = {});
BenchConfig load_bench_config(const std::filesystem::path& path);

DeskScene materialize_scene(const SceneSpec& spec);

// ---------------------------------------------------------------------------
// Runs

struct RunRecord {
  std::size_t scene_index = 0;
  Strategy strategy = Strategy::object_driven;
  int repetition = 0;
  bool ok = false;
  std::string error;
  int views = 0;
  std::string termination;
  std::vector<ObjectResult> objects;
  MetricSummary summary;
  std::vector<MetricSummary> per_step;  // metrics of the map after each step
};

struct CellSummary {
  bool ok = false;
  std::string error;
  MetricSummary metrics;  // averaged over repetitions
  double views = 0.0;
};

struct BenchmarkReport {
  BenchConfig config;
  std::vector<std::string> scene_names;
  std::vector<RunRecord> runs;
  // cells[scene][strategy index]
  std::vector<std::vector<CellSummary>> cells;

  // Mean over scenes with a successful run.
  MetricSummary mean(std::size_t strategy_index) const;
};

struct BenchRunOptions {
  std::optional<std::filesystem::path> out_dir;
  std::function<void(const std::string&)> progress;
};

// Scenes that fail to load or run are reported, the rest still run.
BenchmarkReport run_benchmark(const BenchConfig& config, const BenchRunOptions& options = {});

std::string report_csv(const BenchmarkReport& report);
std::string report_table(const BenchmarkReport& report);
std::string objects_csv(const BenchmarkReport& report);
std::string curves_csv(const BenchmarkReport& report);

}  // namespace activemap
