#include <random>

#include <benchmark/benchmark.h>

#include "activemap/bench.hpp"
#include "activemap/explore.hpp"

using namespace activemap;

namespace {

const DeskScene& scene() {
  static const DeskScene s = generate_scene(3, 8, 8, Spacing::clustered);
  return s;
}

GlobalObjectMap explored_map() {
  ExplorationConfig config;
  config.strategy = Strategy::init_only;
  config.noise = NoiseModel::medium();
  config.seed = 1;
  return run_exploration(scene(), config).map;
}

}  // namespace

static void BM_Render(benchmark::State& state) {
  const CameraPose cam = CameraPose::look_at(Vec3(0.4, -0.5, 1.4), scene().desk_center());
  const NoiseModel noise = NoiseModel::medium();
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(render(scene(), cam, CameraIntrinsics{}, noise, seed++));
}
BENCHMARK(BM_Render)->Unit(benchmark::kMillisecond);

static void BM_OptimizePose(benchmark::State& state) {
  GlobalObjectMap map = explored_map();
  const ObjectEstimate& est = map.estimates.front();
  const ObjectEvidence ev = gather_evidence(est, map.desk_plane.n, est.points);
  SolverOptions opts;
  opts.jacobian = state.range(0) ? JacobianMode::analytic : JacobianMode::numeric;
  ObjectPose init = est.pose;
  init.t.x() += 0.02;
  for (auto _ : state) benchmark::DoNotOptimize(optimize_pose(init, ev, map.desk_plane, opts));
}
BENCHMARK(BM_OptimizePose)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_SelectNbv(benchmark::State& state) {
  const GlobalObjectMap map = explored_map();
  std::vector<Vec3> targets;
  for (const auto& e : map.estimates) targets.push_back(e.pose.t);
  const auto views = candidate_views(scene().bounds, scene().desk_height, static_cast<int>(state.range(0)), 7, targets);
  for (auto _ : state) benchmark::DoNotOptimize(select_nbv(map, views, CameraIntrinsics{}));
}
BENCHMARK(BM_SelectNbv)->Arg(16)->Arg(64)->Unit(benchmark::kMillisecond);

static void BM_Iou3d(benchmark::State& state) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-0.05, 0.05);
  std::vector<std::pair<ObjectPose, ObjectPose>> pairs(256);
  for (auto& [a, b] : pairs) {
    a.t = Vec3(u(rng), u(rng), 0.75);
    b.t = Vec3(u(rng), u(rng), 0.75 + u(rng));
    a.theta.z() = 10.0 * u(rng);
    b.theta.z() = 10.0 * u(rng);
  }
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& [a, b] = pairs[i++ % pairs.size()];
    benchmark::DoNotOptimize(iou3d_upright(a, b));
  }
}
BENCHMARK(BM_Iou3d);
BENCHMARK_MAIN();
