#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "activemap/objmap.hpp"
#include "activemap/sensor.hpp"
#include "support.hpp"

using namespace activemap;
using namespace activemap::testing;

TEST(BinaryEntropy, KnownValues) {
  EXPECT_DOUBLE_EQ(binary_entropy(0.5), 1.0);
  EXPECT_DOUBLE_EQ(binary_entropy(0.0), 0.0);
  EXPECT_DOUBLE_EQ(binary_entropy(1.0), 0.0);
  EXPECT_NEAR(binary_entropy(0.25), 0.8112781244591328, 1e-12);
  EXPECT_THROW(binary_entropy(-0.1), DomainError);
  EXPECT_THROW(binary_entropy(1.0001), DomainError);
  EXPECT_THROW(binary_entropy(std::nan("")), DomainError);
}

TEST(SurfaceGrid, ShapeAndInitialState) {
  const SurfaceGridSet g(Vec3(0.05, 0.025, 0.0449));
  EXPECT_EQ(g.face(Face::pos_z).cols, 10);
  EXPECT_EQ(g.face(Face::pos_z).rows, 5);
  EXPECT_EQ(g.face(Face::pos_x).cols, 5);
  EXPECT_EQ(g.face(Face::pos_x).rows, 9);
  EXPECT_EQ(g.face(Face::neg_y).cols, 10);
  EXPECT_EQ(g.cell_count(), 50u + 2 * 45u + 2 * 90u);
  g.for_each([](const CellIndex&, const GridCell& c) {
    EXPECT_EQ(c.status, CellStatus::unknown);
    EXPECT_DOUBLE_EQ(c.p, 0.5);
  });
}

TEST(SurfaceGrid, LocateTieBreaks) {
  const SurfaceGridSet g(Vec3::Constant(0.05));
  EXPECT_EQ(g.locate(Vec3(0.05, 0.0, 0.05)).face, Face::pos_z);
  EXPECT_EQ(g.locate(Vec3(0.05, 0.05, 0.0)).face, Face::pos_x);
  EXPECT_EQ(g.locate(Vec3(-0.05, 0.05, 0.0)).face, Face::neg_x);
  EXPECT_EQ(g.locate(Vec3(0.0, -0.05, 0.01)).face, Face::neg_y);
  const CellIndex c = g.locate(Vec3(0.049, -0.049, 0.05));
  EXPECT_EQ(c.u, 9);
  EXPECT_EQ(c.v, 0);
}

TEST(SurfaceGrid, StatusTransitions) {
  SurfaceGridSet g(Vec3::Constant(0.02));
  const CellIndex c{Face::pos_x, 1, 1};
  g.mark_free(c);
  EXPECT_EQ(g.cell(c).status, CellStatus::free);
  EXPECT_DOUBLE_EQ(g.cell(c).p, SurfaceGridSet::kFreeP);
  g.mark_occupied(c);
  EXPECT_EQ(g.cell(c).status, CellStatus::occupied);
  g.mark_free(c);
  EXPECT_EQ(g.cell(c).status, CellStatus::occupied);
  EXPECT_DOUBLE_EQ(g.cell(c).p, SurfaceGridSet::kOccupiedP);
}

TEST(Completeness, HandEvaluatedCases) {
  SurfaceGridSet g(Vec3::Constant(0.05));
  Completeness c = completeness(g);
  EXPECT_DOUBLE_EQ(c.h_norm, 1.0);
  EXPECT_DOUBLE_EQ(c.h_obj, static_cast<double>(g.cell_count()));
  EXPECT_DOUBLE_EQ(c.r_o, 0.0);

  SurfaceGridSet occ = g;
  occ.for_each([&](const CellIndex& i, const GridCell&) { occ.mark_occupied(i); });
  c = completeness(occ);
  EXPECT_NEAR(c.h_norm, binary_entropy(0.95), 1e-12);
  EXPECT_NEAR(c.h_norm, 0.2864, 1e-4);
  EXPECT_DOUBLE_EQ(c.r_o, 1.0);

  SurfaceGridSet half = g;
  std::size_t k = 0;
  half.for_each([&](const CellIndex& i, const GridCell&) {
    if (k++ % 2 == 0) half.mark_free(i);
  });
  ASSERT_EQ(g.cell_count() % 2, 0u);
  c = completeness(half);
  EXPECT_NEAR(c.h_norm, (binary_entropy(0.05) + 1.0) / 2.0, 1e-9);

  EXPECT_THROW(completeness(SurfaceGridSet{}), DomainError);
}

TEST(Association, ColdStartCreatesObjects) {
  GlobalObjectMap map;
  Observation obs;
  for (int i = 0; i < 3; ++i) obs.detections.push_back(cloud_detection(i, "box", Vec3(0.2 * i, 0.0, 0.75), 40));
  const auto verdicts = associate(map, obs);
  ASSERT_EQ(verdicts.size(), 3u);
  for (const auto& v : verdicts) EXPECT_TRUE(v.is_new());
  const auto report = integrate(map, obs, verdicts, 1);
  EXPECT_EQ(map.estimates.size(), 3u);
  EXPECT_EQ(report.created_ids.size(), 3u);
}

TEST(Association, GateAndNearestNeighbour) {
  GlobalObjectMap map;
  map.estimates.push_back(bare_estimate(0, "box", Vec3(0.0, 0.0, 0.75), Vec3::Constant(0.02)));
  map.estimates.push_back(bare_estimate(1, "box", Vec3(0.08, 0.0, 0.75), Vec3::Constant(0.02)));
  map.estimates[0].gt_votes[10] = 5;
  map.estimates[1].gt_votes[11] = 5;

  Observation obs;
  obs.detections.push_back(cloud_detection(10, "box", Vec3(0.02, 0.0, 0.75), 20, 0.0));
  obs.detections.push_back(cloud_detection(11, "box", Vec3(0.11, 0.0, 0.75), 20, 0.0));
  obs.detections.push_back(cloud_detection(12, "cup", Vec3(0.0, 0.0, 0.75), 20, 0.0));
  obs.detections.push_back(cloud_detection(13, "box", Vec3(0.5, 0.0, 0.75), 20, 0.0));
  const auto v = associate(map, obs);
  ASSERT_EQ(v.size(), 4u);
  EXPECT_EQ(v[0].matched_id, 0);
  EXPECT_EQ(v[1].matched_id, 1);
  EXPECT_TRUE(v[2].is_new());
  EXPECT_TRUE(v[3].is_new());

  AssociationOptions by_id;
  by_id.oracle = true;
  const auto oracle = associate(map, obs, by_id);
  EXPECT_EQ(oracle[0].matched_id, v[0].matched_id);
  EXPECT_EQ(oracle[1].matched_id, v[1].matched_id);
}

TEST(Integration, RepeatIsIdempotentOnStatuses) {
  const DeskScene scene = single_cube_scene();
  const CameraPose cam = CameraPose::look_at(Vec3(0.4, -0.3, 1.3), Vec3(0.0, 0.0, 0.75));
  const Observation obs = render(scene, cam, CameraIntrinsics{}, NoiseModel::off(), 1);
  GlobalObjectMap map;
  map.estimates.push_back(bare_estimate(0, "box", scene.primitives[0].pose_gt.t, scene.primitives[0].pose_gt.s));
  map.estimates[0].gt_votes[0] = 1;
  const auto verdicts = associate(map, obs);
  ASSERT_EQ(verdicts[0].matched_id, 0);
  integrate(map, obs, verdicts, 1);
  const std::size_t n1 = map.estimates[0].points.size();
  const SurfaceGridSet after_first = map.estimates[0].grids;
  integrate(map, obs, verdicts, 2);
  EXPECT_EQ(map.estimates[0].points.size(), 2 * n1);
  bool same = true;
  after_first.for_each([&](const CellIndex& c, const GridCell& cell) {
    same = same && map.estimates[0].grids.cell(c).status == cell.status;
  });
  EXPECT_TRUE(same);
}

TEST(Integration, NewObjectStartsUnknown) {
  GlobalObjectMap map;
  Observation obs;
  obs.detections.push_back(cloud_detection(0, "box", Vec3(0.0, 0.0, 0.75), 60));
  integrate(map, obs, associate(map, obs));
  ASSERT_EQ(map.estimates.size(), 1u);
  const Completeness c = completeness(map.estimates[0]);
  EXPECT_DOUBLE_EQ(c.h_norm, 1.0);
  map.estimates[0].grids.for_each([](const CellIndex&, const GridCell& g) { EXPECT_DOUBLE_EQ(g.p, 0.5); });
}

TEST(Integration, EmptyObservationIsNoOp) {
  GlobalObjectMap map;
  map.estimates.push_back(bare_estimate(0, "box", Vec3(0, 0, 0.75), Vec3::Constant(0.05)));
  const Observation obs;
  const auto report = integrate(map, obs, associate(map, obs));
  EXPECT_TRUE(report.touched_ids.empty());
  EXPECT_EQ(map.estimates.size(), 1u);
  EXPECT_TRUE(map.estimates[0].points.empty());
}

TEST(GridUpdate, TopDownViewMatchesRendererVisibility) {
  const DeskScene scene = single_cube_scene();
  const ObjectPose& gt = scene.primitives[0].pose_gt;
  // Camera straight above, offset so two side faces show their upper rows.
  const CameraPose cam = CameraPose::look_at(Vec3(0.2, 0.15, 1.3), Vec3(0.2, 0.15, 0.7));
  const CameraIntrinsics intr;
  const Observation obs = render(scene, cam, intr, NoiseModel::off(), 5);
  ASSERT_EQ(obs.detections.size(), 1u);

  ObjectEstimate est = bare_estimate(0, "box", gt.t, gt.s);
  update_surface_grids(est, obs.detections[0].points_world, cam, intr);

  const auto visible = visible_cells(gt, est.grids, {}, cam, intr);
  std::set<CellIndex> vis(visible.begin(), visible.end());
  est.grids.for_each([&](const CellIndex& c, const GridCell& cell) {
    if (vis.count(c))
      EXPECT_NE(cell.status, CellStatus::unknown);
    else
      EXPECT_EQ(cell.status, CellStatus::unknown);
  });
  // Faces turned toward the camera are known and mostly hit; far faces stay unknown.
  for (Face f : {Face::pos_z, Face::pos_x, Face::pos_y}) {
    const auto& cells = est.grids.face(f).cells;
    const auto hit = std::count_if(cells.begin(), cells.end(),
                                   [](const GridCell& c) { return c.status == CellStatus::occupied; });
    EXPECT_GE(hit * 10, static_cast<long>(cells.size()) * 9) << static_cast<int>(f);
    for (const auto& c : cells) EXPECT_NE(c.status, CellStatus::unknown);
  }
  for (const auto& c : est.grids.face(Face::neg_x).cells) EXPECT_EQ(c.status, CellStatus::unknown);
  for (const auto& c : est.grids.face(Face::neg_y).cells) EXPECT_EQ(c.status, CellStatus::unknown);
}

TEST(GridUpdate, NoPointsNoVisibilityNoChange) {
  ObjectEstimate est = bare_estimate(0, "box", Vec3(0, 0, 0.75), Vec3::Constant(0.05));
  const CameraPose away = CameraPose::look_at(Vec3(0, 0, 1.5), Vec3(0, 0, 2.5));
  const auto stats = update_surface_grids(est, {}, away, CameraIntrinsics{});
  EXPECT_EQ(stats.occupied_hits, 0);
  EXPECT_EQ(stats.newly_free, 0);
  EXPECT_EQ(est.grids.counts().unknown, est.grids.cell_count());
}

TEST(GridUpdate, FarPointsAreIgnoredAndCounted) {
  ObjectEstimate est = bare_estimate(0, "box", Vec3(0, 0, 0.75), Vec3::Constant(0.05));
  const std::vector<Vec3> pts{Vec3(0, 0, 0.8), Vec3(2.0, 0, 0.75)};
  const CameraPose away = CameraPose::look_at(Vec3(0, 0, 1.5), Vec3(0, 0, 2.5));
  const auto stats = update_surface_grids(est, pts, away, CameraIntrinsics{});
  EXPECT_EQ(stats.occupied_hits, 1);
  EXPECT_EQ(stats.ignored, 1);
  EXPECT_EQ(est.ignored_points, 1);
}

TEST(GridUpdate, PropertyUnknownCountAndEntropyNeverIncrease) {
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const DeskScene scene = random_single_object_scene(rng);
    const ObjectPose& gt = scene.primitives[0].pose_gt;
    ObjectEstimate est = bare_estimate(0, "box", gt.t, gt.s);
    est.pose.theta = gt.theta;
    std::size_t unknown = est.grids.counts().unknown;
    double h = completeness(est).h_norm;
    for (int k = 0; k < 20; ++k) {
      const CameraPose cam = random_view(rng, gt.t);
      const Observation obs = render(scene, cam, CameraIntrinsics{}, NoiseModel::off(), 100 * trial + k);
      const std::vector<Vec3> pts = obs.detections.empty() ? std::vector<Vec3>{} : obs.detections[0].points_world;
      update_surface_grids(est, pts, cam, CameraIntrinsics{});
      const std::size_t u2 = est.grids.counts().unknown;
      const double h2 = completeness(est).h_norm;
      ASSERT_LE(u2, unknown) << "trial " << trial << " step " << k;
      ASSERT_LE(h2, h + 1e-12) << "trial " << trial << " step " << k;
      unknown = u2;
      h = h2;
    }
  }
}

TEST(GridRebuild, ReplaysFramesAfterPoseChange) {
  const DeskScene scene = single_cube_scene();
  const CameraPose cam = CameraPose::look_at(Vec3(0.4, -0.3, 1.3), Vec3(0.0, 0.0, 0.75));
  const Observation obs = render(scene, cam, CameraIntrinsics{}, NoiseModel::off(), 1);
  GlobalObjectMap map;
  integrate(map, obs, associate(map, obs), 1);
  ASSERT_EQ(map.estimates.size(), 1u);
  ObjectEstimate& est = map.estimates[0];
  est.pose = scene.primitives[0].pose_gt;
  rebuild_surface_grids(est);
  EXPECT_EQ(est.grids.cell_count(), 500u);
  EXPECT_GT(est.grids.counts().occupied, 0u);
  EXPECT_FALSE(pose_moved_beyond_cell(est.pose, est.pose, 0.01));
  ObjectPose shifted = est.pose;
  shifted.t.x() += 0.011;
  EXPECT_TRUE(pose_moved_beyond_cell(est.pose, shifted, 0.01));
}

TEST(SliceFilter, HandCountedDropPatterns) {
  const std::vector<int> counts{1, 30, 32, 31, 30, 29, 33, 31, 30, 2};
  EXPECT_EQ(slice_drop_counts(counts), std::make_pair(1, 1));
  const std::vector<int> uniform(12, 20);
  EXPECT_EQ(slice_drop_counts(uniform), std::make_pair(0, 0));
  // Empty gap between a stray slice and the body.
  const std::vector<int> gap{2, 0, 0, 25, 26, 25, 24};
  EXPECT_EQ(slice_drop_counts(gap), std::make_pair(3, 0));
  // Never crosses the midpoint.
  const std::vector<int> rising{1, 4, 13, 40, 121};
  const auto [lo, hi] = slice_drop_counts(rising);
  EXPECT_LE(lo, 2);
  EXPECT_EQ(hi, 0);
}

TEST(SliceFilter, RemovesPlanarClump) {
  for (int seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    const Vec3 center(0.0, 0.0, 0.75);
    std::vector<Vec3> pts = cube_surface_cloud(center, 0.05, 3000, rng);
    const Vec3 clean_extent = extent_of(pts);
    append_clump(pts, center + Vec3(0.09, 0.0, 0.0), 200, rng);
    ObjectPose pose;
    pose.t = center;
    pose.s = Vec3::Constant(0.05);
    const auto res = slice_filter(pts, pose);
    const Vec3 ext = extent_of(res.points);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(ext[a], clean_extent[a], 0.05 * clean_extent[a]) << "axis " << a;
    EXPECT_GT(res.dropped_high[0], 0);
  }
}

TEST(SliceFilter, OutputIsSubsetAndSmallInputIsSkipped) {
  std::mt19937_64 rng(3);
  std::vector<Vec3> few = cube_surface_cloud(Vec3(0, 0, 0.75), 0.05, 20, rng);
  ObjectPose pose;
  pose.t = Vec3(0, 0, 0.75);
  const auto skipped = slice_filter(few, pose);
  EXPECT_EQ(skipped.points.size(), few.size());
  EXPECT_FALSE(skipped.warnings.empty());

  std::vector<Vec3> pts = cube_surface_cloud(Vec3(0, 0, 0.75), 0.05, 2000, rng);
  append_clump(pts, Vec3(0, 0.1, 0.75), 150, rng);
  const auto res = slice_filter(pts, pose);
  for (const Vec3& p : res.points) EXPECT_NE(std::find(pts.begin(), pts.end(), p), pts.end());
}

TEST(SliceFilter, AbortsWhenMostPointsWouldGo) {
  // Five sparse slices of ten cells each, then one cell holding most points.
  std::vector<Vec3> pts;
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 10; ++j)
      for (int r = 0; r < 2; ++r) pts.emplace_back(0.003 + 0.01 * i, 0.005 + 0.01 * j, 0.0);
  for (int r = 0; r < 500; ++r) pts.emplace_back(0.059, 0.045, 0.0);
  const auto res = slice_filter(pts, ObjectPose{});
  EXPECT_EQ(res.points.size(), pts.size());
  EXPECT_EQ(res.dropped_high[0], 0);
  ASSERT_FALSE(res.warnings.empty());
  EXPECT_NE(res.warnings[0].find("aborted"), std::string::npos);
}

TEST(StatisticalFilter, DropsFarOutliers) {
  std::mt19937_64 rng(8);
  std::vector<Vec3> pts = cube_surface_cloud(Vec3(0, 0, 0.75), 0.05, 1000, rng);
  pts.emplace_back(0.6, 0.0, 0.75);
  pts.emplace_back(0.0, -0.5, 0.9);
  const auto kept = statistical_filter(pts);
  EXPECT_EQ(std::count(kept.begin(), kept.end(), Vec3(0.6, 0.0, 0.75)), 0);
  EXPECT_EQ(std::count(kept.begin(), kept.end(), Vec3(0.0, -0.5, 0.9)), 0);
  EXPECT_GT(kept.size(), 950u);
}

TEST(Export, MapJsonAndAsciiDump) {
  GlobalObjectMap map;
  map.estimates.push_back(bare_estimate(3, "cup", Vec3(0.1, 0.2, 0.75), Vec3(0.02, 0.02, 0.03)));
  map.estimates[0].grids.mark_occupied({Face::pos_z, 0, 0});
  const std::string json = export_map_json(map);
  EXPECT_NE(json.find("\"format\": 1"), std::string::npos);
  EXPECT_NE(json.find("\"label\": \"cup\""), std::string::npos);
  EXPECT_NE(json.find("\"h_norm\""), std::string::npos);
  const std::string ascii = dump_grids_ascii(map.estimates[0]);
  EXPECT_NE(ascii.find("face +z 4x4"), std::string::npos);
  EXPECT_NE(ascii.find('#'), std::string::npos);
}
