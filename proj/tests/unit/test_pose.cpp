#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "activemap/pose.hpp"
#include "support.hpp"

using namespace activemap;
using namespace activemap::testing;

namespace {

PlaneModel flat_desk(double z = 0.7) {
  PlaneModel p;
  p.n = Vec3::UnitZ();
  p.d = z;
  p.inliers = 100;
  return p;
}

// Regular samples on the five non-bottom faces, edges included.
std::vector<Vec3> face_grid_cloud(const ObjectPose& pose, int per_side = 11, bool top_only = false) {
  std::vector<Vec3> local;
  auto lin = [&](int i, double h) { return -h + 2.0 * h * i / (per_side - 1); };
  const Vec3& s = pose.s;
  for (int i = 0; i < per_side; ++i)
    for (int j = 0; j < per_side; ++j) {
      local.emplace_back(lin(i, s.x()), lin(j, s.y()), s.z());
      if (top_only) continue;
      local.emplace_back(s.x(), lin(i, s.y()), lin(j, s.z()));
      local.emplace_back(-s.x(), lin(i, s.y()), lin(j, s.z()));
      local.emplace_back(lin(i, s.x()), s.y(), lin(j, s.z()));
      local.emplace_back(lin(i, s.x()), -s.y(), lin(j, s.z()));
    }
  std::vector<Vec3> out;
  for (const auto& q : local) out.push_back(pose.to_world(q));
  return out;
}

// Evidence consistent with `gt`: box centers are the projected cube center,
// lines run along the cube's edges.
ObjectEvidence synthetic_evidence(const ObjectPose& gt, const std::vector<CameraPose>& cams) {
  ObjectEvidence ev;
  for (const auto& cam : cams) {
    FrameEvidence f;
    f.camera = cam;
    f.bbox_center = *project(f.intrinsics, cam, gt.t);
    f.line_yaws = {gt.yaw(), gt.yaw() + 0.5 * kPi, gt.yaw() - 0.5 * kPi};
    ev.frames.push_back(f);
  }
  ev.points = face_grid_cloud(gt);
  return ev;
}

std::vector<CameraPose> four_views(const Vec3& target) {
  std::vector<CameraPose> cams;
  for (int k = 0; k < 4; ++k) {
    const double a = 0.25 * kPi + 0.5 * kPi * k;
    cams.push_back(CameraPose::look_at(target + Vec3(0.5 * std::cos(a), 0.5 * std::sin(a), 0.45), target));
  }
  return cams;
}

ObjectPose gt_box() {
  ObjectPose p;
  p.s = Vec3(0.06, 0.04, 0.05);
  p.t = Vec3(0.1, -0.05, 0.75);
  p.theta = Vec3(0.0, 0.0, 0.3);
  return p;
}

bool inside_by_half_spaces(const ObjectPose& box, const Vec3& p) {
  // Face planes from the corner set: each axis pair of opposite faces.
  const auto c = box.corners();
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  const Mat3 r = box.rotation();
  for (const auto& v : c) {
    const Vec3 q = r.transpose() * v;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  const Vec3 q = r.transpose() * p;
  for (int a = 0; a < 3; ++a)
    if (q[a] < lo[a] - 1e-12 || q[a] > hi[a] + 1e-12) return false;
  return true;
}

}  // namespace

TEST(PlaneFit, ExactPlane) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 20; ++i)
    for (int j = 0; j < 20; ++j) pts.emplace_back(-0.5 + 0.05 * i, -0.5 + 0.05 * j, 0.7);
  const PlaneModel p = fit_desk_plane(pts, 1, 200, 0.005, Vec3(0, 0, 2));
  EXPECT_LT((p.n - Vec3::UnitZ()).norm(), 1e-9);
  EXPECT_NEAR(p.d, 0.7, 1e-9);
  EXPECT_EQ(p.inliers, 400);
  EXPECT_NEAR(p.n.norm(), 1.0, 1e-9);
}

TEST(PlaneFit, OutliersAreExcluded) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  std::vector<Vec3> pts;
  for (int i = 0; i < 300; ++i) pts.emplace_back(u(rng), u(rng), 0.7);
  for (int i = 0; i < 30; ++i) pts.emplace_back(u(rng), u(rng), 0.9);
  const PlaneModel p = fit_desk_plane(pts, 9, 200, 0.005, Vec3(0, 0, 2));
  int direct = 0;
  for (const auto& q : pts) direct += std::abs(q.z() - 0.7) <= 0.005;
  EXPECT_EQ(p.inliers, direct);
  EXPECT_NEAR(p.d, 0.7, 1e-9);
}

TEST(PlaneFit, NormalFacesViewpoint) {
  std::vector<Vec3> pts;
  for (int i = 0; i < 10; ++i)
    for (int j = 0; j < 10; ++j) pts.emplace_back(0.1 * i, 0.1 * j, 0.7);
  EXPECT_GT(fit_desk_plane(pts, 2, 200, 0.005, Vec3(0, 0, 3)).n.z(), 0.0);
  EXPECT_LT(fit_desk_plane(pts, 2, 200, 0.005, Vec3(0, 0, -3)).n.z(), 0.0);
}

TEST(PlaneFit, CollinearInputThrows) {
  const std::vector<Vec3> line{Vec3(0, 0, 0.7), Vec3(0.1, 0, 0.7), Vec3(0.2, 0, 0.7)};
  EXPECT_THROW(fit_desk_plane(line, 1), FitError);
  EXPECT_THROW(fit_desk_plane(std::vector<Vec3>{Vec3::Zero(), Vec3::UnitX()}, 1), FitError);
}

TEST(InitPose, AxisAlignedCube) {
  ObjectPose gt;
  gt.t = Vec3(0.1, 0.2, 0.75);
  gt.s = Vec3(0.05, 0.03, 0.05);
  const ObjectPose p = init_pose(face_grid_cloud(gt), flat_desk(), {});
  EXPECT_LT((p.t - gt.t).norm(), 1e-6);
  EXPECT_LT((p.s - gt.s).norm(), 1e-6);
  EXPECT_NEAR(p.yaw(), 0.0, 1e-12);
}

TEST(InitPose, RotatedCubeWithLines) {
  ObjectPose gt;
  gt.t = Vec3(-0.1, 0.0, 0.74);
  gt.s = Vec3(0.06, 0.03, 0.04);
  gt.theta.z() = deg2rad(30.0);
  const std::vector<double> lines{deg2rad(30.0), deg2rad(120.0), deg2rad(-60.0)};
  const ObjectPose p = init_pose(face_grid_cloud(gt), flat_desk(), lines);
  EXPECT_NEAR(p.yaw(), deg2rad(30.0), 1e-6);
  EXPECT_LT((p.t - gt.t).norm(), 1e-6);
  EXPECT_LT((p.s - gt.s).norm(), 1e-6);
}

TEST(InitPose, TopFaceOnlyCloud) {
  ObjectPose gt;
  gt.t = Vec3(0.0, 0.0, 0.75);
  gt.s = Vec3(0.05, 0.05, 0.05);
  const ObjectPose p = init_pose(face_grid_cloud(gt, 11, true), flat_desk(), {});
  // Flat cloud: zero height floored to 1 mm, bottom pushed to the desk.
  EXPECT_NEAR(p.s.z(), ObjectPose::kMinHalfExtent, 1e-12);
  EXPECT_NEAR(p.t.z() - p.s.z(), 0.7, 1e-12);
  EXPECT_NEAR(p.s.x(), 0.05, 1e-9);
}

TEST(InitPose, TooFewPointsThrows) {
  const std::vector<Vec3> few(9, Vec3(0, 0, 0.75));
  EXPECT_THROW(init_pose(few, flat_desk(), {}), InitError);
}

TEST(DominantYaw, ModeWinsOverStrays) {
  const std::vector<double> yaws{deg2rad(20.0), deg2rad(110.0), deg2rad(-70.0), deg2rad(21.0), deg2rad(-30.0)};
  const auto y = dominant_yaw(yaws);
  ASSERT_TRUE(y);
  EXPECT_NEAR(rad2deg(*y), (20.0 + 20.0 + 20.0 + 21.0) / 4.0, 0.01);
  EXPECT_FALSE(dominant_yaw(std::vector<double>{}));
}

TEST(LineLifting, TopDownLineKeepsWorldDirection) {
  const CameraPose cam = CameraPose::look_at(Vec3(0.0, 0.0, 1.5), Vec3(0.0, 0.0, 0.7));
  const CameraIntrinsics intr;
  const Vec3 a(0.0, 0.0, 0.8), b(0.05 * std::cos(0.4), 0.05 * std::sin(0.4), 0.8);
  ImageLine line;
  line.p0 = *project(intr, cam, a);
  line.p1 = *project(intr, cam, b);
  const auto yaw = line_world_yaw(line, cam, intr, Vec3::UnitZ());
  ASSERT_TRUE(yaw);
  EXPECT_NEAR(wrap_quarter(*yaw - 0.4), 0.0, 1e-9);
}

TEST(Residuals, HandEvaluatedTerms) {
  EXPECT_DOUBLE_EQ(scale_residual(Vec3(0.05, 0, 0), Vec3::Constant(0.1)), 0.0);
  EXPECT_NEAR(scale_residual(Vec3(0.15, 0, 0), Vec3::Constant(0.1)), 0.05, 1e-15);
  EXPECT_NEAR(std::abs(rad2deg(yaw_residual(deg2rad(10.0), deg2rad(95.0)))), 5.0, 1e-9);
  const auto rp = roll_pitch_residual(Vec3::Zero(), Vec3::UnitZ());
  EXPECT_NEAR(rp[0], 0.0, 1e-15);
  EXPECT_NEAR(rp[1], 0.0, 1e-15);
  const auto tilted = roll_pitch_residual(Vec3(deg2rad(10.0), 0.0, 0.0), Vec3::UnitZ());
  EXPECT_NEAR(rad2deg(tilted[0]), 10.0, 1e-9);
}

TEST(Residuals, BundleCountsFramesBehindCamera) {
  const ObjectPose gt = gt_box();
  ObjectEvidence ev = synthetic_evidence(gt, four_views(gt.t));
  FrameEvidence behind;
  behind.camera = CameraPose::look_at(gt.t + Vec3(0, 0, 0.5), gt.t + Vec3(0, 0, 1.5));
  behind.bbox_center = Vec2(320, 240);
  ev.frames.push_back(behind);
  const ResidualBundle b = residuals(gt, ev, flat_desk());
  EXPECT_EQ(b.skipped_frames, 1);
  EXPECT_EQ(b.r_pos.size(), 4u);
  for (double r : b.r_pos) EXPECT_NEAR(r, 0.0, 1e-9);
  EXPECT_NEAR(b.r_scale, 0.0, 1e-12);
  EXPECT_EQ(b.r_yaw.size(), 12u);
}

TEST(Residuals, TruncatedBoxesLoseTheirPositionTerm) {
  ObjectEstimate est = bare_estimate(0, "box", Vec3(0, 0, 0.75), Vec3::Constant(0.05));
  FrameRecord inside, clipped;
  inside.bbox_2d = Rect{100, 100, 200, 200};
  inside.bbox_center = Vec2(150, 150);
  clipped.bbox_2d = Rect{0, 100, 200, 200};
  clipped.bbox_center = Vec2(100, 150);
  est.frames = {inside, clipped};
  const ObjectEvidence ev = gather_evidence(est, Vec3::UnitZ(), {});
  ASSERT_EQ(ev.frames.size(), 2u);
  EXPECT_TRUE(ev.frames[0].bbox_center.allFinite());
  EXPECT_FALSE(ev.frames[1].bbox_center.allFinite());
}

TEST(Residuals, PropertyScaleZeroIffInside) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-0.12, 0.12), ext(0.02, 0.1), ang(-kPi, kPi);
  int inside = 0;
  for (int i = 0; i < 2000; ++i) {
    ObjectPose box;
    box.s = Vec3(ext(rng), ext(rng), ext(rng));
    box.theta = Vec3(0.3 * ang(rng), 0.3 * ang(rng), ang(rng));
    ObjectEvidence ev;
    ev.frames.emplace_back();
    const Vec3 p(u(rng), u(rng), u(rng));
    ev.points = {p};
    const bool oracle = inside_by_half_spaces(box, p);
    inside += oracle;
    EXPECT_EQ(residuals(box, ev, flat_desk()).r_scale <= 1e-12, oracle) << i;
  }
  EXPECT_GT(inside, 50);
}

TEST(Residuals, PropertyYawResidualHasQuarterTurnSymmetry) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> ang(-kPi, kPi);
  for (int i = 0; i < 500; ++i) {
    const double y = ang(rng), l = ang(rng);
    const double r = yaw_residual(y, l);
    if (std::abs(std::abs(r) - 0.25 * kPi) < 1e-9) continue;
    EXPECT_NEAR(yaw_residual(y + 0.5 * kPi, l), r, 1e-9);
    EXPECT_LE(std::abs(r), 0.25 * kPi + 1e-12);
  }
}

TEST(PoseProblem, PropertyJacobiansMatchCostFiniteDifferences) {
  const ObjectPose gt = gt_box();
  const ObjectEvidence ev = synthetic_evidence(gt, four_views(gt.t));
  PlaneModel plane = flat_desk();
  plane.n = Vec3(0.02, -0.01, 1.0).normalized();
  const PoseProblem problem(ev, plane);
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 100; ++i) {
    PoseProblem::Params x = PoseProblem::pack(gt);
    x.segment<3>(0) += 0.03 * Vec3(u(rng), u(rng), u(rng));
    x.segment<3>(3) += Vec3(0.2 * u(rng), 0.2 * u(rng), 0.5 * u(rng));
    x.segment<3>(6) = (gt.s + 0.02 * Vec3(u(rng), u(rng), u(rng))).cwiseMax(0.01);

    const Eigen::VectorXd r = problem.evaluate(x);
    const PoseProblem::Params g_analytic = problem.jacobian_analytic(x).transpose() * r;
    const PoseProblem::Params g_numeric = problem.jacobian_numeric(x).transpose() * r;
    PoseProblem::Params g_cost;
    for (int k = 0; k < 9; ++k) {
      PoseProblem::Params xp = x, xm = x;
      xp[k] += 1e-6;
      xm[k] -= 1e-6;
      g_cost[k] = (problem.cost(xp) - problem.cost(xm)) / 2e-6;
    }
    const double scale = std::max(1.0, g_cost.norm());
    EXPECT_LT((g_numeric - g_cost).norm() / scale, 1e-4) << "state " << i;
    EXPECT_LT((g_analytic - g_cost).norm() / scale, 1e-4) << "state " << i;
  }
}

TEST(Optimize, GroundTruthIsAFixedPoint) {
  const ObjectPose gt = gt_box();
  const ObjectEvidence ev = synthetic_evidence(gt, four_views(gt.t));
  const SolverResult res = optimize_pose(gt, ev, flat_desk());
  EXPECT_LE(res.iterations, 1);
  EXPECT_LT(res.final_cost, 1e-12);
  EXPECT_LT((PoseProblem::pack(res.pose) - PoseProblem::pack(gt)).norm(), 1e-8);
}

TEST(Optimize, RecoversFromPerturbation) {
  const ObjectPose gt = gt_box();
  const ObjectEvidence ev = synthetic_evidence(gt, four_views(gt.t));
  for (JacobianMode mode : {JacobianMode::numeric, JacobianMode::analytic}) {
    ObjectPose init = gt;
    init.t += Vec3(0.02, 0.0, 0.0);
    init.theta.z() += deg2rad(5.0);
    SolverOptions opts;
    opts.jacobian = mode;
    const SolverResult res = optimize_pose(init, ev, flat_desk(), opts);
    EXPECT_LT((res.pose.t - gt.t).norm() * 100.0, 0.2);
    EXPECT_LT(std::abs(rad2deg(wrap_quarter(res.pose.yaw() - gt.yaw()))), 0.5);
    EXPECT_LT(res.final_cost, res.initial_cost);
  }
}

TEST(Optimize, PropertyAcceptedStepsNeverIncreaseCost) {
  const ObjectPose gt = gt_box();
  const ObjectEvidence ev = synthetic_evidence(gt, four_views(gt.t));
  std::mt19937_64 rng(43);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int i = 0; i < 30; ++i) {
    ObjectPose init = gt;
    init.t += 0.04 * Vec3(u(rng), u(rng), u(rng));
    init.theta += Vec3(0.1 * u(rng), 0.1 * u(rng), 0.4 * u(rng));
    init.s = (gt.s + 0.03 * Vec3(u(rng), u(rng), u(rng))).cwiseMax(0.005);
    const SolverResult res = optimize_pose(init, ev, flat_desk());
    ASSERT_FALSE(res.cost_trace.empty());
    for (std::size_t k = 1; k < res.cost_trace.size(); ++k) EXPECT_LE(res.cost_trace[k], res.cost_trace[k - 1]);
    EXPECT_GE(res.pose.s.minCoeff(), ObjectPose::kMinHalfExtent);
  }
}

TEST(Optimize, GrazingSingleViewLeavesDepthUnresolved) {
  ObjectPose gt;
  gt.t = Vec3(0.0, 0.0, 0.75);
  gt.s = Vec3::Constant(0.05);
  // Only the +x face, seen nearly edge-on from the side.
  std::vector<Vec3> pts;
  for (int i = 0; i < 11; ++i)
    for (int j = 0; j < 11; ++j) pts.push_back(gt.to_world(Vec3(0.05, -0.05 + 0.01 * i, -0.05 + 0.01 * j)));
  const CameraPose cam = CameraPose::look_at(Vec3(0.1, -0.6, 0.76), gt.t);
  ObjectEvidence ev;
  FrameEvidence f;
  f.camera = cam;
  // The detector box only spans the visible face.
  f.bbox_center = *project(f.intrinsics, cam, gt.to_world(Vec3(0.05, 0.0, 0.0)));
  ev.frames.push_back(f);
  ev.points = pts;
  const ObjectPose init = init_pose(pts, flat_desk(), {});
  const SolverResult res = optimize_pose(init, ev, flat_desk());
  EXPECT_TRUE(std::isfinite(res.final_cost));
  EXPECT_GT(std::abs(res.pose.s.x() - gt.s.x()), 0.02);
}

TEST(Optimize, RequiresAnObservation) {
  EXPECT_THROW(optimize_pose(gt_box(), ObjectEvidence{}, flat_desk()), SolverError);
}
