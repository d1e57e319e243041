#pragma once

// Shared builders for the unit tests.

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "activemap/objmap.hpp"
#include "activemap/scene.hpp"

namespace activemap::testing {

inline ScenePrimitive box_primitive(int id, Vec3 center_xy, Vec3 half, double yaw = 0.0, double desk = 0.7) {
  ScenePrimitive p;
  p.id = id;
  p.label = "box";
  p.pose_gt.t = Vec3(center_xy.x(), center_xy.y(), desk + half.z());
  p.pose_gt.theta.z() = yaw;
  p.pose_gt.s = half;
  return p;
}

inline DeskScene single_cube_scene(double yaw = 0.0) {
  DeskScene scene;
  scene.primitives.push_back(box_primitive(0, Vec3::Zero(), Vec3::Constant(0.05), yaw));
  scene.validate();
  return scene;
}

inline DeskScene random_single_object_scene(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> ext(0.02, 0.1), pos(-0.2, 0.2), ang(-kPi, kPi);
  DeskScene scene;
  scene.primitives.push_back(
      box_primitive(0, Vec3(pos(rng), pos(rng), 0.0), Vec3(ext(rng), ext(rng), ext(rng)), ang(rng)));
  scene.validate();
  return scene;
}

// Eye on a shell around `target`, above the desk.
inline CameraPose random_view(std::mt19937_64& rng, const Vec3& target) {
  std::uniform_real_distribution<double> r(0.4, 0.9), el(deg2rad(15.0), deg2rad(85.0)), az(-kPi, kPi);
  const double e = el(rng), a = az(rng), d = r(rng);
  const Vec3 eye = target + d * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
  return CameraPose::look_at(eye, target);
}

inline ObjectEstimate bare_estimate(int id, const std::string& label, const Vec3& t, const Vec3& s) {
  ObjectEstimate e;
  e.id = id;
  e.label = label;
  e.pose.t = t;
  e.pose.s = s;
  e.grids = SurfaceGridSet(s);
  return e;
}

// A detection whose points form a small square patch around `center`.
inline Detection cloud_detection(int gt_id, const std::string& label, const Vec3& center, int n,
                                 double spread = 0.01) {
  Detection d;
  d.object_id = gt_id;
  d.label = label;
  const int side = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(n))));
  for (int i = 0; i < n; ++i) {
    const double u = (i % side) / static_cast<double>(side) - 0.5;
    const double v = (i / side % side) / static_cast<double>(side) - 0.5;
    d.points_world.push_back(center + spread * Vec3(u, v, 0.0));
  }
  // Re-center exactly on `center`.
  Vec3 mean = Vec3::Zero();
  for (const auto& p : d.points_world) mean += p;
  mean /= static_cast<double>(n);
  for (auto& p : d.points_world) p += center - mean;
  d.bbox_2d = Rect{300, 220, 340, 260};
  d.bbox_center = Vec2(320, 240);
  return d;
}

// Uniform samples on the six faces of an axis-aligned cube.
inline std::vector<Vec3> cube_surface_cloud(const Vec3& center, double half, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-half, half);
  std::vector<Vec3> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int face = i % 6;
    Vec3 q(u(rng), u(rng), u(rng));
    q[face / 2] = face % 2 ? -half : half;
    out.push_back(center + q);
  }
  return out;
}

// A flat clump in the plane x = center.x, 3 cm across.
inline void append_clump(std::vector<Vec3>& pts, const Vec3& center, int n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-0.015, 0.015);
  for (int i = 0; i < n; ++i) pts.push_back(center + Vec3(0.0, u(rng), u(rng)));
}

inline Vec3 extent_of(const std::vector<Vec3>& pts) {
  Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
  for (const auto& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return hi - lo;
}

}  // namespace activemap::testing
