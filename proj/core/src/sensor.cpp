#include "activemap/sensor.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace activemap {

NoiseModel NoiseModel::low() { return {0.001, 1.0, deg2rad(0.5), 0.02, 0.02}; }

NoiseModel NoiseModel::medium() { return {0.003, 3.0, deg2rad(1.5), 0.05, 0.05}; }

void NoiseModel::validate() const {
  if (depth_sigma < 0 || bbox_jitter_sigma < 0 || line_sigma < 0) throw DomainError("noise sigmas must be >= 0");
  if (dropout_prob < 0 || dropout_prob > 1 || desk_contamination < 0 || desk_contamination > 1)
    throw DomainError("noise probabilities must lie in [0, 1]");
}

namespace {

// Oriented box with its rotation cached for repeated ray tests.
struct Occluder {
  Mat3 r_t;
  Vec3 t;
  Vec3 s;
  bool cylinder = false;

  static Occluder from_pose(const ObjectPose& pose, bool cylinder = false) {
    return {pose.rotation().transpose(), pose.t, pose.s, cylinder};
  }

  std::optional<double> hit(const Vec3& origin, const Vec3& dir) const {
    if (cylinder) return ray_cylinder(origin, dir, t, s.x(), s.z());
    const Vec3 o = r_t * (origin - t);
    const Vec3 d = r_t * dir;
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 3; ++i) {
      if (std::abs(d[i]) < 1e-15) {
        if (o[i] < -s[i] || o[i] > s[i]) return std::nullopt;
        continue;
      }
      double t0 = (-s[i] - o[i]) / d[i];
      double t1 = (s[i] - o[i]) / d[i];
      if (t0 > t1) std::swap(t0, t1);
      lo = std::max(lo, t0);
      hi = std::min(hi, t1);
      if (lo > hi) return std::nullopt;
    }
    if (hi < 0.0) return std::nullopt;
    return std::max(lo, 0.0);
  }
};

bool occluded(const Vec3& eye, const Vec3& p, std::span<const Occluder> occluders, int skip) {
  const Vec3 delta = p - eye;
  const double dist = delta.norm();
  const Vec3 dir = delta / dist;
  for (int i = 0; i < static_cast<int>(occluders.size()); ++i) {
    if (i == skip) continue;
    const auto h = occluders[i].hit(eye, dir);
    if (h && *h < dist - 1e-6) return true;
  }
  return false;
}

bool in_image(const CameraIntrinsics& intr, const Vec2& px) {
  return px.x() >= 0.0 && px.x() < intr.width && px.y() >= 0.0 && px.y() < intr.height;
}

struct SurfaceSample {
  Vec3 p;
  Vec3 n;
};

// Jittered-grid samples on the non-bottom surfaces, one per `area`.
std::vector<SurfaceSample> sample_surface(const ScenePrimitive& prim, double area, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double cell = std::sqrt(area);
  const ObjectPose& pose = prim.pose_gt;
  const Mat3 r = pose.rotation();
  const Vec3& s = pose.s;
  std::vector<SurfaceSample> out;

  auto emit = [&](const Vec3& local, const Vec3& normal) { out.push_back({r * local + pose.t, r * normal}); };

  if (prim.shape == Shape::cuboid) {
    // Faces as (fixed axis, sign, first axis, second axis).
    const std::array<std::array<int, 4>, 5> faces{{{0, 1, 1, 2}, {0, -1, 1, 2}, {1, 1, 0, 2}, {1, -1, 0, 2}, {2, 1, 0, 1}}};
    for (const auto& f : faces) {
      const int fixed = f[0], a = f[2], b = f[3];
      const int na = std::max(1, static_cast<int>(std::lround(2.0 * s[a] / cell)));
      const int nb = std::max(1, static_cast<int>(std::lround(2.0 * s[b] / cell)));
      Vec3 normal = Vec3::Zero();
      normal[fixed] = f[1];
      for (int j = 0; j < nb; ++j)
        for (int i = 0; i < na; ++i) {
          Vec3 local;
          local[fixed] = f[1] * s[fixed];
          local[a] = -s[a] + 2.0 * s[a] * (i + unit(rng)) / na;
          local[b] = -s[b] + 2.0 * s[b] * (j + unit(rng)) / nb;
          emit(local, normal);
        }
    }
    return out;
  }

  const double radius = s.x();
  const int nt = std::max(1, static_cast<int>(std::lround(2.0 * radius / cell)));
  for (int j = 0; j < nt; ++j)
    for (int i = 0; i < nt; ++i) {
      const double x = -radius + 2.0 * radius * (i + unit(rng)) / nt;
      const double y = -radius + 2.0 * radius * (j + unit(rng)) / nt;
      if (x * x + y * y <= radius * radius) emit(Vec3(x, y, s.z()), Vec3::UnitZ());
    }
  const int nu = std::max(3, static_cast<int>(std::lround(2.0 * kPi * radius / cell)));
  const int nv = std::max(1, static_cast<int>(std::lround(2.0 * s.z() / cell)));
  for (int j = 0; j < nv; ++j)
    for (int i = 0; i < nu; ++i) {
      const double a = 2.0 * kPi * (i + unit(rng)) / nu;
      const double z = -s.z() + 2.0 * s.z() * (j + unit(rng)) / nv;
      emit(Vec3(radius * std::cos(a), radius * std::sin(a), z), Vec3(std::cos(a), std::sin(a), 0.0));
    }
  return out;
}

// Distance from a desk point to a primitive's footprint (0 inside).
double footprint_distance(const ScenePrimitive& prim, const Vec3& p) {
  const Vec2 q(p.x() - prim.pose_gt.t.x(), p.y() - prim.pose_gt.t.y());
  if (prim.shape == Shape::cylinder) return std::max(0.0, q.norm() - prim.pose_gt.s.x());
  const double c = std::cos(prim.pose_gt.yaw()), s = std::sin(prim.pose_gt.yaw());
  const Vec2 local(c * q.x() + s * q.y(), -s * q.x() + c * q.y());
  const Vec2 excess(std::max(0.0, std::abs(local.x()) - prim.pose_gt.s.x()),
                    std::max(0.0, std::abs(local.y()) - prim.pose_gt.s.y()));
  return excess.norm();
}

Vec3 depth_noise(const Vec3& p, const Vec3& eye, double sigma, std::mt19937_64& rng) {
  if (sigma <= 0.0) return p;
  std::normal_distribution<double> n(0.0, sigma);
  return p + n(rng) * (p - eye).normalized();
}

}  // namespace

Observation render(const DeskScene& scene, const CameraPose& cam, const CameraIntrinsics& intr,
                   const NoiseModel& noise, std::uint64_t seed, const RenderOptions& options) {
  intr.validate();
  noise.validate();
  if (cam.translation.z() <= scene.desk_height) throw DomainError("camera must be above the desk plane");

  Observation obs;
  obs.camera = cam;
  obs.intrinsics = intr;
  const Vec3 eye = cam.translation;

  std::vector<Occluder> occluders;
  occluders.reserve(scene.primitives.size());
  for (const auto& prim : scene.primitives)
    occluders.push_back(Occluder::from_pose(prim.pose_gt, prim.shape == Shape::cylinder));

  auto visible = [&](const Vec3& p, int skip) -> std::optional<Vec2> {
    const Vec3 pc = cam.to_camera(p);
    if (pc.z() <= options.near_clip) return std::nullopt;
    const auto px = project(intr, cam, p);
    if (!px || !in_image(intr, *px)) return std::nullopt;
    if (occluded(eye, p, occluders, skip)) return std::nullopt;
    return px;
  };

  // Desk samples not covered by any object.
  std::mt19937_64 desk_rng(mix_seed(seed, 0xde5c));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const DeskBounds& b = scene.bounds;
  const int nx = std::max(1, static_cast<int>(std::lround(b.size_x() / options.desk_spacing)));
  const int ny = std::max(1, static_cast<int>(std::lround(b.size_y() / options.desk_spacing)));
  std::vector<Vec3> desk_clean;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const Vec3 p(b.xmin + b.size_x() * (i + unit(desk_rng)) / nx, b.ymin + b.size_y() * (j + unit(desk_rng)) / ny,
                   scene.desk_height);
      bool covered = false;
      for (const auto& prim : scene.primitives)
        if (footprint_distance(prim, p) <= 0.0) {
          covered = true;
          break;
        }
      if (covered || !visible(p, -1)) continue;
      desk_clean.push_back(p);
    }
  std::vector<bool> desk_taken(desk_clean.size(), false);

  for (std::size_t k = 0; k < scene.primitives.size(); ++k) {
    const ScenePrimitive& prim = scene.primitives[k];
    std::mt19937_64 rng(mix_seed(seed, 0x0b1ec7 + static_cast<std::uint64_t>(prim.id)));
    const auto samples = sample_surface(prim, options.sample_area, rng);

    Detection det;
    det.object_id = prim.id;
    det.label = prim.label;
    Rect hull = Rect::inverted();
    for (const auto& smp : samples) {
      if ((eye - smp.p).dot(smp.n) <= 0.0) continue;
      const auto px = visible(smp.p, static_cast<int>(k));
      if (!px) continue;
      hull.expand(*px);
      det.points_world.push_back(smp.p);
    }
    const bool dropped = unit(rng) < noise.dropout_prob;
    if (det.points_world.size() < options.min_detection_points || dropped) continue;

    for (auto& p : det.points_world) p = depth_noise(p, eye, noise.depth_sigma, rng);

    if (noise.bbox_jitter_sigma > 0.0) {
      std::normal_distribution<double> jitter(0.0, noise.bbox_jitter_sigma);
      hull.xmin += jitter(rng);
      hull.ymin += jitter(rng);
      hull.xmax += jitter(rng);
      hull.ymax += jitter(rng);
      if (hull.xmin > hull.xmax) std::swap(hull.xmin, hull.xmax);
      if (hull.ymin > hull.ymax) std::swap(hull.ymin, hull.ymax);
    }
    det.bbox_2d = hull.clipped(intr.width, intr.height);
    det.bbox_center = det.bbox_2d.center();

    // Top-face edges of cuboids that the camera sees unoccluded.
    if (prim.shape == Shape::cuboid) {
      const ObjectPose& g = prim.pose_gt;
      const Vec3 up = g.rotation().col(2);
      const Vec3 top_center = g.t + up * g.s.z();
      if ((eye - top_center).dot(up) > 0.0) {
        const std::array<Vec3, 4> corners{g.to_world(Vec3(g.s.x(), g.s.y(), g.s.z())),
                                          g.to_world(Vec3(-g.s.x(), g.s.y(), g.s.z())),
                                          g.to_world(Vec3(-g.s.x(), -g.s.y(), g.s.z())),
                                          g.to_world(Vec3(g.s.x(), -g.s.y(), g.s.z()))};
        constexpr int kEdgeSamples = 21;
        for (int e = 0; e < 4; ++e) {
          const Vec3& a = corners[e];
          const Vec3& c = corners[(e + 1) % 4];
          std::optional<Vec2> first, last;
          int seen = 0;
          for (int i = 0; i < kEdgeSamples; ++i) {
            const Vec3 p = a + (c - a) * (static_cast<double>(i) / (kEdgeSamples - 1));
            const auto px = visible(p, static_cast<int>(k));
            if (!px) continue;
            ++seen;
            if (!first) first = px;
            last = px;
          }
          if (seen * 2 < kEdgeSamples || (*last - *first).norm() < 10.0) continue;
          ImageLine line{*first, *last, 0.0};
          if (noise.line_sigma > 0.0) {
            std::normal_distribution<double> ang(0.0, noise.line_sigma);
            const double d = ang(rng);
            const Vec2 mid = 0.5 * (line.p0 + line.p1);
            const Eigen::Rotation2Dd rot(d);
            line.p0 = mid + rot * (line.p0 - mid);
            line.p1 = mid + rot * (line.p1 - mid);
          }
          line.theta = std::atan2(line.p1.y() - line.p0.y(), line.p1.x() - line.p0.x());
          det.lines.push_back(line);
        }
      }
    }

    // Desk points just outside the footprint leak into the detection.
    if (noise.desk_contamination > 0.0) {
      std::vector<std::size_t> near;
      for (std::size_t i = 0; i < desk_clean.size(); ++i) {
        if (desk_taken[i]) continue;
        const double d = footprint_distance(prim, desk_clean[i]);
        if (d > 0.0 && d <= options.contamination_band) near.push_back(i);
      }
      const auto leak = std::min(near.size(), static_cast<std::size_t>(std::lround(
                                                  noise.desk_contamination * det.points_world.size())));
      for (std::size_t i = 0; i < leak; ++i) {
        const std::size_t pick = i + static_cast<std::size_t>(unit(rng) * (near.size() - i));
        std::swap(near[i], near[std::min(pick, near.size() - 1)]);
        desk_taken[near[i]] = true;
        det.points_world.push_back(depth_noise(desk_clean[near[i]], eye, noise.depth_sigma, rng));
      }
    }
    obs.detections.push_back(std::move(det));
  }

  for (std::size_t i = 0; i < desk_clean.size(); ++i)
    if (!desk_taken[i]) obs.desk_points.push_back(depth_noise(desk_clean[i], eye, noise.depth_sigma, desk_rng));
  return obs;
}

// ---------------------------------------------------------------------------

const VisibleObject* VisibleSet::find(int id) const {
  for (const auto& o : objects)
    if (o.id == id) return &o;
  return nullptr;
}

std::vector<CellIndex> visible_cells(const ObjectPose& target, const SurfaceGridSet& grids,
                                     std::span<const ObjectPose> occluders, const CameraPose& cam,
                                     const CameraIntrinsics& intr) {
  std::vector<Occluder> occ;
  occ.reserve(occluders.size());
  const Vec3 eye = cam.translation;
  const Mat3 r = target.rotation();
  for (const auto& o : occluders) occ.push_back(Occluder::from_pose(o));

  std::array<bool, kFaceCount> facing{};
  for (int f = 0; f < kFaceCount; ++f) {
    // A face can only be seen when the eye is outside its supporting plane.
    const Face face = static_cast<Face>(f);
    const Vec3 n = SurfaceGridSet::face_normal(face);
    const Vec3 eye_local = r.transpose() * (eye - target.t);
    const int axis = f < 2 ? 0 : (f < 4 ? 1 : 2);
    facing[f] = eye_local.dot(n) > target.s[axis];
  }

  std::vector<CellIndex> out;
  grids.for_each([&](const CellIndex& c, const GridCell&) {
    if (!facing[static_cast<int>(c.face)]) return;
    const Vec3 pw = r * grids.cell_center(c) + target.t;
    const Vec3 pc = cam.to_camera(pw);
    if (pc.z() <= 0.0) return;
    const Vec2 px(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
    if (!in_image(intr, px)) return;
    if (occluded(eye, pw, occ, -1)) return;
    out.push_back(c);
  });
  return out;
}

Rect projected_bbox(const ObjectPose& box, const CameraPose& cam, const CameraIntrinsics& intr) {
  Rect r = Rect::inverted();
  bool any = false;
  for (const Vec3& c : box.corners()) {
    const auto px = project(intr, cam, c);
    if (!px) continue;
    r.expand(*px);
    any = true;
  }
  if (!any) return {};
  return r.clipped(intr.width, intr.height);
}

VisibleSet predicted_visibility(const GlobalObjectMap& map, const CameraPose& cam, const CameraIntrinsics& intr) {
  VisibleSet set;
  std::vector<ObjectPose> poses;
  poses.reserve(map.estimates.size());
  for (const auto& e : map.estimates) poses.push_back(e.pose);

  std::vector<ObjectPose> others;
  for (std::size_t i = 0; i < map.estimates.size(); ++i) {
    const ObjectEstimate& est = map.estimates[i];
    others.clear();
    for (std::size_t j = 0; j < poses.size(); ++j)
      if (j != i) others.push_back(poses[j]);
    auto cells = visible_cells(est.pose, est.grids, others, cam, intr);
    if (cells.empty()) continue;
    set.objects.push_back({est.id, std::move(cells), projected_bbox(est.pose, cam, intr), 0.0});
  }
  for (auto& a : set.objects) {
    if (set.objects.size() < 2) break;
    double sum = 0.0;
    for (const auto& b : set.objects)
      if (&a != &b) sum += rect_iou(a.bbox, b.bbox);
    a.r_iou = sum / static_cast<double>(set.objects.size() - 1);
  }
  return set;
}

void write_ply(const std::filesystem::path& path, std::span<const Vec3> points) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << points.size()
      << "\nproperty float x\nproperty float y\nproperty float z\nend_header\n";
  for (const Vec3& p : points) out << p.x() << ' ' << p.y() << ' ' << p.z() << '\n';
}

std::vector<Vec3> observation_points(const Observation& obs) {
  std::vector<Vec3> pts = obs.desk_points;
  for (const auto& d : obs.detections) pts.insert(pts.end(), d.points_world.begin(), d.points_world.end());
  return pts;
}

}  // namespace activemap
