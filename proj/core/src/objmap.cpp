#include "activemap/objmap.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include <fmt/format.h>
#include <json.hpp>

#include "activemap/sensor.hpp"

namespace activemap {

// ---------------------------------------------------------------------------
// SurfaceGridSet

std::array<int, 3> SurfaceGridSet::face_axes(Face f) {
  switch (f) {
    case Face::pos_x:
    case Face::neg_x:
      return {1, 2, 0};
    case Face::pos_y:
    case Face::neg_y:
      return {0, 2, 1};
    default:
      return {0, 1, 2};
  }
}

Vec3 SurfaceGridSet::face_normal(Face f) {
  switch (f) {
    case Face::pos_x:
      return Vec3::UnitX();
    case Face::neg_x:
      return -Vec3::UnitX();
    case Face::pos_y:
      return Vec3::UnitY();
    case Face::neg_y:
      return -Vec3::UnitY();
    default:
      return Vec3::UnitZ();
  }
}

SurfaceGridSet::SurfaceGridSet(const Vec3& half_extents, double resolution)
    : s_(half_extents), resolution_(resolution) {
  if (!(resolution > 0.0)) throw DomainError("grid resolution must be positive");
  for (int f = 0; f < kFaceCount; ++f) {
    const auto axes = face_axes(static_cast<Face>(f));
    FaceGrid& g = faces_[f];
    g.cols = std::max(1, static_cast<int>(std::ceil(2.0 * s_[axes[0]] / resolution - 1e-9)));
    g.rows = std::max(1, static_cast<int>(std::ceil(2.0 * s_[axes[1]] / resolution - 1e-9)));
    g.cells.assign(static_cast<std::size_t>(g.cols) * g.rows, GridCell{});
  }
}

std::size_t SurfaceGridSet::cell_count() const {
  std::size_t n = 0;
  for (const auto& g : faces_) n += g.cells.size();
  return n;
}

CellCounts SurfaceGridSet::counts() const {
  CellCounts c;
  for (const auto& g : faces_)
    for (const auto& cell : g.cells) {
      switch (cell.status) {
        case CellStatus::occupied:
          ++c.occupied;
          break;
        case CellStatus::free:
          ++c.free;
          break;
        default:
          ++c.unknown;
      }
    }
  return c;
}

Vec3 SurfaceGridSet::cell_center(const CellIndex& c) const {
  const auto axes = face_axes(c.face);
  const FaceGrid& g = face(c.face);
  Vec3 local;
  local[axes[2]] = face_normal(c.face)[axes[2]] * s_[axes[2]];
  local[axes[0]] = -s_[axes[0]] + (c.u + 0.5) * 2.0 * s_[axes[0]] / g.cols;
  local[axes[1]] = -s_[axes[1]] + (c.v + 0.5) * 2.0 * s_[axes[1]] / g.rows;
  return local;
}

CellIndex SurfaceGridSet::locate(const Vec3& q) const {
  const double rx = std::abs(q.x()) / s_.x();
  const double ry = std::abs(q.y()) / s_.y();
  const double rz = q.z() / s_.z();
  Face f;
  if (rz >= rx && rz >= ry)
    f = Face::pos_z;
  else if (rx >= ry)
    f = q.x() >= 0.0 ? Face::pos_x : Face::neg_x;
  else
    f = q.y() >= 0.0 ? Face::pos_y : Face::neg_y;

  const auto axes = face_axes(f);
  const FaceGrid& g = face(f);
  auto bin = [&](int axis, int n) {
    const int i = static_cast<int>(std::floor((q[axis] + s_[axis]) / (2.0 * s_[axis]) * n));
    return std::clamp(i, 0, n - 1);
  };
  return {f, bin(axes[0], g.cols), bin(axes[1], g.rows)};
}

void SurfaceGridSet::mark_occupied(const CellIndex& c) {
  GridCell& cell = this->cell(c);
  cell.status = CellStatus::occupied;
  cell.p = kOccupiedP;
}

void SurfaceGridSet::mark_free(const CellIndex& c) {
  GridCell& cell = this->cell(c);
  if (cell.status != CellStatus::unknown) return;
  cell.status = CellStatus::free;
  cell.p = kFreeP;
}

// ---------------------------------------------------------------------------
// Estimates

int ObjectEstimate::majority_gt_id() const {
  int best = -1, votes = 0;
  for (const auto& [id, n] : gt_votes)
    if (n > votes) {
      best = id;
      votes = n;
    }
  return best;
}

void ObjectEstimate::record_volume() {
  const double v = pose.volume();
  if (reference_volume <= 0.0) reference_volume = v;
  volume_history.push_back(v / reference_volume);
}

ObjectEstimate* GlobalObjectMap::find(int id) {
  for (auto& e : estimates)
    if (e.id == id) return &e;
  return nullptr;
}

const ObjectEstimate* GlobalObjectMap::find(int id) const {
  for (const auto& e : estimates)
    if (e.id == id) return &e;
  return nullptr;
}

// ---------------------------------------------------------------------------
// Association and integration

Vec3 detection_centroid(const Detection& det) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : det.points_world) c += p;
  return det.points_world.empty() ? c : Vec3(c / static_cast<double>(det.points_world.size()));
}

std::vector<AssociationVerdict> associate(const GlobalObjectMap& map, const Observation& obs,
                                          const AssociationOptions& options) {
  std::vector<AssociationVerdict> verdicts;
  verdicts.reserve(obs.detections.size());
  for (const Detection& det : obs.detections) {
    AssociationVerdict v;
    if (options.oracle) {
      for (const auto& est : map.estimates)
        if (est.majority_gt_id() == det.object_id) {
          v.matched_id = est.id;
          break;
        }
      verdicts.push_back(v);
      continue;
    }
    const Vec3 c = detection_centroid(det);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& est : map.estimates) {
      if (est.label != det.label) continue;
      const double dist = (c - est.pose.t).norm();
      const double gate = std::max(est.pose.s.norm(), options.min_gate);
      if (dist < gate && dist < best) {
        best = dist;
        v.matched_id = est.id;
      }
    }
    verdicts.push_back(v);
  }
  return verdicts;
}

namespace {

ObjectPose axis_aligned_box(std::span<const Vec3> points) {
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : points) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  ObjectPose pose;
  pose.t = 0.5 * (lo + hi);
  pose.s = 0.5 * (hi - lo);
  pose.canonicalize();
  return pose;
}

std::vector<ObjectPose> other_poses(const GlobalObjectMap& map, int id) {
  std::vector<ObjectPose> out;
  for (const auto& e : map.estimates)
    if (e.id != id) out.push_back(e.pose);
  return out;
}

}  // namespace

IntegrationReport integrate(GlobalObjectMap& map, const Observation& obs,
                            std::span<const AssociationVerdict> verdicts, int step) {
  if (verdicts.size() != obs.detections.size()) throw DomainError("one verdict per detection is required");
  IntegrationReport report;
  for (std::size_t i = 0; i < obs.detections.size(); ++i) {
    const Detection& det = obs.detections[i];
    ObjectEstimate* est = nullptr;
    bool created = false;
    if (verdicts[i].is_new()) {
      if (det.points_world.size() < kMinNewObjectPoints) continue;
      ObjectEstimate fresh;
      fresh.id = map.next_id++;
      fresh.label = det.label;
      fresh.pose = axis_aligned_box(det.points_world);
      fresh.grids = SurfaceGridSet(fresh.pose.s);
      map.estimates.push_back(std::move(fresh));
      est = &map.estimates.back();
      created = true;
      report.created_ids.push_back(est->id);
    } else {
      est = map.find(*verdicts[i].matched_id);
      if (!est) throw DomainError("verdict names unknown object " + std::to_string(*verdicts[i].matched_id));
    }

    FrameRecord frame;
    frame.step = step;
    frame.camera = obs.camera;
    frame.intrinsics = obs.intrinsics;
    frame.bbox_2d = det.bbox_2d;
    frame.bbox_center = det.bbox_center;
    frame.lines = det.lines;
    frame.point_begin = est->points.size();
    est->points.insert(est->points.end(), det.points_world.begin(), det.points_world.end());
    frame.point_end = est->points.size();
    est->frames.push_back(std::move(frame));
    est->gt_votes[det.object_id] += static_cast<int>(det.points_world.size());

    if (!created) {
      const auto occ = other_poses(map, est->id);
      update_surface_grids(*est, det.points_world, obs.camera, obs.intrinsics, occ);
    }
    if (std::find(report.touched_ids.begin(), report.touched_ids.end(), est->id) == report.touched_ids.end())
      report.touched_ids.push_back(est->id);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Grids

GridUpdateStats update_surface_grids(ObjectEstimate& est, std::span<const Vec3> points, const CameraPose& cam,
                                     const CameraIntrinsics& intr, std::span<const ObjectPose> occluders) {
  GridUpdateStats stats;
  const double reach = 3.0 * est.pose.s.norm();
  const Mat3 r_t = est.pose.rotation().transpose();
  std::set<CellIndex> hit;
  for (const Vec3& p : points) {
    const Vec3 q = r_t * (p - est.pose.t);
    if (q.norm() > reach) {
      ++stats.ignored;
      continue;
    }
    const CellIndex c = est.grids.locate(q);
    est.grids.mark_occupied(c);
    hit.insert(c);
    ++stats.occupied_hits;
  }
  for (const CellIndex& c : visible_cells(est.pose, est.grids, occluders, cam, intr)) {
    if (hit.count(c)) continue;
    if (est.grids.cell(c).status == CellStatus::unknown) ++stats.newly_free;
    est.grids.mark_free(c);
  }
  est.ignored_points += stats.ignored;
  return stats;
}

void rebuild_surface_grids(ObjectEstimate& est, std::span<const ObjectPose> occluders) {
  est.grids = SurfaceGridSet(est.pose.s, est.grids.resolution() > 0.0 ? est.grids.resolution()
                                                                       : SurfaceGridSet::kDefaultResolution);
  est.ignored_points = 0;
  for (const FrameRecord& f : est.frames) {
    const std::span<const Vec3> pts(est.points.data() + f.point_begin, f.point_end - f.point_begin);
    update_surface_grids(est, pts, f.camera, f.intrinsics, occluders);
  }
}

bool pose_moved_beyond_cell(const ObjectPose& before, const ObjectPose& after, double resolution) {
  const auto a = before.corners();
  const auto b = after.corners();
  for (int i = 0; i < 8; ++i)
    if ((a[i] - b[i]).norm() > resolution) return true;
  return false;
}

double binary_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError("binary entropy needs p in [0, 1]");
  double h = 0.0;
  if (p > 0.0) h -= p * std::log2(p);
  if (p < 1.0) h -= (1.0 - p) * std::log2(1.0 - p);
  return h;
}

Completeness completeness(const SurfaceGridSet& grids) {
  const std::size_t n = grids.cell_count();
  if (n == 0) throw DomainError("completeness of an empty grid set");
  Completeness c;
  std::size_t occupied = 0;
  grids.for_each([&](const CellIndex&, const GridCell& cell) {
    c.h_obj += binary_entropy(cell.p);
    if (cell.status == CellStatus::occupied) ++occupied;
  });
  c.h_norm = c.h_obj / static_cast<double>(n);
  c.r_o = static_cast<double>(occupied) / static_cast<double>(n);
  return c;
}

// ---------------------------------------------------------------------------
// Outlier filters

namespace {

double median_of(std::vector<double> v) {
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid)));
  return m;
}

}  // namespace

std::vector<Vec3> statistical_filter(std::span<const Vec3> points, double k) {
  if (points.size() < 10) return {points.begin(), points.end()};
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : points) c += p;
  c /= static_cast<double>(points.size());
  std::vector<double> d;
  d.reserve(points.size());
  for (const Vec3& p : points) d.push_back((p - c).norm());
  const double med = median_of(d);
  std::vector<double> dev;
  dev.reserve(d.size());
  for (double x : d) dev.push_back(std::abs(x - med));
  // Scaled to a standard deviation for Gaussian data.
  const double mad = 1.4826 * median_of(dev);
  if (mad <= 0.0) return {points.begin(), points.end()};
  std::vector<Vec3> out;
  out.reserve(points.size());
  for (std::size_t i = 0; i < points.size(); ++i)
    if (d[i] <= med + k * mad) out.push_back(points[i]);
  return out;
}

std::pair<int, int> slice_drop_counts(std::span<const int> counts) {
  const int k = static_cast<int>(counts.size());
  int lo = 0;
  while (lo < k / 2) {
    if (counts[lo] == 0) {
      ++lo;
      continue;
    }
    int next = lo + 1;
    while (next < k && counts[next] == 0) ++next;
    if (next >= k || 3 * counts[lo] >= counts[next]) break;
    ++lo;
  }
  int hi = k - 1;
  while (hi > (k - 1) / 2) {
    if (counts[hi] == 0) {
      --hi;
      continue;
    }
    int prev = hi - 1;
    while (prev >= 0 && counts[prev] == 0) --prev;
    if (prev < 0 || 3 * counts[hi] >= counts[prev]) break;
    --hi;
  }
  return {lo, k - 1 - hi};
}

SliceFilterResult slice_filter(std::span<const Vec3> points_world, const ObjectPose& pose, double resolution) {
  SliceFilterResult result;
  result.points.assign(points_world.begin(), points_world.end());
  if (points_world.size() < 30) {
    result.warnings.push_back("fewer than 30 points; slice filter skipped");
    return result;
  }
  const Mat3 r_t = pose.rotation().transpose();
  std::vector<Vec3> local;
  local.reserve(points_world.size());
  for (const Vec3& p : points_world) local.push_back(r_t * (p - pose.t));

  for (int axis = 0; axis < 3; ++axis) {
    const int a = (axis + 1) % 3, b = (axis + 2) % 3;
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const Vec3& q : local) {
      lo = std::min(lo, q[axis]);
      hi = std::max(hi, q[axis]);
    }
    const int k = std::max(1, static_cast<int>(std::ceil((hi - lo) / resolution - 1e-9)));
    auto slice_of = [&](const Vec3& q) { return std::min(k - 1, static_cast<int>((q[axis] - lo) / resolution)); };

    std::vector<std::set<std::pair<long, long>>> cells(static_cast<std::size_t>(k));
    for (const Vec3& q : local)
      cells[slice_of(q)].emplace(static_cast<long>(std::floor(q[a] / resolution)),
                                 static_cast<long>(std::floor(q[b] / resolution)));
    std::vector<int> counts(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) counts[i] = static_cast<int>(cells[i].size());

    const auto [drop_lo, drop_hi] = slice_drop_counts(counts);
    if (drop_lo == 0 && drop_hi == 0) continue;

    std::vector<Vec3> keep_local, keep_world;
    for (std::size_t i = 0; i < local.size(); ++i) {
      const int s = slice_of(local[i]);
      if (s < drop_lo || s >= k - drop_hi) continue;
      keep_local.push_back(local[i]);
      keep_world.push_back(result.points[i]);
    }
    if (2 * keep_local.size() < local.size()) {
      result.warnings.push_back(fmt::format("axis {}: slice filter would remove {} of {} points; aborted", axis,
                                            local.size() - keep_local.size(), local.size()));
      continue;
    }
    result.dropped_low[axis] = drop_lo;
    result.dropped_high[axis] = drop_hi;
    local = std::move(keep_local);
    result.points = std::move(keep_world);
  }
  return result;
}

// ---------------------------------------------------------------------------
// Export

std::string export_map_json(const GlobalObjectMap& map) {
  using ordered_json = nlohmann::ordered_json;
  auto arr = [](const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); };
  ordered_json doc;
  doc["format"] = 1;
  doc["desk_plane"] = {{"n", arr(map.desk_plane.n)}, {"d", map.desk_plane.d}, {"inliers", map.desk_plane.inliers}};
  doc["objects"] = ordered_json::array();
  for (const auto& e : map.estimates) {
    const Completeness c = completeness(e);
    doc["objects"].push_back({{"id", e.id},
                              {"label", e.label},
                              {"t", arr(e.pose.t)},
                              {"theta", arr(e.pose.theta)},
                              {"s", arr(e.pose.s)},
                              {"h_norm", c.h_norm},
                              {"r_o", c.r_o}});
  }
  return doc.dump(2) + "\n";
}

std::string dump_grids_ascii(const ObjectEstimate& est) {
  static const std::array<const char*, kFaceCount> names{"+x", "-x", "+y", "-y", "+z"};
  std::string out = fmt::format("object {} ({})\n", est.id, est.label);
  for (int f = 0; f < kFaceCount; ++f) {
    const FaceGrid& g = est.grids.face(static_cast<Face>(f));
    out += fmt::format("face {} {}x{}\n", names[f], g.cols, g.rows);
    for (int v = g.rows - 1; v >= 0; --v) {
      for (int u = 0; u < g.cols; ++u) {
        switch (g.at(u, v).status) {
          case CellStatus::occupied:
            out += '#';
            break;
          case CellStatus::free:
            out += 'o';
            break;
          default:
            out += '.';
        }
      }
      out += '\n';
    }
  }
  return out;
}

}  // namespace activemap
