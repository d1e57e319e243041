#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "activemap/geometry.hpp"
#include "activemap/observation.hpp"

namespace activemap {

// ---------------------------------------------------------------------------
// Desk plane, shared by the map and the pose estimator.

struct PlaneModel {
  Vec3 n = Vec3::UnitZ();  // unit normal, pointing away from the desk
  double d = 0.0;          // n . x = d on the plane
  int inliers = 0;
  double theta_n = 0.5 * kPi;  // elevation of n above the world xy-plane

  double signed_distance(const Vec3& p) const { return n.dot(p) - d; }
};

// ---------------------------------------------------------------------------
// Surface occupancy grids on the five non-bottom faces of a cuboid.

enum class CellStatus : std::uint8_t { unknown, occupied, free };

struct GridCell {
  CellStatus status = CellStatus::unknown;
  double p = 0.5;
};

enum class Face : int { pos_x = 0, neg_x = 1, pos_y = 2, neg_y = 3, pos_z = 4 };
inline constexpr int kFaceCount = 5;

struct FaceGrid {
  int cols = 0;  // along the face's first in-plane axis
  int rows = 0;  // along the face's second in-plane axis
  std::vector<GridCell> cells;

  GridCell& at(int u, int v) { return cells[static_cast<std::size_t>(v) * cols + u]; }
  const GridCell& at(int u, int v) const { return cells[static_cast<std::size_t>(v) * cols + u]; }
};

struct CellIndex {
  Face face = Face::pos_z;
  int u = 0;
  int v = 0;

  auto operator<=>(const CellIndex&) const = default;
};

struct CellCounts {
  std::size_t occupied = 0;
  std::size_t free = 0;
  std::size_t unknown = 0;

  std::size_t total() const { return occupied + free + unknown; }
};

class SurfaceGridSet {
 public:
  static constexpr double kDefaultResolution = 0.01;
  static constexpr double kOccupiedP = 0.95;
  static constexpr double kFreeP = 0.05;

  SurfaceGridSet() = default;
  explicit SurfaceGridSet(const Vec3& half_extents, double resolution = kDefaultResolution);

  double resolution() const { return resolution_; }
  const Vec3& half_extents() const { return s_; }
  FaceGrid& face(Face f) { return faces_[static_cast<int>(f)]; }
  const FaceGrid& face(Face f) const { return faces_[static_cast<int>(f)]; }
  std::size_t cell_count() const;
  CellCounts counts() const;

  GridCell& cell(const CellIndex& c) { return face(c.face).at(c.u, c.v); }
  const GridCell& cell(const CellIndex& c) const { return face(c.face).at(c.u, c.v); }

  // Object-frame geometry of a cell.
  Vec3 cell_center(const CellIndex& c) const;
  static Vec3 face_normal(Face f);

  // Nearest non-bottom face for an object-frame point: largest
  // |coordinate|/extent ratio, ties resolved toward +z, then +-x, then +-y.
  CellIndex locate(const Vec3& p_object) const;

  // Status transitions: unknown -> occupied/free, free -> occupied.
  void mark_occupied(const CellIndex& c);
  void mark_free(const CellIndex& c);

  // Iterates every cell as (index, cell).
  template <typename Fn>
  void for_each(Fn&& fn) const {
    for (int f = 0; f < kFaceCount; ++f) {
      const FaceGrid& g = faces_[f];
      for (int v = 0; v < g.rows; ++v)
        for (int u = 0; u < g.cols; ++u) fn(CellIndex{static_cast<Face>(f), u, v}, g.at(u, v));
    }
  }

 private:
  // In-plane (first, second) axes and the fixed axis of each face.
  static std::array<int, 3> face_axes(Face f);

  Vec3 s_ = Vec3::Zero();
  double resolution_ = kDefaultResolution;
  std::array<FaceGrid, kFaceCount> faces_{};
};

// ---------------------------------------------------------------------------
// Object estimates and the global map.

// Per-frame evidence retained for the joint pose optimization.
struct FrameRecord {
  int step = 0;
  CameraPose camera;
  CameraIntrinsics intrinsics;
  Rect bbox_2d;
  Vec2 bbox_center = Vec2::Zero();
  std::vector<ImageLine> lines;
  std::size_t point_begin = 0;
  std::size_t point_end = 0;
};

struct ObjectEstimate {
  int id = 0;
  std::string label;
  ObjectPose pose;
  std::vector<Vec3> points;
  SurfaceGridSet grids;
  std::vector<double> volume_history;  // normalized by the first recorded volume
  bool fully_explored = false;
  std::vector<FrameRecord> frames;
  int ignored_points = 0;  // points too far from the cube to grid
  double reference_volume = 0.0;
  // Ground-truth ids of contributing detections; read only by evaluation.
  std::map<int, int> gt_votes;

  int majority_gt_id() const;
  void record_volume();
};

struct GlobalObjectMap {
  std::vector<ObjectEstimate> estimates;
  PlaneModel desk_plane;
  int next_id = 0;

  ObjectEstimate* find(int id);
  const ObjectEstimate* find(int id) const;
};

// ---------------------------------------------------------------------------
// Map operations.

struct AssociationVerdict {
  std::optional<int> matched_id;  // nullopt: new object

  bool is_new() const { return !matched_id.has_value(); }
};

struct AssociationOptions {
  bool oracle = false;
  double min_gate = 0.10;  // meters
};

Vec3 detection_centroid(const Detection& det);

// Label-equal estimates within max(|s|, min_gate) of the detection's point
// centroid; nearest wins. Oracle mode matches on ground-truth ids.
std::vector<AssociationVerdict> associate(const GlobalObjectMap& map, const Observation& obs,
                                          const AssociationOptions& options = {});

struct IntegrationReport {
  std::vector<int> touched_ids;
  std::vector<int> created_ids;
};

// Appends detection evidence to the map and updates the grids of matched
// objects. New objects need at least kMinNewObjectPoints points; they start
// from a tight axis-aligned box with all-unknown grids.
inline constexpr std::size_t kMinNewObjectPoints = 10;
IntegrationReport integrate(GlobalObjectMap& map, const Observation& obs,
                            std::span<const AssociationVerdict> verdicts, int step = 0);

struct GridUpdateStats {
  int occupied_hits = 0;
  int newly_free = 0;
  int ignored = 0;
};

// Marks cells hit by `points` occupied and unhit cells the camera can see
// free. `occluders` are the other cubes that may hide parts of `est`.
GridUpdateStats update_surface_grids(ObjectEstimate& est, std::span<const Vec3> points, const CameraPose& cam,
                                     const CameraIntrinsics& intr, std::span<const ObjectPose> occluders = {});

// Rebuilds the grids for the current pose by replaying stored points and
// frame visibility.
void rebuild_surface_grids(ObjectEstimate& est, std::span<const ObjectPose> occluders = {});

// True when `before` and `after` differ by more than one grid cell in
// position, extent, or corner displacement.
bool pose_moved_beyond_cell(const ObjectPose& before, const ObjectPose& after, double resolution);

double binary_entropy(double p);

struct Completeness {
  double h_obj = 0.0;   // bits
  double h_norm = 0.0;  // bits per cell
  double r_o = 0.0;     // occupied ratio
};

Completeness completeness(const SurfaceGridSet& grids);
inline Completeness completeness(const ObjectEstimate& est) { return completeness(est.grids); }

// Drops points beyond 3 median absolute deviations of the distance to the
// centroid. Clouds under 10 points are returned unchanged.
std::vector<Vec3> statistical_filter(std::span<const Vec3> points, double k = 3.0);

struct SliceFilterResult {
  std::vector<Vec3> points;
  std::array<int, 3> dropped_low{};
  std::array<int, 3> dropped_high{};
  std::vector<std::string> warnings;
};

// Per-axis slice counts of occupied resolution-sized cells; edge slices are
// peeled inward while their count is below a third of the next occupied
// slice. An axis whose peeling would remove more than half of the points is
// left alone.
// Number of slices peeled from the low and high ends of `counts`. Empty
// slices are skipped over and compared against the next occupied one.
std::pair<int, int> slice_drop_counts(std::span<const int> counts);
SliceFilterResult slice_filter(std::span<const Vec3> points_world, const ObjectPose& pose,
                               double resolution = SurfaceGridSet::kDefaultResolution);

// ---------------------------------------------------------------------------
// Export.

std::string export_map_json(const GlobalObjectMap& map);
std::string dump_grids_ascii(const ObjectEstimate& est);

}  // namespace activemap
