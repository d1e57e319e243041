#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "activemap/geometry.hpp"
#include "activemap/objmap.hpp"
#include "activemap/observation.hpp"
#include "activemap/scene.hpp"

namespace activemap {

struct NoiseModel {
  double depth_sigma = 0.0;         // meters, along the viewing ray
  double bbox_jitter_sigma = 0.0;   // pixels, per bbox edge
  double line_sigma = 0.0;          // radians
  double dropout_prob = 0.0;        // per detection
  double desk_contamination = 0.0;  // desk points leaked into a detection, as a fraction of its size

  static NoiseModel off() { return {}; }
  static NoiseModel low();
  static NoiseModel medium();

  void validate() const;
};

struct RenderOptions {
  double sample_area = 0.5e-4;  // m^2 of surface per object sample
  double desk_spacing = 0.02;   // m between desk samples
  double near_clip = 0.05;
  std::size_t min_detection_points = 5;
  double contamination_band = 0.03;  // m around the footprint that may leak
};

// Renders the scene from `cam`. Samples lie only on visible, unoccluded
// surfaces; equal seeds give identical observations.
Observation render(const DeskScene& scene, const CameraPose& cam, const CameraIntrinsics& intr,
                   const NoiseModel& noise, std::uint64_t seed, const RenderOptions& options = {});

// ---------------------------------------------------------------------------
// Visibility predicted from estimated cubes.

struct VisibleObject {
  int id = 0;
  std::vector<CellIndex> cells;
  Rect bbox;
  double r_iou = 0.0;
};

struct VisibleSet {
  std::vector<VisibleObject> objects;

  const VisibleObject* find(int id) const;
};

// Cells of `target` whose outward normal faces the camera, whose center is in
// the image, and which no occluder cube hides.
std::vector<CellIndex> visible_cells(const ObjectPose& target, const SurfaceGridSet& grids,
                                     std::span<const ObjectPose> occluders, const CameraPose& cam,
                                     const CameraIntrinsics& intr);

// Pixel bbox of a cube's projected corners, clipped to the image. Empty when
// any corner is behind the camera and nothing remains in front.
Rect projected_bbox(const ObjectPose& box, const CameraPose& cam, const CameraIntrinsics& intr);

VisibleSet predicted_visibility(const GlobalObjectMap& map, const CameraPose& cam, const CameraIntrinsics& intr);

// ASCII PLY with one vertex per point.
void write_ply(const std::filesystem::path& path, std::span<const Vec3> points);
std::vector<Vec3> observation_points(const Observation& obs);

}  // namespace activemap
