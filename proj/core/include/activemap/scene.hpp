#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "activemap/geometry.hpp"

namespace activemap {

enum class Shape { cuboid, cylinder };

std::string to_string(Shape shape);
Shape shape_from_string(const std::string& name);

// A ground-truth object. Cylinders store (radius, radius, half height) in
// pose_gt.s and always carry zero yaw.
struct ScenePrimitive {
  int id = 0;
  std::string label;
  Shape shape = Shape::cuboid;
  ObjectPose pose_gt;
};

struct DeskBounds {
  double xmin = -0.5;
  double ymin = -0.7;
  double xmax = 0.5;
  double ymax = 0.7;

  double size_x() const { return xmax - xmin; }
  double size_y() const { return ymax - ymin; }
  Vec2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
};

struct DeskScene {
  double desk_height = 0.7;
  DeskBounds bounds;
  std::vector<ScenePrimitive> primitives;
  std::uint64_t seed = 0;

  Vec3 desk_center() const { return {bounds.center().x(), bounds.center().y(), desk_height}; }
  const ScenePrimitive* find(int id) const;

  // Throws ValidationError naming the first offending object.
  void validate() const;
};

// Top-view footprint tests. Cylinders are handled as exact discs.
bool footprints_overlap(const ScenePrimitive& a, const ScenePrimitive& b);
double footprint_gap(const ScenePrimitive& a, const ScenePrimitive& b);
// Axis-aligned top-view bounding rectangle (x as columns, y as rows).
Rect footprint_aabb(const ScenePrimitive& p);

enum class Spacing { sparse, clustered, uneven };

std::string to_string(Spacing spacing);
Spacing spacing_from_string(const std::string& name);

struct GeneratorOptions {
  double desk_height = 0.7;
  DeskBounds bounds;
  double min_extent = 0.04;  // full size per axis, meters
  double max_extent = 0.25;
  double cylinder_fraction = 0.25;
  double min_gap = 0.02;  // between sparse objects
  int max_attempts = 2000;
};

// Deterministic in (seed, counts, spacing, options). Throws PlacementError
// when the desk cannot hold the requested objects.
DeskScene generate_scene(std::uint64_t seed, int min_count, int max_count, Spacing spacing,
                         const GeneratorOptions& options = {});

// Scene files are JSON with a `"format": 1` header.
DeskScene parse_scene(const std::string& text);
std::string serialize_scene(const DeskScene& scene);
DeskScene load_scene(const std::filesystem::path& path);
void save_scene(const std::filesystem::path& path, const DeskScene& scene);

}  // namespace activemap
