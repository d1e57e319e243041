#pragma once

#include <string>
#include <vector>

#include "activemap/geometry.hpp"

namespace activemap {

// A detected image line segment; theta is its image direction in radians.
struct ImageLine {
  Vec2 p0 = Vec2::Zero();
  Vec2 p1 = Vec2::Zero();
  double theta = 0.0;
};

struct Detection {
  int object_id = -1;  // ground truth; only read in oracle mode or for evaluation
  std::string label;
  Rect bbox_2d;
  Vec2 bbox_center = Vec2::Zero();
  std::vector<Vec3> points_world;
  std::vector<ImageLine> lines;
};

// One virtual camera frame.
struct Observation {
  CameraPose camera;
  CameraIntrinsics intrinsics;
  std::vector<Detection> detections;
  std::vector<Vec3> desk_points;
};

}  // namespace activemap
