#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace activemap {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

inline constexpr double kPi = 3.14159265358979323846;

inline constexpr double deg2rad(double deg) { return deg * kPi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / kPi; }

// Maps an angle to (-pi, pi].
double normalize_angle(double a);

// Maps an angle to [-pi/4, pi/4), i.e. modulo the 90 degree symmetry of a
// rectangle's edge directions.
double wrap_quarter(double a);

// ---------------------------------------------------------------------------
// Errors. Every failure the library reports is one of these.

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class ValidationError : public Error {
 public:
  ValidationError(int object_id, const std::string& what)
      : Error("object " + std::to_string(object_id) + ": " + what), object_id_(object_id) {}
  int object_id() const { return object_id_; }

 private:
  int object_id_;
};

class PlacementError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class FitError : public Error {
 public:
  using Error::Error;
};

class InitError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// 9-DoF cuboid pose: translation, roll/pitch/yaw, half extents.

Mat3 rotation_from_rpy(const Vec3& rpy);

// Partial derivative of rotation_from_rpy with respect to rpy[axis].
Mat3 rotation_derivative(const Vec3& rpy, int axis);

// Inverse of rotation_from_rpy; yaw and roll in (-pi, pi], pitch in [-pi/2, pi/2].
Vec3 rpy_from_rotation(const Mat3& r);

struct ObjectPose {
  static constexpr double kMinHalfExtent = 1e-3;

  Vec3 t = Vec3::Zero();
  Vec3 theta = Vec3::Zero();  // roll, pitch, yaw
  Vec3 s = Vec3::Constant(0.05);

  double roll() const { return theta.x(); }
  double pitch() const { return theta.y(); }
  double yaw() const { return theta.z(); }

  Mat3 rotation() const { return rotation_from_rpy(theta); }
  Vec3 to_object(const Vec3& p_world) const { return rotation().transpose() * (p_world - t); }
  Vec3 to_world(const Vec3& p_object) const { return rotation() * p_object + t; }
  double volume() const { return 8.0 * s.x() * s.y() * s.z(); }

  // Floors the half extents and normalizes the angles.
  void canonicalize();

  // Eight corners in world coordinates.
  std::array<Vec3, 8> corners() const;
};

// ---------------------------------------------------------------------------
// Pinhole camera. CameraPose is world-from-camera; the camera looks along +z
// with +x right and +y down in the image.

struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;

  void validate() const;
};

struct CameraPose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 position() const { return translation; }
  Vec3 forward() const { return rotation.col(2); }
  Vec3 to_camera(const Vec3& p_world) const { return rotation.transpose() * (p_world - translation); }
  Vec3 to_world(const Vec3& p_camera) const { return rotation * p_camera + translation; }

  // Camera at `eye` looking at `target`; image "up" follows world +z where
  // possible, otherwise world +y.
  static CameraPose look_at(const Vec3& eye, const Vec3& target);

  void validate() const;
};

// Projects a world point; nullopt when the point is at or behind the camera.
std::optional<Vec2> project(const CameraIntrinsics& intr, const CameraPose& cam, const Vec3& p_world);

// World point at camera-frame depth `depth` along the ray through `pixel`.
Vec3 unproject(const CameraIntrinsics& intr, const CameraPose& cam, const Vec2& pixel, double depth);

// Unit world-frame direction of the ray through `pixel`.
Vec3 pixel_ray(const CameraIntrinsics& intr, const CameraPose& cam, const Vec2& pixel);

// ---------------------------------------------------------------------------
// Axis-aligned pixel rectangle.

struct Rect {
  double xmin = 0.0;
  double ymin = 0.0;
  double xmax = 0.0;
  double ymax = 0.0;

  double width() const { return xmax - xmin; }
  double height() const { return ymax - ymin; }
  double area() const { return width() > 0.0 && height() > 0.0 ? width() * height() : 0.0; }
  Vec2 center() const { return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax)}; }
  bool contains(const Vec2& p) const { return p.x() >= xmin && p.x() <= xmax && p.y() >= ymin && p.y() <= ymax; }
  bool empty() const { return !(xmax > xmin && ymax > ymin); }
  void expand(const Vec2& p);
  Rect clipped(double w, double h) const;

  static Rect inverted();
};

double rect_iou(const Rect& a, const Rect& b);

// ---------------------------------------------------------------------------
// Convex polygons in the plane (counter-clockwise).

using Polygon = std::vector<Vec2>;

double polygon_area(const Polygon& poly);
Polygon clip_convex(const Polygon& subject, const Polygon& clip);
double convex_intersection_area(const Polygon& a, const Polygon& b);
// Smallest distance between two convex polygons; 0 when they intersect.
double convex_distance(const Polygon& a, const Polygon& b);

// Top-view footprint rectangle of an upright cuboid (roll/pitch ignored).
Polygon footprint(const Vec3& center, double yaw, double half_x, double half_y);

// ---------------------------------------------------------------------------
// Ray casting against oriented boxes and upright cylinders. Both return the
// entry distance along a unit-direction ray, or nullopt.

std::optional<double> ray_box(const Vec3& origin, const Vec3& dir, const ObjectPose& box);
std::optional<double> ray_cylinder(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius,
                                   double half_height);

// ---------------------------------------------------------------------------
// Deterministic seeding helpers.

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

}  // namespace activemap
