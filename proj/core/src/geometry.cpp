#include "activemap/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace activemap {

double normalize_angle(double a) {
  a = std::fmod(a, 2.0 * kPi);
  if (a <= -kPi) a += 2.0 * kPi;
  if (a > kPi) a -= 2.0 * kPi;
  return a;
}

double wrap_quarter(double a) {
  const double q = 0.5 * kPi;
  double r = std::fmod(a + 0.25 * kPi, q);
  if (r < 0.0) r += q;
  return r - 0.25 * kPi;
}

namespace {

Mat3 rot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 1, 0, 0, 0, c, -s, 0, s, c;
  return r;
}
Mat3 rot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, 0, s, 0, 1, 0, -s, 0, c;
  return r;
}
Mat3 rot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << c, -s, 0, s, c, 0, 0, 0, 1;
  return r;
}
Mat3 drot_x(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << 0, 0, 0, 0, -s, -c, 0, c, -s;
  return r;
}
Mat3 drot_y(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, 0, c, 0, 0, 0, -c, 0, -s;
  return r;
}
Mat3 drot_z(double a) {
  const double c = std::cos(a), s = std::sin(a);
  Mat3 r;
  r << -s, -c, 0, c, -s, 0, 0, 0, 0;
  return r;
}

double cross2(const Vec2& a, const Vec2& b) { return a.x() * b.y() - a.y() * b.x(); }

double point_segment_distance(const Vec2& p, const Vec2& a, const Vec2& b) {
  const Vec2 ab = b - a;
  const double len2 = ab.squaredNorm();
  double u = len2 > 0.0 ? (p - a).dot(ab) / len2 : 0.0;
  u = std::clamp(u, 0.0, 1.0);
  return (a + u * ab - p).norm();
}

bool inside_convex(const Polygon& poly, const Vec2& p) {
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    if (cross2(b - a, p - a) < 0.0) return false;
  }
  return true;
}

}  // namespace

Mat3 rotation_from_rpy(const Vec3& rpy) { return rot_z(rpy.z()) * rot_y(rpy.y()) * rot_x(rpy.x()); }

Mat3 rotation_derivative(const Vec3& rpy, int axis) {
  switch (axis) {
    case 0:
      return rot_z(rpy.z()) * rot_y(rpy.y()) * drot_x(rpy.x());
    case 1:
      return rot_z(rpy.z()) * drot_y(rpy.y()) * rot_x(rpy.x());
    default:
      return drot_z(rpy.z()) * rot_y(rpy.y()) * rot_x(rpy.x());
  }
}

Vec3 rpy_from_rotation(const Mat3& r) {
  const double pitch = std::asin(std::clamp(-r(2, 0), -1.0, 1.0));
  const double roll = std::atan2(r(2, 1), r(2, 2));
  const double yaw = std::atan2(r(1, 0), r(0, 0));
  return {normalize_angle(roll), pitch, normalize_angle(yaw)};
}

void ObjectPose::canonicalize() {
  for (int i = 0; i < 3; ++i) {
    s[i] = std::max(s[i], kMinHalfExtent);
    theta[i] = normalize_angle(theta[i]);
  }
}

std::array<Vec3, 8> ObjectPose::corners() const {
  std::array<Vec3, 8> out;
  const Mat3 r = rotation();
  for (int i = 0; i < 8; ++i) {
    const Vec3 local((i & 1) ? s.x() : -s.x(), (i & 2) ? s.y() : -s.y(), (i & 4) ? s.z() : -s.z());
    out[i] = r * local + t;
  }
  return out;
}

void CameraIntrinsics::validate() const {
  if (!(fx > 0 && fy > 0 && cx > 0 && cy > 0 && width > 0 && height > 0))
    throw DomainError("camera intrinsics must be positive");
  if (cx >= width || cy >= height) throw DomainError("principal point outside the image");
}

CameraPose CameraPose::look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  Vec3 up(0, 0, 1);
  if (z.cross(up).norm() < 1e-6) up = Vec3(0, 1, 0);
  const Vec3 x = z.cross(up).normalized();
  const Vec3 y = z.cross(x);
  CameraPose pose;
  pose.rotation.col(0) = x;
  pose.rotation.col(1) = y;
  pose.rotation.col(2) = z;
  pose.translation = eye;
  return pose;
}

void CameraPose::validate() const {
  if (std::abs(rotation.determinant() - 1.0) > 1e-9) throw DomainError("camera rotation is not a proper rotation");
  if ((rotation.transpose() * rotation - Mat3::Identity()).norm() > 1e-9)
    throw DomainError("camera rotation is not orthonormal");
}

std::optional<Vec2> project(const CameraIntrinsics& intr, const CameraPose& cam, const Vec3& p_world) {
  const Vec3 pc = cam.to_camera(p_world);
  if (pc.z() <= 0.0) return std::nullopt;
  return Vec2(intr.fx * pc.x() / pc.z() + intr.cx, intr.fy * pc.y() / pc.z() + intr.cy);
}

Vec3 unproject(const CameraIntrinsics& intr, const CameraPose& cam, const Vec2& pixel, double depth) {
  const Vec3 pc((pixel.x() - intr.cx) / intr.fx * depth, (pixel.y() - intr.cy) / intr.fy * depth, depth);
  return cam.to_world(pc);
}

Vec3 pixel_ray(const CameraIntrinsics& intr, const CameraPose& cam, const Vec2& pixel) {
  const Vec3 dc((pixel.x() - intr.cx) / intr.fx, (pixel.y() - intr.cy) / intr.fy, 1.0);
  return (cam.rotation * dc).normalized();
}

void Rect::expand(const Vec2& p) {
  xmin = std::min(xmin, p.x());
  ymin = std::min(ymin, p.y());
  xmax = std::max(xmax, p.x());
  ymax = std::max(ymax, p.y());
}

Rect Rect::clipped(double w, double h) const {
  return {std::clamp(xmin, 0.0, w), std::clamp(ymin, 0.0, h), std::clamp(xmax, 0.0, w), std::clamp(ymax, 0.0, h)};
}

Rect Rect::inverted() {
  constexpr double inf = std::numeric_limits<double>::infinity();
  return {inf, inf, -inf, -inf};
}

double rect_iou(const Rect& a, const Rect& b) {
  const Rect inter{std::max(a.xmin, b.xmin), std::max(a.ymin, b.ymin), std::min(a.xmax, b.xmax),
                   std::min(a.ymax, b.ymax)};
  const double i = inter.area();
  const double u = a.area() + b.area() - i;
  return u > 0.0 ? i / u : 0.0;
}

double polygon_area(const Polygon& poly) {
  double a = 0.0;
  for (std::size_t i = 0; i < poly.size(); ++i) a += cross2(poly[i], poly[(i + 1) % poly.size()]);
  return 0.5 * a;
}

Polygon clip_convex(const Polygon& subject, const Polygon& clip) {
  Polygon out = subject;
  for (std::size_t i = 0; i < clip.size() && !out.empty(); ++i) {
    const Vec2& a = clip[i];
    const Vec2& b = clip[(i + 1) % clip.size()];
    const Vec2 edge = b - a;
    Polygon in = std::move(out);
    out.clear();
    for (std::size_t j = 0; j < in.size(); ++j) {
      const Vec2& p = in[j];
      const Vec2& q = in[(j + 1) % in.size()];
      const double dp = cross2(edge, p - a);
      const double dq = cross2(edge, q - a);
      if (dp >= 0.0) out.push_back(p);
      if ((dp >= 0.0) != (dq >= 0.0)) {
        const double u = dp / (dp - dq);
        out.push_back(p + u * (q - p));
      }
    }
  }
  return out;
}

double convex_intersection_area(const Polygon& a, const Polygon& b) {
  const Polygon inter = clip_convex(a, b);
  return inter.size() < 3 ? 0.0 : std::abs(polygon_area(inter));
}

double convex_distance(const Polygon& a, const Polygon& b) {
  for (const Vec2& p : a)
    if (inside_convex(b, p)) return 0.0;
  for (const Vec2& p : b)
    if (inside_convex(a, p)) return 0.0;
  if (convex_intersection_area(a, b) > 0.0) return 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) {
      best = std::min(best, point_segment_distance(a[i], b[j], b[(j + 1) % b.size()]));
      best = std::min(best, point_segment_distance(b[j], a[i], a[(i + 1) % a.size()]));
    }
  return best;
}

Polygon footprint(const Vec3& center, double yaw, double half_x, double half_y) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const std::array<Vec2, 4> local{Vec2(half_x, half_y), Vec2(-half_x, half_y), Vec2(-half_x, -half_y),
                                  Vec2(half_x, -half_y)};
  Polygon poly;
  poly.reserve(4);
  for (const Vec2& l : local) poly.emplace_back(center.x() + c * l.x() - s * l.y(), center.y() + s * l.x() + c * l.y());
  return poly;
}

std::optional<double> ray_box(const Vec3& origin, const Vec3& dir, const ObjectPose& box) {
  const Mat3 r = box.rotation();
  const Vec3 o = r.transpose() * (origin - box.t);
  const Vec3 d = r.transpose() * dir;
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::abs(d[i]) < 1e-15) {
      if (o[i] < -box.s[i] || o[i] > box.s[i]) return std::nullopt;
      continue;
    }
    double t0 = (-box.s[i] - o[i]) / d[i];
    double t1 = (box.s[i] - o[i]) / d[i];
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) return std::nullopt;
  }
  if (hi < 0.0) return std::nullopt;
  return std::max(lo, 0.0);
}

std::optional<double> ray_cylinder(const Vec3& origin, const Vec3& dir, const Vec3& center, double radius,
                                   double half_height) {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  const Vec2 o(origin.x() - center.x(), origin.y() - center.y());
  const Vec2 d(dir.x(), dir.y());
  const double a = d.squaredNorm();
  if (a < 1e-18) {
    if (o.squaredNorm() > radius * radius) return std::nullopt;
  } else {
    const double b = o.dot(d);
    const double c = o.squaredNorm() - radius * radius;
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    const double sq = std::sqrt(disc);
    lo = (-b - sq) / a;
    hi = (-b + sq) / a;
  }
  const double oz = origin.z() - center.z();
  if (std::abs(dir.z()) < 1e-15) {
    if (oz < -half_height || oz > half_height) return std::nullopt;
  } else {
    double t0 = (-half_height - oz) / dir.z();
    double t1 = (half_height - oz) / dir.z();
    if (t0 > t1) std::swap(t0, t1);
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
  }
  if (lo > hi || hi < 0.0) return std::nullopt;
  return std::max(lo, 0.0);
}

std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace activemap
