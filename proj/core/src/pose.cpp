#include "activemap/pose.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>

#include <Eigen/Eigenvalues>
#include <fmt/format.h>

namespace activemap {

// ---------------------------------------------------------------------------
// Desk plane

namespace {

struct PlaneFit {
  Vec3 n;
  double d;
  Vec3 eigenvalues;  // ascending
};

PlaneFit least_squares_plane(std::span<const Vec3> pts) {
  Vec3 c = Vec3::Zero();
  for (const Vec3& p : pts) c += p;
  c /= static_cast<double>(pts.size());
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : pts) cov += (p - c) * (p - c).transpose();
  Eigen::SelfAdjointEigenSolver<Mat3> es(cov);
  const Vec3 n = es.eigenvectors().col(0).normalized();
  return {n, n.dot(c), es.eigenvalues()};
}

}  // namespace

PlaneModel fit_desk_plane(std::span<const Vec3> points, std::uint64_t seed, int iters, double inlier_tol,
                          const Vec3& viewpoint) {
  if (points.size() < 3) throw FitError("plane fit needs at least 3 points");
  const PlaneFit all = least_squares_plane(points);
  const double spread = std::max(all.eigenvalues[2], 1e-300);
  if (all.eigenvalues[1] <= 1e-12 * spread) throw FitError("plane fit input is degenerate (collinear points)");

  std::mt19937_64 rng(mix_seed(seed, 0x91a4e));
  std::uniform_int_distribution<std::size_t> pick(0, points.size() - 1);
  int best_count = -1;
  Vec3 best_n = Vec3::UnitZ();
  double best_d = 0.0;
  for (int it = 0; it < iters; ++it) {
    const std::size_t i = pick(rng), j = pick(rng), k = pick(rng);
    if (i == j || j == k || i == k) continue;
    Vec3 n = (points[j] - points[i]).cross(points[k] - points[i]);
    const double len = n.norm();
    if (len < 1e-12) continue;
    n /= len;
    const double d = n.dot(points[i]);
    int count = 0;
    for (const Vec3& p : points)
      if (std::abs(n.dot(p) - d) <= inlier_tol) ++count;
    if (count > best_count) {
      best_count = count;
      best_n = n;
      best_d = d;
    }
  }
  if (best_count < 3) throw FitError("RANSAC found no plane with at least 3 inliers");

  std::vector<Vec3> inliers;
  inliers.reserve(static_cast<std::size_t>(best_count));
  for (const Vec3& p : points)
    if (std::abs(best_n.dot(p) - best_d) <= inlier_tol) inliers.push_back(p);
  const PlaneFit refined = least_squares_plane(inliers);

  PlaneModel plane;
  plane.n = refined.n;
  plane.d = refined.d;
  if (plane.n.dot(viewpoint) - plane.d < 0.0) {
    plane.n = -plane.n;
    plane.d = -plane.d;
  }
  plane.inliers = 0;
  for (const Vec3& p : points)
    if (std::abs(plane.signed_distance(p)) <= inlier_tol) ++plane.inliers;
  plane.theta_n = std::asin(std::clamp(plane.n.z(), -1.0, 1.0));
  return plane;
}

// ---------------------------------------------------------------------------
// Initialization

namespace {

// Orthonormal in-plane axes for yaw measurements.
std::pair<Vec3, Vec3> plane_axes(const Vec3& n) {
  Vec3 ex = Vec3::UnitX() - n.x() * n;
  if (ex.norm() < 1e-6) ex = Vec3::UnitY() - n.y() * n;
  ex.normalize();
  return {ex, n.cross(ex)};
}

}  // namespace

std::optional<double> line_world_yaw(const ImageLine& line, const CameraPose& cam, const CameraIntrinsics& intr,
                                     const Vec3& n) {
  const Vec3 m = pixel_ray(intr, cam, line.p0).cross(pixel_ray(intr, cam, line.p1));
  const Vec3 dir = m.cross(n);
  if (m.norm() < 1e-12 || dir.norm() < 1e-9 * m.norm()) return std::nullopt;
  const auto [ex, ey] = plane_axes(n);
  return std::atan2(dir.dot(ey), dir.dot(ex));
}

std::optional<double> dominant_yaw(std::span<const double> yaws) {
  if (yaws.empty()) return std::nullopt;
  constexpr int kBins = 18;  // 5 degrees each over [-45, 45)
  const double width = 0.5 * kPi / kBins;
  std::array<int, kBins> hist{};
  for (double y : yaws) {
    const int b = std::clamp(static_cast<int>(std::floor((wrap_quarter(y) + 0.25 * kPi) / width)), 0, kBins - 1);
    ++hist[b];
  }
  int best = 0, best_votes = -1;
  for (int b = 0; b < kBins; ++b) {
    const int votes = hist[(b + kBins - 1) % kBins] + hist[b] + hist[(b + 1) % kBins];
    if (votes > best_votes) {
      best_votes = votes;
      best = b;
    }
  }
  // Circular mean of 4*yaw over lines within 1.5 bins of the winner.
  const double center = -0.25 * kPi + (best + 0.5) * width;
  double sx = 0.0, sy = 0.0;
  for (double y : yaws) {
    if (std::abs(wrap_quarter(y - center)) > 1.5 * width) continue;
    sx += std::cos(4.0 * y);
    sy += std::sin(4.0 * y);
  }
  return wrap_quarter(0.25 * std::atan2(sy, sx));
}

ObjectPose init_pose(std::span<const Vec3> points, const PlaneModel& plane, std::span<const double> line_yaws) {
  if (points.size() < 10) throw InitError("cube initialization needs at least 10 points");
  const double yaw = dominant_yaw(line_yaws).value_or(0.0);
  const Vec3& n = plane.n;
  const auto [ex, ey] = plane_axes(n);
  const Vec3 x = (std::cos(yaw) * ex + std::sin(yaw) * ey).normalized();
  Mat3 r;
  r.col(0) = x;
  r.col(1) = n.cross(x);
  r.col(2) = n;

  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 hi = -lo;
  for (const Vec3& p : points) {
    const Vec3 q = r.transpose() * p;
    lo = lo.cwiseMin(q);
    hi = hi.cwiseMax(q);
  }
  ObjectPose pose;
  pose.theta = rpy_from_rotation(r);
  pose.s = (0.5 * (hi - lo)).cwiseMax(ObjectPose::kMinHalfExtent);
  pose.t = r * (0.5 * (lo + hi));
  const Vec3 bottom = pose.t - pose.s.z() * n;
  pose.t -= plane.signed_distance(bottom) * n;
  pose.canonicalize();
  return pose;
}

// ---------------------------------------------------------------------------
// Residuals

ObjectEvidence gather_evidence(const ObjectEstimate& est, const Vec3& plane_normal, std::vector<Vec3> points,
                               double border_px) {
  ObjectEvidence ev;
  ev.points = std::move(points);
  for (const FrameRecord& f : est.frames) {
    FrameEvidence fe;
    fe.camera = f.camera;
    fe.intrinsics = f.intrinsics;
    fe.bbox_center = f.bbox_center;
    for (const ImageLine& l : f.lines)
      if (auto y = line_world_yaw(l, f.camera, f.intrinsics, plane_normal)) fe.line_yaws.push_back(*y);
    const bool truncated = f.bbox_2d.xmin <= border_px || f.bbox_2d.ymin <= border_px ||
                           f.bbox_2d.xmax >= f.intrinsics.width - border_px ||
                           f.bbox_2d.ymax >= f.intrinsics.height - border_px;
    if (truncated) {
      // Keep the lines; mark the box unusable with a NaN center.
      fe.bbox_center = Vec2::Constant(std::numeric_limits<double>::quiet_NaN());
    }
    ev.frames.push_back(std::move(fe));
  }
  return ev;
}

double scale_residual(const Vec3& q, const Vec3& s) {
  double r = 0.0;
  for (int a = 0; a < 3; ++a) r += std::max(std::abs(q[a]) - s[a], 0.0);
  return r;
}

double yaw_residual(double yaw, double line_yaw) { return wrap_quarter(yaw - line_yaw); }

std::array<double, 2> roll_pitch_residual(const Vec3& rpy, const Vec3& n) {
  const Mat3 r = rotation_from_rpy(rpy);
  const double cz = std::clamp(r.col(2).dot(n), -1.0, 1.0);
  const double cx = std::clamp(r.col(0).dot(n), -1.0, 1.0);
  return {std::acos(cz), std::acos(cx) - 0.5 * kPi};
}

ResidualBundle residuals(const ObjectPose& pose, const ObjectEvidence& evidence, const PlaneModel& plane,
                         const ResidualWeights& weights) {
  ResidualBundle b;
  b.weights = weights;
  for (const FrameEvidence& f : evidence.frames) {
    for (double l : f.line_yaws) b.r_yaw.push_back(yaw_residual(pose.yaw(), l));
    if (!f.bbox_center.allFinite()) continue;
    const auto px = project(f.intrinsics, f.camera, pose.t);
    if (!px) {
      ++b.skipped_frames;
      continue;
    }
    b.r_pos.push_back((*px - f.bbox_center).norm());
  }
  const Mat3 r_t = pose.rotation().transpose();
  for (const Vec3& p : evidence.points) b.r_scale += scale_residual(r_t * (p - pose.t), pose.s);
  b.r_rp = roll_pitch_residual(pose.theta, plane.n);
  return b;
}

PoseProblem::PoseProblem(const ObjectEvidence& evidence, const PlaneModel& plane, const ResidualWeights& weights)
    : evidence_(evidence), plane_(plane), w_(weights) {
  scale_begin_ = 2 * static_cast<Eigen::Index>(evidence.frames.size());
  yaw_begin_ = scale_begin_ + 3 * static_cast<Eigen::Index>(evidence.points.size());
  Eigen::Index lines = 0;
  for (const auto& f : evidence.frames) lines += static_cast<Eigen::Index>(f.line_yaws.size());
  rp_begin_ = yaw_begin_ + lines;
  rows_ = rp_begin_ + 2;
}

PoseProblem::Params PoseProblem::pack(const ObjectPose& pose) {
  Params x;
  x << pose.t, pose.theta, pose.s;
  return x;
}

ObjectPose PoseProblem::unpack(const Params& x) {
  ObjectPose pose;
  pose.t = x.segment<3>(0);
  pose.theta = x.segment<3>(3);
  pose.s = x.segment<3>(6);
  return pose;
}

Eigen::VectorXd PoseProblem::evaluate(const Params& x) const {
  Eigen::VectorXd r = Eigen::VectorXd::Zero(rows_);
  const Vec3 t = x.segment<3>(0);
  const Vec3 rpy = x.segment<3>(3);
  const Vec3 s = x.segment<3>(6);

  Eigen::Index row = 0, line_row = yaw_begin_;
  for (const FrameEvidence& f : evidence_.frames) {
    if (f.bbox_center.allFinite()) {
      if (const auto px = project(f.intrinsics, f.camera, t)) r.segment<2>(row) = w_.position * (*px - f.bbox_center);
    }
    row += 2;
    for (double l : f.line_yaws) r[line_row++] = w_.yaw * yaw_residual(rpy.z(), l);
  }
  const Mat3 r_t = rotation_from_rpy(rpy).transpose();
  row = scale_begin_;
  for (const Vec3& p : evidence_.points) {
    const Vec3 q = r_t * (p - t);
    for (int a = 0; a < 3; ++a) r[row++] = w_.scale * std::max(std::abs(q[a]) - s[a], 0.0);
  }
  const auto rp = roll_pitch_residual(rpy, plane_.n);
  r[rp_begin_] = w_.roll_pitch * rp[0];
  r[rp_begin_ + 1] = w_.roll_pitch * rp[1];
  return r;
}

Eigen::MatrixXd PoseProblem::jacobian_analytic(const Params& x) const {
  Eigen::MatrixXd j = Eigen::MatrixXd::Zero(rows_, 9);
  const Vec3 t = x.segment<3>(0);
  const Vec3 rpy = x.segment<3>(3);
  const Vec3 s = x.segment<3>(6);

  Eigen::Index row = 0, line_row = yaw_begin_;
  for (const FrameEvidence& f : evidence_.frames) {
    if (f.bbox_center.allFinite()) {
      const Vec3 pc = f.camera.to_camera(t);
      if (pc.z() > 0.0) {
        Eigen::Matrix<double, 2, 3> dproj;
        const double iz = 1.0 / pc.z();
        dproj << f.intrinsics.fx * iz, 0.0, -f.intrinsics.fx * pc.x() * iz * iz, 0.0, f.intrinsics.fy * iz,
            -f.intrinsics.fy * pc.y() * iz * iz;
        j.block<2, 3>(row, 0) = w_.position * dproj * f.camera.rotation.transpose();
      }
    }
    row += 2;
    for (std::size_t k = 0; k < f.line_yaws.size(); ++k) j(line_row++, 5) = w_.yaw;
  }

  const Mat3 rot = rotation_from_rpy(rpy);
  const std::array<Mat3, 3> drot{rotation_derivative(rpy, 0), rotation_derivative(rpy, 1),
                                 rotation_derivative(rpy, 2)};
  row = scale_begin_;
  for (const Vec3& p : evidence_.points) {
    const Vec3 d = p - t;
    const Vec3 q = rot.transpose() * d;
    for (int a = 0; a < 3; ++a, ++row) {
      if (std::abs(q[a]) - s[a] <= 0.0) continue;
      const double sign = q[a] >= 0.0 ? 1.0 : -1.0;
      j.block<1, 3>(row, 0) = -w_.scale * sign * rot.col(a).transpose();
      for (int k = 0; k < 3; ++k) j(row, 3 + k) = w_.scale * sign * drot[k].col(a).dot(d);
      j(row, 6 + a) = -w_.scale;
    }
  }

  const Vec3& n = plane_.n;
  const double cz = std::clamp(rot.col(2).dot(n), -1.0, 1.0);
  const double cx = std::clamp(rot.col(0).dot(n), -1.0, 1.0);
  const double sz = std::sqrt(std::max(0.0, 1.0 - cz * cz));
  const double sx = std::sqrt(std::max(0.0, 1.0 - cx * cx));
  for (int k = 0; k < 3; ++k) {
    if (sz > 1e-12) j(rp_begin_, 3 + k) = -w_.roll_pitch * drot[k].col(2).dot(n) / sz;
    if (sx > 1e-12) j(rp_begin_ + 1, 3 + k) = -w_.roll_pitch * drot[k].col(0).dot(n) / sx;
  }
  return j;
}

Eigen::MatrixXd PoseProblem::jacobian_numeric(const Params& x, double h) const {
  Eigen::MatrixXd j(rows_, 9);
  for (int k = 0; k < 9; ++k) {
    Params xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    j.col(k) = (evaluate(xp) - evaluate(xm)) / (2.0 * h);
  }
  return j;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

SolverResult optimize_pose(const ObjectPose& init, const ObjectEvidence& evidence, const PlaneModel& plane,
                           const SolverOptions& options) {
  if (evidence.frames.empty()) throw SolverError("pose optimization needs at least one observation");
  const PoseProblem problem(evidence, plane, options.weights);

  auto clean = [](PoseProblem::Params x) {
    ObjectPose p = PoseProblem::unpack(x);
    p.canonicalize();
    return PoseProblem::pack(p);
  };

  PoseProblem::Params x = clean(PoseProblem::pack(init));
  Eigen::VectorXd r = problem.evaluate(x);
  double cost = 0.5 * r.squaredNorm();
  if (!std::isfinite(cost)) throw SolverError("initial cost is not finite");

  SolverResult result;
  result.initial_cost = cost;
  result.cost_trace.push_back(cost);
  double lambda = options.initial_damping;

  for (int it = 0; it < options.max_iters; ++it) {
    if (cost <= 1e-24) {
      result.converged = true;
      break;
    }
    const Eigen::MatrixXd j = options.jacobian == JacobianMode::analytic ? problem.jacobian_analytic(x)
                                                                          : problem.jacobian_numeric(x, options.numeric_step);
    const Eigen::Matrix<double, 9, 9> h = j.transpose() * j;
    const PoseProblem::Params g = j.transpose() * r;
    const PoseProblem::Params diag = h.diagonal().cwiseMax(1e-9);

    bool accepted = false;
    bool stop = false;
    while (!accepted && !stop) {
      Eigen::Matrix<double, 9, 9> a = h;
      a.diagonal() += lambda * diag;
      const PoseProblem::Params step = a.ldlt().solve(-g);
      if (!step.allFinite()) throw SolverError("non-finite Levenberg-Marquardt step");
      if (step.norm() < options.step_tolerance * (x.norm() + options.step_tolerance)) {
        result.converged = true;
        stop = true;
        break;
      }
      const PoseProblem::Params x_new = clean(x + step);
      const Eigen::VectorXd r_new = problem.evaluate(x_new);
      const double cost_new = 0.5 * r_new.squaredNorm();
      if (!std::isfinite(cost_new)) throw SolverError("cost became non-finite");
      if (cost_new < cost) {
        const double rel = (cost - cost_new) / cost;
        x = x_new;
        r = r_new;
        cost = cost_new;
        lambda = std::max(lambda / 10.0, 1e-12);
        accepted = true;
        result.cost_trace.push_back(cost);
        if (rel < options.cost_tolerance) {
          result.converged = true;
          stop = true;
        }
      } else {
        lambda *= 10.0;
        if (lambda > 1e12) {
          // No descent direction left at this linearization: a local minimum.
          result.converged = true;
          stop = true;
        }
      }
    }
    if (accepted) ++result.iterations;
    if (stop) break;
  }

  result.pose = PoseProblem::unpack(x);
  result.final_cost = cost;
  return result;
}

void write_cost_trace_csv(const std::filesystem::path& path, const SolverResult& result) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "iteration,cost\n";
  for (std::size_t i = 0; i < result.cost_trace.size(); ++i) out << fmt::format("{},{:.17g}\n", i, result.cost_trace[i]);
}

}  // namespace activemap
