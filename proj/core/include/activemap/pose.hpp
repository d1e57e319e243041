#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "activemap/geometry.hpp"
#include "activemap/objmap.hpp"
#include "activemap/observation.hpp"

namespace activemap {

// RANSAC plane fit followed by a least-squares refit on the inliers. The
// normal is oriented toward `viewpoint` (e.g. the mean camera position).
PlaneModel fit_desk_plane(std::span<const Vec3> points, std::uint64_t seed, int iters = 200,
                          double inlier_tol = 0.005, const Vec3& viewpoint = Vec3(0.0, 0.0, 1e6));

// Yaw, in the desk frame, of an image line lifted onto any plane with normal
// `n`. The lifted direction does not depend on the plane offset.
std::optional<double> line_world_yaw(const ImageLine& line, const CameraPose& cam, const CameraIntrinsics& intr,
                                     const Vec3& n);

// Mode of the line yaws modulo 90 degrees, refined by a circular mean over
// the winning bin. nullopt for an empty set.
std::optional<double> dominant_yaw(std::span<const double> yaws);

// Tight cube around `points`: z axis along the plane normal, yaw from the
// dominant line direction (0 without lines), bottom face on the plane.
ObjectPose init_pose(std::span<const Vec3> points, const PlaneModel& plane, std::span<const double> line_yaws);

// ---------------------------------------------------------------------------
// Residuals

struct FrameEvidence {
  CameraPose camera;
  CameraIntrinsics intrinsics;
  Vec2 bbox_center = Vec2::Zero();
  std::vector<double> line_yaws;  // desk-frame yaw of each detected line
};

struct ObjectEvidence {
  std::vector<FrameEvidence> frames;
  std::vector<Vec3> points;
};

// Frames whose bbox touches the image border within `border_px` keep their
// lines but contribute no position residual (the box is truncated).
ObjectEvidence gather_evidence(const ObjectEstimate& est, const Vec3& plane_normal, std::vector<Vec3> points,
                               double border_px = 2.0);

struct ResidualWeights {
  double position = 1.0;
  double scale = 100.0;
  double yaw = 10.0;
  double roll_pitch = 10.0;
};

// Unweighted terms, stacked over frames.
struct ResidualBundle {
  std::vector<double> r_pos;  // pixels, per frame in front of the camera
  double r_scale = 0.0;       // meters, summed over points and axes
  std::vector<double> r_yaw;  // radians, per line
  std::array<double, 2> r_rp{};
  int skipped_frames = 0;  // object center behind the camera
  ResidualWeights weights;
};

double scale_residual(const Vec3& q_object, const Vec3& s);
double yaw_residual(double yaw, double line_yaw);
// (angle between cube z axis and n, angle between cube x axis and n - 90 deg)
std::array<double, 2> roll_pitch_residual(const Vec3& rpy, const Vec3& n);

ResidualBundle residuals(const ObjectPose& pose, const ObjectEvidence& evidence, const PlaneModel& plane,
                         const ResidualWeights& weights = {});

// Weighted, stacked least-squares problem over the 9 pose parameters
// (t, roll/pitch/yaw, s). Layout: 2 rows per frame, 3 per point, 1 per
// line, 2 for roll/pitch.
class PoseProblem {
 public:
  using Params = Eigen::Matrix<double, 9, 1>;

  PoseProblem(const ObjectEvidence& evidence, const PlaneModel& plane, const ResidualWeights& weights = {});

  static Params pack(const ObjectPose& pose);
  static ObjectPose unpack(const Params& x);

  Eigen::Index size() const { return rows_; }
  Eigen::Index scale_begin() const { return scale_begin_; }
  Eigen::Index yaw_begin() const { return yaw_begin_; }
  Eigen::Index rp_begin() const { return rp_begin_; }

  Eigen::VectorXd evaluate(const Params& x) const;
  Eigen::MatrixXd jacobian_analytic(const Params& x) const;
  Eigen::MatrixXd jacobian_numeric(const Params& x, double h = 1e-6) const;
  double cost(const Params& x) const { return 0.5 * evaluate(x).squaredNorm(); }

 private:
  const ObjectEvidence& evidence_;
  PlaneModel plane_;
  ResidualWeights w_;
  Eigen::Index scale_begin_ = 0;
  Eigen::Index yaw_begin_ = 0;
  Eigen::Index rp_begin_ = 0;
  Eigen::Index rows_ = 0;
};

// ---------------------------------------------------------------------------
// Levenberg-Marquardt

enum class JacobianMode { numeric, analytic };

struct SolverOptions {
  int max_iters = 50;
  double initial_damping = 1e-3;
  double step_tolerance = 1e-8;
  double cost_tolerance = 1e-10;  // relative decrease
  ResidualWeights weights;
  JacobianMode jacobian = JacobianMode::numeric;
  double numeric_step = 1e-6;
};

struct SolverResult {
  ObjectPose pose;
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> cost_trace;  // cost after each accepted step, starting with the initial cost
};

// Never throws on non-convergence (returns best-so-far with converged=false);
// throws SolverError on a non-finite cost.
SolverResult optimize_pose(const ObjectPose& init, const ObjectEvidence& evidence, const PlaneModel& plane,
                           const SolverOptions& options = {});

void write_cost_trace_csv(const std::filesystem::path& path, const SolverResult& result);

}  // namespace activemap
