#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "activemap/geometry.hpp"
#include "activemap/objmap.hpp"
#include "activemap/pose.hpp"
#include "activemap/scene.hpp"
#include "activemap/sensor.hpp"

namespace activemap {

// Exploration descriptor of one object.
struct FeatureVector {
  double h_obj = 0.0;   // bits
  double h_norm = 0.0;  // bits per cell
  double r_o = 0.0;
  double r_iou = 0.0;
  double v_norm = 1.0;  // latest normalized volume
  int s_flag = 1;
};

struct UncertaintyTerms {
  double h_iou = 0.0;
  double h_v = 0.0;
  double p_v = 0.0;  // peak-normalized density of the latest volume
};

// -p log2 p, with 0 at p = 0.
double plogp_entropy(double p);

// Standard-normal density of the z-scored latest volume divided by the peak
// density, so a converged history gives 1. Throws DomainError when empty.
double volume_probability(std::span<const double> history);

UncertaintyTerms uncertainty_terms(const FeatureVector& x, std::span<const double> history);

// 0 when (h_norm < 0.5 or r_o > 0.5) and p_v > 0.8, else 1.
int active_flag(const FeatureVector& x, double p_v);

// Features of an estimate for a view with the given mean bbox IoU. An empty
// volume history counts as unconverged (p_v = 0).
FeatureVector object_features(const ObjectEstimate& est, double r_iou = 0.0);

// ---------------------------------------------------------------------------
// Views

enum class ViewKind { hemisphere_sample, corner_init, coverage_waypoint, random };
enum class Strategy { object_driven, randomized, coverage, init_only };

std::string to_string(ViewKind kind);
std::string to_string(Strategy strategy);
Strategy strategy_from_string(const std::string& name);
// Column label used in reports ("Ours", "Random.", "Cover.", "Init.").
std::string display_name(Strategy strategy);

struct CandidateView {
  CameraPose pose;
  Vec3 target = Vec3::Zero();  // look-at point
  ViewKind kind = ViewKind::hemisphere_sample;
};

struct ViewShell {
  double min_radius = 0.5;
  double max_radius = 0.9;
  double min_elevation = deg2rad(20.0);
  double max_elevation = deg2rad(85.0);
};

// `n` views on a shell around the desk center; when `targets` is non-empty,
// every other view is centered on one of them instead.
std::vector<CandidateView> candidate_views(const DeskBounds& bounds, double desk_height, int n, std::uint64_t seed,
                                           std::span<const Vec3> targets = {}, const ViewShell& shell = {});

struct InitViewOptions {
  double height = 0.8;   // above the desk
  double inward = 0.55;  // look-at point as a fraction of the way to the desk center
};

// Top views over the four desk corners, in the order
// (xmin,ymin), (xmax,ymin), (xmax,ymax), (xmin,ymax).
std::array<CandidateView, 4> corner_views(const DeskBounds& bounds, double desk_height,
                                          const InitViewOptions& options = {});

// Straight-down lawnmower waypoints; rows run along y and are spaced by the
// camera footprint width at desk height.
std::vector<CandidateView> coverage_path(const DeskBounds& bounds, double desk_height, const CameraIntrinsics& intr,
                                         double height);

// ---------------------------------------------------------------------------
// Utility and NBV selection

struct UtilityOptions {
  double lambda = 0.2;
};

double utility(const GlobalObjectMap& map, const CandidateView& view, const CameraIntrinsics& intr,
               const UtilityOptions& options = {});

// Index of the highest-utility candidate; the first one wins ties.
std::size_t select_nbv(const GlobalObjectMap& map, std::span<const CandidateView> candidates,
                       const CameraIntrinsics& intr, const UtilityOptions& options = {},
                       std::vector<double>* utilities = nullptr);

// ---------------------------------------------------------------------------
// Exploration loop

struct ExplorationConfig {
  Strategy strategy = Strategy::object_driven;
  int budget = 10;  // views after the four-corner initialization
  NoiseModel noise;
  std::uint64_t seed = 0;
  bool oracle_association = false;
  int candidate_count = 64;
  UtilityOptions utility;
  CameraIntrinsics intrinsics;
  SolverOptions solver = [] {
    SolverOptions s;
    s.jacobian = JacobianMode::analytic;
    return s;
  }();
  RenderOptions render;
  InitViewOptions init_views;
  double coverage_height = 0.5;
  bool stop_when_explored = true;  // object_driven only
  bool keep_observations = false;
};

struct ExplorationState {
  int step = 0;  // executed views, initialization included
  int budget = 10;
  std::vector<CandidateView> trajectory;
  Strategy strategy = Strategy::object_driven;

  int nbv_steps() const { return std::max(0, step - 4); }
};

// Next view for `state`, or nullopt when the strategy is finished. The
// first four views of every strategy are the corner views.
std::optional<CandidateView> strategy_step(ExplorationState& state, const GlobalObjectMap& map,
                                           const DeskScene& scene, std::uint64_t seed,
                                           const ExplorationConfig& config, double* chosen_utility = nullptr);

struct ObjectStepLog {
  int id = 0;
  int gt_id = -1;
  int gt_vote_count = 0;
  ObjectPose pose;
  FeatureVector features;
  double p_v = 0.0;
};

struct StepLog {
  int step = 0;
  CandidateView view;
  double utility = 0.0;
  std::vector<ObjectStepLog> objects;
};

struct ExplorationResult {
  GlobalObjectMap map;
  std::vector<StepLog> steps;
  std::string termination;  // all_explored | budget | path_complete | init_only
  std::vector<Observation> observations;
};

ExplorationResult run_exploration(const DeskScene& scene, const ExplorationConfig& config);

// Re-estimates one object's pose from its stored evidence and refreshes its
// grids; records the new volume.
void refine_object(GlobalObjectMap& map, int id, const SolverOptions& solver, bool force_rebuild = false);

std::string trajectory_csv(const ExplorationResult& result, Strategy strategy);

}  // namespace activemap
