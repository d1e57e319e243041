#include "activemap/explore.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

#include <fmt/format.h>

namespace activemap {

double plogp_entropy(double p) {
  if (!(p >= 0.0 && p <= 1.0)) throw DomainError(fmt::format("probability {} outside [0, 1]", p));
  if (p <= 0.0) return 0.0;
  return -p * std::log2(p);
}

double volume_probability(std::span<const double> history) {
  if (history.empty()) throw DomainError("empty volume history");
  const double n = static_cast<double>(history.size());
  const double mean = std::accumulate(history.begin(), history.end(), 0.0) / n;
  double var = 0.0;
  for (double v : history) var += (v - mean) * (v - mean);
  const double sigma = std::max(std::sqrt(var / n), 1e-6);
  const double z = (history.back() - mean) / sigma;
  return std::exp(-0.5 * z * z);
}

UncertaintyTerms uncertainty_terms(const FeatureVector& x, std::span<const double> history) {
  UncertaintyTerms t;
  t.h_iou = plogp_entropy(std::clamp(0.5 * x.r_iou, 0.0, 1.0));
  t.p_v = history.empty() ? 0.0 : volume_probability(history);
  t.h_v = history.empty() ? 0.0 : plogp_entropy(t.p_v);
  return t;
}

int active_flag(const FeatureVector& x, double p_v) {
  const bool complete = x.h_norm < 0.5 || x.r_o > 0.5;
  return complete && p_v > 0.8 ? 0 : 1;
}

FeatureVector object_features(const ObjectEstimate& est, double r_iou) {
  FeatureVector x;
  if (est.grids.cell_count() > 0) {
    const Completeness c = completeness(est.grids);
    x.h_obj = c.h_obj;
    x.h_norm = c.h_norm;
    x.r_o = c.r_o;
  }
  x.r_iou = r_iou;
  x.v_norm = est.volume_history.empty() ? 1.0 : est.volume_history.back();
  const double p_v = est.volume_history.empty() ? 0.0 : volume_probability(est.volume_history);
  x.s_flag = active_flag(x, p_v);
  return x;
}

// ---------------------------------------------------------------------------

std::string to_string(ViewKind kind) {
  switch (kind) {
    case ViewKind::hemisphere_sample: return "hemisphere_sample";
    case ViewKind::corner_init: return "corner_init";
    case ViewKind::coverage_waypoint: return "coverage_waypoint";
    case ViewKind::random: return "random";
  }
  return "unknown";
}

std::string to_string(Strategy strategy) {
  switch (strategy) {
    case Strategy::object_driven: return "object_driven";
    case Strategy::randomized: return "randomized";
    case Strategy::coverage: return "coverage";
    case Strategy::init_only: return "init_only";
  }
  return "unknown";
}

Strategy strategy_from_string(const std::string& name) {
  if (name == "object_driven" || name == "ours") return Strategy::object_driven;
  if (name == "randomized" || name == "random") return Strategy::randomized;
  if (name == "coverage") return Strategy::coverage;
  if (name == "init_only" || name == "init") return Strategy::init_only;
  throw ParseError("unknown strategy '" + name + "'");
}

std::string display_name(Strategy strategy) {
  switch (strategy) {
    case Strategy::object_driven: return "Ours";
    case Strategy::randomized: return "Random.";
    case Strategy::coverage: return "Cover.";
    case Strategy::init_only: return "Init.";
  }
  return "?";
}

namespace {

CandidateView make_view(const Vec3& eye, const Vec3& target, ViewKind kind) {
  return CandidateView{CameraPose::look_at(eye, target), target, kind};
}

Vec3 desk_center(const DeskBounds& b, double h) {
  return {0.5 * (b.xmin + b.xmax), 0.5 * (b.ymin + b.ymax), h};
}

}  // namespace

std::vector<CandidateView> candidate_views(const DeskBounds& bounds, double desk_height, int n, std::uint64_t seed,
                                           std::span<const Vec3> targets, const ViewShell& shell) {
  if (n <= 0) return {};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> az(0.0, 2.0 * kPi);
  std::uniform_real_distribution<double> el(shell.min_elevation, shell.max_elevation);
  std::uniform_real_distribution<double> rad(shell.min_radius, shell.max_radius);
  const Vec3 center = desk_center(bounds, desk_height);

  std::vector<CandidateView> views;
  views.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Vec3 target = center;
    if (!targets.empty() && i % 2 == 1) target = targets[static_cast<std::size_t>(i / 2) % targets.size()];
    const double a = az(rng), e = el(rng), r = rad(rng);
    const Vec3 eye = target + r * Vec3(std::cos(e) * std::cos(a), std::cos(e) * std::sin(a), std::sin(e));
    views.push_back(make_view(eye, target, ViewKind::hemisphere_sample));
  }
  return views;
}

std::array<CandidateView, 4> corner_views(const DeskBounds& bounds, double desk_height,
                                          const InitViewOptions& options) {
  const Vec3 center = desk_center(bounds, desk_height);
  const std::array<Vec2, 4> corners{Vec2(bounds.xmin, bounds.ymin), Vec2(bounds.xmax, bounds.ymin),
                                    Vec2(bounds.xmax, bounds.ymax), Vec2(bounds.xmin, bounds.ymax)};
  std::array<CandidateView, 4> out;
  for (std::size_t i = 0; i < 4; ++i) {
    const Vec3 corner(corners[i].x(), corners[i].y(), desk_height);
    const Vec3 eye = corner + Vec3(0.0, 0.0, options.height);
    const Vec3 target = corner + options.inward * (center - corner);
    out[i] = make_view(eye, target, ViewKind::corner_init);
  }
  return out;
}

std::vector<CandidateView> coverage_path(const DeskBounds& bounds, double desk_height, const CameraIntrinsics& intr,
                                         double height) {
  if (!(height > 0.0)) throw DomainError("coverage height must be positive");
  const double foot_w = height * intr.width / intr.fx;
  const double foot_h = height * intr.height / intr.fy;
  const double size_x = bounds.xmax - bounds.xmin;
  const double size_y = bounds.ymax - bounds.ymin;
  const int nx = std::max(1, static_cast<int>(std::ceil(size_x / foot_w - 1e-9)));
  const int ny = std::max(1, static_cast<int>(std::ceil(size_y / foot_h - 1e-9)));

  std::vector<CandidateView> path;
  for (int i = 0; i < nx; ++i) {
    const double x = bounds.xmin + (i + 0.5) * size_x / nx;
    for (int k = 0; k < ny; ++k) {
      const int j = i % 2 == 0 ? k : ny - 1 - k;
      const double y = bounds.ymin + (j + 0.5) * size_y / ny;
      const Vec3 target(x, y, desk_height);
      path.push_back(make_view(target + Vec3(0.0, 0.0, height), target, ViewKind::coverage_waypoint));
    }
  }
  return path;
}

// ---------------------------------------------------------------------------

namespace {

struct ObjectTerms {
  double weight = 0.0;  // (1 - R_o) H_obj
  double h_v = 0.0;
  int s_flag = 1;
};

// Per-object quantities that do not depend on the candidate view.
std::vector<ObjectTerms> view_independent_terms(const GlobalObjectMap& map) {
  std::vector<ObjectTerms> terms;
  terms.reserve(map.estimates.size());
  for (const auto& est : map.estimates) {
    const FeatureVector x = object_features(est);
    const UncertaintyTerms u = uncertainty_terms(x, est.volume_history);
    terms.push_back({(1.0 - x.r_o) * x.h_obj, u.h_v, x.s_flag});
  }
  return terms;
}

double utility_with(const GlobalObjectMap& map, const std::vector<ObjectTerms>& terms, const CandidateView& view,
                    const CameraIntrinsics& intr, const UtilityOptions& options) {
  const VisibleSet vis = predicted_visibility(map, view.pose, intr);
  double f = 0.0;
  for (const auto& v : vis.objects) {
    std::size_t k = 0;
    while (k < map.estimates.size() && map.estimates[k].id != v.id) ++k;
    if (k == map.estimates.size()) continue;
    const ObjectTerms& t = terms[k];
    if (t.s_flag == 0) continue;
    const double h_iou = plogp_entropy(std::clamp(0.5 * v.r_iou, 0.0, 1.0));
    f += t.weight + options.lambda * (h_iou + t.h_v);
  }
  return f;
}

}  // namespace

double utility(const GlobalObjectMap& map, const CandidateView& view, const CameraIntrinsics& intr,
               const UtilityOptions& options) {
  return utility_with(map, view_independent_terms(map), view, intr, options);
}

std::size_t select_nbv(const GlobalObjectMap& map, std::span<const CandidateView> candidates,
                       const CameraIntrinsics& intr, const UtilityOptions& options, std::vector<double>* utilities) {
  if (candidates.empty()) throw DomainError("no candidate views");
  const auto terms = view_independent_terms(map);
  std::size_t best = 0;
  double best_f = -1.0;
  if (utilities) utilities->clear();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double f = utility_with(map, terms, candidates[i], intr, options);
    if (utilities) utilities->push_back(f);
    if (f > best_f) {
      best_f = f;
      best = i;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

std::optional<CandidateView> strategy_step(ExplorationState& state, const GlobalObjectMap& map,
                                           const DeskScene& scene, std::uint64_t seed,
                                           const ExplorationConfig& config, double* chosen_utility) {
  if (chosen_utility) *chosen_utility = 0.0;
  std::optional<CandidateView> next;
  if (state.step < 4) {
    next = corner_views(scene.bounds, scene.desk_height, config.init_views)[static_cast<std::size_t>(state.step)];
  } else if (state.nbv_steps() < state.budget) {
    const std::uint64_t step_seed = mix_seed(seed, static_cast<std::uint64_t>(state.step) + 1000);
    switch (state.strategy) {
      case Strategy::init_only:
        break;
      case Strategy::coverage: {
        const auto path = coverage_path(scene.bounds, scene.desk_height, config.intrinsics, config.coverage_height);
        const auto i = static_cast<std::size_t>(state.nbv_steps());
        if (i < path.size()) next = path[i];
        break;
      }
      case Strategy::randomized: {
        auto views = candidate_views(scene.bounds, scene.desk_height, config.candidate_count, step_seed);
        std::mt19937_64 rng(mix_seed(step_seed, 7));
        std::uniform_int_distribution<std::size_t> pick(0, views.size() - 1);
        next = views[pick(rng)];
        next->kind = ViewKind::random;
        break;
      }
      case Strategy::object_driven: {
        std::vector<Vec3> targets;
        for (const auto& e : map.estimates) targets.push_back(e.pose.t);
        const auto views =
            candidate_views(scene.bounds, scene.desk_height, config.candidate_count, step_seed, targets);
        std::vector<double> f;
        const std::size_t i = select_nbv(map, views, config.intrinsics, config.utility, &f);
        next = views[i];
        if (chosen_utility) *chosen_utility = f[i];
        break;
      }
    }
  }
  if (next) {
    ++state.step;
    state.trajectory.push_back(*next);
  }
  return next;
}

// ---------------------------------------------------------------------------

namespace {

std::vector<ObjectPose> other_poses(const GlobalObjectMap& map, int id) {
  std::vector<ObjectPose> poses;
  for (const auto& e : map.estimates)
    if (e.id != id) poses.push_back(e.pose);
  return poses;
}

std::vector<double> lifted_line_yaws(const ObjectEstimate& est, const Vec3& n) {
  std::vector<double> yaws;
  for (const auto& f : est.frames)
    for (const auto& line : f.lines)
      if (auto y = line_world_yaw(line, f.camera, f.intrinsics, n)) yaws.push_back(*y);
  return yaws;
}

}  // namespace

void refine_object(GlobalObjectMap& map, int id, const SolverOptions& solver, bool force_rebuild) {
  ObjectEstimate* est = map.find(id);
  if (!est) throw DomainError(fmt::format("no object {}", id));
  const PlaneModel& plane = map.desk_plane;

  std::vector<Vec3> pts = statistical_filter(est->points);
  SliceFilterResult sf = slice_filter(pts, est->pose, est->grids.resolution() > 0.0 ? est->grids.resolution()
                                                                                   : SurfaceGridSet::kDefaultResolution);
  if (sf.points.size() < 10) sf.points = std::move(pts);
  if (sf.points.size() < 10) return;

  const std::vector<double> yaws = lifted_line_yaws(*est, plane.n);
  const ObjectPose init = init_pose(sf.points, plane, yaws);
  const ObjectEvidence evidence = gather_evidence(*est, plane.n, sf.points);
  ObjectPose fitted = init;
  try {
    fitted = optimize_pose(init, evidence, plane, solver).pose;
  } catch (const SolverError&) {
    fitted = init;
  }

  const ObjectPose before = est->pose;
  est->pose = fitted;
  if (force_rebuild || pose_moved_beyond_cell(before, fitted, est->grids.resolution()))
    rebuild_surface_grids(*est, other_poses(map, id));
  est->record_volume();
}

ExplorationResult run_exploration(const DeskScene& scene, const ExplorationConfig& config) {
  config.noise.validate();
  ExplorationResult result;
  GlobalObjectMap& map = result.map;
  map.desk_plane.n = Vec3::UnitZ();
  map.desk_plane.d = scene.desk_height;

  ExplorationState state;
  state.budget = config.budget;
  state.strategy = config.strategy;

  constexpr std::size_t kMaxDeskPoints = 6000;
  std::vector<Vec3> desk_points;
  Vec3 camera_sum = Vec3::Zero();

  double chosen = 0.0;
  auto view = strategy_step(state, map, scene, config.seed, config, &chosen);
  while (view) {
    const int step = state.step;
    Observation obs = render(scene, view->pose, config.intrinsics, config.noise,
                             mix_seed(config.seed, static_cast<std::uint64_t>(step)), config.render);

    desk_points.insert(desk_points.end(), obs.desk_points.begin(), obs.desk_points.end());
    if (desk_points.size() > kMaxDeskPoints) {
      const std::size_t stride = (desk_points.size() + kMaxDeskPoints - 1) / kMaxDeskPoints;
      std::vector<Vec3> kept;
      for (std::size_t i = 0; i < desk_points.size(); i += stride) kept.push_back(desk_points[i]);
      desk_points = std::move(kept);
    }
    camera_sum += view->pose.position();
    if (desk_points.size() >= 3) {
      try {
        map.desk_plane = fit_desk_plane(desk_points, mix_seed(config.seed, 0x5eed + step), 200, 0.005,
                                        camera_sum / static_cast<double>(step));
      } catch (const FitError&) {
      }
    }

    const auto verdicts = associate(map, obs, AssociationOptions{.oracle = config.oracle_association});
    const IntegrationReport report = integrate(map, obs, verdicts, step);
    for (int id : report.touched_ids) {
      const bool created = std::find(report.created_ids.begin(), report.created_ids.end(), id) !=
                           report.created_ids.end();
      refine_object(map, id, config.solver, created);
    }
    if (config.keep_observations) result.observations.push_back(std::move(obs));

    StepLog log;
    log.step = step;
    log.view = *view;
    log.utility = chosen;
    bool all_done = true;
    for (auto& e : map.estimates) {
      ObjectStepLog o;
      o.id = e.id;
      o.gt_id = e.majority_gt_id();
      if (auto it = e.gt_votes.find(o.gt_id); it != e.gt_votes.end()) o.gt_vote_count = it->second;
      o.pose = e.pose;
      o.features = object_features(e);
      o.p_v = e.volume_history.empty() ? 0.0 : volume_probability(e.volume_history);
      e.fully_explored = o.features.s_flag == 0;
      all_done = all_done && e.fully_explored;
      log.objects.push_back(o);
    }
    result.steps.push_back(std::move(log));

    if (state.step >= 4) {
      if (config.strategy == Strategy::init_only) {
        result.termination = "init_only";
        break;
      }
      if (config.strategy == Strategy::object_driven && config.stop_when_explored && all_done) {
        result.termination = "all_explored";
        break;
      }
      if (state.nbv_steps() >= state.budget) {
        result.termination = "budget";
        break;
      }
    }
    view = strategy_step(state, map, scene, config.seed, config, &chosen);
    if (!view) result.termination = config.strategy == Strategy::coverage ? "path_complete" : "budget";
  }
  return result;
}

std::string trajectory_csv(const ExplorationResult& result, Strategy strategy) {
  std::ostringstream out;
  out << "step,strategy,kind,cam_x,cam_y,cam_z,qw,qx,qy,qz,utility,object_id,gt_id,h_norm,r_o,p_v,s_flag\n";
  for (const auto& s : result.steps) {
    const Vec3 c = s.view.pose.position();
    const Eigen::Quaterniond q(s.view.pose.rotation);
    const std::string head = fmt::format("{},{},{},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f},{:.6f}", s.step,
                                         to_string(strategy), to_string(s.view.kind), c.x(), c.y(), c.z(), q.w(),
                                         q.x(), q.y(), q.z(), s.utility);
    if (s.objects.empty()) out << head << ",,,,,,\n";
    for (const auto& o : s.objects)
      out << head
          << fmt::format(",{},{},{:.6f},{:.6f},{:.6f},{}\n", o.id, o.gt_id, o.features.h_norm, o.features.r_o,
                         o.p_v, o.features.s_flag);
  }
  return out.str();
}

}  // namespace activemap
