#include "activemap/bench.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

namespace activemap {

namespace {

Polygon footprint_of(const ObjectPose& p) { return footprint(p.t, p.yaw(), p.s.x(), p.s.y()); }

double z_overlap(const ObjectPose& a, const ObjectPose& b) {
  const double lo = std::max(a.t.z() - a.s.z(), b.t.z() - b.s.z());
  const double hi = std::min(a.t.z() + a.s.z(), b.t.z() + b.s.z());
  return std::max(0.0, hi - lo);
}

struct Aabb2 {
  double xmin, ymin, xmax, ymax;
};

Aabb2 aabb_of(const Polygon& poly) {
  Aabb2 b{poly[0].x(), poly[0].y(), poly[0].x(), poly[0].y()};
  for (const auto& v : poly) {
    b.xmin = std::min(b.xmin, v.x());
    b.ymin = std::min(b.ymin, v.y());
    b.xmax = std::max(b.xmax, v.x());
    b.ymax = std::max(b.ymax, v.y());
  }
  return b;
}

}  // namespace

double iou2d_top(const ObjectPose& a, const ObjectPose& b) {
  const Polygon pa = footprint_of(a), pb = footprint_of(b);
  const double inter = convex_intersection_area(pa, pb);
  const double uni = polygon_area(pa) + polygon_area(pb) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou3d_upright(const ObjectPose& a, const ObjectPose& b) {
  const double inter = convex_intersection_area(footprint_of(a), footprint_of(b)) * z_overlap(a, b);
  const double uni = a.volume() + b.volume() - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

double iou2d_aabb(const ObjectPose& a, const ObjectPose& b) {
  const Aabb2 ra = aabb_of(footprint_of(a)), rb = aabb_of(footprint_of(b));
  const double w = std::min(ra.xmax, rb.xmax) - std::max(ra.xmin, rb.xmin);
  const double h = std::min(ra.ymax, rb.ymax) - std::max(ra.ymin, rb.ymin);
  const double inter = w > 0.0 && h > 0.0 ? w * h : 0.0;
  const double uni = (ra.xmax - ra.xmin) * (ra.ymax - ra.ymin) + (rb.xmax - rb.xmin) * (rb.ymax - rb.ymin) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

PoseMetrics evaluate(const ObjectPose& est, const ObjectPose& gt, Shape gt_shape) {
  PoseMetrics m;
  m.cde = 100.0 * (est.t - gt.t).norm();
  if (gt_shape == Shape::cuboid) {
    double d = std::fmod(std::abs(est.yaw() - gt.yaw()), 0.5 * kPi);
    if (d > 0.25 * kPi) d = 0.5 * kPi - d;
    m.yae = rad2deg(d);
  }
  m.iou2d = iou2d_top(est, gt);
  m.iou3d = iou3d_upright(est, gt);
  return m;
}

namespace {

struct Claim {
  int estimate_id = 0;
  int gt_id = -1;
  int votes = 0;
  ObjectPose pose;
};

std::vector<ObjectResult> evaluate_claims(std::span<const Claim> claims, const DeskScene& scene) {
  std::vector<ObjectResult> out;
  for (const auto& prim : scene.primitives) {
    ObjectResult r;
    r.gt_id = prim.id;
    r.label = prim.label;
    r.shape = prim.shape;
    const Claim* best = nullptr;
    for (const auto& c : claims)
      if (c.gt_id == prim.id && (!best || c.votes > best->votes)) best = &c;
    if (best) {
      r.estimate_id = best->estimate_id;
      r.metrics = evaluate(best->pose, prim.pose_gt, prim.shape);
    }
    out.push_back(r);
  }
  return out;
}

}  // namespace

std::vector<ObjectResult> evaluate_map(const GlobalObjectMap& map, const DeskScene& scene) {
  std::vector<Claim> claims;
  for (const auto& e : map.estimates) {
    Claim c{e.id, e.majority_gt_id(), 0, e.pose};
    if (auto it = e.gt_votes.find(c.gt_id); it != e.gt_votes.end()) c.votes = it->second;
    claims.push_back(c);
  }
  return evaluate_claims(claims, scene);
}

MetricSummary summarize(std::span<const ObjectResult> results) {
  MetricSummary s;
  for (const auto& r : results) {
    ++s.objects;
    if (!r.estimate_id) continue;
    ++s.found;
    s.iou3d += r.metrics.iou3d;
    s.iou2d += r.metrics.iou2d;
    s.cde += r.metrics.cde;
    if (r.metrics.yae) {
      s.yae += *r.metrics.yae;
      ++s.yae_count;
    }
  }
  if (s.objects > 0) {
    s.iou3d /= s.objects;
    s.iou2d /= s.objects;
  }
  if (s.found > 0) s.cde /= s.found;
  if (s.yae_count > 0) s.yae /= s.yae_count;
  return s;
}

// ---------------------------------------------------------------------------

NoiseModel noise_from_name(const std::string& name) {
  if (name == "off" || name == "none") return NoiseModel::off();
  if (name == "low") return NoiseModel::low();
  if (name == "med" || name == "medium") return NoiseModel::medium();
  throw ParseError("unknown noise preset '" + name + "'");
}

BenchConfig parse_bench_config(const std::string& text, const std::filesystem::path& base_dir) {
  using nlohmann::json;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("bench config: ") + e.what());
  }
  try {
    if (!j.is_object()) throw ParseError("bench config must be an object");
    if (j.value("format", 1) != 1) throw ParseError("unsupported bench config format");
    BenchConfig c;
    if (!j.contains("scenes") || !j["scenes"].is_array() || j["scenes"].empty())
      throw ParseError("bench config needs a non-empty 'scenes' array");
    for (std::size_t i = 0; i < j["scenes"].size(); ++i) {
      const json& s = j["scenes"][i];
      SceneSpec spec;
      spec.name = s.value("name", fmt::format("scene{}", i + 1));
      if (s.contains("file")) {
        std::filesystem::path p = s["file"].get<std::string>();
        if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
        spec.file = p;
      } else if (s.contains("generate")) {
        const json& g = s["generate"];
        spec.generator_seed = g.value("seed", std::uint64_t{0});
        if (g.contains("count")) {
          const json& n = g["count"];
          if (n.is_array() && n.size() == 2) {
            spec.min_count = n[0].get<int>();
            spec.max_count = n[1].get<int>();
          } else {
            spec.min_count = spec.max_count = n.get<int>();
          }
        }
        spec.spacing = spacing_from_string(g.value("spacing", std::string("sparse")));
      } else {
        throw ParseError(fmt::format("scene {} needs 'file' or 'generate'", i + 1));
      }
      c.scenes.push_back(spec);
    }
    if (j.contains("strategies")) {
      c.strategies.clear();
      for (const auto& s : j["strategies"]) c.strategies.push_back(strategy_from_string(s.get<std::string>()));
      if (c.strategies.empty()) throw ParseError("empty strategy list");
    }
    c.noise = j.value("noise", c.noise);
    noise_from_name(c.noise);
    c.repetitions = j.value("repetitions", c.repetitions);
    c.budget = j.value("budget", c.budget);
    c.seed = j.value("seed", c.seed);
    c.candidates = j.value("candidates", c.candidates);
    c.oracle_association = j.value("oracle_association", c.oracle_association);
    c.write_ply = j.value("write_ply", c.write_ply);
    if (c.repetitions < 1) throw ParseError("repetitions must be at least 1");
    if (c.budget < 0) throw ParseError("budget must be non-negative");
    if (c.candidates < 1) throw ParseError("candidates must be at least 1");
    return c;
  } catch (const json::exception& e) {
    throw ParseError(std::string("bench config: ") + e.what());
  }
}

BenchConfig load_bench_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_bench_config(ss.str(), path.parent_path());
}

DeskScene materialize_scene(const SceneSpec& spec) {
  if (spec.file) return load_scene(*spec.file);
  return generate_scene(spec.generator_seed, spec.min_count, spec.max_count, spec.spacing);
}

// ---------------------------------------------------------------------------

MetricSummary BenchmarkReport::mean(std::size_t strategy_index) const {
  MetricSummary m;
  int n = 0, n_yae = 0;
  for (const auto& row : cells) {
    const CellSummary& c = row[strategy_index];
    if (!c.ok) continue;
    ++n;
    m.iou3d += c.metrics.iou3d;
    m.iou2d += c.metrics.iou2d;
    m.cde += c.metrics.cde;
    if (c.metrics.yae_count > 0) {
      m.yae += c.metrics.yae;
      ++n_yae;
    }
    m.objects += c.metrics.objects;
    m.found += c.metrics.found;
    m.yae_count += c.metrics.yae_count;
  }
  if (n > 0) {
    m.iou3d /= n;
    m.iou2d /= n;
    m.cde /= n;
  }
  if (n_yae > 0) m.yae /= n_yae;
  return m;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
}

std::vector<Claim> claims_of(const StepLog& step) {
  std::vector<Claim> claims;
  for (const auto& o : step.objects) claims.push_back({o.id, o.gt_id, o.gt_vote_count, o.pose});
  return claims;
}

std::string file_stem(const std::string& scene, Strategy strategy, int rep) {
  return fmt::format("{}_{}_r{}", scene, to_string(strategy), rep);
}

}  // namespace

BenchmarkReport run_benchmark(const BenchConfig& config, const BenchRunOptions& options) {
  BenchmarkReport report;
  report.config = config;
  const NoiseModel noise = noise_from_name(config.noise);
  if (options.out_dir) std::filesystem::create_directories(*options.out_dir / "runs");

  for (std::size_t si = 0; si < config.scenes.size(); ++si) {
    const SceneSpec& spec = config.scenes[si];
    report.scene_names.push_back(spec.name);
    std::vector<CellSummary> row(config.strategies.size());

    std::optional<DeskScene> scene;
    std::string load_error;
    try {
      scene = materialize_scene(spec);
    } catch (const Error& e) {
      load_error = e.what();
    }

    for (std::size_t k = 0; k < config.strategies.size(); ++k) {
      const Strategy strategy = config.strategies[k];
      CellSummary& cell = row[k];
      if (!scene) {
        cell.error = load_error;
        if (options.progress) options.progress(fmt::format("{}: {}", spec.name, load_error));
        continue;
      }
      std::vector<MetricSummary> reps;
      double views = 0.0;
      for (int rep = 0; rep < config.repetitions; ++rep) {
        RunRecord run;
        run.scene_index = si;
        run.strategy = strategy;
        run.repetition = rep;
        ExplorationConfig ec;
        ec.strategy = strategy;
        ec.budget = config.budget;
        ec.noise = noise;
        ec.seed = mix_seed(mix_seed(config.seed, si), static_cast<std::uint64_t>(rep));
        ec.oracle_association = config.oracle_association;
        ec.candidate_count = config.candidates;
        ec.keep_observations = config.write_ply && options.out_dir.has_value();
        try {
          const ExplorationResult res = run_exploration(*scene, ec);
          run.ok = true;
          run.views = static_cast<int>(res.steps.size());
          run.termination = res.termination;
          run.objects = evaluate_map(res.map, *scene);
          run.summary = summarize(run.objects);
          for (const auto& st : res.steps) {
            const auto claims = claims_of(st);
            const auto per = evaluate_claims(claims, *scene);
            run.per_step.push_back(summarize(per));
          }
          if (options.out_dir) {
            const auto dir = *options.out_dir / "runs";
            const std::string stem = file_stem(spec.name, strategy, rep);
            write_text(dir / (stem + "_traj.csv"), trajectory_csv(res, strategy));
            write_text(dir / (stem + "_map.json"), export_map_json(res.map));
            if (ec.keep_observations) {
              std::vector<Vec3> cloud;
              for (const auto& obs : res.observations) {
                const auto pts = observation_points(obs);
                cloud.insert(cloud.end(), pts.begin(), pts.end());
              }
              write_ply(dir / (stem + ".ply"), cloud);
            }
          }
          reps.push_back(run.summary);
          views += run.views;
        } catch (const Error& e) {
          run.error = e.what();
          cell.error = e.what();
        }
        if (options.progress)
          options.progress(run.ok ? fmt::format("{} {} rep {}: iou3d {:.3f}, {} views ({})", spec.name,
                                                to_string(strategy), rep, run.summary.iou3d, run.views,
                                                run.termination)
                                  : fmt::format("{} {} rep {}: failed: {}", spec.name, to_string(strategy), rep,
                                                run.error));
        report.runs.push_back(std::move(run));
      }
      if (!reps.empty()) {
        cell.ok = true;
        const double n = static_cast<double>(reps.size());
        for (const auto& r : reps) {
          cell.metrics.iou3d += r.iou3d / n;
          cell.metrics.iou2d += r.iou2d / n;
          cell.metrics.cde += r.cde / n;
          cell.metrics.yae += r.yae / n;
          cell.metrics.objects = r.objects;
          cell.metrics.found += r.found;
          cell.metrics.yae_count = std::max(cell.metrics.yae_count, r.yae_count);
        }
        cell.views = views / n;
      }
    }
    report.cells.push_back(std::move(row));
  }

  if (options.out_dir) {
    write_text(*options.out_dir / "report.csv", report_csv(report));
    write_text(*options.out_dir / "report.txt", report_table(report));
    write_text(*options.out_dir / "objects.csv", objects_csv(report));
    write_text(*options.out_dir / "curves.csv", curves_csv(report));
  }
  return report;
}

namespace {

struct MetricColumn {
  const char* key;
  const char* label;
  double MetricSummary::*field;
};

constexpr MetricColumn kMetrics[] = {{"iou3d", "3D IoU", &MetricSummary::iou3d},
                                     {"iou2d", "2D IoU", &MetricSummary::iou2d},
                                     {"cde", "CDE (cm)", &MetricSummary::cde},
                                     {"yae", "YAE (deg)", &MetricSummary::yae}};

std::string cell_value(const CellSummary& c, const MetricColumn& m) {
  if (!c.ok) return "FAILED";
  if (m.field == &MetricSummary::yae && c.metrics.yae_count == 0) return "NA";
  return fmt::format("{:.4f}", c.metrics.*m.field);
}

}  // namespace

std::string report_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "scene";
  for (const auto& m : kMetrics)
    for (Strategy s : report.config.strategies) out << ',' << m.key << '_' << to_string(s);
  out << '\n';
  for (std::size_t i = 0; i < report.cells.size(); ++i) {
    out << report.scene_names[i];
    for (const auto& m : kMetrics)
      for (std::size_t k = 0; k < report.config.strategies.size(); ++k) out << ',' << cell_value(report.cells[i][k], m);
    out << '\n';
  }
  out << "Mean";
  for (const auto& m : kMetrics)
    for (std::size_t k = 0; k < report.config.strategies.size(); ++k) {
      const MetricSummary s = report.mean(k);
      if (m.field == &MetricSummary::yae && s.yae_count == 0)
        out << ",NA";
      else
        out << ',' << fmt::format("{:.4f}", s.*m.field);
    }
  out << '\n';
  return out.str();
}

std::string report_table(const BenchmarkReport& report) {
  std::ostringstream out;
  const auto& strategies = report.config.strategies;
  out << fmt::format("{:<14}{:<11}", "Scene", "Metric");
  for (Strategy s : strategies) out << fmt::format("{:>10}", display_name(s));
  out << '\n';
  auto rule = [&] { out << std::string(25 + 10 * strategies.size(), '-') << '\n'; };
  rule();
  for (std::size_t i = 0; i <= report.cells.size(); ++i) {
    const bool mean_row = i == report.cells.size();
    if (mean_row) rule();
    for (std::size_t mi = 0; mi < std::size(kMetrics); ++mi) {
      const auto& m = kMetrics[mi];
      const std::string name = mi == 0 ? (mean_row ? std::string("Mean") : report.scene_names[i]) : std::string();
      out << fmt::format("{:<14}{:<11}", name, m.label);
      for (std::size_t k = 0; k < strategies.size(); ++k) {
        std::string v;
        if (mean_row) {
          const MetricSummary s = report.mean(k);
          v = m.field == &MetricSummary::yae && s.yae_count == 0 ? "NA" : fmt::format("{:.3f}", s.*m.field);
        } else {
          const CellSummary& c = report.cells[i][k];
          v = !c.ok ? "FAILED"
                    : (m.field == &MetricSummary::yae && c.metrics.yae_count == 0
                           ? "NA"
                           : fmt::format("{:.3f}", c.metrics.*m.field));
        }
        out << fmt::format("{:>10}", v);
      }
      out << '\n';
    }
  }
  for (std::size_t i = 0; i < report.cells.size(); ++i)
    for (std::size_t k = 0; k < strategies.size(); ++k)
      if (!report.cells[i][k].ok)
        out << fmt::format("note: {} / {} failed: {}\n", report.scene_names[i], display_name(strategies[k]),
                           report.cells[i][k].error);
  return out.str();
}

std::string objects_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "scene,strategy,repetition,gt_id,label,shape,estimate_id,iou3d,iou2d,cde,yae\n";
  for (const auto& run : report.runs) {
    if (!run.ok) continue;
    for (const auto& o : run.objects) {
      out << fmt::format("{},{},{},{},{},{},", report.scene_names[run.scene_index], to_string(run.strategy),
                         run.repetition, o.gt_id, o.label, o.shape == Shape::cuboid ? "cuboid" : "cylinder");
      if (!o.estimate_id) {
        out << ",0.0000,0.0000,,\n";
        continue;
      }
      out << fmt::format("{},{:.4f},{:.4f},{:.4f},", *o.estimate_id, o.metrics.iou3d, o.metrics.iou2d, o.metrics.cde);
      out << (o.metrics.yae ? fmt::format("{:.4f}", *o.metrics.yae) : std::string("NA")) << '\n';
    }
  }
  return out.str();
}

std::string curves_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "scene,strategy,repetition,step,iou3d,iou2d,cde,found\n";
  for (const auto& run : report.runs)
    for (std::size_t i = 0; i < run.per_step.size(); ++i) {
      const MetricSummary& m = run.per_step[i];
      out << fmt::format("{},{},{},{},{:.4f},{:.4f},{:.4f},{}\n", report.scene_names[run.scene_index],
                         to_string(run.strategy), run.repetition, i + 1, m.iou3d, m.iou2d, m.cde, m.found);
    }
  return out.str();
}

}  // namespace activemap
