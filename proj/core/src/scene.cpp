#include "activemap/scene.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

namespace activemap {

using ordered_json = nlohmann::ordered_json;

std::string to_string(Shape shape) { return shape == Shape::cuboid ? "cuboid" : "cylinder"; }

Shape shape_from_string(const std::string& name) {
  if (name == "cuboid") return Shape::cuboid;
  if (name == "cylinder") return Shape::cylinder;
  throw ParseError("unknown shape '" + name + "'");
}

std::string to_string(Spacing spacing) {
  switch (spacing) {
    case Spacing::sparse:
      return "sparse";
    case Spacing::clustered:
      return "clustered";
    default:
      return "uneven";
  }
}

Spacing spacing_from_string(const std::string& name) {
  if (name == "sparse") return Spacing::sparse;
  if (name == "clustered") return Spacing::clustered;
  if (name == "uneven") return Spacing::uneven;
  throw ParseError("unknown spacing '" + name + "'");
}

const ScenePrimitive* DeskScene::find(int id) const {
  for (const auto& p : primitives)
    if (p.id == id) return &p;
  return nullptr;
}

namespace {

constexpr double kPlacementTol = 1e-6;

Polygon cuboid_footprint(const ScenePrimitive& p) {
  return footprint(p.pose_gt.t, p.pose_gt.yaw(), p.pose_gt.s.x(), p.pose_gt.s.y());
}

Vec2 xy(const Vec3& v) { return {v.x(), v.y()}; }

// Signed clearance between a disc and a convex polygon (negative inside).
double disc_polygon_gap(const Vec2& c, double r, const Polygon& poly) {
  bool inside = true;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < poly.size(); ++i) {
    const Vec2& a = poly[i];
    const Vec2& b = poly[(i + 1) % poly.size()];
    const Vec2 ab = b - a;
    if (ab.x() * (c - a).y() - ab.y() * (c - a).x() < 0.0) inside = false;
    const double u = std::clamp((c - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
    best = std::min(best, (a + u * ab - c).norm());
  }
  return inside ? -best - r : best - r;
}

double signed_gap(const ScenePrimitive& a, const ScenePrimitive& b) {
  if (a.shape == Shape::cylinder && b.shape == Shape::cylinder)
    return (xy(a.pose_gt.t) - xy(b.pose_gt.t)).norm() - a.pose_gt.s.x() - b.pose_gt.s.x();
  if (a.shape == Shape::cylinder) return disc_polygon_gap(xy(a.pose_gt.t), a.pose_gt.s.x(), cuboid_footprint(b));
  if (b.shape == Shape::cylinder) return disc_polygon_gap(xy(b.pose_gt.t), b.pose_gt.s.x(), cuboid_footprint(a));
  const Polygon pa = cuboid_footprint(a);
  const Polygon pb = cuboid_footprint(b);
  if (convex_intersection_area(pa, pb) > 1e-12) return -1.0;
  return convex_distance(pa, pb);
}

}  // namespace

bool footprints_overlap(const ScenePrimitive& a, const ScenePrimitive& b) { return signed_gap(a, b) < -1e-9; }

double footprint_gap(const ScenePrimitive& a, const ScenePrimitive& b) { return std::max(0.0, signed_gap(a, b)); }

Rect footprint_aabb(const ScenePrimitive& p) {
  Rect r = Rect::inverted();
  if (p.shape == Shape::cylinder) {
    const double rad = p.pose_gt.s.x();
    r.expand(xy(p.pose_gt.t) - Vec2(rad, rad));
    r.expand(xy(p.pose_gt.t) + Vec2(rad, rad));
    return r;
  }
  for (const Vec2& v : cuboid_footprint(p)) r.expand(v);
  return r;
}

void DeskScene::validate() const {
  for (std::size_t i = 0; i < primitives.size(); ++i) {
    const ScenePrimitive& p = primitives[i];
    const ObjectPose& g = p.pose_gt;
    for (std::size_t j = 0; j < i; ++j)
      if (primitives[j].id == p.id) throw ValidationError(p.id, "duplicate id");
    if (!(g.s.x() > 0.0 && g.s.y() > 0.0 && g.s.z() > 0.0)) throw ValidationError(p.id, "non-positive extent");
    if (!g.t.allFinite() || !g.theta.allFinite() || !g.s.allFinite())
      throw ValidationError(p.id, "non-finite pose");
    if (std::abs(g.roll()) > 1e-9 || std::abs(g.pitch()) > 1e-9)
      throw ValidationError(p.id, "object is not placed flat (non-zero roll/pitch)");
    if (p.shape == Shape::cylinder) {
      if (std::abs(g.s.x() - g.s.y()) > 1e-12) throw ValidationError(p.id, "cylinder radii differ");
      if (std::abs(g.yaw()) > 1e-12) throw ValidationError(p.id, "cylinder yaw must be 0");
    }
    const double bottom = g.t.z() - g.s.z();
    if (std::abs(bottom - desk_height) > kPlacementTol)
      throw ValidationError(p.id, bottom > desk_height ? "object is floating above the desk"
                                                       : "object sinks below the desk");
    const Rect box = footprint_aabb(p);
    if (box.xmin < bounds.xmin - kPlacementTol || box.xmax > bounds.xmax + kPlacementTol ||
        box.ymin < bounds.ymin - kPlacementTol || box.ymax > bounds.ymax + kPlacementTol)
      throw ValidationError(p.id, "object extends beyond the desk bounds");
    for (std::size_t j = 0; j < i; ++j)
      if (footprints_overlap(p, primitives[j]))
        throw ValidationError(p.id, "interpenetrates object " + std::to_string(primitives[j].id));
  }
}

// ---------------------------------------------------------------------------
// Generation

namespace {

const std::array<const char*, 4> kBoxLabels{"box", "book", "block", "carton"};
const std::array<const char*, 3> kRoundLabels{"can", "cup", "bottle"};

double bounding_radius(const ScenePrimitive& p) { return std::hypot(p.pose_gt.s.x(), p.pose_gt.s.y()); }

bool fits_desk(const ScenePrimitive& p, const DeskBounds& b) {
  const Rect r = footprint_aabb(p);
  return r.xmin >= b.xmin && r.xmax <= b.xmax && r.ymin >= b.ymin && r.ymax <= b.ymax;
}

}  // namespace

DeskScene generate_scene(std::uint64_t seed, int min_count, int max_count, Spacing spacing,
                         const GeneratorOptions& options) {
  if (min_count < 1 || max_count > 16 || min_count > max_count)
    throw DomainError("object count range must lie within [1, 16]");

  std::mt19937_64 rng(mix_seed(seed, 0x5ce9e));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  DeskScene scene;
  scene.seed = seed;
  scene.desk_height = options.desk_height;
  scene.bounds = options.bounds;
  const DeskBounds& b = options.bounds;

  const int count = std::uniform_int_distribution<int>(min_count, max_count)(rng);
  for (int i = 0; i < count; ++i) {
    ScenePrimitive prim;
    prim.id = i;
    if (unit(rng) < options.cylinder_fraction) {
      prim.shape = Shape::cylinder;
      prim.label = kRoundLabels[std::uniform_int_distribution<std::size_t>(0, kRoundLabels.size() - 1)(rng)];
      const double radius = 0.5 * uniform(options.min_extent, std::min(options.max_extent, 0.12));
      const double half_h = 0.5 * uniform(std::max(options.min_extent, 0.06), options.max_extent);
      prim.pose_gt.s = Vec3(radius, radius, half_h);
      prim.pose_gt.theta = Vec3::Zero();
    } else {
      prim.shape = Shape::cuboid;
      prim.label = kBoxLabels[std::uniform_int_distribution<std::size_t>(0, kBoxLabels.size() - 1)(rng)];
      prim.pose_gt.s = Vec3(0.5 * uniform(options.min_extent, options.max_extent),
                            0.5 * uniform(options.min_extent, options.max_extent),
                            0.5 * uniform(options.min_extent, options.max_extent));
      prim.pose_gt.theta = Vec3(0.0, 0.0, normalize_angle(uniform(-kPi, kPi)));
    }
    prim.pose_gt.t.z() = scene.desk_height + prim.pose_gt.s.z();

    // Clustered scenes pair every odd object with its predecessor; uneven
    // scenes keep three quarters of the objects in the lower-y half.
    const bool pair_with_previous = spacing == Spacing::clustered && (i % 2 == 1);
    const bool lower_half = spacing == Spacing::uneven && unit(rng) < 0.75;

    bool placed = false;
    for (int attempt = 0; attempt < options.max_attempts && !placed; ++attempt) {
      const double r = bounding_radius(prim);
      if (pair_with_previous && attempt < options.max_attempts / 2) {
        const ScenePrimitive& anchor = scene.primitives.back();
        const double max_gap = std::max(0.004, anchor.pose_gt.s.head<2>().minCoeff());
        const double gap = uniform(0.003, max_gap);
        const double dir = uniform(-kPi, kPi);
        // Walk outwards from the anchor until the footprints clear by `gap`.
        const double start = bounding_radius(anchor) + r;
        double lo = 0.0, hi = start + gap;
        for (int it = 0; it < 40; ++it) {
          const double mid = 0.5 * (lo + hi);
          prim.pose_gt.t.x() = anchor.pose_gt.t.x() + mid * std::cos(dir);
          prim.pose_gt.t.y() = anchor.pose_gt.t.y() + mid * std::sin(dir);
          if (signed_gap(prim, anchor) < gap)
            lo = mid;
          else
            hi = mid;
        }
        prim.pose_gt.t.x() = anchor.pose_gt.t.x() + hi * std::cos(dir);
        prim.pose_gt.t.y() = anchor.pose_gt.t.y() + hi * std::sin(dir);
      } else {
        const double ymax = lower_half ? b.center().y() : b.ymax - r;
        if (b.xmin + r >= b.xmax - r || b.ymin + r >= ymax) continue;
        prim.pose_gt.t.x() = uniform(b.xmin + r, b.xmax - r);
        prim.pose_gt.t.y() = uniform(b.ymin + r, ymax);
      }
      if (!fits_desk(prim, b)) continue;
      const double min_gap = pair_with_previous ? 0.002 : options.min_gap;
      bool clear = true;
      for (const auto& other : scene.primitives) {
        const double g = signed_gap(prim, other);
        const bool is_anchor = pair_with_previous && &other == &scene.primitives.back();
        if (g < (is_anchor ? 0.002 : min_gap)) {
          clear = false;
          break;
        }
      }
      placed = clear;
    }
    if (!placed)
      throw PlacementError("could not place object " + std::to_string(i) + " after " +
                           std::to_string(options.max_attempts) + " attempts (desk too crowded)");
    scene.primitives.push_back(prim);
  }
  scene.validate();
  return scene;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

ordered_json vec_json(const Vec3& v) { return ordered_json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const ordered_json& j, const std::string& what, int id) {
  if (!j.is_array() || j.size() != 3) throw ParseError("object " + std::to_string(id) + ": '" + what + "' must be a 3-array");
  Vec3 v;
  for (int i = 0; i < 3; ++i) {
    if (!j[i].is_number()) throw ParseError("object " + std::to_string(id) + ": '" + what + "' must be numeric");
    v[i] = j[i].get<double>();
  }
  return v;
}

}  // namespace

DeskScene parse_scene(const std::string& text) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("scene file is not valid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("format")) throw ParseError("scene file lacks a 'format' header");
  if (doc["format"] != 1) throw ParseError("unsupported scene format " + doc["format"].dump());

  DeskScene scene;
  try {
    scene.seed = doc.value("seed", std::uint64_t{0});
    const auto& desk = doc.at("desk");
    scene.desk_height = desk.at("height").get<double>();
    const auto& bounds = desk.at("bounds");
    scene.bounds = {bounds.at("xmin").get<double>(), bounds.at("ymin").get<double>(), bounds.at("xmax").get<double>(),
                    bounds.at("ymax").get<double>()};
    for (const auto& obj : doc.at("objects")) {
      ScenePrimitive p;
      p.id = obj.at("id").get<int>();
      p.label = obj.at("label").get<std::string>();
      p.shape = shape_from_string(obj.at("shape").get<std::string>());
      p.pose_gt.t = json_vec(obj.at("t"), "t", p.id);
      p.pose_gt.theta = json_vec(obj.at("theta"), "theta", p.id);
      p.pose_gt.s = json_vec(obj.at("s"), "s", p.id);
      scene.primitives.push_back(std::move(p));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed scene file: ") + e.what());
  }
  if (!(scene.bounds.xmax > scene.bounds.xmin && scene.bounds.ymax > scene.bounds.ymin))
    throw ParseError("desk bounds are empty");
  scene.validate();
  return scene;
}

std::string serialize_scene(const DeskScene& scene) {
  ordered_json doc;
  doc["format"] = 1;
  doc["seed"] = scene.seed;
  doc["desk"] = {{"height", scene.desk_height},
                 {"bounds",
                  {{"xmin", scene.bounds.xmin},
                   {"ymin", scene.bounds.ymin},
                   {"xmax", scene.bounds.xmax},
                   {"ymax", scene.bounds.ymax}}}};
  doc["objects"] = ordered_json::array();
  for (const auto& p : scene.primitives) {
    ordered_json o;
    o["id"] = p.id;
    o["label"] = p.label;
    o["shape"] = to_string(p.shape);
    o["t"] = vec_json(p.pose_gt.t);
    o["theta"] = vec_json(p.pose_gt.theta);
    o["s"] = vec_json(p.pose_gt.s);
    doc["objects"].push_back(std::move(o));
  }
  return doc.dump(2) + "\n";
}

DeskScene load_scene(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open scene file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scene(buf.str());
}

void save_scene(const std::filesystem::path& path, const DeskScene& scene) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write scene file " + path.string());
  out << serialize_scene(scene);
}

}  // namespace activemap
