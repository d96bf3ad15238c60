#include "autoloop/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "autoloop/codec.hpp"
#include "autoloop/error.hpp"

namespace autoloop::sim {
namespace {

bool has_tag(const ObjectTemplate& t, const std::string& tag) {
  return std::find(t.initial_tags.begin(), t.initial_tags.end(), tag) != t.initial_tags.end();
}

std::optional<std::string> tag_value(const ObjectTemplate& t, const std::string& prefix) {
  for (const auto& tag : t.initial_tags)
    if (tag.rfind(prefix, 0) == 0) return tag.substr(prefix.size());
  return std::nullopt;
}

bool footprint_contains(const SimObject& o, double x, double y) {
  const Vec3& c = o.pose.translation();
  return std::abs(x - c.x()) <= o.half_extents.x() && std::abs(y - c.y()) <= o.half_extents.y();
}

// True if `id` rests (directly or transitively) on `ancestor`.
bool rests_on(const WorldState& w, int id, int ancestor) {
  int cur = w.object(id).support_id;
  for (std::size_t guard = 0; guard <= w.objects.size() && cur > 0; ++guard) {
    if (cur == ancestor) return true;
    cur = w.object(cur).support_id;
  }
  return false;
}

std::vector<int> descendants(const WorldState& w, int id) {
  std::vector<int> out;
  for (const auto& [oid, o] : w.objects)
    if (oid != id && !o.held && rests_on(w, oid, id)) out.push_back(oid);
  return out;
}

void translate_with_descendants(WorldState& w, int id, const Vec3& delta) {
  for (int d : descendants(w, id)) {
    SimObject& o = w.object(d);
    o.pose = Pose(o.pose.translation() + delta, o.pose.rotation());
  }
  SimObject& o = w.object(id);
  o.pose = Pose(o.pose.translation() + delta, o.pose.rotation());
}

// Drops `id` onto the topmost support under its center.
void settle(WorldState& w, int id) {
  const SimObject& obj = w.object(id);
  const Vec3 c = obj.pose.translation();
  const std::vector<int> desc = descendants(w, id);
  int support = kTableId;
  double top = 0.0;
  for (const auto& [oid, o] : w.objects) {
    if (oid == id || o.held) continue;
    if (std::find(desc.begin(), desc.end(), oid) != desc.end()) continue;
    if (!footprint_contains(o, c.x(), c.y())) continue;
    if (o.top() > top || (o.top() == top && support == kTableId)) {
      top = o.top();
      support = oid;
    }
  }
  const double dz = top + obj.half_extents.z() - c.z();
  translate_with_descendants(w, id, Vec3(0, 0, dz));
  w.object(id).support_id = support;
}

void drop_children(WorldState& w, int id) {
  std::vector<int> children;
  for (const auto& [oid, o] : w.objects)
    if (!o.held && o.support_id == id) children.push_back(oid);
  for (int c : children) {
    w.object(c).support_id = kTableId;
    settle(w, c);
  }
}

void check_workspace(const Vec3& p, const WorkspaceBounds& b) {
  for (int i = 0; i < 3; ++i) {
    if (!(p[i] >= b.min[i] && p[i] <= b.max[i])) {
      std::ostringstream os;
      os << "waypoint (" << p.x() << ", " << p.y() << ", " << p.z()
         << ") outside workspace bounds";
      throw WorkspaceViolation(os.str());
    }
  }
}

// Distance the object must travel along `dir` (unit, horizontal) so that the
// end-effector, sweeping from `from` to `to`, ends outside its footprint
// expanded by the push margin. Empty if the sweep never touches it.
std::optional<double> push_distance(const SimObject& o, const Vec3& from, const Vec3& to,
                                    const Vec3& dir) {
  if (!(to.z() > o.bottom() && to.z() < o.top())) return std::nullopt;
  const Vec3 c = o.pose.translation();
  const double e[2] = {o.half_extents.x() + kPushMargin, o.half_extents.y() + kPushMargin};
  // Slab test of the horizontal sweep against the expanded footprint.
  double t0 = 0.0, t1 = 1.0;
  for (int i = 0; i < 2; ++i) {
    const double a = from[i] - c[i];
    const double d = to[i] - from[i];
    if (std::abs(d) < 1e-15) {
      if (std::abs(a) >= e[i]) return std::nullopt;
      continue;
    }
    double lo = (-e[i] - a) / d, hi = (e[i] - a) / d;
    if (lo > hi) std::swap(lo, hi);
    t0 = std::max(t0, lo);
    t1 = std::min(t1, hi);
  }
  if (!(t0 < t1)) return std::nullopt;
  const Vec3 r = to - c;
  double s = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 2; ++i) {
    if (dir[i] > 1e-12) s = std::min(s, (r[i] + e[i]) / dir[i]);
    else if (dir[i] < -1e-12) s = std::min(s, (r[i] - e[i]) / dir[i]);
  }
  if (!std::isfinite(s) || s <= 0.0) return std::nullopt;
  return s;
}

}  // namespace

const SimObject& WorldState::object(int id) const {
  auto it = objects.find(id);
  if (it == objects.end()) throw InvariantError("unknown object id " + std::to_string(id));
  return it->second;
}

SimObject& WorldState::object(int id) {
  auto it = objects.find(id);
  if (it == objects.end()) throw InvariantError("unknown object id " + std::to_string(id));
  return it->second;
}

std::optional<int> WorldState::find(const std::string& name) const {
  for (const auto& [id, o] : objects)
    if (o.descriptor.name == name) return id;
  return std::nullopt;
}

Vec3 handle_position(const SimObject& o) {
  const Vec3& c = o.pose.translation();
  const Vec3 hinge(c.x() - o.half_extents.x(), c.y(), o.top());
  const double len = 2.0 * o.half_extents.x();
  return hinge + len * Vec3(std::cos(o.lid_angle), 0.0, std::sin(o.lid_angle));
}

// ---------------------------------------------------------------------------
// Registry

const SceneTemplate& SceneRegistry::get(const std::string& name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw UnknownTemplate("unknown scene template '" + name + "'");
  return it->second;
}

std::vector<std::string> SceneRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [n, _] : templates_) out.push_back(n);
  return out;
}

void SceneRegistry::add(SceneTemplate t) {
  std::string name = t.name;
  templates_[name] = std::move(t);
}

SceneRegistry SceneRegistry::from_json(const std::string& text) {
  using codec::json;
  SceneRegistry reg;
  const auto bounds = [](const json& b) {
    if (!b.is_array() || b.size() != 4) throw ParseError("bounds must be [xmin,xmax,ymin,ymax]");
    Bounds2 out{b[0].get<double>(), b[1].get<double>(), b[2].get<double>(), b[3].get<double>()};
    if (out.xmin > out.xmax || out.ymin > out.ymax) throw ParseError("inverted bounds");
    return out;
  };
  try {
    const json root = json::parse(text);
    codec::check_fields(root, {"templates"});
    long index = 0;
    for (const auto& jt : root.at("templates")) {
      try {
        codec::check_fields(jt, {"template_name", "objects", "regions"});
        SceneTemplate t;
        t.name = codec::get<std::string>(jt, "template_name");
        for (const auto& jr : jt.at("regions")) {
          codec::check_fields(jr, {"name", "bounds"});
          t.regions[codec::get<std::string>(jr, "name")] = bounds(jr.at("bounds"));
        }
        for (const auto& jo : jt.at("objects")) {
          codec::check_fields(jo, {"name", "shape", "half_extents", "spawn_region"},
                              {"initial_tags"});
          ObjectTemplate o;
          o.name = codec::get<std::string>(jo, "name");
          o.shape = parse_shape(codec::get<std::string>(jo, "shape"));
          o.half_extents = codec::decode_vec3(jo.at("half_extents"));
          o.spawn_region = bounds(jo.at("spawn_region"));
          if (jo.contains("initial_tags"))
            o.initial_tags = codec::get<std::vector<std::string>>(jo, "initial_tags");
          t.objects.push_back(std::move(o));
        }
        reg.add(std::move(t));
      } catch (const ParseError& e) {
        throw ParseError(e.what(), index);
      }
      ++index;
    }
  } catch (const codec::json::exception& e) {
    throw ParseError(std::string("scene registry: ") + e.what());
  }
  return reg;
}

SceneRegistry SceneRegistry::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scene registry " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json(ss.str());
}

const SceneRegistry& SceneRegistry::builtin() {
  static const SceneRegistry reg = from_json(builtin_registry_json());
  return reg;
}

// ---------------------------------------------------------------------------
// Operations

WorldState spawn_scene(const SceneRegistry& registry, const std::string& template_name,
                       std::uint64_t seed) {
  const SceneTemplate& t = registry.get(template_name);
  WorldState w;
  w.template_name = t.name;
  w.regions = t.regions;
  w.rng_seed = seed;
  w.ee_pose = Pose::from_translation(0.3, 0.0, 0.4);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  int next_id = 1;
  for (const auto& ot : t.objects) {
    SimObject o;
    o.id = next_id++;
    o.descriptor = {ot.name, ot.shape};
    o.half_extents = ot.half_extents;
    o.hinged = ot.shape == Shape::kArticulated || has_tag(ot, "hinged");
    o.container = has_tag(ot, "container");
    o.graspable = !(o.hinged || o.container || has_tag(ot, "fixed"));
    o.distractor = has_tag(ot, "distractor");
    o.home_region = tag_value(ot, "home:").value_or("");
    if (!o.home_region.empty() && !w.regions.count(o.home_region))
      throw InvariantError("template '" + t.name + "': unknown home region '" +
                           o.home_region + "'");
    if (o.hinged) o.lid_angle = has_tag(ot, "open") ? kMaxLidAngle : 0.0;

    if (auto on = tag_value(ot, "on:")) {
      auto sid = w.find(*on);
      if (!sid) throw InvariantError("template '" + t.name + "': '" + ot.name +
                                     "' rests on unknown object '" + *on + "'");
      const SimObject& s = w.object(*sid);
      o.pose = Pose::from_translation(s.pose.translation().x(), s.pose.translation().y(),
                                      s.top() + o.half_extents.z());
      o.support_id = *sid;
      w.objects.emplace(o.id, o);
      continue;
    }

    bool placed = false;
    for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
      const double x = ot.spawn_region.xmin + unit(rng) * (ot.spawn_region.xmax - ot.spawn_region.xmin);
      const double y = ot.spawn_region.ymin + unit(rng) * (ot.spawn_region.ymax - ot.spawn_region.ymin);
      bool overlap = false;
      for (const auto& [oid, other] : w.objects) {
        if (other.support_id != kTableId) continue;
        const Vec3& c = other.pose.translation();
        if (std::abs(c.x() - x) < other.half_extents.x() + o.half_extents.x() + 0.005 &&
            std::abs(c.y() - y) < other.half_extents.y() + o.half_extents.y() + 0.005) {
          overlap = true;
          break;
        }
      }
      if (overlap) continue;
      o.pose = Pose::from_translation(x, y, o.half_extents.z());
      o.support_id = kTableId;
      placed = true;
    }
    if (!placed)
      throw InvariantError("template '" + t.name + "': could not place '" + ot.name +
                           "' without overlap after 100 attempts");
    w.objects.emplace(o.id, o);
  }
  return w;
}

WorldState apply_waypoint(const WorldState& in, const Pose& target_ee, int gripper,
                          const WorkspaceBounds& bounds) {
  if (gripper != 0 && gripper != 1) throw InvariantError("gripper command must be 0 or 1");
  check_workspace(target_ee.translation(), bounds);
  WorldState w = in;
  const Vec3 prev = w.ee_pose.translation();
  const Vec3 target = target_ee.translation();
  w.ee_pose = target_ee;

  // Lid follows an engaged, closed gripper along its arc.
  if (w.engaged_lid && in.gripper == 1) {
    SimObject& lid = w.object(*w.engaged_lid);
    const Vec3& c = lid.pose.translation();
    const double dx = target.x() - (c.x() - lid.half_extents.x());
    const double dz = target.z() - lid.top();
    lid.lid_angle = std::clamp(std::atan2(dz, dx), 0.0, kMaxLidAngle);
  }

  if (w.held_object) {
    SimObject& h = w.object(*w.held_object);
    h.pose = compose(w.ee_pose, w.held_offset);
  }

  Vec3 motion = target - prev;
  motion.z() = 0.0;
  if (motion.norm() > 1e-9) {
    const Vec3 dir = motion.normalized();
    std::vector<int> ids;
    for (const auto& [id, o] : w.objects) ids.push_back(id);
    for (int id : ids) {
      const SimObject& o = w.object(id);
      if (o.held || (w.engaged_lid && *w.engaged_lid == id)) continue;
      // fingers at the handle touch the lid, not the body
      if (o.hinged && std::min((handle_position(o) - prev).norm(), (handle_position(o) - target).norm()) <=
                          kHandleTolerance)
        continue;
      const Vec3 to_obj = o.pose.translation() - prev;
      if (dir.dot(Vec3(to_obj.x(), to_obj.y(), 0.0)) <= 0.0) continue;
      if (auto s = push_distance(o, prev, target, dir)) translate_with_descendants(w, id, *s * dir);
    }
  }

  if (in.gripper == 0 && gripper == 1) {
    std::optional<int> lid;
    std::optional<int> grasp;
    double best_lid = kHandleTolerance, best_grasp = kGraspTolerance;
    for (const auto& [id, o] : w.objects) {
      if (o.hinged) {
        const double d = (handle_position(o) - target).norm();
        if (d <= best_lid) {
          best_lid = d;
          lid = id;
        }
      } else if (o.graspable && !o.held) {
        const double d = (o.grasp_point() - target).norm();
        if (d <= best_grasp) {
          best_grasp = d;
          grasp = id;
        }
      }
    }
    if (lid) {
      w.engaged_lid = lid;
    } else if (grasp) {
      SimObject& o = w.object(*grasp);
      drop_children(w, *grasp);
      o.held = true;
      o.support_id = kHeldSupport;
      w.held_object = grasp;
      w.held_offset = compose(invert(w.ee_pose), o.pose);
    }
  } else if (in.gripper == 1 && gripper == 0) {
    w.engaged_lid.reset();
    if (w.held_object) {
      const int id = *w.held_object;
      w.held_object.reset();
      w.held_offset = Pose::identity();
      SimObject& o = w.object(id);
      o.held = false;
      o.support_id = kTableId;
      settle(w, id);
    }
  }
  w.gripper = gripper;
  return w;
}

namespace {

// Area-weighted uniform samples on the surface of an axis-aligned box.
void sample_box_surface(const SimObject& o, Rng& rng, int n, std::vector<LabeledPoint>& out) {
  const Vec3& h = o.half_extents;
  const double areas[3] = {h.y() * h.z(), h.x() * h.z(), h.x() * h.y()};
  const double total = areas[0] + areas[1] + areas[2];
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    const double pick = unit(rng) * total;
    const int axis = pick < areas[0] ? 0 : (pick < areas[0] + areas[1] ? 1 : 2);
    const double sign = unit(rng) < 0.5 ? -1.0 : 1.0;
    Vec3 local;
    for (int k = 0; k < 3; ++k) local[k] = (2.0 * unit(rng) - 1.0) * h[k];
    local[axis] = sign * h[axis];
    out.push_back({o.pose.apply(local), o.id});
  }
}

}  // namespace

PointCloud render_point_cloud(const WorldState& w, const std::optional<std::set<int>>& mask) {
  if (mask) {
    for (int id : *mask)
      if (!w.objects.count(id))
        throw InvariantError("mask references unknown object id " + std::to_string(id));
  }
  PointCloud cloud;
  {
    Rng rng(split_seed(w.rng_seed, 0));
    std::uniform_real_distribution<double> ux(kTableBounds.xmin, kTableBounds.xmax);
    std::uniform_real_distribution<double> uy(kTableBounds.ymin, kTableBounds.ymax);
    for (int i = 0; i < kPointsPerObject; ++i) {
      const double x = ux(rng);
      const double y = uy(rng);
      cloud.points.push_back({Vec3(x, y, 0.0), kTableId});
    }
  }
  for (const auto& [id, o] : w.objects) {
    if (mask && !mask->count(id)) continue;
    Rng rng(split_seed(w.rng_seed, static_cast<std::uint64_t>(id)));
    sample_box_surface(o, rng, kPointsPerObject, cloud.points);
  }
  return cloud;
}

// ---------------------------------------------------------------------------
// Predicates

std::string_view to_string(PredicateKind k) {
  switch (k) {
    case PredicateKind::kOn: return "on";
    case PredicateKind::kIn: return "in";
    case PredicateKind::kHeld: return "held";
    case PredicateKind::kOpen: return "open";
    case PredicateKind::kClosed: return "closed";
    case PredicateKind::kStackedOn: return "stacked_on";
    case PredicateKind::kInRegion: return "in_region";
  }
  return "";
}

PredicateKind parse_predicate_kind(std::string_view s) {
  for (auto k : {PredicateKind::kOn, PredicateKind::kIn, PredicateKind::kHeld,
                 PredicateKind::kOpen, PredicateKind::kClosed, PredicateKind::kStackedOn,
                 PredicateKind::kInRegion})
    if (to_string(k) == s) return k;
  throw ParseError("unknown predicate kind '" + std::string(s) + "'");
}

bool ground_truth(const WorldState& w, const Predicate& p) {
  const SimObject& s = w.object(p.subject);
  const auto need_object = [&]() -> const SimObject* {
    if (!p.object) throw InvariantError(std::string(to_string(p.kind)) + " needs an object");
    if (*p.object == kTableId) return nullptr;
    return &w.object(*p.object);
  };
  switch (p.kind) {
    case PredicateKind::kHeld:
      return w.held_object && *w.held_object == p.subject;
    case PredicateKind::kOpen:
      return s.hinged && s.lid_angle > kOpenThreshold;
    case PredicateKind::kClosed:
      return s.hinged && s.lid_angle < kClosedThreshold;
    case PredicateKind::kOn: {
      need_object();
      return !s.held && s.support_id == *p.object;
    }
    case PredicateKind::kStackedOn: {
      const SimObject* o = need_object();
      if (!o || s.held || s.support_id != o->id) return false;
      const Vec3 d = s.pose.translation() - o->pose.translation();
      const double offset = std::hypot(d.x(), d.y());
      return offset < std::min(s.half_extents.x(), s.half_extents.y());
    }
    case PredicateKind::kIn: {
      const SimObject* o = need_object();
      if (!o) return false;
      const Vec3& c = s.pose.translation();
      return footprint_contains(*o, c.x(), c.y()) && c.z() >= o->bottom() &&
             c.z() <= o->top() + kContainerWallHeight;
    }
    case PredicateKind::kInRegion: {
      if (!p.region) throw InvariantError("in_region needs a region");
      auto it = w.regions.find(*p.region);
      if (it == w.regions.end()) throw InvariantError("unknown region '" + *p.region + "'");
      const Vec3& c = s.pose.translation();
      return !s.held && it->second.contains(c.x(), c.y());
    }
  }
  return false;
}

std::vector<std::pair<Predicate, bool>> all_predicates(const WorldState& w) {
  std::vector<std::pair<Predicate, bool>> out;
  const auto add = [&](Predicate p) { out.emplace_back(p, ground_truth(w, p)); };
  for (const auto& [id, o] : w.objects) {
    add({PredicateKind::kHeld, id, std::nullopt, std::nullopt});
    if (o.hinged) {
      add({PredicateKind::kOpen, id, std::nullopt, std::nullopt});
      add({PredicateKind::kClosed, id, std::nullopt, std::nullopt});
    }
    add({PredicateKind::kOn, id, kTableId, std::nullopt});
    for (const auto& [oid, other] : w.objects) {
      if (oid == id) continue;
      add({PredicateKind::kOn, id, oid, std::nullopt});
      add({PredicateKind::kStackedOn, id, oid, std::nullopt});
      if (other.container) add({PredicateKind::kIn, id, oid, std::nullopt});
    }
    for (const auto& [name, _] : w.regions)
      add({PredicateKind::kInRegion, id, std::nullopt, name});
  }
  return out;
}

SceneDescription describe_scene(const WorldState& w) {
  SceneDescription d;
  for (const auto& [name, _] : w.regions) d.regions.push_back(name);
  for (const auto& [id, o] : w.objects) {
    SceneEntry e{id, o.descriptor.name, o.descriptor.shape, o.pose.translation(), {}};
    if (o.held) e.tags.push_back("held");
    if (o.container) e.tags.push_back("container");
    if (o.hinged) e.tags.push_back("hinged");
    if (o.distractor) e.tags.push_back("distractor");
    if (o.hinged) {
      if (ground_truth(w, {PredicateKind::kOpen, id, std::nullopt, std::nullopt}))
        e.tags.push_back("open");
      if (ground_truth(w, {PredicateKind::kClosed, id, std::nullopt, std::nullopt}))
        e.tags.push_back("closed");
    }
    if (!o.held) {
      e.tags.push_back("on:" + (o.support_id == kTableId
                                    ? std::string("table")
                                    : w.object(o.support_id).descriptor.name));
    }
    for (const auto& [oid, other] : w.objects) {
      if (oid == id) continue;
      if (other.container && ground_truth(w, {PredicateKind::kIn, id, oid, std::nullopt}))
        e.tags.push_back("in:" + other.descriptor.name);
      if (ground_truth(w, {PredicateKind::kStackedOn, id, oid, std::nullopt}))
        e.tags.push_back("stacked_on:" + other.descriptor.name);
    }
    for (const auto& [name, _] : w.regions)
      if (ground_truth(w, {PredicateKind::kInRegion, id, std::nullopt, name}))
        e.tags.push_back("in_region:" + name);
    d.objects.push_back(std::move(e));
  }
  return d;
}

const SceneEntry* SceneDescription::find(int id) const {
  for (const auto& e : objects)
    if (e.id == id) return &e;
  return nullptr;
}

const SceneEntry* SceneDescription::find(const std::string& name) const {
  for (const auto& e : objects)
    if (e.name == name) return &e;
  return nullptr;
}

bool SceneDescription::has_tag(int id, const std::string& tag) const {
  const SceneEntry* e = find(id);
  return e && std::find(e->tags.begin(), e->tags.end(), tag) != e->tags.end();
}

// ---------------------------------------------------------------------------
// Perturbation

WorldState apply_perturbation(const WorldState& in, const PerturbationEvent& e) {
  WorldState w = in;
  SimObject& o = w.object(e.object_id);
  if (o.held) throw InvariantError("cannot perturb a held object");
  const Vec3 c = o.pose.translation();
  Vec3 target = c + Vec3(e.displacement.x(), e.displacement.y(), 0.0);
  target.x() = std::clamp(target.x(), kTableBounds.xmin, kTableBounds.xmax);
  target.y() = std::clamp(target.y(), kTableBounds.ymin, kTableBounds.ymax);
  translate_with_descendants(w, e.object_id, target - c);
  w.object(e.object_id).support_id = kTableId;
  settle(w, e.object_id);
  return w;
}

WorldState inject_perturbation(const WorldState& w, const PerturbationConfig& cfg, Rng& rng,
                               std::optional<PerturbationEvent>* event) {
  if (!(cfg.p_perturb >= 0.0 && cfg.p_perturb <= 1.0))
    throw InvariantError("p_perturb must lie in [0, 1]");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 1.0);
  // Fixed number of draws per call keeps the stream aligned across configs.
  const double u = unit(rng);
  const double pick = unit(rng);
  const double dx = normal(rng) * cfg.sigma_t;
  const double dy = normal(rng) * cfg.sigma_t;
  if (event) event->reset();
  if (u >= cfg.p_perturb) return w;
  std::vector<int> candidates;
  for (const auto& [id, o] : w.objects)
    if (!o.held) candidates.push_back(id);
  if (candidates.empty()) return w;
  const auto idx = std::min(candidates.size() - 1,
                            static_cast<std::size_t>(pick * candidates.size()));
  PerturbationEvent e{candidates[idx], Vec3(dx, dy, 0.0)};
  if (event) *event = e;
  return apply_perturbation(w, e);
}

}  // namespace autoloop::sim
