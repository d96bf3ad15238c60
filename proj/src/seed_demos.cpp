#include "autoloop/seed_demos.hpp"

#include <algorithm>
#include <cmath>

#include "autoloop/error.hpp"

namespace autoloop {
namespace scripts {

using sim::SimObject;
using sim::WorldState;

void append_segment(std::vector<Waypoint>& path, const Vec3& to, int gripper) {
  if (path.empty()) {
    path.push_back({Pose::from_translation(to), gripper});
    return;
  }
  const Vec3 from = path.back().pose.translation();
  const int n = std::max(1, static_cast<int>(std::ceil((to - from).norm() / kScriptStep - 1e-9)));
  for (int i = 1; i <= n; ++i)
    path.push_back({Pose::from_translation(from + (to - from) * (static_cast<double>(i) / n)),
                    gripper});
}

namespace {

void start_at(std::vector<Waypoint>& path, const Vec3& p, int gripper) {
  path.push_back({Pose::from_translation(p), gripper});
}

double hover_for(const WorldState& w) {
  double h = kHoverHeight;
  for (const auto& [id, o] : w.objects) h = std::max(h, o.top() + 0.08);
  return h;
}

}  // namespace

std::vector<Waypoint> pick(const WorldState& w, int subject) {
  const SimObject& o = w.object(subject);
  const Vec3 g = o.grasp_point();
  const double hover = hover_for(w);
  std::vector<Waypoint> path;
  start_at(path, Vec3(g.x(), g.y(), hover), 0);
  append_segment(path, g + Vec3(0, 0, kGraspClearance), 0);
  path.push_back({path.back().pose, 1});
  append_segment(path, Vec3(g.x(), g.y(), hover), 1);
  return path;
}

std::vector<Waypoint> place(const WorldState& w, int subject, const Vec3& top_target) {
  (void)subject;
  const double hover = hover_for(w);
  std::vector<Waypoint> path;
  const Vec3 ee = w.ee_pose.translation();
  start_at(path, Vec3(ee.x(), ee.y(), std::max(ee.z(), hover)), 1);
  append_segment(path, Vec3(top_target.x(), top_target.y(), hover), 1);
  append_segment(path, top_target + Vec3(0, 0, kGraspClearance), 1);
  path.push_back({path.back().pose, 0});
  append_segment(path, Vec3(top_target.x(), top_target.y(), hover), 0);
  return path;
}

std::vector<Waypoint> transport(const WorldState& w, int subject, const Vec3& top_target) {
  std::vector<Waypoint> path = pick(w, subject);
  const double hover = hover_for(w);
  append_segment(path, Vec3(top_target.x(), top_target.y(), hover), 1);
  append_segment(path, top_target + Vec3(0, 0, kGraspClearance), 1);
  path.push_back({path.back().pose, 0});
  append_segment(path, Vec3(top_target.x(), top_target.y(), hover), 0);
  return path;
}

std::vector<Waypoint> push(const WorldState& w, int subject, double direction) {
  const SimObject& o = w.object(subject);
  const Vec3 c = o.pose.translation();
  const double hx = o.half_extents.x();
  const double approach = 0.15;
  const Vec3 behind(c.x() - direction * (hx + 0.03), c.y(), c.z());
  const Vec3 end(c.x() + direction * (kPushDistance - hx - sim::kPushMargin), c.y(), c.z());
  std::vector<Waypoint> path;
  start_at(path, Vec3(behind.x(), behind.y(), approach), 0);
  append_segment(path, behind, 0);
  append_segment(path, end, 0);
  append_segment(path, Vec3(end.x(), end.y(), approach), 0);
  return path;
}

std::vector<Waypoint> lid(const WorldState& w, int hinged, bool close) {
  const SimObject& o = w.object(hinged);
  const Vec3 c = o.pose.translation();
  const Vec3 hinge(c.x() - o.half_extents.x(), c.y(), o.top());
  const double len = 2.0 * o.half_extents.x();
  const auto arc = [&](double a) -> Vec3 { return hinge + len * Vec3(std::cos(a), 0.0, std::sin(a)); };
  const double from = close ? sim::kMaxLidAngle : 0.0;
  const double to = close ? 0.0 : sim::kMaxLidAngle;
  const Vec3 handle = arc(from);
  std::vector<Waypoint> path;
  start_at(path, handle + Vec3(0, 0, 0.09), 0);
  append_segment(path, handle, 0);
  path.push_back({path.back().pose, 1});
  const int n = 6;
  for (int i = 1; i <= n; ++i)
    path.push_back({Pose::from_translation(arc(from + (to - from) * i / n)), 1});
  path.push_back({path.back().pose, 0});
  append_segment(path, arc(to) + Vec3(0, 0, 0.09), 0);
  return path;
}

Vec3 top_target_on(const WorldState& w, int subject, int dest) {
  const SimObject& s = w.object(subject);
  const SimObject& d = w.object(dest);
  return {d.pose.translation().x(), d.pose.translation().y(),
          d.top() + 2.0 * s.half_extents.z()};
}

Vec3 top_target_in(const WorldState& w, int subject, const std::string& region) {
  const SimObject& s = w.object(subject);
  auto it = w.regions.find(region);
  if (it == w.regions.end()) throw InvariantError("unknown region '" + region + "'");
  return it->second.center(2.0 * s.half_extents.z());
}

}  // namespace scripts

Demonstration record_demonstration(sim::WorldState& w, const std::string& id, Verb verb,
                                   int subject, std::vector<int> object_ids,
                                   const std::vector<Waypoint>& path) {
  Demonstration d;
  d.id = id;
  d.skill_verb = verb;
  d.target = w.object(subject).descriptor;
  d.object_ids = std::move(object_ids);
  d.provenance = Provenance::kSeed;
  const std::set<int> mask(d.object_ids.begin(), d.object_ids.end());
  for (const auto& wp : path) {
    w = sim::apply_waypoint(w, wp.pose, wp.gripper);
    PointCloud cloud = sim::render_point_cloud(w, mask);
    std::erase_if(cloud.points, [](const LabeledPoint& p) { return p.object_id == sim::kTableId; });
    d.steps.push_back({downsample(cloud, kMaxStoredCloudPoints), w.ee_pose, w.gripper});
  }
  validate(d);
  return d;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw InvariantError("seed script failed: " + what);
}

sim::Predicate pred(sim::PredicateKind k, int s, std::optional<int> o = std::nullopt,
                    std::optional<std::string> r = std::nullopt) {
  return {k, s, o, std::move(r)};
}

}  // namespace

AffordanceLibrary record_seed_demos(const sim::SceneRegistry& registry, int per_skill,
                                    std::uint64_t seed) {
  using K = sim::PredicateKind;
  if (per_skill < 2 || per_skill > 5)
    throw InvariantError("per-skill demonstration count must be within 2..5");
  AffordanceLibrary lib;
  for (int i = 0; i < per_skill; ++i) {
    const std::uint64_t s = split_seed(seed, static_cast<std::uint64_t>(i));
    const std::string n = std::to_string(i);

    {  // pick + place into the tray
      const std::string tpl = i % 2 == 0 ? "grip_ball" : "large_container_block";
      auto w = sim::spawn_scene(registry, tpl, s);
      const int subject = 1;
      const int tray = *w.find("tray");
      const std::string tag = w.object(subject).descriptor.name;
      auto path = scripts::pick(w, subject);
      lib.append(record_demonstration(w, "seed-pick-" + n, Verb::kPick, subject, {subject}, path));
      require(sim::ground_truth(w, pred(K::kHeld, subject)), "pick " + tag);
      path = scripts::place(w, subject, scripts::top_target_on(w, subject, tray));
      lib.append(record_demonstration(w, "seed-place-" + n, Verb::kPlace, subject,
                                      {subject, tray}, path));
      require(sim::ground_truth(w, pred(K::kIn, subject, tray)), "place " + tag);
    }
    {  // push in, then back out
      auto w = sim::spawn_scene(registry, "push_block", s);
      const int block = 1;
      lib.append(record_demonstration(w, "seed-push_in-" + n, Verb::kPushIn, block, {block},
                                      scripts::push(w, block, +1.0)));
      require(sim::ground_truth(w, pred(K::kInRegion, block, std::nullopt, "white area")),
              "push_in");
      lib.append(record_demonstration(w, "seed-push_out-" + n, Verb::kPushOut, block, {block},
                                      scripts::push(w, block, -1.0)));
      require(!sim::ground_truth(w, pred(K::kInRegion, block, std::nullopt, "white area")),
              "push_out");
    }
    {  // stack, then unstack to the home zone
      auto w = sim::spawn_scene(registry, "stack_block", s);
      const int red = *w.find("red block");
      const int yellow = *w.find("yellow block");
      lib.append(record_demonstration(
          w, "seed-stack-" + n, Verb::kStack, red, {red, yellow},
          scripts::transport(w, red, scripts::top_target_on(w, red, yellow))));
      require(sim::ground_truth(w, pred(K::kStackedOn, red, yellow)), "stack");
      lib.append(record_demonstration(
          w, "seed-unstack-" + n, Verb::kUnstack, red, {red, yellow},
          scripts::transport(w, red, scripts::top_target_in(w, red, "red zone"))));
      require(sim::ground_truth(w, pred(K::kOn, red, sim::kTableId)), "unstack");
    }
    {  // close, then open
      auto w = sim::spawn_scene(registry, "close_box", s);
      const int box = *w.find("box");
      lib.append(record_demonstration(w, "seed-close-" + n, Verb::kClose, box, {box},
                                      scripts::lid(w, box, true)));
      require(sim::ground_truth(w, pred(K::kClosed, box)), "close");
      lib.append(record_demonstration(w, "seed-open-" + n, Verb::kOpen, box, {box},
                                      scripts::lid(w, box, false)));
      require(sim::ground_truth(w, pred(K::kOpen, box)), "open");
    }
  }
  return lib;
}

}  // namespace autoloop
