#include <doctest.h>

#include <cmath>
#include <numbers>

#include "autoloop/error.hpp"
#include "autoloop/seed_demos.hpp"
#include "autoloop/sim.hpp"

using namespace autoloop;
using namespace autoloop::sim;

namespace {

const SceneRegistry& reg() { return SceneRegistry::builtin(); }

WorldState run(WorldState w, const std::vector<Waypoint>& path) {
  for (const auto& wp : path) w = apply_waypoint(w, wp.pose, wp.gripper);
  return w;
}

Predicate held(int s) { return {PredicateKind::kHeld, s, std::nullopt, std::nullopt}; }
Predicate on(int s, int o) { return {PredicateKind::kOn, s, o, std::nullopt}; }
Predicate in_region(int s, const std::string& r) { return {PredicateKind::kInRegion, s, std::nullopt, r}; }

}  // namespace

TEST_CASE("spawn is deterministic per seed") {
  for (const auto& name : reg().names()) {
    CAPTURE(name);
    const auto a = spawn_scene(reg(), name, 17);
    const auto b = spawn_scene(reg(), name, 17);
    CHECK(a == b);
    CHECK(render_point_cloud(a).points == render_point_cloud(b).points);
  }
  const auto a = spawn_scene(reg(), "push_block", 1);
  const auto b = spawn_scene(reg(), "push_block", 2);
  CHECK_FALSE(a == b);
}

TEST_CASE("unknown template") {
  CHECK_THROWS_AS(spawn_scene(reg(), "juggle_knives", 0), UnknownTemplate);
}

TEST_CASE("spawned objects rest on supports inside table bounds") {
  for (const auto& name : reg().names()) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto w = spawn_scene(reg(), name, seed);
      for (const auto& [id, o] : w.objects) {
        const Vec3& c = o.pose.translation();
        CHECK(kTableBounds.contains(c.x(), c.y()));
        const double support_top = o.support_id == kTableId ? 0.0 : w.object(o.support_id).top();
        CHECK(o.bottom() == doctest::Approx(support_top));
      }
    }
  }
}

TEST_CASE("pick attaches the object and it follows the end-effector") {
  auto w = spawn_scene(reg(), "grip_ball", 3);
  const int ball = *w.find("grip ball");
  w = run(w, scripts::pick(w, ball));
  REQUIRE(ground_truth(w, held(ball)));
  const Vec3 before = w.object(ball).pose.translation() - w.ee_pose.translation();
  w = apply_waypoint(w, Pose::from_translation(0.4, 0.1, 0.3), 1);
  const Vec3 after = w.object(ball).pose.translation() - w.ee_pose.translation();
  CHECK((before - after).norm() < 1e-12);
  w = apply_waypoint(w, w.ee_pose, 0);
  CHECK_FALSE(ground_truth(w, held(ball)));
  CHECK(ground_truth(w, on(ball, kTableId)));
  CHECK(w.object(ball).bottom() == doctest::Approx(0.0));
}

TEST_CASE("grasp outside tolerance does nothing") {
  auto w = spawn_scene(reg(), "grip_ball", 3);
  const int ball = *w.find("grip ball");
  const Vec3 g = w.object(ball).grasp_point();
  w = apply_waypoint(w, Pose::from_translation(g + Vec3(0, 0, 0.05)), 0);
  w = apply_waypoint(w, w.ee_pose, 1);
  CHECK_FALSE(ground_truth(w, held(ball)));
}

TEST_CASE("workspace violation") {
  auto w = spawn_scene(reg(), "grip_ball", 3);
  CHECK_THROWS_AS(apply_waypoint(w, Pose::from_translation(0.3, 0.0, 1.5), 0),
                  WorkspaceViolation);
  CHECK_THROWS_AS(apply_waypoint(w, Pose::from_translation(0.3, 0.0, 0.2), 2), InvariantError);
}

TEST_CASE("scripted lid trajectory opens and closes the box") {
  auto w = spawn_scene(reg(), "close_box", 5);
  const int box = *w.find("box");
  CHECK(ground_truth(w, {PredicateKind::kOpen, box, std::nullopt, std::nullopt}));
  w = run(w, scripts::lid(w, box, true));
  CHECK(w.object(box).lid_angle < kClosedThreshold);
  CHECK(ground_truth(w, {PredicateKind::kClosed, box, std::nullopt, std::nullopt}));
  w = run(w, scripts::lid(w, box, false));
  CHECK(w.object(box).lid_angle > kOpenThreshold);
  CHECK(ground_truth(w, {PredicateKind::kOpen, box, std::nullopt, std::nullopt}));
}

TEST_CASE("lid angles between the thresholds are neither open nor closed") {
  auto w = spawn_scene(reg(), "close_box", 5);
  const int box = *w.find("box");
  w.object(box).lid_angle = 30.0 * std::numbers::pi / 180.0;
  CHECK_FALSE(ground_truth(w, {PredicateKind::kOpen, box, std::nullopt, std::nullopt}));
  CHECK_FALSE(ground_truth(w, {PredicateKind::kClosed, box, std::nullopt, std::nullopt}));
  const auto d = describe_scene(w);
  CHECK_FALSE(d.has_tag(box, "open"));
  CHECK_FALSE(d.has_tag(box, "closed"));
}

TEST_CASE("jitter at a lid handle does not shove the box") {
  auto w = spawn_scene(reg(), "open_box", 5);
  const int box = *w.find("box");
  const Vec3 c0 = w.object(box).pose.translation();
  const Vec3 h = handle_position(w.object(box));
  w = apply_waypoint(w, Pose::from_translation(h + Vec3(0.0, 0.0, 0.05)), 0);
  w = apply_waypoint(w, Pose::from_translation(h + Vec3(0.0005, 0.0007, -0.0003)), 0);
  w = apply_waypoint(w, Pose::from_translation(h + Vec3(-0.0017, 0.0, -0.0003)), 0);
  CHECK((w.object(box).pose.translation() - c0).norm() == 0.0);
  // the body itself still gets pushed
  const Vec3 side = c0 + Vec3(0.0, 0.2, 0.0);
  w = apply_waypoint(w, Pose::from_translation(Vec3(side.x(), side.y(), 0.3)), 0);
  w = apply_waypoint(w, Pose::from_translation(side), 0);
  w = apply_waypoint(w, Pose::from_translation(c0 - Vec3(0.0, 0.05, 0.0)), 0);
  CHECK(w.object(box).pose.translation().y() < c0.y() - 0.01);
}

TEST_CASE("push moves the block into and out of the region") {
  auto w = spawn_scene(reg(), "push_block", 9);
  const int block = *w.find("yellow block");
  const double x0 = w.object(block).pose.translation().x();
  w = run(w, scripts::push(w, block, +1.0));
  CHECK(w.object(block).pose.translation().x() == doctest::Approx(x0 + 0.3).epsilon(1e-9));
  CHECK(ground_truth(w, in_region(block, "white area")));
  w = run(w, scripts::push(w, block, -1.0));
  CHECK_FALSE(ground_truth(w, in_region(block, "white area")));
}

TEST_CASE("a large single step still pushes (no tunnelling)") {
  auto w = spawn_scene(reg(), "push_block", 9);
  const int block = *w.find("yellow block");
  const Vec3 c = w.object(block).pose.translation();
  w = apply_waypoint(w, Pose::from_translation(c.x() - 0.1, c.y(), c.z()), 0);
  w = apply_waypoint(w, Pose::from_translation(c.x() + 0.3, c.y(), c.z()), 0);
  CHECK(w.object(block).pose.translation().x() > c.x() + 0.3);
}

TEST_CASE("stack and carry the stack along") {
  auto w = spawn_scene(reg(), "stack_block", 4);
  const int red = *w.find("red block");
  const int yellow = *w.find("yellow block");
  w = run(w, scripts::transport(w, red, scripts::top_target_on(w, red, yellow)));
  CHECK(ground_truth(w, {PredicateKind::kStackedOn, red, yellow, std::nullopt}));
  CHECK(describe_scene(w).has_tag(red, "stacked_on:yellow block"));
  // Pushing the bottom block carries the top one.
  const Vec3 before = w.object(red).pose.translation();
  PerturbationEvent e{yellow, Vec3(0.05, 0.0, 0.0)};
  w = apply_perturbation(w, e);
  CHECK((w.object(red).pose.translation() - before - Vec3(0.05, 0, 0)).norm() < 1e-12);
  CHECK(ground_truth(w, {PredicateKind::kStackedOn, red, yellow, std::nullopt}));
}

TEST_CASE("masked rendering contains only the requested labels plus the table") {
  const auto w = spawn_scene(reg(), "push_block_distractors", 2);
  const int block = *w.find("yellow block");
  const auto cloud = render_point_cloud(w, std::set<int>{block});
  for (const auto& p : cloud.points) CHECK((p.object_id == block || p.object_id == kTableId));
  // Same per-object samples with or without the mask.
  const auto full = render_point_cloud(w);
  std::vector<Vec3> a, b;
  for (const auto& p : cloud.points) if (p.object_id == block) a.push_back(p.position);
  for (const auto& p : full.points) if (p.object_id == block) b.push_back(p.position);
  CHECK(a == b);
  CHECK(a.size() == static_cast<std::size_t>(kPointsPerObject));
  CHECK_THROWS_AS(render_point_cloud(w, std::set<int>{42}), InvariantError);
}

TEST_CASE("scene description tags") {
  auto w = spawn_scene(reg(), "laptop_cup_tray", 8);
  const auto d = describe_scene(w);
  const int cup = *w.find("cup");
  CHECK(d.has_tag(cup, "on:table"));
  CHECK(d.has_tag(cup, "in_region:cup zone"));
  CHECK_FALSE(d.has_tag(cup, "in:tray"));
  w = run(w, scripts::transport(w, cup, scripts::top_target_on(w, cup, *w.find("tray"))));
  CHECK(describe_scene(w).has_tag(cup, "in:tray"));
  CHECK(describe_scene(w).has_tag(cup, "on:tray"));
}

TEST_CASE("perturbation edge cases") {
  const auto w = spawn_scene(reg(), "push_stack", 1);
  Rng rng(5);
  CHECK(inject_perturbation(w, {0.0, 0.05}, rng) == w);
  CHECK(inject_perturbation(w, {1.0, 0.0}, rng) == w);
  CHECK_THROWS_AS(inject_perturbation(w, {1.5, 0.05}, rng), InvariantError);
}

TEST_CASE("perturbation displacement matches the half-normal mean") {
  const auto w = spawn_scene(reg(), "push_block", 1);
  Rng rng(123);
  const double sigma = 0.05;
  double sx = 0, sy = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    std::optional<PerturbationEvent> e;
    inject_perturbation(w, {1.0, sigma}, rng, &e);
    REQUIRE(e.has_value());
    sx += std::abs(e->displacement.x());
    sy += std::abs(e->displacement.y());
  }
  const double expected = sigma * std::sqrt(2.0 / std::numbers::pi);
  CHECK(std::abs(sx / n - expected) < 0.1 * expected);
  CHECK(std::abs(sy / n - expected) < 0.1 * expected);
}

TEST_CASE("property: random waypoints keep supports consistent and objects conserved") {
  Rng rng(77);
  std::uniform_real_distribution<double> ux(0.0, 0.9), uy(-0.5, 0.5), uz(0.0, 0.4), u(0, 1);
  for (const auto& name : reg().names()) {
    auto w = spawn_scene(reg(), name, rng());
    const auto ids0 = w.objects.size();
    for (int step = 0; step < 60; ++step) {
      const Pose p = Pose::from_translation(ux(rng), uy(rng), uz(rng));
      w = apply_waypoint(w, p, u(rng) < 0.5 ? 0 : 1);
      CHECK(w.objects.size() == ids0);
      int held_count = 0;
      for (const auto& [id, o] : w.objects) {
        if (o.held) {
          ++held_count;
          CHECK(o.support_id == kHeldSupport);
          continue;
        }
        const double support_top = o.support_id == kTableId ? 0.0 : w.object(o.support_id).top();
        CHECK(o.bottom() == doctest::Approx(support_top).epsilon(1e-9));
        CHECK(o.support_id != id);
      }
      CHECK(held_count == (w.held_object ? 1 : 0));
    }
  }
}

TEST_CASE("registry from json rejects bad input") {
  CHECK_THROWS_AS(SceneRegistry::from_json("{not json"), ParseError);
  const auto r = SceneRegistry::from_json(builtin_registry_json());
  CHECK(r.names() == reg().names());
}
