#include <doctest.h>

#include <cmath>
#include <numbers>

#include "autoloop/error.hpp"
#include "autoloop/policy.hpp"
#include "autoloop/seed_demos.hpp"
#include "autoloop/sim.hpp"

using namespace autoloop;

namespace {

const sim::SceneRegistry& reg() { return sim::SceneRegistry::builtin(); }

const AffordanceLibrary& seeds() {
  static const AffordanceLibrary lib = record_seed_demos(reg(), 3, 2024);
  return lib;
}

ActionSequence random_actions(Rng& rng, int h) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  ActionSequence a;
  for (int i = 0; i < h; ++i) {
    const Vec3 axis = Vec3(u(rng), u(rng), u(rng)).normalized();
    a.steps.push_back({Pose::from_axis_angle(axis, 3.0 * std::abs(u(rng)),
                                             Vec3(u(rng), u(rng), u(rng))),
                       u(rng)});
  }
  return a;
}

Observation observe(const sim::WorldState& w, int subject, std::set<int> mask,
                    std::optional<int> dest = std::nullopt) {
  Observation o;
  o.cloud = sim::render_point_cloud(w, mask);
  o.ee_pose = w.ee_pose;
  o.gripper = w.gripper;
  o.subject = subject;
  o.dest_label = dest;
  return o;
}

sim::WorldState execute(sim::WorldState w, const ActionSequence& a) {
  for (const auto& s : a.steps) w = sim::apply_waypoint(w, s.ee_pose, s.gripper());
  return w;
}

class ZeroPredictor : public GradientPredictor {
 public:
  Eigen::VectorXd predict(const PolicyGraph& g, int) const override {
    return Eigen::VectorXd::Zero(g.actions.size());
  }
};

}  // namespace

TEST_CASE("property: vectorization round trip") {
  Rng rng(1);
  for (int trial = 0; trial < 200; ++trial) {
    const auto a = random_actions(rng, 8);
    const auto v = a.vectorize();
    CHECK(v.size() == 56);
    const auto b = ActionSequence::devectorize(v);
    CHECK((b.vectorize() - v).cwiseAbs().maxCoeff() < 1e-12);
    for (const auto& s : b.steps) CHECK(s.ee_pose.rotation_vector().norm() <= std::numbers::pi + 1e-12);
  }
  CHECK_THROWS_AS(ActionSequence::devectorize(Eigen::VectorXd::Zero(8)), PolicyError);
}

TEST_CASE("graph topology") {
  const auto& demo = seeds().at("seed-pick-0");
  Demonstration d = demo;
  d.steps.resize(10);
  auto w = sim::spawn_scene(reg(), "grip_ball", 9);
  const auto obs = observe(w, 1, {1});
  Rng rng(3);
  const auto a = random_actions(rng, 8);
  const auto g = build_graph(d, obs, a);
  CHECK(g.node_count() == 19);
  CHECK(g == build_graph(d, obs, a));
  int temporal = 0, cross = 0, cond = 0;
  for (const auto& e : g.edges) {
    temporal += e.kind == EdgeKind::kTemporal;
    cross += e.kind == EdgeKind::kCross;
    cond += e.kind == EdgeKind::kActionConditioning;
  }
  CHECK(temporal == 9);
  CHECK(cross == 20);
  CHECK(cond == 8);
  Demonstration empty = d;
  empty.steps.clear();
  CHECK_THROWS_AS(build_graph(empty, obs, a), PolicyError);
  Observation blind = obs;
  blind.cloud.points.clear();
  CHECK_THROWS_AS(build_graph(d, blind, a), PolicyError);
}

TEST_CASE("masked observation nodes ignore distractors") {
  const auto plain = sim::spawn_scene(reg(), "push_block", 4);
  auto cluttered = sim::spawn_scene(reg(), "push_block_distractors", 4);
  REQUIRE(plain.object(1).pose == cluttered.object(1).pose);
  const auto& demo = seeds().at("seed-push_in-0");
  Rng rng(3);
  const auto a = random_actions(rng, 8);
  const auto g1 = build_graph(demo, observe(plain, 1, {1}), a);
  const auto g2 = build_graph(demo, observe(cluttered, 1, {1}), a);
  CHECK(g1 == g2);
  // Moving a distractor changes nothing either.
  cluttered = sim::apply_perturbation(cluttered, {2, Vec3(0.05, -0.02, 0)});
  CHECK(build_graph(demo, observe(cluttered, 1, {1}), a) == g1);
  // Without the mask it does.
  const auto g3 = build_graph(demo, observe(cluttered, 1, {1, 2, 3}), a);
  CHECK_FALSE(g3.observation == g1.observation);
}

TEST_CASE("resampling keeps gripper events and endpoints") {
  for (const auto& [id, d] : seeds().demos()) {
    CAPTURE(id);
    const auto r = resample(d.steps, kDefaultHorizon);
    REQUIRE(r.size() == 8);
    CHECK(r.front().ee_pose == d.steps.front().ee_pose);
    CHECK(r.back().ee_pose == d.steps.back().ee_pose);
    int changes_demo = 0, changes_r = 0;
    for (std::size_t i = 1; i < d.steps.size(); ++i) changes_demo += d.steps[i].gripper != d.steps[i - 1].gripper;
    for (std::size_t i = 1; i < r.size(); ++i) changes_r += r[i].gripper != r[i - 1].gripper;
    CHECK(changes_r == changes_demo);
  }
  std::vector<DemonstrationStep> flicker;
  for (int i = 0; i < 12; ++i) flicker.push_back({{}, Pose::identity(), i % 2});
  CHECK_THROWS_AS(resample(flicker, 8), PolicyError);
}

TEST_CASE("warp at the demonstration pose reproduces the resampled demo") {
  auto w = sim::spawn_scene(reg(), "grip_ball", 31);
  Demonstration d = record_demonstration(w, "pick", Verb::kPick, 1, {1}, scripts::pick(w, 1));
  const auto w0 = sim::spawn_scene(reg(), "grip_ball", 31);
  const auto a = warp_reference(d, observe(w0, 1, {1}));
  const auto r = resample(d.steps, 8);
  REQUIRE(a.horizon() == 8);
  // The demo's first cloud is already past the first waypoint, which does not
  // move the ball, so the anchors coincide.
  for (std::size_t i = 0; i < 8; ++i) CHECK(a.steps[i].ee_pose == r[i].ee_pose);

  // Translate the object by +0.1 m in x.
  auto moved = sim::apply_perturbation(w0, {1, Vec3(0.1, 0, 0)});
  const auto b = warp_reference(d, observe(moved, 1, {1}));
  for (std::size_t i = 0; i < 8; ++i) {
    const Vec3 delta = b.steps[i].ee_pose.translation() - r[i].ee_pose.translation();
    CHECK((delta - Vec3(0.1, 0, 0)).norm() < 1e-9);
    CHECK(b.steps[i].gripper_logit == a.steps[i].gripper_logit);
  }
  Observation missing = observe(w0, 1, {1});
  missing.subject = 7;
  CHECK_THROWS_AS(warp_reference(d, missing), PolicyError);
}

TEST_CASE("rigid warp rotated 90 degrees about z") {
  const auto& d = seeds().at("seed-push_in-1");
  const auto r = resample(d.steps, 8);
  const Vec3 obj(0.3, 0.0, 0.025);
  const Pose demo_obj = Pose::from_translation(obj);
  const Pose cur_obj = Pose::from_axis_angle(Vec3::UnitZ(), std::numbers::pi / 2, Vec3(0.5, 0.1, 0.025));
  const Pose t_rel = compose(cur_obj, invert(demo_obj));
  const auto a = warp_trajectory(r, t_rel);
  for (std::size_t i = 0; i < 8; ++i) {
    // Offset from the object, rotated by hand.
    const Vec3 off = r[i].ee_pose.translation() - obj;
    const Vec3 expected_t = Vec3(0.5, 0.1, 0.025) + Vec3(-off.y(), off.x(), off.z());
    const Pose expected(expected_t, Eigen::Quaterniond(Eigen::AngleAxisd(std::numbers::pi / 2, Vec3::UnitZ())) *
                                        r[i].ee_pose.rotation());
    const auto e = pose_distance(a.steps[i].ee_pose, expected);
    CHECK(e.translation < 1e-9);
    CHECK(e.rotation < 1e-9);
  }
}

TEST_CASE("reference predictor") {
  Rng rng(8);
  const auto a_star = random_actions(rng, 8);
  const auto p = reference_predictor(a_star);
  PolicyGraph g;
  g.actions = a_star.vectorize();
  CHECK(p->predict(g, 3).norm() == 0.0);
  g.actions = random_actions(rng, 8).vectorize();
  CHECK(p->predict(g, 1) == p->predict(g, 16));
  CHECK(p->predict(g, 5).norm() == doctest::Approx((g.actions - a_star.vectorize()).norm()));
}

TEST_CASE("denoise step follows the update rule") {
  Rng rng(4);
  PolicyGraph g;
  g.actions = Eigen::VectorXd::Constant(56, 0.1);
  const ZeroPredictor zero;
  {
    const auto s = DiffusionSchedule::make(4, 1.0, 0.5, 0.0);
    CHECK(denoise_step(g, 2, s, zero, rng).actions == g.actions);
  }
  {
    const auto s = DiffusionSchedule::make(4, 0.7, 0.5, 0.0);
    CHECK((denoise_step(g, 3, s, zero, rng).actions - 0.7 * g.actions).norm() < 1e-15);
  }
  {
    ActionSequence target;
    for (int i = 0; i < 8; ++i) target.steps.push_back({Pose::from_translation(0.2, 0, 0.3), 1.0});
    const auto p = reference_predictor(target);
    const auto s = DiffusionSchedule::make(4, 1.0, 0.5, 0.0);
    const double d0 = (g.actions - target.vectorize()).norm();
    const auto next = denoise_step(g, 4, s, *p, rng);
    CHECK((next.actions - target.vectorize()).norm() == doctest::Approx(d0 / 2));
  }
  {
    const auto s = DiffusionSchedule::make(4, 1.0, 0.5, 0.01);
    Rng r1(77), r2(77);
    CHECK(denoise_step(g, 4, s, zero, r1).actions == denoise_step(g, 4, s, zero, r2).actions);
    CHECK_THROWS_AS(denoise_step(g, 5, s, zero, r1), PolicyError);
    CHECK_THROWS_AS(denoise_step(g, 0, s, zero, r1), PolicyError);
  }
}

TEST_CASE("schedule validation") {
  CHECK_NOTHROW(DiffusionSchedule::make().validate());
  CHECK(DiffusionSchedule::make().sigma[0] == 0.0);
  CHECK_THROWS_AS(DiffusionSchedule::make(0), InvariantError);
  CHECK_THROWS_AS(DiffusionSchedule::make(16, 1.0, 0.0), InvariantError);
  CHECK_THROWS_AS(DiffusionSchedule::make(16, 1.0, 1.5), InvariantError);
  auto s = DiffusionSchedule::make();
  s.sigma[0] = 0.1;
  CHECK_THROWS_AS(s.validate(), InvariantError);
}

TEST_CASE("generation converges to the warped reference") {
  const auto& demo = seeds().at("seed-pick-1");
  const auto w = sim::spawn_scene(reg(), "grip_ball", 55);
  const auto obs = observe(w, 1, {1});
  const auto a_star = warp_reference(demo, obs);
  {
    Rng rng(9);
    GenerationTrace trace;
    const auto a0 = generate_actions(demo, obs, DiffusionSchedule::make(16, 1.0, 0.5, 0.0),
                                     reference_predictor_factory(), rng, 8, &trace);
    for (std::size_t i = 0; i < 8; ++i) {
      const auto e = pose_distance(a0.steps[i].ee_pose, a_star.steps[i].ee_pose);
      CHECK(e.translation <= 1e-3);
      CHECK(e.rotation <= 1e-3);
      CHECK(a0.steps[i].gripper() == a_star.steps[i].gripper());
    }
    REQUIRE(trace.k.size() == 16);
    for (std::size_t i = 1; i < trace.residual.size(); ++i)
      CHECK(trace.residual[i] <= trace.residual[i - 1]);
    CHECK(trace.to_tsv().rfind("k\tresidual\n", 0) == 0);
  }
  {
    Rng rng(9);
    const auto a0 = generate_actions(demo, obs, DiffusionSchedule::make(1, 1.0, 1.0, 0.0),
                                     reference_predictor_factory(), rng);
    CHECK((a0.vectorize() - a_star.vectorize()).norm() < 1e-12);
  }
  {
    const int K = 16;
    const auto s = DiffusionSchedule::make(K, 1.0, 0.5, 1e-4 * K / (K - 1));
    CHECK(s.sigma.back() <= 1e-4 + 1e-18);
    Eigen::VectorXd first;
    int distinct = 0;
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
      Rng rng(seed);
      const auto a0 = generate_actions(demo, obs, s, reference_predictor_factory(), rng);
      if (seed == 0) first = a0.vectorize();
      else distinct += a0.vectorize() != first;
      for (std::size_t i = 0; i < 8; ++i) {
        const auto e = pose_distance(a0.steps[i].ee_pose, a_star.steps[i].ee_pose);
        CHECK(e.translation <= 1e-3);
        CHECK(e.rotation <= 1e-3);
      }
    }
    CHECK(distinct == 99);
  }
}

TEST_CASE("property: contraction is monotone for any gamma") {
  Rng rng(12);
  std::uniform_real_distribution<double> ug(0.05, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    ActionSequence target;
    for (int i = 0; i < 8; ++i)
      target.steps.push_back({Pose::from_axis_angle(Vec3::UnitZ(), 0.3 * i, Vec3(0.1 * i, 0, 0.2)), 1.0});
    const auto p = reference_predictor(target);
    const auto s = DiffusionSchedule::make(16, 1.0, ug(rng), 0.0);
    PolicyGraph g;
    g.actions = Eigen::VectorXd::Zero(56);
    std::normal_distribution<double> n(0, 0.3);
    for (Eigen::Index i = 0; i < 56; ++i) g.actions[i] = n(rng);
    canonicalize_actions(g.actions);
    double prev = (g.actions - target.vectorize()).norm();
    for (int k = 16; k >= 1; --k) {
      g = denoise_step(g, k, s, *p, rng);
      const double d = (g.actions - target.vectorize()).norm();
      CHECK(d <= prev + 1e-12);
      prev = d;
    }
  }
}

TEST_CASE("generated actions are unchanged by unmasked clutter") {
  const auto& demo = seeds().at("seed-push_in-0");
  const auto plain = sim::spawn_scene(reg(), "push_block", 6);
  const auto cluttered = sim::apply_perturbation(
      sim::spawn_scene(reg(), "push_block_distractors", 6), {3, Vec3(-0.05, 0.0, 0.0)});
  const auto s = DiffusionSchedule::make();
  Rng r1(5), r2(5);
  const auto a = generate_actions(demo, observe(plain, 1, {1}), s, reference_predictor_factory(), r1);
  const auto b = generate_actions(demo, observe(cluttered, 1, {1}), s, reference_predictor_factory(), r2);
  CHECK(a == b);
}

TEST_CASE("generated actions achieve each seed skill in fresh scenes") {
  using K = sim::PredicateKind;
  const auto s = DiffusionSchedule::make();
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    Rng rng(seed);
    {
      auto w = sim::spawn_scene(reg(), "large_container_cup", seed);
      const int cup = 1, tray = 2;
      w = execute(w, generate_actions(seeds().at("seed-pick-0"), observe(w, cup, {cup}), s,
                                      reference_predictor_factory(), rng));
      REQUIRE(sim::ground_truth(w, {K::kHeld, cup, std::nullopt, std::nullopt}));
      w = execute(w, generate_actions(seeds().at("seed-place-0"),
                                      observe(w, cup, {cup, tray}, tray), s,
                                      reference_predictor_factory(), rng));
      CHECK(sim::ground_truth(w, {K::kIn, cup, tray, std::nullopt}));
    }
    {
      auto w = sim::spawn_scene(reg(), "push_block_distractors", seed);
      w = execute(w, generate_actions(seeds().at("seed-push_in-2"), observe(w, 1, {1}), s,
                                      reference_predictor_factory(), rng));
      CHECK(sim::ground_truth(w, {K::kInRegion, 1, std::nullopt, "white area"}));
    }
    {
      auto w = sim::spawn_scene(reg(), "stack_block", seed);
      w = execute(w, generate_actions(seeds().at("seed-stack-1"), observe(w, 1, {1, 2}, 2), s,
                                      reference_predictor_factory(), rng));
      CHECK(sim::ground_truth(w, {K::kStackedOn, 1, 2, std::nullopt}));
    }
    {
      auto w = sim::spawn_scene(reg(), "fold_towel", seed);
      w = execute(w, generate_actions(seeds().at("seed-close-0"), observe(w, 1, {1}), s,
                                      reference_predictor_factory(), rng));
      CHECK(sim::ground_truth(w, {K::kClosed, 1, std::nullopt, std::nullopt}));
    }
  }
}
