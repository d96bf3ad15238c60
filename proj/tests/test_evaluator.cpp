#include <doctest.h>

#include "autoloop/error.hpp"
#include "autoloop/evaluator.hpp"
#include "autoloop/seed_demos.hpp"

using namespace autoloop;
using K = sim::PredicateKind;

namespace {

const sim::SceneRegistry& reg() { return sim::SceneRegistry::builtin(); }

Subtask subtask(const sim::WorldState& w, SubtaskAction a) {
  Subtask t;
  t.action = a;
  const auto scene = sim::describe_scene(w);
  std::tie(t.goal, t.goal_negated) = subtask_goal(a, scene);
  t.description = describe_action(a, scene);
  return t;
}

sim::WorldState run(sim::WorldState w, const std::vector<Waypoint>& path) {
  for (const auto& wp : path) w = sim::apply_waypoint(w, wp.pose, wp.gripper);
  return w;
}

bool judge(const sim::WorldState& w, const Subtask& t) {
  const auto s = evaluate(oracle_evaluator(w), t.description, t, sim::describe_scene(w));
  CHECK_FALSE(s.flagged);
  return s.value;
}

}  // namespace

TEST_CASE("translation examples") {
  OracleTranslator tr;
  sim::SceneDescription scene;
  scene.objects.push_back({1, "box", Shape::kArticulated, Vec3::Zero(), {}});
  Subtask t;
  t.action = {Verb::kClose, 1, std::nullopt, std::nullopt};
  t.goal = {K::kClosed, 1, std::nullopt, std::nullopt};
  CHECK(tr.translate("put the yellow ball on the blue plate", t, scene).text ==
        "Is the yellow ball on the blue plate?");
  const auto q = tr.translate("move the red object from the cloth to the table", t, scene);
  CHECK(q.text == "Is the red object on the cloth or the table?");
  CHECK(q.goal_option == "table");
  const auto c = tr.translate("close the box", t, scene);
  CHECK(c.text == "Is the box closed?");
  REQUIRE(c.hint.has_value());
  CHECK(c.hint->kind == K::kClosed);
  CHECK(c.hint->subject == 1);
  CHECK_THROWS_AS(tr.translate("  ", t, scene), InvariantError);
}

TEST_CASE("assessor prose") {
  auto w = sim::spawn_scene(reg(), "large_container_block", 2);
  const int block = 1, tray = 2;
  w = run(w, scripts::transport(w, block, scripts::top_target_on(w, block, tray)));
  const auto scene = sim::describe_scene(w);
  OracleAssessor as(w);
  VqaQuery q{"Is the yellow block in the tray?", sim::Predicate{K::kIn, block, tray, std::nullopt}};
  CHECK(as.assess(scene, q).text.rfind("Yes, I can see that the object is", 0) == 0);

  const auto box_world = sim::spawn_scene(reg(), "close_box", 2);
  OracleAssessor bs(box_world);
  VqaQuery closed{"Is the box closed?", sim::Predicate{K::kClosed, 1, std::nullopt, std::nullopt}};
  CHECK(bs.assess(sim::describe_scene(box_world), closed).text == "No, the box remains open on the table.");

  VqaQuery ghost{"Is the ghost closed?", sim::Predicate{K::kClosed, 9, std::nullopt, std::nullopt}};
  CHECK_THROWS(bs.assess(sim::describe_scene(box_world), ghost));
  VqaQuery bare{"Is the box closed?", std::nullopt};
  CHECK_THROWS(bs.assess(sim::describe_scene(box_world), bare));
}

TEST_CASE("decoder examples") {
  OracleParser p;
  const VqaQuery plate{"Is the object on the plate?"};
  CHECK(p.decode("", plate, {"Yes, I can see that the object is on the plate.", "x"}));
  const VqaQuery closed{"Is the box closed?"};
  CHECK_FALSE(p.decode("", closed, {"No, the box remains open.", "x"}));
  CHECK_THROWS_AS(p.decode("", closed, {"The scene is cluttered.", "x"}), DecodeAmbiguity);
  CHECK_THROWS_AS(p.decode("", closed, {"Yes and no.", "x"}), DecodeAmbiguity);
  CHECK_THROWS_AS(p.decode("", closed, {"", "x"}), DecodeAmbiguity);
  CHECK(p.decode("", closed, {"The lid of the box is closed.", "x"}));
  CHECK_FALSE(p.decode("", closed, {"The box isn't closed yet.", "x"}));
  const VqaQuery tray{"Is the cup in the tray?"};
  CHECK_FALSE(p.decode("", tray, {"In the picture, the cup is not in the tray.", "x"}));
  CHECK(p.decode("", tray, {"On the left, the cup sits in the tray.", "x"}));
  CHECK_THROWS_AS(p.decode("", tray, {"In the picture, the cup is visible.", "x"}), DecodeAmbiguity);
  const VqaQuery folded{"Is the towel folded?"};
  CHECK_FALSE(p.decode("", folded, {"The towel remains un-folded.", "x"}));
  VqaQuery either{"Is the red object on the cloth or the table?"};
  either.options = {"cloth", "table"};
  either.goal_option = "table";
  CHECK(p.decode("", either, {"It is sitting on the table now.", "x"}));
  CHECK_FALSE(p.decode("", either, {"It is still on the cloth.", "x"}));
  CHECK_FALSE(p.decode("", either, {"It is on neither the cloth nor the table.", "x"}));
}

TEST_CASE("decoder robustness over filler permutations") {
  OracleParser p;
  const std::vector<std::string> prefixes = {
      "", "Looking at the image, ", "After careful inspection, ", "Based on the final frame, ",
      "From this viewpoint, ", "Having checked the workspace, ", "In the picture, ",
      "As far as I can tell, ", "Considering the lighting, ", "On the right side of the view, "};
  const std::vector<std::string> suffixes = {
      "", " The gripper is idle.", " Everything else is unchanged.", " The arm is retracted.",
      " Lighting is even.", " The camera angle is fine.", " I am fairly confident.",
      " Other items stay put.", " The table is clean.", " That is my assessment.",
      " The workspace looks tidy."};
  const std::vector<std::pair<VqaQuery, std::pair<std::string, std::string>>> cores = {
      {{"Is the box closed?"}, {"yes, the box is closed.", "no, the box remains open."}},
      {{"Is the yellow block inside the white area?"},
       {"the yellow block is inside the white area.", "the yellow block is not inside the white area."}},
      {{"Is the towel folded?"}, {"the towel is neatly folded.", "the towel remains unfolded."}}};
  int pos = 0, neg = 0;
  for (const auto& [q, core] : cores)
    for (const auto& pre : prefixes)
      for (const auto& suf : suffixes) {
        CHECK(p.decode("", q, {pre + core.first + suf, "x"}));
        CHECK_FALSE(p.decode("", q, {pre + core.second + suf, "x"}));
        ++pos;
        ++neg;
      }
  CHECK(pos >= 100);
  CHECK(neg >= 100);
}

TEST_CASE("property: the oracle chain agrees with ground truth") {
  // One true and one false world per predicate kind.
  struct Case {
    std::string tpl;
    SubtaskAction action;
    std::function<sim::WorldState(sim::WorldState)> make_true;
  };
  std::vector<Case> cases = {
      {"grip_ball", {Verb::kPick, 1, std::nullopt, std::nullopt},
       [](sim::WorldState w) { return run(w, scripts::pick(w, 1)); }},
      {"large_container_cup", {Verb::kPlace, 1, 2, std::nullopt},
       [](sim::WorldState w) { return run(w, scripts::transport(w, 1, scripts::top_target_on(w, 1, 2))); }},
      {"large_container_cup", {Verb::kPlace, 1, std::nullopt, "cup zone"},
       [](sim::WorldState w) { return w; }},
      {"push_block", {Verb::kPushIn, 1, std::nullopt, "white area"},
       [](sim::WorldState w) { return run(w, scripts::push(w, 1, 1.0)); }},
      {"push_block", {Verb::kPushOut, 1, std::nullopt, "white area"},
       [](sim::WorldState w) { return w; }},
      {"stack_block", {Verb::kStack, 1, 2, std::nullopt},
       [](sim::WorldState w) { return run(w, scripts::transport(w, 1, scripts::top_target_on(w, 1, 2))); }},
      {"stack_block", {Verb::kUnstack, 1, std::nullopt, "red zone"},
       [](sim::WorldState w) { return w; }},
      {"close_box", {Verb::kClose, 1, std::nullopt, std::nullopt},
       [](sim::WorldState w) { return run(w, scripts::lid(w, 1, true)); }},
      {"open_box", {Verb::kOpen, 1, std::nullopt, std::nullopt},
       [](sim::WorldState w) { return run(w, scripts::lid(w, 1, false)); }},
      {"fold_towel", {Verb::kFold, 1, std::nullopt, std::nullopt},
       [](sim::WorldState w) { return run(w, scripts::lid(w, 1, true)); }},
  };
  std::set<K> kinds;
  for (const auto& c : cases) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const auto base = sim::spawn_scene(reg(), c.tpl, seed);
      const auto t = subtask(base, c.action);
      kinds.insert(t.goal.kind);
      std::vector<sim::WorldState> worlds = {base, c.make_true(base)};
      // A false world for the predicates that start out true.
      auto held = run(base, scripts::pick(base, 1));
      if (base.object(1).graspable) worlds.push_back(held);
      for (const auto& w : worlds) {
        CAPTURE(t.description);
        const bool truth = sim::ground_truth(w, t.goal) != t.goal_negated;
        CHECK(judge(w, t) == truth);
      }
    }
  }
  CHECK(kinds.size() == 7);
}

TEST_CASE("end-to-end push judged in simulation") {
  auto w = sim::spawn_scene(reg(), "push_block", 7);
  const auto t = subtask(w, {Verb::kPushIn, 1, std::nullopt, "white area"});
  w = run(w, scripts::push(w, 1, 1.0));
  CHECK(judge(w, t));
  CHECK(judge(w, t) == judge(w, t));
  w = sim::apply_perturbation(w, {1, Vec3(0.25, 0, 0)});
  CHECK_FALSE(judge(w, t));
}

TEST_CASE("error paths never report success") {
  const auto w = sim::spawn_scene(reg(), "close_box", 1);
  auto t = subtask(w, {Verb::kClose, 1, std::nullopt, std::nullopt});
  t.goal.subject = 42;
  auto s = evaluate(oracle_evaluator(w), "close the box", t, sim::describe_scene(w));
  CHECK_FALSE(s.value);
  CHECK(s.flagged);
  s = evaluate(EvaluatorBackends{}, "close the box", t, sim::describe_scene(w));
  CHECK_FALSE(s.value);
  CHECK(s.flagged);

  struct Rambler : Assessor {
    Assessment assess(const sim::SceneDescription&, const VqaQuery&) override {
      return {"The scene is cluttered.", "rambler"};
    }
  };
  auto b = oracle_evaluator(w);
  b.assessor = std::make_shared<Rambler>();
  s = evaluate(b, "close the box", subtask(w, {Verb::kClose, 1, std::nullopt, std::nullopt}),
               sim::describe_scene(w));
  CHECK_FALSE(s.value);
  CHECK(s.flagged);
  CHECK(s.log.response == "The scene is cluttered.");
}
