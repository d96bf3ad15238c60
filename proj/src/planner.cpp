#include "autoloop/planner.hpp"

#include <algorithm>
#include <map>
#include <sstream>

#include "autoloop/error.hpp"
#include "autoloop/prompts.hpp"

namespace autoloop {

using sim::PredicateKind;
using sim::SceneDescription;

const GroundedItem* GroundedScene::find(int id) const {
  for (const auto& i : items)
    if (i.id == id) return &i;
  return nullptr;
}

const GroundedItem* GroundedScene::find(const std::string& name) const {
  for (const auto& i : items)
    if (i.descriptor.name == name) return &i;
  return nullptr;
}

std::string_view to_string(PlanMode m) {
  switch (m) {
    case PlanMode::kAtomicSimple: return "atomic_simple";
    case PlanMode::kAtomicCluttered: return "atomic_cluttered";
    case PlanMode::kLongHorizon: return "long_horizon";
  }
  return "";
}

PlanMode parse_plan_mode(std::string_view s) {
  for (auto m : {PlanMode::kAtomicSimple, PlanMode::kAtomicCluttered, PlanMode::kLongHorizon})
    if (to_string(m) == s) return m;
  throw ParseError("unknown plan mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// Validation

std::vector<LifoViolation> validate_lifo(const TaskPlan& plan) {
  std::vector<LifoViolation> out;
  const std::size_t n = plan.forward.size();
  if (n == 0) out.push_back({0, "forward plan is empty"});
  if (plan.reverse.size() != n) {
    out.push_back({0, "forward has " + std::to_string(n) + " subtasks but reverse has " +
                          std::to_string(plan.reverse.size())});
    return out;
  }
  for (std::size_t j = 0; j < n; ++j) {
    const SubtaskAction& r = plan.reverse[j].action;
    const SubtaskAction& f = plan.forward[n - 1 - j].action;
    std::string why;
    auto add = [&](const std::string& r) { why += (why.empty() ? "" : "; ") + r; };
    if (r.verb != inverse_skill(f.verb))
      add("verb " + std::string(to_string(r.verb)) + " does not undo " + std::string(to_string(f.verb)));
    if (r.subject != f.subject)
      add("subject " + std::to_string(r.subject) + " is not " + std::to_string(f.subject));
    // one entry per offending reverse step
    if (!why.empty())
      out.push_back({static_cast<int>(j + 1), why + " (forward step " + std::to_string(n - j) + ")"});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Grounding

GroundedScene ground_objects(ReasonerBackend& backend, const SceneDescription& obs) {
  GroundedScene raw = backend.ground(builtin_prompt(PromptKind::kGround), obs);
  GroundedScene out;
  std::set<int> seen;
  for (auto item : raw.items) {
    const sim::SceneEntry* e = item.id >= 0 ? obs.find(item.id) : obs.find(item.descriptor.name);
    if (!e || e->name != item.descriptor.name)
      throw GroundingViolation("grounded object '" + item.descriptor.name +
                               "' is not present in the scene");
    if (!seen.insert(e->id).second)
      throw GroundingViolation("object '" + e->name + "' grounded twice");
    item.id = e->id;
    out.items.push_back(item);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plans

namespace {

bool is_container(const SceneDescription& obs, int id) { return obs.has_tag(id, "container"); }

const std::string& name_of(const SceneDescription& obs, int id) {
  const auto* e = obs.find(id);
  if (!e) throw PlanningFailure("unknown object id " + std::to_string(id));
  return e->name;
}

}  // namespace

std::pair<sim::Predicate, bool> subtask_goal(const SubtaskAction& a, const SceneDescription& obs) {
  const auto need_region = [&]() -> std::string {
    if (!a.dest_region) throw PlanningFailure(std::string(to_string(a.verb)) + " needs a region");
    return *a.dest_region;
  };
  const auto need_object = [&]() -> int {
    if (!a.dest_object) throw PlanningFailure(std::string(to_string(a.verb)) + " needs an object");
    return *a.dest_object;
  };
  switch (a.verb) {
    case Verb::kPick: return {{PredicateKind::kHeld, a.subject, std::nullopt, std::nullopt}, false};
    case Verb::kPlace:
      if (a.dest_object) {
        const int d = *a.dest_object;
        return {{is_container(obs, d) ? PredicateKind::kIn : PredicateKind::kOn, a.subject, d,
                 std::nullopt},
                false};
      }
      return {{PredicateKind::kInRegion, a.subject, std::nullopt, need_region()}, false};
    case Verb::kPushIn:
      return {{PredicateKind::kInRegion, a.subject, std::nullopt, need_region()}, false};
    case Verb::kPushOut:
      return {{PredicateKind::kInRegion, a.subject, std::nullopt, need_region()}, true};
    case Verb::kStack:
      return {{PredicateKind::kStackedOn, a.subject, need_object(), std::nullopt}, false};
    case Verb::kUnstack:
      return {{PredicateKind::kOn, a.subject, sim::kTableId, std::nullopt}, false};
    case Verb::kClose:
    case Verb::kFold:
      return {{PredicateKind::kClosed, a.subject, std::nullopt, std::nullopt}, false};
    case Verb::kOpen:
    case Verb::kUnfold:
      return {{PredicateKind::kOpen, a.subject, std::nullopt, std::nullopt}, false};
  }
  throw PlanningFailure("unhandled verb");
}

std::string describe_action(const SubtaskAction& a, const SceneDescription& obs) {
  const std::string s = name_of(obs, a.subject);
  const auto dest = [&]() {
    return a.dest_object ? name_of(obs, *a.dest_object) : a.dest_region.value_or("table");
  };
  switch (a.verb) {
    case Verb::kPick: return "pick up the " + s;
    case Verb::kPlace:
      if (a.dest_object)
        return (is_container(obs, *a.dest_object) ? "put the " + s + " in the "
                                                  : "put the " + s + " on the ") + dest();
      return "place the " + s + " down in the " + dest();
    case Verb::kPushIn: return "push the " + s + " into the " + dest();
    case Verb::kPushOut: return "push the " + s + " out of the " + dest();
    case Verb::kStack: return "stack the " + s + " on the " + dest();
    case Verb::kUnstack: return "put the " + s + " on the table";
    case Verb::kOpen: return "open the " + s;
    case Verb::kClose: return "close the " + s;
    case Verb::kFold: return "fold the " + s;
    case Verb::kUnfold: return "unfold the " + s;
  }
  return s;
}

std::string library_summary(const AffordanceLibrary& lib) {
  std::ostringstream os;
  for (const auto& [id, d] : lib.demos())
    os << id << ": " << to_string(d.skill_verb) << ' ' << d.target.name << " ("
       << to_string(d.target.shape) << ")\n";
  return os.str();
}

namespace {

SubtaskAction resolve(const RawSubtask& r, const SceneDescription& obs, const GroundedScene& scene) {
  SubtaskAction a;
  a.verb = parse_verb(r.verb);
  const GroundedItem* s = scene.find(r.subject);
  if (!s) throw PlanningFailure("subject '" + r.subject + "' is not in the grounded scene");
  a.subject = s->id;
  if (!r.dest_object.empty()) {
    const GroundedItem* d = scene.find(r.dest_object);
    if (!d) throw PlanningFailure("destination '" + r.dest_object + "' is not in the grounded scene");
    if (d->id == a.subject) throw PlanningFailure("subtask destination equals its subject");
    a.dest_object = d->id;
  }
  if (!r.dest_region.empty()) {
    if (std::find(obs.regions.begin(), obs.regions.end(), r.dest_region) == obs.regions.end())
      throw PlanningFailure("unknown region '" + r.dest_region + "'");
    a.dest_region = r.dest_region;
  }
  return a;
}

Subtask make_subtask(ReasonerBackend& backend, const RawSubtask& r, const SceneDescription& obs,
                     const GroundedScene& scene, const AffordanceLibrary& lib,
                     const PlanOptions& opt) {
  Subtask t;
  t.action = resolve(r, obs, scene);
  std::tie(t.goal, t.goal_negated) = subtask_goal(t.action, obs);
  t.description = r.description.empty() ? describe_action(t.action, obs) : r.description;
  t.mask.insert(t.action.subject);
  if (t.action.dest_object) t.mask.insert(*t.action.dest_object);

  const SkillQuery q{t.action.verb, scene.find(t.action.subject)->descriptor};
  const auto candidates = lib.retrieve_ranked(q, opt.retrieval_r, opt.weights);
  if (candidates.empty()) throw PlanningFailure("retrieval returned no demonstrations");
  std::string chosen = candidates.front()->id;
  for (const auto& id : backend.rank(q, candidates)) {
    if (std::any_of(candidates.begin(), candidates.end(),
                    [&](const Demonstration* d) { return d->id == id; })) {
      chosen = id;
      break;
    }
  }
  t.demo_id = chosen;
  return t;
}

}  // namespace

TaskPlan plan_task(ReasonerBackend& backend, const SceneDescription& obs,
                   const GroundedScene& scene, const AffordanceLibrary& lib, PlanMode mode,
                   const PlanOptions& opt) {
  if (scene.items.empty()) throw PlanningFailure("grounded scene is empty");
  if (lib.empty()) throw PlanningFailure("affordance library is empty");
  const std::string summary = library_summary(lib);
  std::string last_error;
  for (int attempt = 0; attempt < 2; ++attempt) {
    try {
      const RawPlan raw = backend.plan(builtin_prompt(PromptKind::kPlan), obs, summary);
      TaskPlan plan;
      plan.scene = scene;
      plan.mode = mode;
      for (const auto& r : raw.forward) plan.forward.push_back(make_subtask(backend, r, obs, scene, lib, opt));
      for (const auto& r : raw.reverse) plan.reverse.push_back(make_subtask(backend, r, obs, scene, lib, opt));
      const auto violations = validate_lifo(plan);
      if (!violations.empty()) {
        std::ostringstream os;
        os << "plan violates the reset ordering:";
        for (const auto& v : violations) os << " [" << v.j << "] " << v.reason << ';';
        throw PlanningFailure(os.str());
      }
      if (mode == PlanMode::kAtomicCluttered) {
        for (const auto& t : plan.forward)
          for (int id : t.mask)
            if (obs.has_tag(id, "distractor"))
              throw PlanningFailure("mask includes distractor '" + name_of(obs, id) + "'");
      }
      return plan;
    } catch (const PlanningFailure& e) {
      last_error = e.what();
    } catch (const ParseError& e) {
      last_error = e.what();
    } catch (const BackendError& e) {
      last_error = e.what();
    }
  }
  throw PlanningFailure("no valid plan after retry: " + last_error);
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

codec::json subtask_to_json(const Subtask& t) {
  codec::json j = {{"verb", to_string(t.action.verb)},
                   {"subject", t.action.subject},
                   {"demo_id", t.demo_id},
                   {"description", t.description},
                   {"mask", t.mask},
                   {"goal", {{"kind", to_string(t.goal.kind)}, {"subject", t.goal.subject}}},
                   {"goal_negated", t.goal_negated}};
  if (t.action.dest_object) j["dest_object"] = *t.action.dest_object;
  if (t.action.dest_region) j["dest_region"] = *t.action.dest_region;
  if (t.goal.object) j["goal"]["object"] = *t.goal.object;
  if (t.goal.region) j["goal"]["region"] = *t.goal.region;
  return j;
}

Subtask subtask_from_json(const codec::json& j) {
  codec::check_fields(j, {"verb", "subject", "demo_id", "description", "mask", "goal", "goal_negated"},
                      {"dest_object", "dest_region"});
  Subtask t;
  t.action.verb = parse_verb(codec::get<std::string>(j, "verb"));
  t.action.subject = codec::get<int>(j, "subject");
  if (j.contains("dest_object")) t.action.dest_object = codec::get<int>(j, "dest_object");
  if (j.contains("dest_region")) t.action.dest_region = codec::get<std::string>(j, "dest_region");
  t.demo_id = codec::get<std::string>(j, "demo_id");
  t.description = codec::get<std::string>(j, "description");
  t.mask = codec::get<std::set<int>>(j, "mask");
  const auto& g = j.at("goal");
  codec::check_fields(g, {"kind", "subject"}, {"object", "region"});
  t.goal.kind = sim::parse_predicate_kind(codec::get<std::string>(g, "kind"));
  t.goal.subject = codec::get<int>(g, "subject");
  if (g.contains("object")) t.goal.object = codec::get<int>(g, "object");
  if (g.contains("region")) t.goal.region = codec::get<std::string>(g, "region");
  t.goal_negated = codec::get<bool>(j, "goal_negated");
  return t;
}

}  // namespace

codec::json plan_to_json(const TaskPlan& plan) {
  codec::json j;
  j["mode"] = to_string(plan.mode);
  j["scene"] = codec::json::array();
  for (const auto& i : plan.scene.items)
    j["scene"].push_back({{"id", i.id}, {"name", i.descriptor.name}, {"shape", to_string(i.descriptor.shape)}});
  j["forward"] = codec::json::array();
  j["reverse"] = codec::json::array();
  for (const auto& t : plan.forward) j["forward"].push_back(subtask_to_json(t));
  for (const auto& t : plan.reverse) j["reverse"].push_back(subtask_to_json(t));
  return j;
}

TaskPlan plan_from_json(const codec::json& j) {
  if (!j.is_object()) codec::throw_parse("plan must be a JSON object");
  codec::check_fields(j, {"forward", "reverse"}, {"mode", "scene"});
  TaskPlan plan;
  if (j.contains("mode")) plan.mode = parse_plan_mode(codec::get<std::string>(j, "mode"));
  if (j.contains("scene")) {
    for (const auto& i : j.at("scene")) {
      codec::check_fields(i, {"id", "name", "shape"}, {});
      plan.scene.items.push_back({codec::get<int>(i, "id"),
                                  {codec::get<std::string>(i, "name"),
                                   parse_shape(codec::get<std::string>(i, "shape"))}});
    }
  }
  for (const auto& t : j.at("forward")) plan.forward.push_back(subtask_from_json(t));
  for (const auto& t : j.at("reverse")) plan.reverse.push_back(subtask_from_json(t));
  return plan;
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

struct ChainStep {
  Verb verb;
  std::string subject;
  std::string dest_object;
  std::string dest_region;  // "home" = the subject's home region
};

struct Rule {
  PlanMode mode;
  std::vector<ChainStep> chain;
  bool toggle = false;  // the chain flips one object back and forth
};

const std::map<std::string, Rule>& rules() {
  static const std::map<std::string, Rule> r = [] {
    using V = Verb;
    std::map<std::string, Rule> m;
    const auto container = [](const std::string& x) {
      return std::vector<ChainStep>{{V::kPick, x, "", ""}, {V::kPlace, x, "tray", ""}};
    };
    m["grip_ball"] = {PlanMode::kAtomicSimple, {{V::kPick, "grip ball", "", ""}}};
    m["pick_distractors"] = {PlanMode::kAtomicCluttered, {{V::kPick, "lemon", "", ""}}};
    m["large_container_cup"] = {PlanMode::kAtomicSimple, container("cup")};
    m["large_container_block"] = {PlanMode::kAtomicSimple, container("yellow block")};
    m["large_container_laptop"] = {PlanMode::kAtomicSimple, container("laptop")};
    m["push_block"] = {PlanMode::kAtomicSimple, {{V::kPushIn, "yellow block", "", "white area"}}};
    m["push_block_distractors"] = {PlanMode::kAtomicCluttered,
                                   {{V::kPushIn, "yellow block", "", "white area"}}};
    m["stack_block"] = {PlanMode::kAtomicSimple, {{V::kStack, "red block", "yellow block", ""}}};
    m["close_box"] = {PlanMode::kAtomicSimple, {{V::kClose, "box", "", ""}}};
    m["open_box"] = {PlanMode::kAtomicSimple, {{V::kOpen, "box", "", ""}}};
    m["fold_towel"] = {PlanMode::kAtomicSimple, {{V::kFold, "towel", "", ""}}};
    const std::vector<ChainStep> push_stack = {{V::kPushIn, "yellow block", "", "white area"},
                                               {V::kStack, "red block", "yellow block", ""}};
    m["push_stack"] = {PlanMode::kLongHorizon, push_stack};
    m["push_stack_distractors"] = {PlanMode::kLongHorizon, push_stack};
    auto lct = container("laptop");
    for (auto& s : container("cup")) lct.push_back(s);
    m["laptop_cup_tray"] = {PlanMode::kLongHorizon, lct};
    m["close_then_open_box"] = {PlanMode::kLongHorizon,
                                {{V::kClose, "box", "", ""}, {V::kOpen, "box", "", ""}},
                                true};
    return m;
  }();
  return r;
}

const Rule& rule_for(const std::string& template_name) {
  auto it = rules().find(template_name);
  if (it == rules().end())
    throw PlanningFailure("no planning rule for scene '" + template_name + "'");
  return it->second;
}

}  // namespace

OracleBackend::OracleBackend(const sim::WorldState& world, std::uint64_t seed, SimilarityWeights w)
    : world_(&world), seed_(seed), weights_(w) {}

PlanMode OracleBackend::mode_for(const std::string& template_name) {
  return rule_for(template_name).mode;
}

GroundedScene OracleBackend::ground(const std::string&, const SceneDescription& obs) {
  GroundedScene g;
  for (const auto& e : obs.objects) g.items.push_back({e.id, {e.name, e.shape}});
  return g;
}

std::vector<std::string> OracleBackend::rank(const SkillQuery& query,
                                             const std::vector<const Demonstration*>& candidates) {
  std::vector<const Demonstration*> c = candidates;
  std::stable_sort(c.begin(), c.end(), [&](const Demonstration* a, const Demonstration* b) {
    const double sa = score_similarity(query, *a, weights_);
    const double sb = score_similarity(query, *b, weights_);
    return sa > sb || (sa == sb && a->id < b->id);
  });
  std::vector<std::string> ids;
  for (const auto* d : c) ids.push_back(d->id);
  return ids;
}

RawPlan OracleBackend::plan(const std::string&, const SceneDescription& obs, const std::string&) {
  (void)seed_;
  const sim::WorldState& w = *world_;
  const Rule& rule = rule_for(w.template_name);

  const auto id_of = [&](const std::string& name) {
    auto id = w.find(name);
    if (!id) throw PlanningFailure("scene has no '" + name + "'");
    return *id;
  };
  const auto region_of = [&](const ChainStep& s) {
    if (s.dest_region != "home") return s.dest_region;
    return w.object(id_of(s.subject)).home_region;
  };
  const auto action_of = [&](const ChainStep& s) {
    SubtaskAction a{s.verb, id_of(s.subject), std::nullopt, std::nullopt};
    if (!s.dest_object.empty()) a.dest_object = id_of(s.dest_object);
    if (!s.dest_region.empty()) a.dest_region = region_of(s);
    return a;
  };
  const auto achieved = [&](const ChainStep& s) {
    const auto [p, negated] = subtask_goal(action_of(s), obs);
    return sim::ground_truth(w, p) != negated;
  };
  const auto inverse = [&](const ChainStep& s) {
    ChainStep r{inverse_skill(s.verb), s.subject, "", ""};
    switch (s.verb) {
      case Verb::kPushIn:
      case Verb::kPushOut: r.dest_region = s.dest_region; break;
      case Verb::kPick: r.dest_region = "home"; break;
      case Verb::kStack: r.dest_region = "home"; break;
      default: break;
    }
    return r;
  };
  const auto to_raw = [&](const ChainStep& s) {
    const SubtaskAction a = action_of(s);
    RawSubtask r{std::string(to_string(s.verb)), s.subject, s.dest_object,
                 a.dest_region.value_or(""), describe_action(a, obs)};
    return r;
  };
  const auto lifo = [&](const std::vector<ChainStep>& f) {
    std::vector<ChainStep> r;
    for (auto it = f.rbegin(); it != f.rend(); ++it) r.push_back(inverse(*it));
    return r;
  };

  std::vector<ChainStep> forward;
  std::vector<ChainStep> reverse;
  if (rule.toggle) {
    // Start the toggle sequence from whatever state the object is in.
    forward = rule.chain;
    if (achieved(forward.front())) {
      for (auto& s : forward) s = inverse(s);
    }
  } else {
    std::vector<bool> done(rule.chain.size());
    for (std::size_t i = rule.chain.size(); i-- > 0;) {
      const ChainStep& s = rule.chain[i];
      const bool next_place_done = i + 1 < rule.chain.size() && done[i + 1] &&
                                   rule.chain[i + 1].verb == Verb::kPlace &&
                                   rule.chain[i + 1].subject == s.subject;
      done[i] = achieved(s) || (s.verb == Verb::kPick && next_place_done);
    }
    if (std::all_of(done.begin(), done.end(), [](bool b) { return b; })) {
      forward = lifo(rule.chain);
      reverse = rule.chain;
    } else {
      for (std::size_t i = 0; i < rule.chain.size(); ++i)
        if (!done[i]) forward.push_back(rule.chain[i]);
    }
  }
  if (reverse.empty()) reverse = lifo(forward);
  RawPlan out;
  for (const auto& s : forward) out.forward.push_back(to_raw(s));
  for (const auto& s : reverse) out.reverse.push_back(to_raw(s));
  return out;
}

}  // namespace autoloop
