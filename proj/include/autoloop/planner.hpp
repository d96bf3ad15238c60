#pragma once

#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "autoloop/codec.hpp"
#include "autoloop/library.hpp"
#include "autoloop/sim.hpp"

namespace autoloop {

struct GroundedItem {
  int id = -1;  // -1 when the backend only knows the name
  ObjectDescriptor descriptor;
  bool operator==(const GroundedItem&) const = default;
};

struct GroundedScene {
  std::vector<GroundedItem> items;
  const GroundedItem* find(int id) const;
  const GroundedItem* find(const std::string& name) const;
  bool operator==(const GroundedScene&) const = default;
};

enum class PlanMode { kAtomicSimple, kAtomicCluttered, kLongHorizon };
std::string_view to_string(PlanMode m);
PlanMode parse_plan_mode(std::string_view s);

// Backend output before it is checked against the scene: objects by name.
struct RawSubtask {
  std::string verb;
  std::string subject;
  std::string dest_object;
  std::string dest_region;
  std::string description;
};

struct RawPlan {
  std::vector<RawSubtask> forward;
  std::vector<RawSubtask> reverse;
};

class ReasonerBackend {
 public:
  virtual ~ReasonerBackend() = default;
  virtual GroundedScene ground(const std::string& prompt, const sim::SceneDescription& obs) = 0;
  virtual RawPlan plan(const std::string& prompt, const sim::SceneDescription& obs,
                       const std::string& library_summary) = 0;
  // Returns candidate ids, best first.
  virtual std::vector<std::string> rank(const SkillQuery& query,
                                        const std::vector<const Demonstration*>& candidates) = 0;
};

struct SubtaskAction {
  Verb verb = Verb::kPick;
  int subject = 0;
  std::optional<int> dest_object;
  std::optional<std::string> dest_region;
  bool operator==(const SubtaskAction&) const = default;
};

struct Subtask {
  SubtaskAction action;
  std::string demo_id;
  std::string description;
  std::set<int> mask;
  sim::Predicate goal;
  bool goal_negated = false;  // success means the goal predicate is false
  bool operator==(const Subtask&) const = default;
};

struct TaskPlan {
  std::vector<Subtask> forward;
  std::vector<Subtask> reverse;
  GroundedScene scene;
  PlanMode mode = PlanMode::kAtomicSimple;
  bool operator==(const TaskPlan&) const = default;
};

struct LifoViolation {
  int j = 0;  // 1-based reverse index, 0 for plan-level problems
  std::string reason;
};

std::vector<LifoViolation> validate_lifo(const TaskPlan& plan);

// Throws GroundingViolation if the backend names an object absent from obs.
GroundedScene ground_objects(ReasonerBackend& backend, const sim::SceneDescription& obs);

struct PlanOptions {
  std::size_t retrieval_r = 3;
  SimilarityWeights weights;
};

// Throws PlanningFailure when no valid plan is produced within one retry.
TaskPlan plan_task(ReasonerBackend& backend, const sim::SceneDescription& obs,
                   const GroundedScene& scene, const AffordanceLibrary& lib, PlanMode mode,
                   const PlanOptions& opt = {});

// Goal predicate a subtask is judged by.
std::pair<sim::Predicate, bool> subtask_goal(const SubtaskAction& a,
                                             const sim::SceneDescription& obs);
std::string describe_action(const SubtaskAction& a, const sim::SceneDescription& obs);

std::string library_summary(const AffordanceLibrary& lib);

codec::json plan_to_json(const TaskPlan& plan);
TaskPlan plan_from_json(const codec::json& j);

// Rule-table stand-in for the reasoning model. Holds a handle to the live
// world, which it reads when asked to plan.
class OracleBackend : public ReasonerBackend {
 public:
  OracleBackend(const sim::WorldState& world, std::uint64_t seed, SimilarityWeights w = {});

  GroundedScene ground(const std::string& prompt, const sim::SceneDescription& obs) override;
  RawPlan plan(const std::string& prompt, const sim::SceneDescription& obs,
               const std::string& library_summary) override;
  std::vector<std::string> rank(const SkillQuery& query,
                                const std::vector<const Demonstration*>& candidates) override;

  // Mode the rule table assigns to a template; PlanningFailure if unknown.
  static PlanMode mode_for(const std::string& template_name);

 private:
  const sim::WorldState* world_;
  std::uint64_t seed_;
  SimilarityWeights weights_;
};

}  // namespace autoloop
