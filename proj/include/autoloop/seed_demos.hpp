#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "autoloop/library.hpp"
#include "autoloop/sim.hpp"

namespace autoloop {

struct Waypoint {
  Pose pose;
  int gripper = 0;
  bool operator==(const Waypoint&) const = default;
};

// Parameterized waypoint scripts over simulator grasp points. They play the
// role of the human teleoperator when building the seed library.
namespace scripts {

inline constexpr double kHoverHeight = 0.2;
inline constexpr double kGraspClearance = 0.01;
inline constexpr double kPushDistance = 0.3;
inline constexpr double kScriptStep = 0.05;

// Appends `to` to `path`, inserting intermediate points so consecutive
// waypoints are at most kScriptStep apart.
void append_segment(std::vector<Waypoint>& path, const Vec3& to, int gripper);

std::vector<Waypoint> pick(const sim::WorldState& w, int subject);
// `top_target` is where the top-center of the held subject should end up.
std::vector<Waypoint> place(const sim::WorldState& w, int subject, const Vec3& top_target);
std::vector<Waypoint> transport(const sim::WorldState& w, int subject, const Vec3& top_target);
// direction = +1 pushes along +x, -1 along -x.
std::vector<Waypoint> push(const sim::WorldState& w, int subject, double direction);
std::vector<Waypoint> lid(const sim::WorldState& w, int hinged, bool close);

// Top-center target for resting `subject` on `dest` (object) or in `region`.
Vec3 top_target_on(const sim::WorldState& w, int subject, int dest);
Vec3 top_target_in(const sim::WorldState& w, int subject, const std::string& region);

}  // namespace scripts

// Executes `path` from `w`, recording one demonstration step per waypoint.
// Step clouds hold the labels in `object_ids` only (no table points).
Demonstration record_demonstration(sim::WorldState& w, const std::string& id, Verb verb,
                                   int subject, std::vector<int> object_ids,
                                   const std::vector<Waypoint>& path);

// 2-5 scripted demonstrations per verb in {pick, place, push_in, push_out,
// stack, unstack, open, close}. Throws InvariantError if a script fails to
// achieve its goal.
AffordanceLibrary record_seed_demos(const sim::SceneRegistry& registry, int per_skill,
                                    std::uint64_t seed);

}  // namespace autoloop
