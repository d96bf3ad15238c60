#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "autoloop/geometry.hpp"
#include "autoloop/rng.hpp"
#include "autoloop/skills.hpp"

namespace autoloop {

// Kinematic tabletop world. Lengths in meters, angles in radians.
namespace sim {

inline constexpr double kGraspTolerance = 0.02;
inline constexpr double kPushMargin = 0.02;
inline constexpr double kHandleTolerance = 0.02;
inline constexpr double kContainerWallHeight = 0.15;
inline constexpr double kMaxLidAngle = 1.5707963267948966;
inline constexpr double kOpenThreshold = 60.0 * 3.14159265358979323846 / 180.0;
inline constexpr double kClosedThreshold = 10.0 * 3.14159265358979323846 / 180.0;
inline constexpr int kPointsPerObject = 256;
inline constexpr int kTableId = 0;
inline constexpr int kHeldSupport = -1;

struct Bounds2 {
  double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
  bool contains(double x, double y) const {
    return x >= xmin && x <= xmax && y >= ymin && y <= ymax;
  }
  Vec3 center(double z = 0.0) const {
    return {0.5 * (xmin + xmax), 0.5 * (ymin + ymax), z};
  }
  bool operator==(const Bounds2&) const = default;
};

inline constexpr Bounds2 kTableBounds{0.0, 0.9, -0.5, 0.5};

struct WorkspaceBounds {
  Vec3 min{-0.2, -0.7, 0.0};
  Vec3 max{1.0, 0.7, 0.8};
};

struct SimObject {
  int id = 0;
  ObjectDescriptor descriptor;
  Pose pose;
  Vec3 half_extents = Vec3::Constant(0.025);
  bool held = false;
  double lid_angle = 0.0;  // hinged objects only
  int support_id = kTableId;

  // Static properties from the scene template.
  bool graspable = true;
  bool container = false;
  bool hinged = false;
  bool distractor = false;
  std::string home_region;

  double top() const { return pose.translation().z() + half_extents.z(); }
  double bottom() const { return pose.translation().z() - half_extents.z(); }
  Vec3 grasp_point() const { return pose.translation() + Vec3(0, 0, half_extents.z()); }

  bool operator==(const SimObject&) const = default;
};

struct WorldState {
  std::string template_name;
  std::map<int, SimObject> objects;
  Pose ee_pose;
  int gripper = 0;
  std::optional<int> held_object;
  Pose held_offset;              // object pose expressed in the ee frame
  std::optional<int> engaged_lid;
  std::map<std::string, Bounds2> regions;
  std::uint64_t rng_seed = 0;

  const SimObject& object(int id) const;
  SimObject& object(int id);
  std::optional<int> find(const std::string& name) const;

  bool operator==(const WorldState&) const = default;
};

struct ObjectTemplate {
  std::string name;
  Shape shape = Shape::kCuboid;
  Vec3 half_extents = Vec3::Constant(0.025);
  Bounds2 spawn_region;
  // "open", "closed", "hinged", "container", "fixed", "distractor",
  // "on:<object name>", "home:<region name>".
  std::vector<std::string> initial_tags;
};

struct SceneTemplate {
  std::string name;
  std::vector<ObjectTemplate> objects;
  std::map<std::string, Bounds2> regions;
};

class SceneRegistry {
 public:
  static const SceneRegistry& builtin();
  static SceneRegistry from_json(const std::string& text);
  static SceneRegistry load(const std::filesystem::path& path);

  const SceneTemplate& get(const std::string& name) const;  // UnknownTemplate
  bool contains(const std::string& name) const { return templates_.count(name) > 0; }
  std::vector<std::string> names() const;
  void add(SceneTemplate t);

 private:
  std::map<std::string, SceneTemplate> templates_;
};

// Default registry text (the same content as config/scenes.json).
const std::string& builtin_registry_json();

WorldState spawn_scene(const SceneRegistry& registry, const std::string& template_name,
                       std::uint64_t seed);

WorldState apply_waypoint(const WorldState& w, const Pose& target_ee, int gripper,
                          const WorkspaceBounds& bounds = {});

// Fixed-budget surface sampling. With a mask, only masked objects plus the
// table plane are emitted.
PointCloud render_point_cloud(const WorldState& w,
                              const std::optional<std::set<int>>& mask = std::nullopt);

struct SceneEntry {
  int id = 0;
  std::string name;
  Shape shape = Shape::kCuboid;
  Vec3 position = Vec3::Zero();
  std::vector<std::string> tags;
  bool operator==(const SceneEntry&) const = default;
};

struct SceneDescription {
  std::vector<SceneEntry> objects;
  std::vector<std::string> regions;

  const SceneEntry* find(int id) const;
  const SceneEntry* find(const std::string& name) const;
  bool has_tag(int id, const std::string& tag) const;
  bool operator==(const SceneDescription&) const = default;
};

SceneDescription describe_scene(const WorldState& w);

enum class PredicateKind { kOn, kIn, kHeld, kOpen, kClosed, kStackedOn, kInRegion };

std::string_view to_string(PredicateKind k);
PredicateKind parse_predicate_kind(std::string_view s);

struct Predicate {
  PredicateKind kind = PredicateKind::kHeld;
  int subject = 0;
  std::optional<int> object;          // on / in / stacked_on (0 = table)
  std::optional<std::string> region;  // in_region
  bool operator==(const Predicate&) const = default;
};

bool ground_truth(const WorldState& w, const Predicate& p);

// Every applicable predicate of the scene with its truth value; used to check
// that a reset restored the world.
std::vector<std::pair<Predicate, bool>> all_predicates(const WorldState& w);

struct PerturbationConfig {
  double p_perturb = 0.0;
  double sigma_t = 0.0;
};

struct PerturbationEvent {
  int object_id = 0;
  Vec3 displacement = Vec3::Zero();  // requested xy displacement
};

WorldState inject_perturbation(const WorldState& w, const PerturbationConfig& cfg, Rng& rng,
                               std::optional<PerturbationEvent>* event = nullptr);

// Re-applies a recorded perturbation.
WorldState apply_perturbation(const WorldState& w, const PerturbationEvent& e);

// Current handle position of a hinged object.
Vec3 handle_position(const SimObject& o);

}  // namespace sim
}  // namespace autoloop
