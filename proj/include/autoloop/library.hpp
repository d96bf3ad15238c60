#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "autoloop/geometry.hpp"
#include "autoloop/skills.hpp"

namespace autoloop {

struct DemonstrationStep {
  PointCloud cloud;
  Pose ee_pose;
  int gripper = 0;  // 0 open, 1 closed

  bool operator==(const DemonstrationStep&) const = default;
};

enum class Provenance { kSeed, kHarvested };

struct Demonstration {
  std::string id;
  Verb skill_verb = Verb::kPick;
  ObjectDescriptor target;
  std::vector<DemonstrationStep> steps;
  // Simulation object labels; the first entry is the manipulated subject.
  // Empty for records without ground-truth labels.
  std::vector<int> object_ids;
  Provenance provenance = Provenance::kSeed;

  bool operator==(const Demonstration&) const = default;
};

// Maximum end-effector translation between consecutive steps.
inline constexpr double kMaxStepJump = 0.10;
// Per-step cloud budget on disk.
inline constexpr std::size_t kMaxStoredCloudPoints = 512;

// Throws InvariantError describing the first violated invariant.
void validate(const Demonstration& d);

struct SimilarityWeights {
  double action = 0.6;
  double geometry = 0.4;
  double name_bonus = 0.2;
};

struct SkillQuery {
  Verb verb;
  ObjectDescriptor object;
};

double action_affinity(Verb query, Verb demo);
double shape_affinity(Shape a, Shape b);
double score_similarity(const SkillQuery& query, const Demonstration& d,
                        const SimilarityWeights& w = {});

class AffordanceLibrary {
 public:
  std::size_t size() const { return demos_.size(); }
  bool empty() const { return demos_.empty(); }
  bool contains(const std::string& id) const { return demos_.count(id) > 0; }
  const Demonstration& at(const std::string& id) const;
  const std::map<std::string, Demonstration>& demos() const { return demos_; }

  // Throws InvariantError on duplicate id or invalid demonstration.
  void append(Demonstration d);

  // Sorted by descending score, ties by ascending id. |result| = min(r, size).
  std::vector<const Demonstration*> retrieve_ranked(
      const SkillQuery& query, std::size_t r,
      const SimilarityWeights& w = {}) const;

  bool operator==(const AffordanceLibrary&) const = default;

 private:
  std::map<std::string, Demonstration> demos_;
};

// One record per line. `path` is a file; a directory loads every *.jsonl file
// inside it in lexicographic order.
AffordanceLibrary load_library(const std::filesystem::path& path);
void save_library(const AffordanceLibrary& lib, const std::filesystem::path& path);

std::string serialize_demonstration(const Demonstration& d);
Demonstration parse_demonstration(const std::string& line, long record_index = -1);
std::string serialize_library(const AffordanceLibrary& lib);

// Stable content hash of the serialized library.
std::uint64_t library_hash(const AffordanceLibrary& lib);

}  // namespace autoloop
