#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "autoloop/codec.hpp"
#include "autoloop/evaluator.hpp"
#include "autoloop/fsm.hpp"
#include "autoloop/seed_demos.hpp"
#include "autoloop/sim.hpp"

namespace autoloop {

inline constexpr int kDatasetSchemaVersion = 1;

// One executed subtask.
struct TrajectorySegment {
  int subtask = 0;
  std::string demo_id;
  std::vector<Waypoint> waypoints;
  std::optional<sim::PerturbationEvent> perturbation;  // applied before evaluation
  bool success = false;
  bool flagged = false;
  std::string error;
  StageLog log;
  sim::SceneDescription boundary;  // scene right after the subtask
};

struct Trajectory {
  std::vector<TrajectorySegment> segments;
  bool empty() const { return segments.empty(); }
};

struct EpisodeMeta {
  std::string task;
  codec::json plan;
  sim::WorldState initial_world;
  bool fresh_spawn = false;  // initial_world == spawn_scene(task, spawn_seed)
  std::uint64_t spawn_seed = 0;
  std::uint64_t episode_seed = 0;
  std::uint64_t library_hash = 0;
};

struct StoredEpisode {
  std::int64_t id = 0;
  int schema_version = kDatasetSchemaVersion;
  StorageAction kind = StorageAction::kDual;  // dual or single
  EpisodeMeta meta;
  Trajectory forward;
  std::optional<Trajectory> reverse;  // dual only
};

// Throws InvariantError on kind/payload mismatch.
void validate(const StoredEpisode& e);

codec::json world_to_json(const sim::WorldState& w);
sim::WorldState world_from_json(const codec::json& j);
codec::json scene_to_json(const sim::SceneDescription& s);
sim::SceneDescription scene_from_json(const codec::json& j);

std::string serialize_episode(const StoredEpisode& e);
StoredEpisode parse_episode(const std::string& line);

// Append-only single writer. Ids continue after the largest id on disk.
class DatasetWriter {
 public:
  explicit DatasetWriter(const std::filesystem::path& path);
  ~DatasetWriter();
  DatasetWriter(const DatasetWriter&) = delete;
  DatasetWriter& operator=(const DatasetWriter&) = delete;

  std::int64_t store_dual(const Trajectory& fwd, const Trajectory& rev, const EpisodeMeta& meta);
  std::int64_t store_single(const Trajectory& fwd, const EpisodeMeta& meta);
  // Generic entry point; the id field is assigned here.
  std::int64_t store(StoredEpisode e);

  std::int64_t next_id() const { return next_id_; }

 private:
  std::filesystem::path path_;
  std::FILE* file_ = nullptr;
  std::int64_t next_id_ = 1;
};

struct EpisodeFilter {
  std::optional<std::string> task;
  std::optional<StorageAction> kind;
  std::optional<std::int64_t> min_id;
  std::optional<std::int64_t> max_id;
};

struct Corruption {
  long line = 0;
  std::uint64_t offset = 0;  // byte offset of the bad record
  std::string message;
};

struct ReadResult {
  std::vector<StoredEpisode> episodes;
  std::vector<Corruption> corruptions;
};

ReadResult read_episodes(const std::filesystem::path& path, const EpisodeFilter& filter = {});

struct PoseDelta {
  int object_id = 0;
  double translation = 0.0;
};

struct ReplayReport {
  bool agreement = true;      // every re-evaluated b_succ matches the record
  bool spawn_matches = true;  // only checked for fresh spawns
  std::vector<std::string> mismatches;
  std::vector<PoseDelta> pose_deltas;
  std::optional<bool> reset_restored;  // dual episodes
  sim::WorldState final_world;
};

// Re-executes the recorded waypoints and perturbations from the recorded
// start and re-judges every subtask with the oracle evaluator.
ReplayReport replay(const StoredEpisode& e, const sim::SceneRegistry& registry,
                    std::optional<std::uint64_t> seed_override = std::nullopt);

}  // namespace autoloop
