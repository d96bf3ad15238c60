#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autoloop/codec.hpp"
#include "autoloop/dataset.hpp"
#include "autoloop/evaluator.hpp"
#include "autoloop/fsm.hpp"
#include "autoloop/planner.hpp"
#include "autoloop/policy.hpp"
#include "autoloop/sim.hpp"

namespace autoloop {

struct TaskSpec {
  std::string template_name;
  int episodes = 0;
};

struct BackendConfig {
  std::string kind = "oracle";  // oracle | external
  std::string endpoint;
  int timeout_ms = 10000;
  int retries = 2;
};

struct CampaignConfig {
  std::filesystem::path library_path;
  std::filesystem::path dataset_path;  // empty: nothing is written
  std::vector<TaskSpec> tasks;
  BackendConfig backend;
  sim::PerturbationConfig perturb_forward;
  sim::PerturbationConfig perturb_reverse;
  int repetition_cap = 5;
  std::size_t retrieval_r = 3;
  int diffusion_k = 16;
  double diffusion_alpha = 1.0;
  double diffusion_gamma = 0.5;
  double diffusion_sigma0 = 0.01;
  std::uint64_t master_seed = 0;
  bool harvest_to_library = false;
  bool harvest_reverse = false;
  int workers = 1;
  bool use_mask = true;
  int chunk_episodes = 50;        // episodes per job
  int respawn_after_failures = 3;  // consecutive forward aborts before a fresh scene
  int max_plan_failures = 10;      // consecutive, per job

  DiffusionSchedule schedule() const;
  void validate() const;  // InvariantError
};

CampaignConfig parse_campaign_config(const codec::json& j);
CampaignConfig load_campaign_config(const std::filesystem::path& path);
codec::json to_json(const CampaignConfig& cfg);

// Per-call factories; the oracle variants read the world they are given.
struct Modules {
  std::function<std::unique_ptr<ReasonerBackend>(const sim::WorldState&, std::uint64_t seed)> reasoner;
  std::function<EvaluatorBackends(const sim::WorldState&)> evaluator;
  PredictorFactory predictor;
};

Modules oracle_modules(SimilarityWeights weights = {});
// Oracle or external depending on cfg.backend.kind (defined with the HTTP adapters).
Modules modules_for(const CampaignConfig& cfg);

struct EpisodeRecord {
  std::string task;
  int job = 0;
  int index = 0;       // within the job
  int plan_index = 0;  // within the job; episodes of one success loop share it
  EpisodeMeta meta;
  Trajectory forward;
  std::optional<Trajectory> reverse;  // iff state C was entered
  std::vector<bool> forward_success;
  std::vector<bool> reverse_success;
  StorageAction storage = StorageAction::kDiscard;
  FsmState next_state = FsmState::kTaskPlanning;
  std::optional<std::int64_t> stored_id;
  double wall_ms = 0.0;

  bool forward_ok() const;
  bool entered_reverse() const { return reverse.has_value(); }
};

struct EpisodeOutcome {
  EpisodeRecord record;
  sim::WorldState world;
};

// Forward subtasks with early abort, then the reverse plan if the forward
// phase succeeded. Module errors fail the subtask; they never escape.
EpisodeOutcome run_episode(const sim::WorldState& world, const TaskPlan& plan,
                           const AffordanceLibrary& lib, const Modules& modules,
                           const CampaignConfig& cfg, Rng& rng);

struct TaskStats {
  std::string task;
  int episodes = 0;
  int forward_success = 0;
  int entered_reverse = 0;
  int reverse_success = 0;
  int dual = 0;
  int single = 0;
  int discarded = 0;
  double p_forward = 0.0;
  double p_reverse = 0.0;  // 0 when no episode entered C
  double p_total = 0.0;

  bool reconciles() const { return dual + single + discarded == episodes; }
};

struct CampaignStats {
  std::vector<TaskStats> tasks;  // first-appearance order
  TaskStats total;
  int plan_calls = 0;
  int plan_failures = 0;
  int respawns = 0;
  int harvested = 0;
};

// InvariantError on empty input.
CampaignStats compute_stats(const std::vector<EpisodeRecord>& records);
codec::json stats_to_json(const CampaignStats& s);
std::string format_report(const CampaignStats& s);

struct JobResult {
  std::vector<EpisodeRecord> records;
  int plan_calls = 0;
  int plan_failures = 0;
  int respawns = 0;
  std::vector<std::string> notes;
};

// One worker's share: a single template, a fresh spawn, then the FSM loop.
JobResult run_job(const std::string& template_name, int episodes, int job, std::uint64_t job_seed,
                  const sim::SceneRegistry& registry, const AffordanceLibrary& lib,
                  const Modules& modules, const CampaignConfig& cfg);

// Re-simulates the successful subtasks of a stored episode as library
// demonstrations ("h-<id>-f<i>", and "-r<i>" when `reverse` is set).
std::vector<Demonstration> harvest_episode(const EpisodeRecord& record, const std::string& id_prefix,
                                           bool reverse);

struct CampaignResult {
  std::vector<EpisodeRecord> records;  // job order
  CampaignStats stats;
  std::vector<std::string> notes;
  AffordanceLibrary library;  // after harvest
};

CampaignResult run_campaign(const CampaignConfig& cfg, const AffordanceLibrary& lib,
                            const Modules& modules,
                            const sim::SceneRegistry& registry = sim::SceneRegistry::builtin());
// Loads the library from cfg.library_path and builds modules from cfg.backend;
// saves the grown library back when harvesting.
CampaignResult run_campaign(const CampaignConfig& cfg);

}  // namespace autoloop
