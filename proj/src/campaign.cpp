#include "autoloop/campaign.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include "autoloop/error.hpp"
#include "autoloop/rng.hpp"
#include "autoloop/seed_demos.hpp"

namespace autoloop {

using codec::json;

// ---------------------------------------------------------------------------
// Config

DiffusionSchedule CampaignConfig::schedule() const {
  return DiffusionSchedule::make(diffusion_k, diffusion_alpha, diffusion_gamma, diffusion_sigma0);
}

void CampaignConfig::validate() const {
  auto fail = [](const std::string& m) { throw InvariantError("campaign config: " + m); };
  if (tasks.empty()) fail("no tasks");
  for (const auto& t : tasks) {
    if (t.template_name.empty()) fail("task without a template");
    if (t.episodes < 1) fail("task '" + t.template_name + "' needs at least one episode");
  }
  if (backend.kind != "oracle" && backend.kind != "external")
    fail("backend kind must be oracle or external");
  if (backend.kind == "external" && backend.endpoint.empty()) fail("external backend needs an endpoint");
  if (backend.timeout_ms < 1 || backend.retries < 0) fail("bad backend timeout/retries");
  for (const auto* p : {&perturb_forward, &perturb_reverse}) {
    if (!(p->p_perturb >= 0.0 && p->p_perturb <= 1.0)) fail("perturbation p must lie in [0, 1]");
    if (!(p->sigma_t >= 0.0)) fail("perturbation sigma must be non-negative");
  }
  if (repetition_cap < 1) fail("repetition_cap must be >= 1");
  if (retrieval_r < 1) fail("retrieval_r must be >= 1");
  if (workers < 1) fail("workers must be >= 1");
  if (chunk_episodes < 1) fail("chunk_episodes must be >= 1");
  if (respawn_after_failures < 1 || max_plan_failures < 1) fail("failure limits must be >= 1");
  if (harvest_to_library && std::filesystem::is_directory(library_path))
    fail("harvesting needs a library file, not a directory");
  schedule();
}

namespace {

sim::PerturbationConfig parse_perturb(const json& j) {
  codec::check_fields(j, {}, {"p", "sigma"});
  sim::PerturbationConfig c;
  if (j.contains("p")) c.p_perturb = codec::get<double>(j, "p");
  if (j.contains("sigma")) c.sigma_t = codec::get<double>(j, "sigma");
  return c;
}

template <class T>
void opt(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = codec::get<T>(j, key);
}

}  // namespace

CampaignConfig parse_campaign_config(const json& j) {
  codec::check_fields(j, {"tasks"},
                      {"library_path", "dataset_path", "backend", "perturbation", "repetition_cap",
                       "retrieval_r", "diffusion", "master_seed", "harvest_to_library",
                       "harvest_reverse", "workers", "use_mask", "chunk_episodes",
                       "respawn_after_failures", "max_plan_failures"});
  CampaignConfig c;
  if (j.contains("library_path")) c.library_path = codec::get<std::string>(j, "library_path");
  if (j.contains("dataset_path")) c.dataset_path = codec::get<std::string>(j, "dataset_path");
  for (const auto& t : j.at("tasks")) {
    codec::check_fields(t, {"template", "episodes"});
    c.tasks.push_back({codec::get<std::string>(t, "template"), codec::get<int>(t, "episodes")});
  }
  if (j.contains("backend")) {
    const auto& b = j.at("backend");
    codec::check_fields(b, {}, {"kind", "endpoint", "timeout_ms", "retries"});
    opt(b, "kind", c.backend.kind);
    opt(b, "endpoint", c.backend.endpoint);
    opt(b, "timeout_ms", c.backend.timeout_ms);
    opt(b, "retries", c.backend.retries);
  }
  if (j.contains("perturbation")) {
    const auto& p = j.at("perturbation");
    codec::check_fields(p, {}, {"forward", "reverse"});
    if (p.contains("forward")) c.perturb_forward = parse_perturb(p.at("forward"));
    if (p.contains("reverse")) c.perturb_reverse = parse_perturb(p.at("reverse"));
  }
  if (j.contains("diffusion")) {
    const auto& d = j.at("diffusion");
    codec::check_fields(d, {}, {"K", "alpha", "gamma", "sigma0"});
    opt(d, "K", c.diffusion_k);
    opt(d, "alpha", c.diffusion_alpha);
    opt(d, "gamma", c.diffusion_gamma);
    opt(d, "sigma0", c.diffusion_sigma0);
  }
  opt(j, "repetition_cap", c.repetition_cap);
  opt(j, "retrieval_r", c.retrieval_r);
  opt(j, "master_seed", c.master_seed);
  opt(j, "harvest_to_library", c.harvest_to_library);
  opt(j, "harvest_reverse", c.harvest_reverse);
  opt(j, "workers", c.workers);
  opt(j, "use_mask", c.use_mask);
  opt(j, "chunk_episodes", c.chunk_episodes);
  opt(j, "respawn_after_failures", c.respawn_after_failures);
  opt(j, "max_plan_failures", c.max_plan_failures);
  return c;
}

CampaignConfig load_campaign_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError("config '" + path.string() + "': " + e.what());
  }
  CampaignConfig c = parse_campaign_config(j);
  const auto base = path.parent_path();
  if (!c.library_path.empty() && c.library_path.is_relative()) c.library_path = base / c.library_path;
  if (!c.dataset_path.empty() && c.dataset_path.is_relative()) c.dataset_path = base / c.dataset_path;
  return c;
}

json to_json(const CampaignConfig& c) {
  json tasks = json::array();
  for (const auto& t : c.tasks) tasks.push_back({{"template", t.template_name}, {"episodes", t.episodes}});
  return {{"library_path", c.library_path.string()},
          {"dataset_path", c.dataset_path.string()},
          {"tasks", tasks},
          {"backend",
           {{"kind", c.backend.kind},
            {"endpoint", c.backend.endpoint},
            {"timeout_ms", c.backend.timeout_ms},
            {"retries", c.backend.retries}}},
          {"perturbation",
           {{"forward", {{"p", c.perturb_forward.p_perturb}, {"sigma", c.perturb_forward.sigma_t}}},
            {"reverse", {{"p", c.perturb_reverse.p_perturb}, {"sigma", c.perturb_reverse.sigma_t}}}}},
          {"repetition_cap", c.repetition_cap},
          {"retrieval_r", c.retrieval_r},
          {"diffusion",
           {{"K", c.diffusion_k},
            {"alpha", c.diffusion_alpha},
            {"gamma", c.diffusion_gamma},
            {"sigma0", c.diffusion_sigma0}}},
          {"master_seed", c.master_seed},
          {"harvest_to_library", c.harvest_to_library},
          {"harvest_reverse", c.harvest_reverse},
          {"workers", c.workers},
          {"use_mask", c.use_mask},
          {"chunk_episodes", c.chunk_episodes},
          {"respawn_after_failures", c.respawn_after_failures},
          {"max_plan_failures", c.max_plan_failures}};
}

Modules oracle_modules(SimilarityWeights weights) {
  Modules m;
  m.reasoner = [weights](const sim::WorldState& w, std::uint64_t seed) -> std::unique_ptr<ReasonerBackend> {
    return std::make_unique<OracleBackend>(w, seed, weights);
  };
  m.evaluator = [](const sim::WorldState& w) { return oracle_evaluator(w); };
  m.predictor = reference_predictor_factory();
  return m;
}

// ---------------------------------------------------------------------------
// Episodes

bool EpisodeRecord::forward_ok() const { return storage == StorageAction::kDual || storage == StorageAction::kSingle; }

namespace {

// Lift straight up, then cross at a height that clears every object, so the
// move to the first generated waypoint never sweeps through the scene.
std::vector<Waypoint> transit(const sim::WorldState& w, const Pose& first) {
  double safe = scripts::kHoverHeight;
  for (const auto& [id, o] : w.objects) safe = std::max(safe, o.top() + 0.08);
  const Vec3 from = w.ee_pose.translation();
  const Vec3 to = first.translation();
  std::vector<Waypoint> path;
  if (to.z() >= safe && from.z() >= safe) return path;
  if (std::hypot(to.x() - from.x(), to.y() - from.y()) < 1e-9) return path;
  if (from.z() < safe) path.push_back({Pose(Vec3(from.x(), from.y(), safe), w.ee_pose.rotation()), w.gripper});
  if (to.z() < safe) path.push_back({Pose(Vec3(to.x(), to.y(), safe), first.rotation()), w.gripper});
  return path;
}

TrajectorySegment execute_subtask(sim::WorldState& w, const Subtask& st, int index,
                                  const AffordanceLibrary& lib, const Modules& m,
                                  const CampaignConfig& cfg, const DiffusionSchedule& schedule,
                                  const sim::PerturbationConfig& perturb, Rng& rng) {
  TrajectorySegment seg;
  seg.subtask = index;
  seg.demo_id = st.demo_id;
  try {
    const Demonstration& demo = lib.at(st.demo_id);
    Observation obs;
    obs.cloud = sim::render_point_cloud(w, cfg.use_mask ? std::optional(st.mask) : std::nullopt);
    obs.ee_pose = w.ee_pose;
    obs.gripper = w.gripper;
    obs.subject = cfg.use_mask ? st.action.subject : -1;
    if (st.action.dest_object && *st.action.dest_object != sim::kTableId)
      obs.dest_label = *st.action.dest_object;
    if (st.action.dest_region) {
      auto it = w.regions.find(*st.action.dest_region);
      if (it == w.regions.end()) throw InvariantError("unknown region '" + *st.action.dest_region + "'");
      obs.dest_point = it->second.center();
    }
    const ActionSequence a = generate_actions(demo, obs, schedule, m.predictor, rng);
    for (const auto& wp : transit(w, a.steps.front().ee_pose)) {
      w = sim::apply_waypoint(w, wp.pose, wp.gripper);
      seg.waypoints.push_back(wp);
    }
    for (const auto& s : a.steps) {
      w = sim::apply_waypoint(w, s.ee_pose, s.gripper());
      seg.waypoints.push_back({s.ee_pose, s.gripper()});
    }
  } catch (const ProtocolError&) {
    throw;
  } catch (const std::exception& e) {
    seg.error = e.what();
  }
  std::optional<sim::PerturbationEvent> event;
  w = sim::inject_perturbation(w, perturb, rng, &event);
  seg.perturbation = event;
  if (seg.error.empty()) {
    const SuccessSignal s = evaluate(m.evaluator(w), st.description, st, sim::describe_scene(w));
    seg.success = s.value;
    seg.flagged = s.flagged;
    seg.error = s.error;
    seg.log = s.log;
  }
  seg.boundary = sim::describe_scene(w);
  return seg;
}

bool run_phase(sim::WorldState& w, const std::vector<Subtask>& steps, Trajectory& out,
               std::vector<bool>& flags, const AffordanceLibrary& lib, const Modules& m,
               const CampaignConfig& cfg, const DiffusionSchedule& schedule,
               const sim::PerturbationConfig& perturb, Rng& rng) {
  for (std::size_t i = 0; i < steps.size(); ++i) {
    out.segments.push_back(
        execute_subtask(w, steps[i], static_cast<int>(i), lib, m, cfg, schedule, perturb, rng));
    flags.push_back(out.segments.back().success);
    if (!flags.back()) return false;  // abort the rest of the queue
  }
  return true;
}

}  // namespace

EpisodeOutcome run_episode(const sim::WorldState& world, const TaskPlan& plan,
                           const AffordanceLibrary& lib, const Modules& modules,
                           const CampaignConfig& cfg, Rng& rng) {
  if (plan.forward.empty() || plan.reverse.empty()) throw InvariantError("run_episode needs a full plan");
  const auto t0 = std::chrono::steady_clock::now();
  const DiffusionSchedule schedule = cfg.schedule();
  EpisodeOutcome out{{}, world};
  EpisodeRecord& r = out.record;
  r.task = world.template_name;
  r.meta.task = world.template_name;
  r.meta.plan = plan_to_json(plan);
  r.meta.initial_world = world;

  const bool fwd_ok = run_phase(out.world, plan.forward, r.forward, r.forward_success, lib, modules,
                                cfg, schedule, cfg.perturb_forward, rng);
  FsmTransition t = step_fsm(FsmState::kForwardExecution, FsmEvent::forward(fwd_ok));
  if (t.next == FsmState::kReverseExecution) {
    r.reverse.emplace();
    const bool rev_ok = run_phase(out.world, plan.reverse, *r.reverse, r.reverse_success, lib,
                                  modules, cfg, schedule, cfg.perturb_reverse, rng);
    t = step_fsm(FsmState::kReverseExecution, FsmEvent::reverse(rev_ok));
  }
  r.storage = t.storage;
  r.next_state = t.next;
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

// ---------------------------------------------------------------------------
// Jobs

JobResult run_job(const std::string& template_name, int episodes, int job, std::uint64_t job_seed,
                  const sim::SceneRegistry& registry, const AffordanceLibrary& lib,
                  const Modules& modules, const CampaignConfig& cfg) {
  JobResult res;
  const std::uint64_t spawn_base = split_seed(job_seed, 1);
  const std::uint64_t episode_base = split_seed(job_seed, 2);
  const std::uint64_t plan_base = split_seed(job_seed, 3);
  const std::uint64_t lib_hash = library_hash(lib);

  std::uint64_t spawns = 0, spawn_seed = 0;
  sim::WorldState world;
  bool fresh = true;
  auto respawn = [&] {
    spawn_seed = split_seed(spawn_base, spawns++);
    world = sim::spawn_scene(registry, template_name, spawn_seed);
    fresh = true;
  };
  respawn();

  FsmState state = FsmState::kTaskPlanning;
  std::optional<TaskPlan> plan;
  int reps = 0, forward_aborts = 0, plan_fail_streak = 0, plan_index = -1;
  while (static_cast<int>(res.records.size()) < episodes) {
    if (state == FsmState::kTaskPlanning) {
      ++res.plan_calls;
      try {
        auto backend = modules.reasoner(world, split_seed(plan_base, res.plan_calls));
        const auto obs = sim::describe_scene(world);
        const auto scene = ground_objects(*backend, obs);
        PlanOptions po;
        po.retrieval_r = cfg.retrieval_r;
        plan = plan_task(*backend, obs, scene, lib, OracleBackend::mode_for(template_name), po);
        state = step_fsm(state, FsmEvent::plan_ready()).next;
        reps = 0;
        plan_fail_streak = 0;
        ++plan_index;
      } catch (const ProtocolError&) {
        throw;
      } catch (const std::exception& e) {
        state = step_fsm(state, FsmEvent::plan_failed()).next;
        ++res.plan_failures;
        res.notes.push_back(template_name + ": planning failed: " + e.what());
        if (++plan_fail_streak >= cfg.max_plan_failures) {
          res.notes.push_back(template_name + ": job " + std::to_string(job) + " abandoned after " +
                              std::to_string(plan_fail_streak) + " planning failures");
          break;
        }
        respawn();
        ++res.respawns;
      }
      continue;
    }

    const int index = static_cast<int>(res.records.size());
    const std::uint64_t episode_seed = split_seed(episode_base, static_cast<std::uint64_t>(index));
    Rng rng(episode_seed);
    EpisodeOutcome out = run_episode(world, *plan, lib, modules, cfg, rng);
    EpisodeRecord& r = out.record;
    r.job = job;
    r.index = index;
    r.plan_index = plan_index;
    r.meta.fresh_spawn = fresh;
    r.meta.spawn_seed = spawn_seed;
    r.meta.episode_seed = episode_seed;
    r.meta.library_hash = lib_hash;
    world = std::move(out.world);
    fresh = false;
    state = r.next_state;

    switch (r.storage) {
      case StorageAction::kDual:
        forward_aborts = 0;
        if (++reps >= cfg.repetition_cap) {
          state = step_fsm(state, FsmEvent::repetition_cap()).next;
          respawn();
          ++res.respawns;
        }
        break;
      case StorageAction::kSingle:
        forward_aborts = 0;
        break;
      default:
        if (++forward_aborts >= cfg.respawn_after_failures) {
          forward_aborts = 0;
          respawn();
          ++res.respawns;
        }
        break;
    }
    res.records.push_back(std::move(r));
  }
  return res;
}

// ---------------------------------------------------------------------------
// Harvest

namespace {

std::vector<Waypoint> densify(Vec3 from, int gripper, const std::vector<Waypoint>& wps) {
  std::vector<Waypoint> out;
  for (const auto& wp : wps) {
    const Vec3 to = wp.pose.translation();
    const int n = std::max(1, static_cast<int>(std::ceil((to - from).norm() / scripts::kScriptStep)));
    for (int k = 1; k < n; ++k)
      out.push_back({Pose(from + (to - from) * (static_cast<double>(k) / n), wp.pose.rotation()), gripper});
    out.push_back(wp);
    from = to;
    gripper = wp.gripper;
  }
  return out;
}

void harvest_phase(sim::WorldState& w, const Trajectory& t, const std::vector<Subtask>& steps,
                   const std::string& prefix, bool keep, std::vector<Demonstration>& out) {
  for (const auto& seg : t.segments) {
    const Subtask& st = steps.at(static_cast<std::size_t>(seg.subtask));
    const auto path = densify(w.ee_pose.translation(), w.gripper, seg.waypoints);
    if (keep && seg.success) {
      std::vector<int> ids{st.action.subject};
      for (int id : st.mask)
        if (id != st.action.subject) ids.push_back(id);
      try {
        Demonstration d = record_demonstration(w, prefix + std::to_string(seg.subtask),
                                               st.action.verb, st.action.subject, ids, path);
        d.provenance = Provenance::kHarvested;
        out.push_back(std::move(d));
      } catch (const Error&) {
        // re-simulation rejected (e.g. a jump over the step limit); skip this one
      }
    } else {
      for (const auto& wp : path) w = sim::apply_waypoint(w, wp.pose, wp.gripper);
    }
    if (seg.perturbation) w = sim::apply_perturbation(w, *seg.perturbation);
  }
}

}  // namespace

std::vector<Demonstration> harvest_episode(const EpisodeRecord& record, const std::string& id_prefix,
                                           bool reverse) {
  std::vector<Demonstration> out;
  if (!record.forward_ok()) return out;
  const TaskPlan plan = plan_from_json(record.meta.plan);
  sim::WorldState w = record.meta.initial_world;
  harvest_phase(w, record.forward, plan.forward, id_prefix + "-f", true, out);
  if (reverse && record.storage == StorageAction::kDual && record.reverse)
    harvest_phase(w, *record.reverse, plan.reverse, id_prefix + "-r", true, out);
  return out;
}

// ---------------------------------------------------------------------------
// Stats

namespace {

void finish(TaskStats& t) {
  t.p_forward = t.episodes ? static_cast<double>(t.forward_success) / t.episodes : 0.0;
  t.p_reverse = t.entered_reverse ? static_cast<double>(t.reverse_success) / t.entered_reverse : 0.0;
  t.p_total = t.episodes ? static_cast<double>(t.dual) / t.episodes : 0.0;
}

void add(TaskStats& t, const EpisodeRecord& r) {
  ++t.episodes;
  switch (r.storage) {
    case StorageAction::kDual:
      ++t.dual;
      ++t.reverse_success;
      ++t.forward_success;
      ++t.entered_reverse;
      break;
    case StorageAction::kSingle:
      ++t.single;
      ++t.forward_success;
      ++t.entered_reverse;
      break;
    case StorageAction::kDiscard: ++t.discarded; break;
    case StorageAction::kNone: throw InvariantError("episode record without a storage outcome");
  }
}

json task_json(const TaskStats& t) {
  return {{"task", t.task},
          {"episodes", t.episodes},
          {"forward_success", t.forward_success},
          {"entered_reverse", t.entered_reverse},
          {"reverse_success", t.reverse_success},
          {"dual", t.dual},
          {"single", t.single},
          {"discarded", t.discarded},
          {"p_forward", t.p_forward},
          {"p_reverse", t.p_reverse},
          {"p_total", t.p_total},
          {"loops", {{"B-C-B", t.dual}, {"B-C-A", t.single}, {"B-A", t.discarded}}}};
}

}  // namespace

CampaignStats compute_stats(const std::vector<EpisodeRecord>& records) {
  if (records.empty()) throw InvariantError("no episode records");
  CampaignStats s;
  s.total.task = "total";
  for (const auto& r : records) {
    auto it = std::find_if(s.tasks.begin(), s.tasks.end(), [&](const TaskStats& t) { return t.task == r.task; });
    if (it == s.tasks.end()) {
      s.tasks.push_back({});
      s.tasks.back().task = r.task;
      it = std::prev(s.tasks.end());
    }
    add(*it, r);
    add(s.total, r);
  }
  for (auto& t : s.tasks) finish(t);
  finish(s.total);
  return s;
}

json stats_to_json(const CampaignStats& s) {
  json tasks = json::array();
  for (const auto& t : s.tasks) tasks.push_back(task_json(t));
  return {{"tasks", tasks},
          {"total", task_json(s.total)},
          {"plan_calls", s.plan_calls},
          {"plan_failures", s.plan_failures},
          {"respawns", s.respawns},
          {"harvested", s.harvested}};
}

std::string format_report(const CampaignStats& s) {
  std::ostringstream os;
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-26s %8s %8s %8s %8s | %6s %6s %6s\n", "Task", "Episodes",
                "Forward", "Reverse", "Total", "B-C-B", "B-C-A", "B-A");
  os << buf << std::string(91, '-') << '\n';
  auto row = [&](const TaskStats& t) {
    std::snprintf(buf, sizeof buf, "%-26s %8d %8.2f %8.2f %8.2f | %6d %6d %6d\n", t.task.c_str(),
                  t.episodes, t.p_forward, t.p_reverse, t.p_total, t.dual, t.single, t.discarded);
    os << buf;
  };
  for (const auto& t : s.tasks) row(t);
  os << std::string(91, '-') << '\n';
  row(s.total);
  std::snprintf(buf, sizeof buf, "p_forward x p_reverse = %.3f, measured p_total = %.3f\n",
                s.total.p_forward * s.total.p_reverse, s.total.p_total);
  os << buf;
  std::snprintf(buf, sizeof buf, "plan calls %d, planning failures %d, respawns %d, harvested %d\n",
                s.plan_calls, s.plan_failures, s.respawns, s.harvested);
  os << buf;
  return os.str();
}

// ---------------------------------------------------------------------------
// Campaign

CampaignResult run_campaign(const CampaignConfig& cfg, const AffordanceLibrary& lib,
                            const Modules& modules, const sim::SceneRegistry& registry) {
  cfg.validate();
  struct Job {
    std::string tpl;
    int episodes;
  };
  std::vector<Job> jobs;
  for (const auto& t : cfg.tasks)
    for (int left = t.episodes; left > 0; left -= cfg.chunk_episodes)
      jobs.push_back({t.template_name, std::min(left, cfg.chunk_episodes)});

  std::vector<JobResult> results(jobs.size());
  std::vector<std::exception_ptr> errors(jobs.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j; (j = next.fetch_add(1)) < jobs.size();) {
      try {
        results[j] = run_job(jobs[j].tpl, jobs[j].episodes, static_cast<int>(j),
                             split_seed(cfg.master_seed, j), registry, lib, modules, cfg);
      } catch (...) {
        errors[j] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min<std::size_t>(cfg.workers, jobs.size());
  std::vector<std::thread> pool;
  for (std::size_t i = 1; i < n_workers; ++i) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  // single writer from here on
  CampaignResult out;
  out.library = lib;
  int plan_calls = 0, plan_failures = 0, respawns = 0;
  for (auto& r : results) {
    plan_calls += r.plan_calls;
    plan_failures += r.plan_failures;
    respawns += r.respawns;
    out.notes.insert(out.notes.end(), r.notes.begin(), r.notes.end());
    for (auto& rec : r.records) out.records.push_back(std::move(rec));
  }

  if (!cfg.dataset_path.empty()) {
    DatasetWriter writer(cfg.dataset_path);
    for (auto& r : out.records) {
      if (r.storage == StorageAction::kDual)
        r.stored_id = writer.store_dual(r.forward, *r.reverse, r.meta);
      else if (r.storage == StorageAction::kSingle)
        r.stored_id = writer.store_single(r.forward, r.meta);
    }
  }

  int harvested = 0;
  if (cfg.harvest_to_library) {
    for (const auto& r : out.records) {
      if (!r.forward_ok()) continue;
      const std::string prefix = r.stored_id ? "h-" + std::to_string(*r.stored_id)
                                             : "h-j" + std::to_string(r.job) + "e" + std::to_string(r.index);
      for (auto& d : harvest_episode(r, prefix, cfg.harvest_reverse)) {
        if (out.library.contains(d.id)) continue;
        out.library.append(std::move(d));
        ++harvested;
      }
    }
  }

  if (!out.records.empty()) out.stats = compute_stats(out.records);
  out.stats.plan_calls = plan_calls;
  out.stats.plan_failures = plan_failures;
  out.stats.respawns = respawns;
  out.stats.harvested = harvested;
  return out;
}

CampaignResult run_campaign(const CampaignConfig& cfg) {
  cfg.validate();
  if (cfg.library_path.empty()) throw InvariantError("campaign config: library_path is required");
  const AffordanceLibrary lib = load_library(cfg.library_path);
  CampaignResult r = run_campaign(cfg, lib, modules_for(cfg));
  if (cfg.harvest_to_library && r.stats.harvested > 0) save_library(r.library, cfg.library_path);
  return r;
}

}  // namespace autoloop
