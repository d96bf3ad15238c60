#include "autoloop/dataset.hpp"

#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <fstream>
#include <sstream>

#include "autoloop/error.hpp"

namespace autoloop {

using codec::json;

// ---------------------------------------------------------------------------
// World and scene snapshots

json world_to_json(const sim::WorldState& w) {
  json objs = json::array();
  for (const auto& [id, o] : w.objects) {
    objs.push_back({{"id", o.id},
                    {"name", o.descriptor.name},
                    {"shape", to_string(o.descriptor.shape)},
                    {"pose", codec::encode(o.pose)},
                    {"half_extents", codec::encode(o.half_extents)},
                    {"held", o.held},
                    {"lid_angle", o.lid_angle},
                    {"support_id", o.support_id},
                    {"graspable", o.graspable},
                    {"container", o.container},
                    {"hinged", o.hinged},
                    {"distractor", o.distractor},
                    {"home_region", o.home_region}});
  }
  json regions = json::object();
  for (const auto& [name, b] : w.regions) regions[name] = {b.xmin, b.xmax, b.ymin, b.ymax};
  json j = {{"template_name", w.template_name},
            {"objects", objs},
            {"ee_pose", codec::encode(w.ee_pose)},
            {"gripper", w.gripper},
            {"held_offset", codec::encode(w.held_offset)},
            {"regions", regions},
            {"rng_seed", w.rng_seed}};
  j["held_object"] = w.held_object ? json(*w.held_object) : json(nullptr);
  j["engaged_lid"] = w.engaged_lid ? json(*w.engaged_lid) : json(nullptr);
  return j;
}

sim::WorldState world_from_json(const json& j) {
  codec::check_fields(j, {"template_name", "objects", "ee_pose", "gripper", "held_offset",
                          "regions", "rng_seed", "held_object", "engaged_lid"});
  sim::WorldState w;
  w.template_name = codec::get<std::string>(j, "template_name");
  for (const auto& o : j.at("objects")) {
    codec::check_fields(o, {"id", "name", "shape", "pose", "half_extents", "held", "lid_angle",
                            "support_id", "graspable", "container", "hinged", "distractor",
                            "home_region"});
    sim::SimObject s;
    s.id = codec::get<int>(o, "id");
    s.descriptor = {codec::get<std::string>(o, "name"),
                    parse_shape(codec::get<std::string>(o, "shape"))};
    s.pose = codec::decode_pose(o.at("pose"));
    s.half_extents = codec::decode_vec3(o.at("half_extents"));
    s.held = codec::get<bool>(o, "held");
    s.lid_angle = codec::get<double>(o, "lid_angle");
    s.support_id = codec::get<int>(o, "support_id");
    s.graspable = codec::get<bool>(o, "graspable");
    s.container = codec::get<bool>(o, "container");
    s.hinged = codec::get<bool>(o, "hinged");
    s.distractor = codec::get<bool>(o, "distractor");
    s.home_region = codec::get<std::string>(o, "home_region");
    if (!w.objects.emplace(s.id, s).second) codec::throw_parse("duplicate object id in world");
  }
  w.ee_pose = codec::decode_pose(j.at("ee_pose"));
  w.gripper = codec::get<int>(j, "gripper");
  w.held_offset = codec::decode_pose(j.at("held_offset"));
  for (const auto& [name, b] : j.at("regions").items()) {
    const auto v = b.get<std::vector<double>>();
    if (v.size() != 4) codec::throw_parse("region bounds need 4 numbers");
    w.regions[name] = {v[0], v[1], v[2], v[3]};
  }
  w.rng_seed = codec::get<std::uint64_t>(j, "rng_seed");
  if (!j.at("held_object").is_null()) w.held_object = codec::get<int>(j, "held_object");
  if (!j.at("engaged_lid").is_null()) w.engaged_lid = codec::get<int>(j, "engaged_lid");
  return w;
}

json scene_to_json(const sim::SceneDescription& s) {
  json objs = json::array();
  for (const auto& e : s.objects)
    objs.push_back({{"id", e.id},
                    {"name", e.name},
                    {"shape", to_string(e.shape)},
                    {"position", codec::encode(e.position)},
                    {"tags", e.tags}});
  return {{"objects", objs}, {"regions", s.regions}};
}

sim::SceneDescription scene_from_json(const json& j) {
  codec::check_fields(j, {"objects", "regions"});
  sim::SceneDescription s;
  for (const auto& o : j.at("objects")) {
    codec::check_fields(o, {"id", "name", "shape", "position", "tags"});
    s.objects.push_back({codec::get<int>(o, "id"), codec::get<std::string>(o, "name"),
                         parse_shape(codec::get<std::string>(o, "shape")),
                         codec::decode_vec3(o.at("position")),
                         codec::get<std::vector<std::string>>(o, "tags")});
  }
  s.regions = codec::get<std::vector<std::string>>(j, "regions");
  return s;
}

// ---------------------------------------------------------------------------
// Episodes

namespace {

json segment_to_json(const TrajectorySegment& s) {
  json wps = json::array();
  for (const auto& w : s.waypoints) wps.push_back({{"pose", codec::encode(w.pose)}, {"gripper", w.gripper}});
  json j = {{"subtask", s.subtask},
            {"demo_id", s.demo_id},
            {"waypoints", wps},
            {"success", s.success},
            {"flagged", s.flagged},
            {"error", s.error},
            {"log", {{"command", s.log.command}, {"query", s.log.query}, {"response", s.log.response}}},
            {"boundary", scene_to_json(s.boundary)}};
  if (s.perturbation)
    j["perturbation"] = {{"object_id", s.perturbation->object_id},
                         {"displacement", codec::encode(s.perturbation->displacement)}};
  return j;
}

TrajectorySegment segment_from_json(const json& j) {
  codec::check_fields(j, {"subtask", "demo_id", "waypoints", "success", "flagged", "error", "log",
                          "boundary"},
                      {"perturbation"});
  TrajectorySegment s;
  s.subtask = codec::get<int>(j, "subtask");
  s.demo_id = codec::get<std::string>(j, "demo_id");
  for (const auto& w : j.at("waypoints")) {
    codec::check_fields(w, {"pose", "gripper"});
    s.waypoints.push_back({codec::decode_pose(w.at("pose")), codec::get<int>(w, "gripper")});
  }
  s.success = codec::get<bool>(j, "success");
  s.flagged = codec::get<bool>(j, "flagged");
  s.error = codec::get<std::string>(j, "error");
  const auto& log = j.at("log");
  codec::check_fields(log, {"command", "query", "response"});
  s.log = {codec::get<std::string>(log, "command"), codec::get<std::string>(log, "query"),
           codec::get<std::string>(log, "response")};
  s.boundary = scene_from_json(j.at("boundary"));
  if (j.contains("perturbation")) {
    const auto& p = j.at("perturbation");
    codec::check_fields(p, {"object_id", "displacement"});
    s.perturbation = sim::PerturbationEvent{codec::get<int>(p, "object_id"),
                                            codec::decode_vec3(p.at("displacement"))};
  }
  return s;
}

json trajectory_to_json(const Trajectory& t) {
  json a = json::array();
  for (const auto& s : t.segments) a.push_back(segment_to_json(s));
  return a;
}

Trajectory trajectory_from_json(const json& j) {
  if (!j.is_array()) codec::throw_parse("trajectory must be an array");
  Trajectory t;
  for (const auto& s : j) t.segments.push_back(segment_from_json(s));
  return t;
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << v;
  return os.str();
}

}  // namespace

void validate(const StoredEpisode& e) {
  if (e.kind != StorageAction::kDual && e.kind != StorageAction::kSingle)
    throw InvariantError("stored episodes are dual or single");
  if (e.forward.empty()) throw InvariantError("forward trajectory is empty");
  if (e.kind == StorageAction::kDual && (!e.reverse || e.reverse->empty()))
    throw InvariantError("dual episode needs a non-empty reverse trajectory");
  if (e.kind == StorageAction::kSingle && e.reverse)
    throw InvariantError("single episode must not carry reverse data");
}

std::string serialize_episode(const StoredEpisode& e) {
  validate(e);
  json j = {{"schema_version", e.schema_version},
            {"id", e.id},
            {"kind", to_string(e.kind)},
            {"task", e.meta.task},
            {"plan", e.meta.plan},
            {"initial_world", world_to_json(e.meta.initial_world)},
            {"fresh_spawn", e.meta.fresh_spawn},
            {"spawn_seed", e.meta.spawn_seed},
            {"episode_seed", e.meta.episode_seed},
            {"library_hash", hex(e.meta.library_hash)},
            {"forward", trajectory_to_json(e.forward)}};
  if (e.reverse) j["reverse"] = trajectory_to_json(*e.reverse);
  return j.dump();
}

StoredEpisode parse_episode(const std::string& line) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& err) {
    codec::throw_parse(std::string("malformed JSON: ") + err.what());
  }
  codec::check_fields(j, {"schema_version", "id", "kind", "task", "plan", "initial_world",
                          "fresh_spawn", "spawn_seed", "episode_seed", "library_hash", "forward"},
                      {"reverse"});
  StoredEpisode e;
  e.schema_version = codec::get<int>(j, "schema_version");
  if (e.schema_version != kDatasetSchemaVersion)
    codec::throw_parse("unsupported schema version " + std::to_string(e.schema_version));
  e.id = codec::get<std::int64_t>(j, "id");
  e.kind = parse_storage_action(codec::get<std::string>(j, "kind"));
  e.meta.task = codec::get<std::string>(j, "task");
  e.meta.plan = j.at("plan");
  e.meta.initial_world = world_from_json(j.at("initial_world"));
  e.meta.fresh_spawn = codec::get<bool>(j, "fresh_spawn");
  e.meta.spawn_seed = codec::get<std::uint64_t>(j, "spawn_seed");
  e.meta.episode_seed = codec::get<std::uint64_t>(j, "episode_seed");
  try {
    e.meta.library_hash = std::stoull(codec::get<std::string>(j, "library_hash"), nullptr, 16);
  } catch (const std::logic_error&) {
    codec::throw_parse("library_hash is not hexadecimal");
  }
  e.forward = trajectory_from_json(j.at("forward"));
  if (j.contains("reverse")) e.reverse = trajectory_from_json(j.at("reverse"));
  try {
    validate(e);
  } catch (const InvariantError& err) {
    codec::throw_parse(err.what());
  }
  return e;
}

// ---------------------------------------------------------------------------
// Writer

DatasetWriter::DatasetWriter(const std::filesystem::path& path) : path_(path) {
  bool needs_newline = false;
  if (std::filesystem::exists(path)) {
    for (const auto& e : read_episodes(path).episodes) next_id_ = std::max(next_id_, e.id + 1);
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (in.tellg() > 0) {
      in.seekg(-1, std::ios::end);
      needs_newline = in.get() != '\n';
    }
  } else if (path.has_parent_path()) {
    std::filesystem::create_directories(path.parent_path());
  }
  file_ = std::fopen(path.c_str(), "ab");
  if (!file_) throw IoError("cannot open dataset '" + path.string() + "': " + std::strerror(errno));
  if (needs_newline) std::fputc('\n', file_);
}

DatasetWriter::~DatasetWriter() {
  if (file_) std::fclose(file_);
}

std::int64_t DatasetWriter::store(StoredEpisode e) {
  e.id = next_id_;
  const std::string line = serialize_episode(e) + "\n";
  if (std::fwrite(line.data(), 1, line.size(), file_) != line.size() || std::fflush(file_) != 0 ||
      ::fsync(::fileno(file_)) != 0)
    throw IoError("write to '" + path_.string() + "' failed: " + std::strerror(errno));
  return next_id_++;
}

std::int64_t DatasetWriter::store_dual(const Trajectory& fwd, const Trajectory& rev,
                                       const EpisodeMeta& meta) {
  if (fwd.empty() || rev.empty()) throw InvariantError("dual storage needs both trajectories");
  StoredEpisode e;
  e.kind = StorageAction::kDual;
  e.meta = meta;
  e.forward = fwd;
  e.reverse = rev;
  return store(std::move(e));
}

std::int64_t DatasetWriter::store_single(const Trajectory& fwd, const EpisodeMeta& meta) {
  if (fwd.empty()) throw InvariantError("single storage needs a forward trajectory");
  StoredEpisode e;
  e.kind = StorageAction::kSingle;
  e.meta = meta;
  e.forward = fwd;
  return store(std::move(e));
}

// ---------------------------------------------------------------------------
// Reader

ReadResult read_episodes(const std::filesystem::path& path, const EpisodeFilter& filter) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  ReadResult r;
  std::string line;
  long n = 0;
  std::uint64_t offset = 0;
  while (std::getline(in, line)) {
    ++n;
    const std::uint64_t here = offset;
    offset += line.size() + 1;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      StoredEpisode e = parse_episode(line);
      if (filter.task && e.meta.task != *filter.task) continue;
      if (filter.kind && e.kind != *filter.kind) continue;
      if (filter.min_id && e.id < *filter.min_id) continue;
      if (filter.max_id && e.id > *filter.max_id) continue;
      r.episodes.push_back(std::move(e));
    } catch (const ParseError& err) {
      r.corruptions.push_back({n, here, err.what()});
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Replay

namespace {

void replay_phase(const Trajectory& t, const std::vector<Subtask>& plan_steps, const char* phase,
                  sim::WorldState& w, ReplayReport& rep) {
  for (const auto& seg : t.segments) {
    const std::string where = std::string(phase) + " subtask " + std::to_string(seg.subtask);
    try {
      for (const auto& wp : seg.waypoints) w = sim::apply_waypoint(w, wp.pose, wp.gripper);
      if (seg.perturbation) w = sim::apply_perturbation(w, *seg.perturbation);
    } catch (const std::exception& e) {
      rep.agreement = false;
      rep.mismatches.push_back(where + ": replay failed: " + e.what());
      return;
    }
    if (!seg.error.empty()) continue;  // recorded as a module failure, nothing to re-judge
    if (seg.subtask < 0 || static_cast<std::size_t>(seg.subtask) >= plan_steps.size()) {
      rep.agreement = false;
      rep.mismatches.push_back(where + ": not in the recorded plan");
      continue;
    }
    const Subtask& st = plan_steps[seg.subtask];
    const SuccessSignal s = evaluate(oracle_evaluator(w), st.description, st, sim::describe_scene(w));
    if (s.value != seg.success) {
      rep.agreement = false;
      rep.mismatches.push_back(where + ": recorded " + (seg.success ? "success" : "failure") +
                               ", replay judged " + (s.value ? "success" : "failure"));
    }
  }
}

}  // namespace

ReplayReport replay(const StoredEpisode& e, const sim::SceneRegistry& registry,
                    std::optional<std::uint64_t> seed_override) {
  if (!registry.contains(e.meta.task))
    throw UnknownTemplate("scene template '" + e.meta.task + "' is not registered");
  ReplayReport rep;
  sim::WorldState w = e.meta.initial_world;
  if (e.meta.fresh_spawn || seed_override) {
    w = sim::spawn_scene(registry, e.meta.task, seed_override.value_or(e.meta.spawn_seed));
    if (!(w == e.meta.initial_world)) {
      rep.spawn_matches = false;
      rep.agreement = false;
      rep.mismatches.push_back("re-spawned world differs from the recorded initial world");
      for (const auto& [id, o] : w.objects) {
        auto it = e.meta.initial_world.objects.find(id);
        if (it == e.meta.initial_world.objects.end()) continue;
        const double d = (o.pose.translation() - it->second.pose.translation()).norm();
        if (d > 0.0) rep.pose_deltas.push_back({id, d});
      }
    }
  }
  const sim::WorldState start = w;
  const TaskPlan plan = plan_from_json(e.meta.plan);
  replay_phase(e.forward, plan.forward, "forward", w, rep);
  if (e.reverse) {
    replay_phase(*e.reverse, plan.reverse, "reverse", w, rep);
    rep.reset_restored = sim::all_predicates(w) == sim::all_predicates(start);
    if (!*rep.reset_restored) rep.mismatches.push_back("reset did not restore the initial predicates");
  }
  rep.final_world = std::move(w);
  return rep;
}

}  // namespace autoloop
