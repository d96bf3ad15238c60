#include "autoloop/library.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "autoloop/codec.hpp"
#include "autoloop/error.hpp"
#include "autoloop/rng.hpp"

namespace autoloop {

using codec::json;

void validate(const Demonstration& d) {
  if (d.id.empty()) throw InvariantError("demonstration id is empty");
  if (d.steps.size() < 2)
    throw InvariantError("demonstration '" + d.id + "' needs at least 2 steps");
  for (std::size_t i = 0; i < d.steps.size(); ++i) {
    const auto& s = d.steps[i];
    if (s.gripper != 0 && s.gripper != 1)
      throw InvariantError("demonstration '" + d.id + "' step " +
                           std::to_string(i) + ": gripper must be 0 or 1");
    s.cloud.validate();
    if (i > 0) {
      const double jump =
          (s.ee_pose.translation() - d.steps[i - 1].ee_pose.translation()).norm();
      if (jump > kMaxStepJump + 1e-12)
        throw InvariantError("demonstration '" + d.id + "' step " +
                             std::to_string(i) + ": end-effector jump of " +
                             std::to_string(jump) + " m");
    }
  }
}

double action_affinity(Verb query, Verb demo) {
  if (query == demo) return 1.0;
  if (inverse_skill(query) == demo) return 0.0;
  const auto congruent = [](Verb a, Verb b) {
    return (a == Verb::kFold && b == Verb::kClose) ||
           (a == Verb::kUnfold && b == Verb::kOpen) ||
           (a == Verb::kPlace && b == Verb::kStack) ||
           (a == Verb::kPick && b == Verb::kUnstack);
  };
  if (congruent(query, demo) || congruent(demo, query)) return 0.7;
  return 0.2;
}

double shape_affinity(Shape a, Shape b) {
  if (a == b) return 1.0;
  // Upper triangle of a symmetric table, indexed by enum order:
  // cuboid, oval, conical, flat, cylindrical, articulated.
  static constexpr double kTable[6][6] = {
      {1.0, 0.3, 0.3, 0.3, 0.5, 0.4},
      {0.3, 1.0, 0.6, 0.1, 0.5, 0.1},
      {0.3, 0.6, 1.0, 0.1, 0.5, 0.1},
      {0.3, 0.1, 0.1, 1.0, 0.2, 0.7},
      {0.5, 0.5, 0.5, 0.2, 1.0, 0.2},
      {0.4, 0.1, 0.1, 0.7, 0.2, 1.0},
  };
  return kTable[static_cast<int>(a)][static_cast<int>(b)];
}

double score_similarity(const SkillQuery& query, const Demonstration& d,
                        const SimilarityWeights& w) {
  const double action = action_affinity(query.verb, d.skill_verb);
  double geom = shape_affinity(query.object.shape, d.target.shape);
  if (query.object.name == d.target.name) geom = std::min(1.0, geom + w.name_bonus);
  const double total = w.action + w.geometry;
  return (w.action * action + w.geometry * geom) / total;
}

const Demonstration& AffordanceLibrary::at(const std::string& id) const {
  auto it = demos_.find(id);
  if (it == demos_.end()) throw InvariantError("no demonstration with id '" + id + "'");
  return it->second;
}

void AffordanceLibrary::append(Demonstration d) {
  validate(d);
  if (contains(d.id)) throw InvariantError("duplicate demonstration id '" + d.id + "'");
  std::string id = d.id;
  demos_.emplace(std::move(id), std::move(d));
}

std::vector<const Demonstration*> AffordanceLibrary::retrieve_ranked(
    const SkillQuery& query, std::size_t r, const SimilarityWeights& w) const {
  std::vector<std::pair<double, const Demonstration*>> scored;
  scored.reserve(demos_.size());
  for (const auto& [id, d] : demos_) scored.emplace_back(score_similarity(query, d, w), &d);
  std::stable_sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second->id < b.second->id;
  });
  std::vector<const Demonstration*> out;
  for (std::size_t i = 0; i < std::min(r, scored.size()); ++i)
    out.push_back(scored[i].second);
  return out;
}

std::string serialize_demonstration(const Demonstration& d) {
  json steps = json::array();
  for (const auto& s : d.steps)
    steps.push_back({{"cloud", codec::encode(s.cloud)},
                     {"ee_pose", codec::encode(s.ee_pose)},
                     {"gripper", s.gripper}});
  json j = {{"id", d.id},
            {"skill_verb", std::string(to_string(d.skill_verb))},
            {"target",
             {{"name", d.target.name}, {"shape", std::string(to_string(d.target.shape))}}},
            {"object_ids", d.object_ids},
            {"steps", std::move(steps)},
            {"provenance", d.provenance == Provenance::kSeed ? "seed" : "harvested"}};
  return j.dump();
}

Demonstration parse_demonstration(const std::string& line, long record_index) {
  try {
    const json j = json::parse(line);
    codec::check_fields(j, {"id", "skill_verb", "target", "object_ids", "steps", "provenance"});
    Demonstration d;
    d.id = codec::get<std::string>(j, "id");
    d.skill_verb = parse_verb(codec::get<std::string>(j, "skill_verb"));
    const json& t = j.at("target");
    codec::check_fields(t, {"name", "shape"});
    d.target.name = codec::get<std::string>(t, "name");
    d.target.shape = parse_shape(codec::get<std::string>(t, "shape"));
    d.object_ids = codec::get<std::vector<int>>(j, "object_ids");
    const auto prov = codec::get<std::string>(j, "provenance");
    if (prov == "seed") d.provenance = Provenance::kSeed;
    else if (prov == "harvested") d.provenance = Provenance::kHarvested;
    else throw ParseError("unknown provenance '" + prov + "'");
    if (!j.at("steps").is_array()) throw ParseError("steps must be an array");
    for (const auto& s : j.at("steps")) {
      codec::check_fields(s, {"cloud", "ee_pose", "gripper"});
      DemonstrationStep step;
      step.cloud = codec::decode_cloud(s.at("cloud"));
      step.ee_pose = codec::decode_pose(s.at("ee_pose"));
      step.gripper = codec::get<int>(s, "gripper");
      d.steps.push_back(std::move(step));
    }
    return d;
  } catch (const ParseError& e) {
    throw ParseError(e.what(), record_index);
  } catch (const json::exception& e) {
    throw ParseError(e.what(), record_index);
  }
}

std::string serialize_library(const AffordanceLibrary& lib) {
  std::string out;
  for (const auto& [id, d] : lib.demos()) {
    out += serialize_demonstration(d);
    out += '\n';
  }
  return out;
}

std::uint64_t library_hash(const AffordanceLibrary& lib) {
  return fnv1a(serialize_library(lib));
}

namespace {

void load_file(const std::filesystem::path& file, AffordanceLibrary& lib,
               long& record_index) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open library file " + file.string());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    Demonstration d = parse_demonstration(line, record_index);
    if (lib.contains(d.id))
      throw InvariantError("record " + std::to_string(record_index) +
                           ": duplicate demonstration id '" + d.id + "'");
    try {
      lib.append(std::move(d));
    } catch (const InvariantError& e) {
      throw InvariantError("record " + std::to_string(record_index) + ": " + e.what());
    }
    ++record_index;
  }
}

}  // namespace

AffordanceLibrary load_library(const std::filesystem::path& path) {
  AffordanceLibrary lib;
  long record_index = 0;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.is_regular_file() && e.path().extension() == ".jsonl") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) load_file(f, lib, record_index);
    return lib;
  }
  if (!std::filesystem::exists(path))
    throw IoError("library path does not exist: " + path.string());
  load_file(path, lib, record_index);
  return lib;
}

void save_library(const AffordanceLibrary& lib, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write library file " + path.string());
  out << serialize_library(lib);
  out.flush();
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace autoloop
