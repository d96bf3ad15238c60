#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "autoloop/campaign.hpp"
#include "autoloop/dataset.hpp"
#include "autoloop/error.hpp"
#include "autoloop/fsm.hpp"
#include "autoloop/library.hpp"
#include "autoloop/planner.hpp"
#include "autoloop/seed_demos.hpp"
#include "autoloop/sim.hpp"

namespace py = pybind11;
using namespace autoloop;
using codec::json;

namespace {

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(e.what());
  }
}

// Structured values cross the boundary as JSON text; the python side loads them.

FsmState state_named(const std::string& s) {
  for (auto st : {FsmState::kTaskPlanning, FsmState::kForwardExecution, FsmState::kReverseExecution})
    if (to_string(st) == s) return st;
  throw ParseError("unknown state '" + s + "'");
}

FsmEvent event_named(const std::string& e, bool success) {
  if (e == "plan_ready") return FsmEvent::plan_ready();
  if (e == "plan_failed") return FsmEvent::plan_failed();
  if (e == "forward") return FsmEvent::forward(success);
  if (e == "reverse") return FsmEvent::reverse(success);
  if (e == "repetition_cap") return FsmEvent::repetition_cap();
  throw ParseError("unknown event '" + e + "'");
}

std::string campaign(const CampaignConfig& cfg) {
  CampaignResult r;
  {
    py::gil_scoped_release release;
    r = run_campaign(cfg);
  }
  json out = {{"stats", stats_to_json(r.stats)},
              {"report", format_report(r.stats)},
              {"notes", r.notes},
              {"records", static_cast<int>(r.records.size())}};
  return out.dump();
}

}  // namespace

PYBIND11_MODULE(_autoloop, m) {
  m.doc() = "autoloop core bindings";

  auto base = py::register_exception<Error>(m, "AutoloopError");
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<InvariantError>(m, "InvariantError", base.ptr());
  py::register_exception<UnknownTemplate>(m, "UnknownTemplate", base.ptr());
  py::register_exception<IoError>(m, "IoError", base.ptr());

  m.def("templates", [] { return sim::SceneRegistry::builtin().names(); });

  m.def("spawn_scene", [](const std::string& tpl, std::uint64_t seed) {
    return world_to_json(sim::spawn_scene(sim::SceneRegistry::builtin(), tpl, seed)).dump();
  }, py::arg("template"), py::arg("seed"));

  m.def("describe_scene", [](const std::string& tpl, std::uint64_t seed) {
    const auto w = sim::spawn_scene(sim::SceneRegistry::builtin(), tpl, seed);
    return scene_to_json(sim::describe_scene(w)).dump();
  }, py::arg("template"), py::arg("seed"));

  m.def("plan", [](const std::string& tpl, std::uint64_t seed, const std::filesystem::path& library) {
    const auto lib = load_library(library);
    const auto w = sim::spawn_scene(sim::SceneRegistry::builtin(), tpl, seed);
    OracleBackend oracle(w, seed);
    const auto obs = sim::describe_scene(w);
    return plan_to_json(plan_task(oracle, obs, ground_objects(oracle, obs), lib,
                                  OracleBackend::mode_for(tpl))).dump();
  }, py::arg("template"), py::arg("seed"), py::arg("library"));

  m.def("validate_plan", [](const std::string& plan_json) {
    std::vector<std::pair<int, std::string>> out;
    for (const auto& v : validate_lifo(plan_from_json(parse_text(plan_json))))
      out.emplace_back(v.j, v.reason);
    return out;
  }, py::arg("plan_json"));

  m.def("fsm_step", [](const std::string& state, const std::string& event, bool success) {
    try {
      const auto t = step_fsm(state_named(state), event_named(event, success));
      return std::make_pair(std::string(to_string(t.next)), std::string(to_string(t.storage)));
    } catch (const ProtocolError& e) {
      throw InvariantError(e.what());
    }
  }, py::arg("state"), py::arg("event"), py::arg("success") = false);

  m.def("record_seed_demos", [](const std::filesystem::path& out, int per_skill, std::uint64_t seed) {
    const auto lib = record_seed_demos(sim::SceneRegistry::builtin(), per_skill, seed);
    save_library(lib, out);
    return static_cast<int>(lib.size());
  }, py::arg("out"), py::arg("per_skill") = 3, py::arg("seed") = 0);

  m.def("run_campaign_file", [](const std::filesystem::path& path) {
    return campaign(load_campaign_config(path));
  }, py::arg("path"));

  m.def("run_campaign_json", [](const std::string& text) {
    return campaign(parse_campaign_config(parse_text(text)));
  }, py::arg("config_json"));

  m.def("read_episodes", [](const std::filesystem::path& path) {
    const auto r = read_episodes(path);
    std::vector<std::string> lines;
    for (const auto& e : r.episodes) lines.push_back(serialize_episode(e));
    std::vector<std::pair<long, std::string>> bad;
    for (const auto& c : r.corruptions) bad.emplace_back(c.line, c.message);
    return std::make_pair(lines, bad);
  }, py::arg("path"));

  m.def("replay", [](const std::string& episode_json, std::optional<std::uint64_t> seed) {
    const auto rep = replay(parse_episode(episode_json), sim::SceneRegistry::builtin(), seed);
    json out = {{"agreement", rep.agreement},
                {"spawn_matches", rep.spawn_matches},
                {"mismatches", rep.mismatches},
                {"reset_restored", rep.reset_restored ? json(*rep.reset_restored) : json(nullptr)}};
    return out.dump();
  }, py::arg("episode_json"), py::arg("seed") = py::none());
}
