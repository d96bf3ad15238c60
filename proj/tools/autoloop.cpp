// autoloop: seed demos, campaigns, plan checks, replay and dataset stats.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "autoloop/campaign.hpp"
#include "autoloop/dataset.hpp"
#include "autoloop/error.hpp"
#include "autoloop/external.hpp"
#include "autoloop/planner.hpp"
#include "autoloop/seed_demos.hpp"

using namespace autoloop;
namespace fs = std::filesystem;

namespace {

constexpr int kOk = 0;
constexpr int kInvalid = 1;
constexpr int kRuntime = 2;

struct Options {
  // record-seed-demos
  std::string out = "seed_library.jsonl";
  int per_skill = 3;
  std::string scenes;
  // collect
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<int> episodes;
  std::optional<std::string> backend;
  std::optional<std::string> endpoint;
  bool dry_run = false;
  std::string report;
  std::string summary;
  // validate-plan
  std::string plan_file;
  // replay / stats
  std::string dataset;
  std::optional<std::int64_t> id;
};

sim::SceneRegistry registry_from(const std::string& path) {
  return path.empty() ? sim::SceneRegistry::builtin() : sim::SceneRegistry::load(path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path + "'");
  return {std::istreambuf_iterator<char>(in), {}};
}

int record_seed_demos_cmd(const Options& o) {
  const auto lib = record_seed_demos(registry_from(o.scenes), o.per_skill, o.seed.value_or(0));
  save_library(lib, o.out);
  std::cout << "wrote " << lib.size() << " demonstrations to " << o.out << "\n";
  return kOk;
}

CampaignConfig campaign_config(const Options& o) {
  CampaignConfig c = load_campaign_config(o.config);
  if (o.seed) c.master_seed = *o.seed;
  if (o.workers) c.workers = *o.workers;
  if (o.episodes)
    for (auto& t : c.tasks) t.episodes = *o.episodes;
  if (o.backend) c.backend.kind = *o.backend;
  if (o.endpoint) c.backend.endpoint = *o.endpoint;
  c.validate();
  return c;
}

// Plans every task once from a fresh spawn and checks LIFO; nothing executes.
int dry_run(const CampaignConfig& c) {
  const AffordanceLibrary lib = load_library(c.library_path);
  const Modules m = modules_for(c);
  int bad = 0;
  for (std::size_t j = 0; j < c.tasks.size(); ++j) {
    const auto& t = c.tasks[j];
    const auto w = sim::spawn_scene(sim::SceneRegistry::builtin(), t.template_name, split_seed(c.master_seed, j));
    auto backend = m.reasoner(w, split_seed(c.master_seed, j));
    const auto obs = sim::describe_scene(w);
    PlanOptions po;
    po.retrieval_r = c.retrieval_r;
    const TaskPlan plan =
        plan_task(*backend, obs, ground_objects(*backend, obs), lib, OracleBackend::mode_for(t.template_name), po);
    const auto v = validate_lifo(plan);
    std::cout << t.template_name << " (" << to_string(plan.mode) << ")\n";
    for (const auto& s : plan.forward) std::cout << "  forward: " << s.description << "  [" << s.demo_id << "]\n";
    for (const auto& s : plan.reverse) std::cout << "  reverse: " << s.description << "  [" << s.demo_id << "]\n";
    for (const auto& x : v) std::cout << "  LIFO violation j=" << x.j << ": " << x.reason << "\n";
    std::cout << "  " << (v.empty() ? "LIFO ok" : "LIFO FAILED") << "\n";
    bad += !v.empty();
  }
  return bad ? kInvalid : kOk;
}

int collect_cmd(const Options& o) {
  const CampaignConfig c = campaign_config(o);
  if (c.backend.kind == "external")
    HttpClient(c.backend.endpoint, c.backend.timeout_ms, c.backend.retries).probe();
  if (o.dry_run) return dry_run(c);
  const CampaignResult r = run_campaign(c);
  const std::string report = format_report(r.stats);
  std::cout << report;
  if (!o.report.empty()) std::ofstream(o.report) << report;
  std::string summary = o.summary;
  if (summary.empty() && !c.dataset_path.empty()) summary = c.dataset_path.string() + ".stats.json";
  if (!summary.empty()) std::ofstream(summary) << stats_to_json(r.stats).dump(2) << "\n";
  bool abandoned = false;
  std::map<std::string, int> seen;
  for (const auto& n : r.notes) ++seen[n];
  for (const auto& [n, count] : seen) {
    std::cerr << "note: " << n << (count > 1 ? " (x" + std::to_string(count) + ")" : "") << "\n";
    abandoned |= n.find("abandoned") != std::string::npos;
  }
  if (abandoned || r.records.empty()) {
    std::cerr << "error: campaign could not run every job (see notes above)\n";
    return kRuntime;
  }
  return kOk;
}

int validate_plan_cmd(const Options& o) {
  codec::json j;
  try {
    j = codec::json::parse(read_file(o.plan_file));
  } catch (const codec::json::parse_error& e) {
    throw ParseError(o.plan_file + ": " + e.what());
  }
  const auto v = validate_lifo(plan_from_json(j));
  for (const auto& x : v) std::cout << "violation j=" << x.j << ": " << x.reason << "\n";
  std::cout << (v.empty() ? "valid" : std::to_string(v.size()) + " violation(s)") << "\n";
  return v.empty() ? kOk : kInvalid;
}

int replay_cmd(const Options& o) {
  EpisodeFilter f;
  if (o.id) f.min_id = f.max_id = *o.id;
  const auto r = read_episodes(o.dataset, f);
  for (const auto& c : r.corruptions)
    std::cerr << "corrupt record at line " << c.line << " (byte " << c.offset << "): " << c.message << "\n";
  if (r.episodes.empty()) {
    std::cerr << "no matching episodes\n";
    return kInvalid;
  }
  int disagree = 0;
  for (const auto& e : r.episodes) {
    const auto rep = replay(e, sim::SceneRegistry::builtin(), o.seed);
    std::cout << "episode " << e.id << " " << e.meta.task << " " << to_string(e.kind) << ": "
              << (rep.agreement ? "agree" : "MISMATCH");
    if (rep.reset_restored) std::cout << (*rep.reset_restored ? ", reset restored" : ", reset NOT restored");
    std::cout << "\n";
    for (const auto& m : rep.mismatches) std::cout << "  " << m << "\n";
    for (const auto& d : rep.pose_deltas) std::cout << "  object " << d.object_id << " off by " << d.translation << " m\n";
    disagree += !rep.agreement;
  }
  return disagree ? kRuntime : kOk;
}

int stats_cmd(const Options& o) {
  const auto r = read_episodes(o.dataset);
  std::map<std::string, std::pair<int, int>> counts;  // dual, single
  for (const auto& e : r.episodes) {
    auto& c = counts[e.meta.task];
    (e.kind == StorageAction::kDual ? c.first : c.second)++;
  }
  std::printf("%-26s %6s %6s %10s\n", "Task", "Dual", "Single", "p_reverse");
  int d = 0, s = 0;
  for (const auto& [task, c] : counts) {
    std::printf("%-26s %6d %6d %10.2f\n", task.c_str(), c.first, c.second,
                static_cast<double>(c.first) / (c.first + c.second));
    d += c.first;
    s += c.second;
  }
  std::printf("%-26s %6d %6d\n", "total", d, s);
  for (const auto& c : r.corruptions)
    std::cerr << "corrupt record at line " << c.line << " (byte " << c.offset << "): " << c.message << "\n";
  return r.corruptions.empty() ? kOk : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autonomous data-collection loop over a tabletop simulator"};
  app.require_subcommand(1);
  Options o;

  auto* seed_cmd = app.add_subcommand("record-seed-demos", "Write scripted seed demonstrations");
  seed_cmd->add_option("--out,-o", o.out, "Library file to write")->envname("AUTOLOOP_OUT");
  seed_cmd->add_option("--per-skill", o.per_skill, "Demonstrations per verb (2-5)")->check(CLI::Range(2, 5));
  seed_cmd->add_option("--scenes", o.scenes, "Scene registry JSON (default: built in)");
  seed_cmd->add_option("--seed", o.seed, "Random seed")->envname("AUTOLOOP_SEED");

  auto* collect = app.add_subcommand("collect", "Run a collection campaign");
  collect->add_option("--config,-c", o.config, "Campaign config JSON")->required()->envname("AUTOLOOP_CONFIG");
  collect->add_option("--seed", o.seed, "Master seed")->envname("AUTOLOOP_SEED");
  collect->add_option("--workers", o.workers, "Worker threads")->envname("AUTOLOOP_WORKERS");
  collect->add_option("--episodes", o.episodes, "Episodes per task")->envname("AUTOLOOP_EPISODES");
  // checked by the config validator so bad env values are reported too
  collect->add_option("--backend", o.backend, "oracle or external")->envname("AUTOLOOP_BACKEND");
  collect->add_option("--endpoint", o.endpoint, "External backend URL")->envname("AUTOLOOP_ENDPOINT");
  collect->add_flag("--dry-run", o.dry_run, "Plan and LIFO-check only")->envname("AUTOLOOP_DRY_RUN");
  collect->add_option("--report", o.report, "Also write the text report here");
  collect->add_option("--summary", o.summary, "Stats JSON (default: <dataset>.stats.json)");

  auto* vp = app.add_subcommand("validate-plan", "Check a plan file against the LIFO rule");
  vp->add_option("plan", o.plan_file, "Plan JSON")->required()->check(CLI::ExistingFile);

  auto* rp = app.add_subcommand("replay", "Re-simulate stored episodes and compare");
  rp->add_option("--dataset,-d", o.dataset, "Dataset file")->required()->check(CLI::ExistingFile)->envname("AUTOLOOP_DATASET");
  rp->add_option("--id", o.id, "Only this episode");
  rp->add_option("--seed", o.seed, "Re-spawn with this seed instead of the recorded one");

  auto* st = app.add_subcommand("stats", "Summarize a dataset file");
  st->add_option("--dataset,-d", o.dataset, "Dataset file")->required()->check(CLI::ExistingFile)->envname("AUTOLOOP_DATASET");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kInvalid;
  }

  try {
    if (*seed_cmd) return record_seed_demos_cmd(o);
    if (*collect) return collect_cmd(o);
    if (*vp) return validate_plan_cmd(o);
    if (*rp) return replay_cmd(o);
    if (*st) return stats_cmd(o);
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const InvariantError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const UnknownTemplate& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kInvalid;
}
