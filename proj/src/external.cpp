#include "autoloop/external.hpp"

// after Eigen: <resolv.h> defines a _res macro
#include <httplib.h>

#include <regex>

#include "autoloop/dataset.hpp"
#include "autoloop/error.hpp"
#include "autoloop/prompts.hpp"

namespace autoloop {

using codec::json;

HttpClient::HttpClient(std::string endpoint, int timeout_ms, int retries)
    : endpoint_(std::move(endpoint)), timeout_ms_(timeout_ms), retries_(retries) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(endpoint_, m, url))
    throw BackendError("malformed endpoint '" + endpoint_ + "' (expected http://host:port/path)");
  base_ = m[1];
  path_ = m[2].matched ? std::string(m[2]) : "/";
}

json HttpClient::post(const json& request) const {
  httplib::Client cli(base_);
  const auto sec = timeout_ms_ / 1000, usec = (timeout_ms_ % 1000) * 1000;
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
  const std::string body = request.dump();
  std::string last;
  for (int attempt = 0; attempt <= retries_; ++attempt) {
    auto res = cli.Post(path_, body, "application/json");
    if (!res) {
      last = "cannot reach " + endpoint_ + ": " + httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last = endpoint_ + " answered HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status < 200 || res->status >= 300)
      throw BackendError(endpoint_ + " answered HTTP " + std::to_string(res->status) + ": " + res->body);
    try {
      return json::parse(res->body);
    } catch (const json::parse_error&) {
      throw BackendError(endpoint_ + " returned a body that is not JSON");
    }
  }
  throw BackendError(last);
}

void HttpClient::probe() const {
  httplib::Client cli(base_);
  const auto sec = timeout_ms_ / 1000, usec = (timeout_ms_ % 1000) * 1000;
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  auto res = cli.Post(path_, json{{"op", "ping"}}.dump(), "application/json");
  if (!res) throw BackendError("cannot reach " + endpoint_ + ": " + httplib::to_string(res.error()));
}

// ---------------------------------------------------------------------------
// Wire codecs

namespace {

json raw_subtask_json(const RawSubtask& s) {
  return {{"verb", s.verb},
          {"subject", s.subject},
          {"dest_object", s.dest_object},
          {"dest_region", s.dest_region},
          {"description", s.description}};
}

RawSubtask raw_subtask_from(const json& j) {
  codec::check_fields(j, {"verb", "subject"}, {"dest_object", "dest_region", "description"});
  RawSubtask s;
  s.verb = codec::get<std::string>(j, "verb");
  s.subject = codec::get<std::string>(j, "subject");
  if (j.contains("dest_object")) s.dest_object = codec::get<std::string>(j, "dest_object");
  if (j.contains("dest_region")) s.dest_region = codec::get<std::string>(j, "dest_region");
  if (j.contains("description")) s.description = codec::get<std::string>(j, "description");
  return s;
}

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key))
    throw BackendError(std::string("backend reply lacks '") + key + "'");
  return j.at(key);
}

json demo_json(const Demonstration& d) {
  return {{"id", d.id},
          {"verb", to_string(d.skill_verb)},
          {"object", d.target.name},
          {"shape", to_string(d.target.shape)}};
}

}  // namespace

json raw_plan_to_json(const RawPlan& p) {
  json f = json::array(), r = json::array();
  for (const auto& s : p.forward) f.push_back(raw_subtask_json(s));
  for (const auto& s : p.reverse) r.push_back(raw_subtask_json(s));
  return {{"forward", f}, {"reverse", r}};
}

RawPlan raw_plan_from_json(const json& j) {
  codec::check_fields(j, {"forward", "reverse"});
  RawPlan p;
  for (const auto& s : j.at("forward")) p.forward.push_back(raw_subtask_from(s));
  for (const auto& s : j.at("reverse")) p.reverse.push_back(raw_subtask_from(s));
  return p;
}

json grounded_to_json(const GroundedScene& g) {
  json items = json::array();
  for (const auto& i : g.items) {
    json e = {{"name", i.descriptor.name}, {"shape", to_string(i.descriptor.shape)}};
    if (i.id >= 0) e["id"] = i.id;
    items.push_back(e);
  }
  return items;
}

GroundedScene grounded_from_json(const json& j) {
  if (!j.is_array()) codec::throw_parse("items must be an array");
  GroundedScene g;
  for (const auto& e : j) {
    codec::check_fields(e, {"name", "shape"}, {"id"});
    GroundedItem it;
    if (e.contains("id")) it.id = codec::get<int>(e, "id");
    it.descriptor = {codec::get<std::string>(e, "name"), parse_shape(codec::get<std::string>(e, "shape"))};
    g.items.push_back(std::move(it));
  }
  return g;
}

// ---------------------------------------------------------------------------
// Adapters. Malformed replies surface as BackendError so callers treat them
// like any other backend failure.

namespace {

template <class F>
auto guarded(F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const ParseError& e) {
    throw BackendError(std::string("malformed backend reply: ") + e.what());
  } catch (const json::exception& e) {
    throw BackendError(std::string("malformed backend reply: ") + e.what());
  }
}

}  // namespace

GroundedScene ExternalReasoner::ground(const std::string& prompt, const sim::SceneDescription& obs) {
  const json reply = client_->post({{"op", "ground"}, {"prompt", prompt}, {"observation", scene_to_json(obs)}});
  return guarded([&] { return grounded_from_json(field(reply, "items")); });
}

RawPlan ExternalReasoner::plan(const std::string& prompt, const sim::SceneDescription& obs,
                               const std::string& library_summary) {
  const json reply = client_->post({{"op", "plan"},
                                    {"prompt", prompt},
                                    {"observation", scene_to_json(obs)},
                                    {"candidates", library_summary}});
  return guarded([&] { return raw_plan_from_json(field(reply, "plan")); });
}

std::vector<std::string> ExternalReasoner::rank(const SkillQuery& query,
                                                const std::vector<const Demonstration*>& candidates) {
  json cands = json::array();
  for (const auto* d : candidates) cands.push_back(demo_json(*d));
  const json reply = client_->post({{"op", "rank"},
                                    {"query",
                                     {{"verb", to_string(query.verb)},
                                      {"object", query.object.name},
                                      {"shape", to_string(query.object.shape)}}},
                                    {"candidates", cands}});
  return guarded([&] { return field(reply, "ranking").get<std::vector<std::string>>(); });
}

VqaQuery ExternalTranslator::translate(const std::string& command, const Subtask&,
                                       const sim::SceneDescription& scene) {
  const json reply = client_->post({{"op", "translate"},
                                    {"prompt", builtin_prompt(PromptKind::kAssess)},
                                    {"command", command},
                                    {"observation", scene_to_json(scene)}});
  VqaQuery q;
  q.text = guarded([&] { return field(reply, "query").get<std::string>(); });
  return q;
}

Assessment ExternalAssessor::assess(const sim::SceneDescription& scene, const VqaQuery& q) {
  const json reply = client_->post({{"op", "assess"},
                                    {"prompt", builtin_prompt(PromptKind::kAssess)},
                                    {"query", q.text},
                                    {"observation", scene_to_json(scene)}});
  return {guarded([&] { return field(reply, "text").get<std::string>(); }), client_->endpoint()};
}

bool ExternalParser::decode(const std::string& command, const VqaQuery& q, const Assessment& r) {
  const json reply = client_->post({{"op", "parse"},
                                    {"prompt", builtin_prompt(PromptKind::kAssess)},
                                    {"command", command},
                                    {"query", q.text},
                                    {"response", r.text}});
  if (reply.is_object() && reply.value("ambiguous", false))
    throw DecodeAmbiguity("external parser could not settle '" + q.text + "'");
  return guarded([&] { return field(reply, "value").get<bool>(); });
}

EvaluatorBackends external_evaluator(std::shared_ptr<const HttpClient> client) {
  return {std::make_shared<ExternalTranslator>(client), std::make_shared<ExternalAssessor>(client),
          std::make_shared<ExternalParser>(client)};
}

Modules external_modules(const BackendConfig& cfg) {
  auto client = std::make_shared<const HttpClient>(cfg.endpoint, cfg.timeout_ms, cfg.retries);
  Modules m;
  m.reasoner = [client](const sim::WorldState&, std::uint64_t) -> std::unique_ptr<ReasonerBackend> {
    return std::make_unique<ExternalReasoner>(client);
  };
  m.evaluator = [client](const sim::WorldState&) { return external_evaluator(client); };
  m.predictor = reference_predictor_factory();
  return m;
}

Modules modules_for(const CampaignConfig& cfg) {
  if (cfg.backend.kind == "external") return external_modules(cfg.backend);
  return oracle_modules();
}

}  // namespace autoloop
