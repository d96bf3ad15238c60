#pragma once

#include <memory>
#include <string>

#include "autoloop/campaign.hpp"
#include "autoloop/codec.hpp"
#include "autoloop/evaluator.hpp"
#include "autoloop/planner.hpp"

namespace autoloop {

// JSON over HTTP POST to one endpoint. Every request carries an "op" field:
//   ground    {prompt, observation}                 -> {items: [{id?, name, shape}]}
//   plan      {prompt, observation, candidates[]}   -> {plan: {forward: [...], reverse: [...]}}
//   rank      {query, candidates[]}                 -> {ranking: [demo ids]}
//   translate {prompt, command, observation}        -> {query}
//   assess    {prompt, query, observation}          -> {text}
//   parse     {prompt, command, query, response}    -> {value: bool} | {ambiguous: true}
class HttpClient {
 public:
  HttpClient(std::string endpoint, int timeout_ms, int retries);
  // BackendError on connection failure, non-2xx status or a non-JSON body.
  codec::json post(const codec::json& request) const;
  // BackendError if nothing answers at the endpoint; any HTTP status counts as alive.
  void probe() const;
  const std::string& endpoint() const { return endpoint_; }

 private:
  std::string endpoint_;
  std::string base_;
  std::string path_;
  int timeout_ms_;
  int retries_;
};

codec::json raw_plan_to_json(const RawPlan& p);
RawPlan raw_plan_from_json(const codec::json& j);
codec::json grounded_to_json(const GroundedScene& g);
GroundedScene grounded_from_json(const codec::json& j);

class ExternalReasoner : public ReasonerBackend {
 public:
  explicit ExternalReasoner(std::shared_ptr<const HttpClient> client) : client_(std::move(client)) {}
  GroundedScene ground(const std::string& prompt, const sim::SceneDescription& obs) override;
  RawPlan plan(const std::string& prompt, const sim::SceneDescription& obs,
               const std::string& library_summary) override;
  std::vector<std::string> rank(const SkillQuery& query,
                                const std::vector<const Demonstration*>& candidates) override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

class ExternalTranslator : public Translator {
 public:
  explicit ExternalTranslator(std::shared_ptr<const HttpClient> c) : client_(std::move(c)) {}
  VqaQuery translate(const std::string& command, const Subtask& action,
                     const sim::SceneDescription& scene) override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

class ExternalAssessor : public Assessor {
 public:
  explicit ExternalAssessor(std::shared_ptr<const HttpClient> c) : client_(std::move(c)) {}
  Assessment assess(const sim::SceneDescription& scene, const VqaQuery& q) override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

class ExternalParser : public Parser {
 public:
  explicit ExternalParser(std::shared_ptr<const HttpClient> c) : client_(std::move(c)) {}
  bool decode(const std::string& command, const VqaQuery& q, const Assessment& r) override;

 private:
  std::shared_ptr<const HttpClient> client_;
};

EvaluatorBackends external_evaluator(std::shared_ptr<const HttpClient> client);
Modules external_modules(const BackendConfig& cfg);

}  // namespace autoloop
