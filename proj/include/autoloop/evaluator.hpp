#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "autoloop/planner.hpp"
#include "autoloop/sim.hpp"

namespace autoloop {

struct VqaQuery {
  std::string text;
  std::optional<sim::Predicate> hint;
  bool negated = false;  // the question asks for the hint to be false
  // "Is the X on the A or the B?": the options in order and the one that
  // counts as success.
  std::vector<std::string> options;
  std::string goal_option;
};

struct Assessment {
  std::string text;
  std::string backend_id;
};

struct StageLog {
  std::string command;
  std::string query;
  std::string response;
};

struct SuccessSignal {
  bool value = false;
  bool flagged = false;  // an error or ambiguity forced the value to false
  std::string error;
  StageLog log;
};

class Translator {
 public:
  virtual ~Translator() = default;
  virtual VqaQuery translate(const std::string& command, const Subtask& action,
                             const sim::SceneDescription& scene) = 0;
};

class Assessor {
 public:
  virtual ~Assessor() = default;
  virtual Assessment assess(const sim::SceneDescription& scene, const VqaQuery& q) = 0;
};

class Parser {
 public:
  virtual ~Parser() = default;
  // Throws DecodeAmbiguity when the text does not settle the question.
  virtual bool decode(const std::string& command, const VqaQuery& q, const Assessment& r) = 0;
};

// Few-shot patterns first ("put the X on the Y", "move the X from the A to
// the B"), then a template per verb.
class OracleTranslator : public Translator {
 public:
  VqaQuery translate(const std::string& command, const Subtask& action,
                     const sim::SceneDescription& scene) override;
};

// Answers the hint against the live world in deliberately wordy prose.
class OracleAssessor : public Assessor {
 public:
  explicit OracleAssessor(const sim::WorldState& world) : world_(&world) {}
  Assessment assess(const sim::SceneDescription& scene, const VqaQuery& q) override;

 private:
  const sim::WorldState* world_;
};

class OracleParser : public Parser {
 public:
  bool decode(const std::string& command, const VqaQuery& q, const Assessment& r) override;
};

struct EvaluatorBackends {
  std::shared_ptr<Translator> translator;
  std::shared_ptr<Assessor> assessor;
  std::shared_ptr<Parser> parser;
};

EvaluatorBackends oracle_evaluator(const sim::WorldState& world);

// Runs the three stages; any error yields a flagged false.
SuccessSignal evaluate(const EvaluatorBackends& b, const std::string& command,
                       const Subtask& action, const sim::SceneDescription& scene);

}  // namespace autoloop
