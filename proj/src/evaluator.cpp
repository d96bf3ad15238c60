#include "autoloop/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <regex>

#include "autoloop/error.hpp"
#include "autoloop/rng.hpp"

namespace autoloop {

namespace {

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n.");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n.");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : lower(text)) {
    const unsigned char c = static_cast<unsigned char>(ch);
    if (c == '-') continue;  // "un-folded" reads as "unfolded"
    if (std::isalnum(c) || c == '\'') {
      cur.push_back(ch);
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

bool is_negation(const std::string& t) {
  return t == "not" || t == "never" || t == "no" || t == "neither" ||
         (t.size() > 3 && t.compare(t.size() - 3, 3, "n't") == 0);
}

const std::map<std::string, std::string>& antonyms() {
  static const std::map<std::string, std::string> m = {
      {"closed", "open"},     {"open", "closed"},     {"folded", "unfolded"},
      {"unfolded", "folded"}, {"inside", "outside"}, {"outside", "inside"}};
  return m;
}

const std::string& name_of(const sim::SceneDescription& scene, int id) {
  const auto* e = scene.find(id);
  if (!e) throw InvariantError("object id " + std::to_string(id) + " is not in the scene");
  return e->name;
}

// Words after "is the <subject>" and before "?".
std::string query_phrase(const VqaQuery& q, const std::string& subject) {
  const std::string t = lower(q.text);
  const std::string head = "is the " + lower(subject) + " ";
  auto pos = t.find(head);
  std::string rest = pos == std::string::npos ? t : t.substr(pos + head.size());
  if (!rest.empty() && rest.back() == '?') rest.pop_back();
  return rest;
}

}  // namespace

// ---------------------------------------------------------------------------
// Translation

VqaQuery OracleTranslator::translate(const std::string& command, const Subtask& action,
                                     const sim::SceneDescription& scene) {
  const std::string c = trim(lower(command));
  if (c.empty()) throw InvariantError("task description is empty");
  VqaQuery q;
  q.hint = action.goal;
  q.negated = action.goal_negated;

  static const std::regex move_re("^move the (.+) from the (.+) to the (.+)$");
  static const std::regex put_re("^put the (.+) (on|in) the (.+)$");
  std::smatch m;
  if (std::regex_match(c, m, move_re)) {
    q.text = "Is the " + m[1].str() + " on the " + m[2].str() + " or the " + m[3].str() + "?";
    q.options = {m[2].str(), m[3].str()};
    q.goal_option = m[3].str();
    return q;
  }
  if (std::regex_match(c, m, put_re)) {
    q.text = "Is the " + m[1].str() + " " + m[2].str() + " the " + m[3].str() + "?";
    return q;
  }

  const std::string s = name_of(scene, action.action.subject);
  const auto dest = [&]() -> std::string {
    if (action.action.dest_object) return name_of(scene, *action.action.dest_object);
    if (action.action.dest_region) return *action.action.dest_region;
    throw InvariantError("subtask has no destination");
  };
  const auto is = [&](const std::string& rest) { return "Is the " + s + " " + rest + "?"; };
  switch (action.action.verb) {
    case Verb::kPick: q.text = is("held by the gripper"); break;
    case Verb::kPlace:
      if (action.action.dest_object)
        q.text = is((scene.has_tag(*action.action.dest_object, "container") ? "in the " : "on the ") + dest());
      else
        q.text = is("inside the " + dest());
      break;
    case Verb::kPushIn: q.text = is("inside the " + dest()); break;
    case Verb::kPushOut: q.text = is("outside the " + dest()); break;
    case Verb::kStack: q.text = is("stacked on the " + dest()); break;
    case Verb::kUnstack: q.text = is("on the table"); break;
    case Verb::kClose: q.text = is("closed"); break;
    case Verb::kOpen: q.text = is("open"); break;
    case Verb::kFold: q.text = is("folded"); break;
    case Verb::kUnfold: q.text = is("unfolded"); break;
  }
  return q;
}

// ---------------------------------------------------------------------------
// Assessment

Assessment OracleAssessor::assess(const sim::SceneDescription& scene, const VqaQuery& q) {
  if (!q.hint) throw InvariantError("oracle assessor needs a predicate hint");
  if (q.text.empty() || q.text.back() != '?') throw InvariantError("query is not a question");
  const std::string& subject = name_of(scene, q.hint->subject);
  bool truth;
  try {
    truth = sim::ground_truth(*world_, *q.hint) != q.negated;
  } catch (const InvariantError& e) {
    throw BackendError(std::string("oracle assessor: ") + e.what());
  }
  const std::string phrase = query_phrase(q, subject);
  const std::uint64_t pick = fnv1a(q.text) % 3;
  Assessment a{"", "oracle"};

  if (!q.options.empty()) {
    a.text = truth ? "Yes, I can see that the object is on the " + q.goal_option + "."
                   : "Looking at the scene, the " + subject + " is still on the " +
                         (q.options.front() == q.goal_option ? q.options.back() : q.options.front()) +
                         ".";
    return a;
  }
  if (truth) {
    static const char* const tails[] = {"", " The task appears complete.",
                                        " Nothing else on the table moved."};
    a.text = "Yes, I can see that the object is " + phrase + "." + tails[pick];
    return a;
  }
  const auto first = phrase.substr(0, phrase.find(' '));
  if (const auto ant = antonyms().find(first); ant != antonyms().end()) {
    const auto space = phrase.find(' ');
    a.text = "No, the " + subject + " remains " + ant->second +
             (space == std::string::npos ? "" : phrase.substr(space)) +
             (first == "closed" ? " on the table." : ".");
    return a;
  }
  switch (pick) {
    case 0: a.text = "No, the " + subject + " is not " + phrase + "."; break;
    case 1: a.text = "After inspecting the image, the " + subject + " is not " + phrase +
                     " at the moment."; break;
    default: a.text = "No. I do not see the " + subject + " " + phrase + "."; break;
  }
  return a;
}

// ---------------------------------------------------------------------------
// Decoding

bool OracleParser::decode(const std::string&, const VqaQuery& q, const Assessment& r) {
  const std::vector<std::string> tok = tokenize(r.text);
  if (tok.empty()) throw DecodeAmbiguity("empty assessment");
  const std::string text = lower(r.text);

  if (!q.options.empty()) {
    if (std::find(tok.begin(), tok.end(), "neither") != tok.end()) return false;
    std::vector<std::string> named;
    for (const auto& o : q.options)
      if (text.find(lower(o)) != std::string::npos) named.push_back(o);
    if (named.size() == 1) return named.front() == q.goal_option;
  }

  const auto yes = std::count(tok.begin(), tok.end(), "yes");
  const auto no = std::count(tok.begin(), tok.end(), "no");
  if (yes > 0 && no > 0) throw DecodeAmbiguity("both yes and no in: " + r.text);
  if (yes > 0) return true;
  if (no > 0) return false;

  // No explicit answer: look for the queried state word and its negation.
  const auto qt = tokenize(q.text);
  if (qt.empty()) throw DecodeAmbiguity("empty query");
  std::size_t at = qt.size() - 1;
  for (std::size_t i = 0; i < qt.size(); ++i)
    if (antonyms().count(qt[i]) || qt[i] == "held" || qt[i] == "stacked" || qt[i] == "on" ||
        qt[i] == "in") {
      at = i;
      break;
    }
  const std::string key = qt[at];
  // "in"/"on" are too common alone; they only count with the rest of the phrase
  const std::vector<std::string> phrase(qt.begin() + static_cast<long>(at), qt.end());
  const bool loose = key != "in" && key != "on";
  auto negated_before = [&](std::size_t i) {
    for (std::size_t k = i >= 3 ? i - 3 : 0; k < i; ++k)
      if (is_negation(tok[k])) return true;
    return false;
  };
  for (std::size_t i = 0; i + phrase.size() <= tok.size(); ++i)
    if (std::equal(phrase.begin(), phrase.end(), tok.begin() + static_cast<long>(i)))
      return !negated_before(i);
  if (loose)
    for (std::size_t i = 0; i < tok.size(); ++i)
      if (tok[i] == key) return !negated_before(i);
  if (auto a = antonyms().find(key); a != antonyms().end()) {
    if (std::find(tok.begin(), tok.end(), a->second) != tok.end()) return false;
  }
  if (std::find(tok.begin(), tok.end(), "un" + key) != tok.end()) return false;
  throw DecodeAmbiguity("no decisive token in: " + r.text);
}

// ---------------------------------------------------------------------------

EvaluatorBackends oracle_evaluator(const sim::WorldState& world) {
  return {std::make_shared<OracleTranslator>(), std::make_shared<OracleAssessor>(world),
          std::make_shared<OracleParser>()};
}

SuccessSignal evaluate(const EvaluatorBackends& b, const std::string& command,
                       const Subtask& action, const sim::SceneDescription& scene) {
  SuccessSignal s;
  s.log.command = command;
  try {
    if (!b.translator || !b.assessor || !b.parser)
      throw InvariantError("evaluator backends are not configured");
    const VqaQuery q = b.translator->translate(command, action, scene);
    s.log.query = q.text;
    const Assessment r = b.assessor->assess(scene, q);
    s.log.response = r.text;
    s.value = b.parser->decode(command, q, r);
  } catch (const std::exception& e) {
    s.value = false;
    s.flagged = true;
    s.error = e.what();
  }
  return s;
}

}  // namespace autoloop
