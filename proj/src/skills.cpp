#include "autoloop/skills.hpp"

#include "autoloop/error.hpp"

namespace autoloop {
namespace {

constexpr std::array<std::string_view, 10> kVerbNames = {
    "pick",    "place", "push_in", "push_out", "stack",
    "unstack", "open",  "close",   "fold",     "unfold"};

constexpr std::array<std::string_view, 6> kShapeNames = {
    "cuboid", "oval", "conical", "flat", "cylindrical", "articulated"};

}  // namespace

std::string_view to_string(Verb v) {
  return kVerbNames[static_cast<std::size_t>(v)];
}

std::string_view to_string(Shape s) {
  return kShapeNames[static_cast<std::size_t>(s)];
}

Verb parse_verb(std::string_view s) {
  for (std::size_t i = 0; i < kVerbNames.size(); ++i)
    if (kVerbNames[i] == s) return static_cast<Verb>(i);
  throw ParseError("unknown skill verb '" + std::string(s) + "'");
}

Shape parse_shape(std::string_view s) {
  for (std::size_t i = 0; i < kShapeNames.size(); ++i)
    if (kShapeNames[i] == s) return static_cast<Shape>(i);
  throw ParseError("unknown shape '" + std::string(s) + "'");
}

Verb inverse_skill(Verb v) {
  switch (v) {
    case Verb::kPick: return Verb::kPlace;
    case Verb::kPlace: return Verb::kPick;
    case Verb::kPushIn: return Verb::kPushOut;
    case Verb::kPushOut: return Verb::kPushIn;
    case Verb::kStack: return Verb::kUnstack;
    case Verb::kUnstack: return Verb::kStack;
    case Verb::kOpen: return Verb::kClose;
    case Verb::kClose: return Verb::kOpen;
    case Verb::kFold: return Verb::kUnfold;
    case Verb::kUnfold: return Verb::kFold;
  }
  return v;
}

}  // namespace autoloop
