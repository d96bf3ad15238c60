#pragma once

#include <array>
#include <string>
#include <string_view>

namespace autoloop {

enum class Verb {
  kPick,
  kPlace,
  kPushIn,
  kPushOut,
  kStack,
  kUnstack,
  kOpen,
  kClose,
  kFold,
  kUnfold,
};

inline constexpr std::array<Verb, 10> kAllVerbs = {
    Verb::kPick,  Verb::kPlace,   Verb::kPushIn, Verb::kPushOut,
    Verb::kStack, Verb::kUnstack, Verb::kOpen,   Verb::kClose,
    Verb::kFold,  Verb::kUnfold};

enum class Shape { kCuboid, kOval, kConical, kFlat, kCylindrical, kArticulated };

inline constexpr std::array<Shape, 6> kAllShapes = {
    Shape::kCuboid, Shape::kOval,        Shape::kConical,
    Shape::kFlat,   Shape::kCylindrical, Shape::kArticulated};

std::string_view to_string(Verb v);
std::string_view to_string(Shape s);
// Throw ParseError on unknown names.
Verb parse_verb(std::string_view s);
Shape parse_shape(std::string_view s);

// pick<->place, push_in<->push_out, stack<->unstack, open<->close,
// fold<->unfold. Involutive and total on the verb set.
Verb inverse_skill(Verb v);

struct ObjectDescriptor {
  std::string name;
  Shape shape = Shape::kCuboid;

  bool operator==(const ObjectDescriptor&) const = default;
};

}  // namespace autoloop
