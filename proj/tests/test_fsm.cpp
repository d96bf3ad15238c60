#include <doctest.h>

#include <map>
#include <vector>

#include "autoloop/error.hpp"
#include "autoloop/fsm.hpp"

using namespace autoloop;

namespace {

using S = FsmState;
using A = StorageAction;

std::vector<FsmEvent> all_events() {
  return {FsmEvent::plan_ready(), FsmEvent::plan_failed(), FsmEvent::forward(true),
          FsmEvent::forward(false), FsmEvent::reverse(true), FsmEvent::reverse(false),
          FsmEvent::repetition_cap()};
}

// index into all_events()
const std::map<std::pair<S, int>, FsmTransition> kTable = {
    {{S::kTaskPlanning, 0}, {S::kForwardExecution, A::kNone}},
    {{S::kTaskPlanning, 1}, {S::kTaskPlanning, A::kNone}},
    {{S::kForwardExecution, 2}, {S::kReverseExecution, A::kNone}},
    {{S::kForwardExecution, 3}, {S::kTaskPlanning, A::kDiscard}},
    {{S::kReverseExecution, 4}, {S::kForwardExecution, A::kDual}},
    {{S::kReverseExecution, 5}, {S::kTaskPlanning, A::kSingle}},
    {{S::kForwardExecution, 6}, {S::kTaskPlanning, A::kNone}},
};

}  // namespace

TEST_CASE("named loops") {
  CHECK(step_fsm(S::kReverseExecution, FsmEvent::reverse(true)) ==
        FsmTransition{S::kForwardExecution, A::kDual});
  CHECK(step_fsm(S::kReverseExecution, FsmEvent::reverse(false)) ==
        FsmTransition{S::kTaskPlanning, A::kSingle});
  CHECK(step_fsm(S::kForwardExecution, FsmEvent::forward(false)) ==
        FsmTransition{S::kTaskPlanning, A::kDiscard});
}

TEST_CASE("every state/event pair is either in the table or a protocol error") {
  const auto events = all_events();
  int legal = 0;
  for (S s : {S::kTaskPlanning, S::kForwardExecution, S::kReverseExecution}) {
    for (int i = 0; i < static_cast<int>(events.size()); ++i) {
      CAPTURE(to_string(s));
      CAPTURE(i);
      auto it = kTable.find({s, i});
      if (it == kTable.end()) {
        CHECK_THROWS_AS(step_fsm(s, events[i]), ProtocolError);
      } else {
        CHECK(step_fsm(s, events[i]) == it->second);
        ++legal;
      }
    }
  }
  CHECK(legal == 7);
}

TEST_CASE("storage only on leaving B on failure or leaving C") {
  for (const auto& [key, t] : kTable) {
    if (t.storage == A::kDual || t.storage == A::kSingle) CHECK(key.first == S::kReverseExecution);
    if (t.storage == A::kDiscard) CHECK(key.first == S::kForwardExecution);
  }
}

TEST_CASE("names round trip") {
  CHECK(to_string(S::kTaskPlanning) == "A");
  CHECK(to_string(S::kReverseExecution) == "C");
  for (A a : {A::kNone, A::kDiscard, A::kDual, A::kSingle}) CHECK(parse_storage_action(to_string(a)) == a);
  CHECK_THROWS_AS(parse_storage_action("triple"), ParseError);
}
