#include "autoloop/fsm.hpp"

#include <string>

#include "autoloop/error.hpp"

namespace autoloop {

FsmTransition step_fsm(FsmState state, FsmEvent event) {
  using S = FsmState;
  using E = FsmEventKind;
  switch (state) {
    case S::kTaskPlanning:
      if (event.kind == E::kPlanReady) return {S::kForwardExecution, StorageAction::kNone};
      if (event.kind == E::kPlanFailed) return {S::kTaskPlanning, StorageAction::kNone};
      break;
    case S::kForwardExecution:
      if (event.kind == E::kForwardResult)
        return event.success ? FsmTransition{S::kReverseExecution, StorageAction::kNone}
                             : FsmTransition{S::kTaskPlanning, StorageAction::kDiscard};
      if (event.kind == E::kRepetitionCap) return {S::kTaskPlanning, StorageAction::kNone};
      break;
    case S::kReverseExecution:
      if (event.kind == E::kReverseResult)
        return event.success ? FsmTransition{S::kForwardExecution, StorageAction::kDual}
                             : FsmTransition{S::kTaskPlanning, StorageAction::kSingle};
      break;
  }
  throw ProtocolError("event " + std::to_string(static_cast<int>(event.kind)) +
                      " is not legal in state " + std::string(to_string(state)));
}

std::string_view to_string(FsmState s) {
  switch (s) {
    case FsmState::kTaskPlanning: return "A";
    case FsmState::kForwardExecution: return "B";
    case FsmState::kReverseExecution: return "C";
  }
  return "?";
}

std::string_view to_string(StorageAction a) {
  switch (a) {
    case StorageAction::kNone: return "none";
    case StorageAction::kDiscard: return "discard";
    case StorageAction::kDual: return "dual";
    case StorageAction::kSingle: return "single";
  }
  return "?";
}

StorageAction parse_storage_action(std::string_view s) {
  for (auto a : {StorageAction::kNone, StorageAction::kDiscard, StorageAction::kDual,
                 StorageAction::kSingle})
    if (to_string(a) == s) return a;
  throw ParseError("unknown storage action '" + std::string(s) + "'");
}

}  // namespace autoloop
