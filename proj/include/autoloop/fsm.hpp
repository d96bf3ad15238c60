#pragma once

#include <string_view>
#include <utility>

namespace autoloop {

enum class FsmState { kTaskPlanning, kForwardExecution, kReverseExecution };

// Storage happens on transitions, not in states.
enum class StorageAction { kNone, kDiscard, kDual, kSingle };

enum class FsmEventKind { kPlanReady, kPlanFailed, kForwardResult, kReverseResult, kRepetitionCap };

struct FsmEvent {
  FsmEventKind kind = FsmEventKind::kPlanReady;
  bool success = false;  // forward/reverse results only

  static FsmEvent plan_ready() { return {FsmEventKind::kPlanReady, false}; }
  static FsmEvent plan_failed() { return {FsmEventKind::kPlanFailed, false}; }
  static FsmEvent forward(bool ok) { return {FsmEventKind::kForwardResult, ok}; }
  static FsmEvent reverse(bool ok) { return {FsmEventKind::kReverseResult, ok}; }
  static FsmEvent repetition_cap() { return {FsmEventKind::kRepetitionCap, false}; }
};

struct FsmTransition {
  FsmState next;
  StorageAction storage;
  bool operator==(const FsmTransition&) const = default;
};

// Throws ProtocolError for an event that cannot occur in `state`.
FsmTransition step_fsm(FsmState state, FsmEvent event);

std::string_view to_string(FsmState s);
std::string_view to_string(StorageAction a);
StorageAction parse_storage_action(std::string_view s);

}  // namespace autoloop
