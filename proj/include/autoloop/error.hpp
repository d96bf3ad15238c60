#pragma once

#include <stdexcept>
#include <string>

namespace autoloop {

// Base class for every failure raised by the library. Callers that only care
// about "something went wrong" catch this; the subclasses let the
// orchestrator map specific failures onto FSM events.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  ParseError(const std::string& what, long record_index = -1)
      : Error(record_index >= 0
                  ? "record " + std::to_string(record_index) + ": " + what
                  : what),
        record_index_(record_index) {}
  long record_index() const { return record_index_; }

 private:
  long record_index_;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class WorkspaceViolation : public Error {
 public:
  using Error::Error;
};

class UnknownTemplate : public Error {
 public:
  using Error::Error;
};

class GroundingViolation : public Error {
 public:
  using Error::Error;
};

class PlanningFailure : public Error {
 public:
  using Error::Error;
};

class PolicyError : public Error {
 public:
  using Error::Error;
};

class DecodeAmbiguity : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Illegal FSM (state, event) pair. This is a programming bug, never a
// runtime condition of the robot.
class ProtocolError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace autoloop
