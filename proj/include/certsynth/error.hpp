#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace certsynth {

enum class ErrorKind {
  SyntaxError,
  UnknownIdentifier,
  IndexOutOfRange,
  DivisionNearZero,
  NonFiniteResult,
  IntervalDivisionByZero,
  NonFiniteBound,
  NonDifferentiableNode,
  InvalidProblem,
  EmptySetSuspected,
  ReluNotSupported,
  SpecSystemMismatch,
  PointOutsideRegion,
  DivergenceDetected,
  UnsupportedNode,
  MalformedProblem,
  PreconditionViolated,
  IoError,
};

std::string_view to_string(ErrorKind kind);

// Every failure in the library surfaces as this exception; callers that need
// to branch on the failure mode inspect kind().
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace certsynth
