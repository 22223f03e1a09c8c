#include "certsynth/error.hpp"

namespace certsynth {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::SyntaxError: return "SyntaxError";
    case ErrorKind::UnknownIdentifier: return "UnknownIdentifier";
    case ErrorKind::IndexOutOfRange: return "IndexOutOfRange";
    case ErrorKind::DivisionNearZero: return "DivisionNearZero";
    case ErrorKind::NonFiniteResult: return "NonFiniteResult";
    case ErrorKind::IntervalDivisionByZero: return "IntervalDivisionByZero";
    case ErrorKind::NonFiniteBound: return "NonFiniteBound";
    case ErrorKind::NonDifferentiableNode: return "NonDifferentiableNode";
    case ErrorKind::InvalidProblem: return "InvalidProblem";
    case ErrorKind::EmptySetSuspected: return "EmptySetSuspected";
    case ErrorKind::ReluNotSupported: return "ReluNotSupported";
    case ErrorKind::SpecSystemMismatch: return "SpecSystemMismatch";
    case ErrorKind::PointOutsideRegion: return "PointOutsideRegion";
    case ErrorKind::DivergenceDetected: return "DivergenceDetected";
    case ErrorKind::UnsupportedNode: return "UnsupportedNode";
    case ErrorKind::MalformedProblem: return "MalformedProblem";
    case ErrorKind::PreconditionViolated: return "PreconditionViolated";
    case ErrorKind::IoError: return "IoError";
  }
  return "Error";
}

}  // namespace certsynth
