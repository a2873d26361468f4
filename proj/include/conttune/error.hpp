#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace conttune {

enum class ErrorCode {
  // core-model
  CyclicGraph,
  DanglingEdge,
  EmptyDag,
  DegreeViolation,
  DuplicateOperator,
  InvalidOperator,
  MissingAssignment,
  NonPositiveParallelism,
  // simulator
  UnknownSource,
  ZeroUsefulTime,
  UnknownOperator,
  // history
  IoError,
  CorruptRecord,
  // controller
  ZeroAllTime,
  AssignmentMismatch,
  InvalidThresholds,
  // surrogate
  EmptyTrainingSet,
  SingularCovariance,
  InvalidKernel,
  // tuners
  PMaxExceeded,
  ZeroProcessingAbility,
  // workloads
  NonContiguousTrace,
  NegativeRate,
  InvalidTrace,
  // harness
  ConfigError,
  UnknownTuner,
  Infeasible,
  ScenarioMismatch,
};

constexpr std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::CyclicGraph: return "CyclicGraph";
    case ErrorCode::DanglingEdge: return "DanglingEdge";
    case ErrorCode::EmptyDag: return "EmptyDag";
    case ErrorCode::DegreeViolation: return "DegreeViolation";
    case ErrorCode::DuplicateOperator: return "DuplicateOperator";
    case ErrorCode::InvalidOperator: return "InvalidOperator";
    case ErrorCode::MissingAssignment: return "MissingAssignment";
    case ErrorCode::NonPositiveParallelism: return "NonPositiveParallelism";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::ZeroUsefulTime: return "ZeroUsefulTime";
    case ErrorCode::UnknownOperator: return "UnknownOperator";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::CorruptRecord: return "CorruptRecord";
    case ErrorCode::ZeroAllTime: return "ZeroAllTime";
    case ErrorCode::AssignmentMismatch: return "AssignmentMismatch";
    case ErrorCode::InvalidThresholds: return "InvalidThresholds";
    case ErrorCode::EmptyTrainingSet: return "EmptyTrainingSet";
    case ErrorCode::SingularCovariance: return "SingularCovariance";
    case ErrorCode::InvalidKernel: return "InvalidKernel";
    case ErrorCode::PMaxExceeded: return "PMaxExceeded";
    case ErrorCode::ZeroProcessingAbility: return "ZeroProcessingAbility";
    case ErrorCode::NonContiguousTrace: return "NonContiguousTrace";
    case ErrorCode::NegativeRate: return "NegativeRate";
    case ErrorCode::InvalidTrace: return "InvalidTrace";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::UnknownTuner: return "UnknownTuner";
    case ErrorCode::Infeasible: return "Infeasible";
    case ErrorCode::ScenarioMismatch: return "ScenarioMismatch";
  }
  return "Unknown";
}

/// Exception carrying a machine-checkable code. The message names the
/// offending element (operator id, line number, field path).
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

/// True for errors caused by bad user input (configs, files, flags) rather
/// than by a runtime condition of the tuning itself.
inline bool is_validation_error(ErrorCode code) {
  switch (code) {
    case ErrorCode::CyclicGraph:
    case ErrorCode::DanglingEdge:
    case ErrorCode::EmptyDag:
    case ErrorCode::DegreeViolation:
    case ErrorCode::DuplicateOperator:
    case ErrorCode::InvalidOperator:
    case ErrorCode::MissingAssignment:
    case ErrorCode::NonPositiveParallelism:
    case ErrorCode::UnknownSource:
    case ErrorCode::UnknownOperator:
    case ErrorCode::IoError:
    case ErrorCode::CorruptRecord:
    case ErrorCode::InvalidThresholds:
    case ErrorCode::InvalidKernel:
    case ErrorCode::NonContiguousTrace:
    case ErrorCode::NegativeRate:
    case ErrorCode::InvalidTrace:
    case ErrorCode::ConfigError:
    case ErrorCode::UnknownTuner:
    case ErrorCode::ScenarioMismatch:
      return true;
    default:
      return false;
  }
}

}  // namespace conttune
