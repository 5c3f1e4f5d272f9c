#include "wfopt/errors.hpp"

namespace wfopt {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownOperator: return "UnknownOperator";
    case ErrorCode::CycleWouldForm: return "CycleWouldForm";
    case ErrorCode::EntryExitViolation: return "EntryExitViolation";
    case ErrorCode::MalformedArgs: return "MalformedArgs";
    case ErrorCode::InvalidGraph: return "InvalidGraph";
    case ErrorCode::EmptyMessage: return "EmptyMessage";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::UnknownRegion: return "UnknownRegion";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::IoFailure: return "IoFailure";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
  }
  return "UnknownError";
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
      code_(code) {}

void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace wfopt
