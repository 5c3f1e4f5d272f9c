#pragma once

#include <stdexcept>
#include <string>

namespace wfopt {

// Machine-readable failure categories. Every throwing path in the library
// uses one of these so callers (and the CLI error channel) can map a failure
// to a stable code without parsing message text.
enum class ErrorCode {
  UnknownNode,
  UnknownOperator,
  CycleWouldForm,
  EntryExitViolation,
  MalformedArgs,
  InvalidGraph,
  EmptyMessage,
  InsufficientData,
  DimensionMismatch,
  UnknownRegion,
  EmptyDataset,
  ConfigError,
  IoFailure,
  BackendUnavailable,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message);

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace wfopt
