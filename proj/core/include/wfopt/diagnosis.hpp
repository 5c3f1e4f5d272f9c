#pragma once

#include <memory>
#include <string>
#include <variant>

#include "wfopt/execution.hpp"
#include "wfopt/llm_client.hpp"

namespace wfopt {

inline constexpr double kDefaultConfidenceFloor = 0.5;

// A distilled failure: the node blamed for the failure and a concise error
// message. v_err always names a node present in the trace; z_err is never
// empty.
struct Diagnosis {
  NodeId v_err;
  std::string z_err;
  double confidence = 0.0;
};

struct Undiagnosable {
  std::string reason;
};

using DiagnosisOutcome = std::variant<Diagnosis, Undiagnosable>;

bool is_diagnosed(const DiagnosisOutcome& outcome);
const Diagnosis& diagnosis_of(const DiagnosisOutcome& outcome);
const Undiagnosable& undiagnosable_of(const DiagnosisOutcome& outcome);

std::string diagnosis_to_json_string(const DiagnosisOutcome& outcome);
DiagnosisOutcome diagnosis_from_json_string(const std::string& text);

// Turns a failing trace into a DiagnosisOutcome. Never throws for failure
// analysis problems: every unusable answer maps to Undiagnosable.
class Diagnoser {
 public:
  virtual ~Diagnoser() = default;
  virtual DiagnosisOutcome distill(
      const Trace& trace,
      double confidence_floor = kDefaultConfidenceFloor) const = 0;
  virtual std::string name() const = 0;
};

// Blames the first error-status record; confidence 1.0. Traces with no
// error-status record (wrong answer without a flagged step) come back
// Undiagnosable.
class RuleBasedDiagnoser final : public Diagnoser {
 public:
  DiagnosisOutcome distill(const Trace& trace,
                           double confidence_floor) const override;
  std::string name() const override { return "rule_based"; }
};

// Asks a chat backend to identify (verr, zerr). Replies must be a JSON
// object {"verr": ..., "zerr": ...} whose verr appears in the trace;
// anything else, or confidence below the floor, is Undiagnosable.
class LlmDiagnoser final : public Diagnoser {
 public:
  explicit LlmDiagnoser(std::shared_ptr<LlmClient> client);
  DiagnosisOutcome distill(const Trace& trace,
                           double confidence_floor) const override;
  std::string name() const override { return "llm"; }

 private:
  std::shared_ptr<LlmClient> client_;
};

// The exact instruction text sent by LlmDiagnoser, with the trace JSON
// substituted into the template slot. Exposed so tests can pin the bytes.
std::string diagnosis_prompt(const Trace& trace);

}  // namespace wfopt
