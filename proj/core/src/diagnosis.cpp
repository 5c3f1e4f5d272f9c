#include "wfopt/diagnosis.hpp"

#include "json.hpp"
#include "wfopt/errors.hpp"

namespace wfopt {

bool is_diagnosed(const DiagnosisOutcome& outcome) {
  return std::holds_alternative<Diagnosis>(outcome);
}

const Diagnosis& diagnosis_of(const DiagnosisOutcome& outcome) {
  return std::get<Diagnosis>(outcome);
}

const Undiagnosable& undiagnosable_of(const DiagnosisOutcome& outcome) {
  return std::get<Undiagnosable>(outcome);
}

std::string diagnosis_to_json_string(const DiagnosisOutcome& outcome) {
  nlohmann::ordered_json doc;
  if (is_diagnosed(outcome)) {
    const Diagnosis& d = diagnosis_of(outcome);
    doc["verr"] = d.v_err;
    doc["zerr"] = d.z_err;
    doc["confidence"] = d.confidence;
  } else {
    doc["undiagnosable"] = undiagnosable_of(outcome).reason;
  }
  return doc.dump();
}

DiagnosisOutcome diagnosis_from_json_string(const std::string& text) {
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    if (doc.contains("undiagnosable")) {
      return Undiagnosable{doc.at("undiagnosable").get<std::string>()};
    }
    Diagnosis d;
    d.v_err = doc.at("verr").get<std::string>();
    d.z_err = doc.at("zerr").get<std::string>();
    d.confidence = doc.at("confidence").get<double>();
    return d;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedArgs, std::string("diagnosis json: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// Rule-based

DiagnosisOutcome RuleBasedDiagnoser::distill(const Trace& trace,
                                             double confidence_floor) const {
  if (trace.success) return Undiagnosable{"trace is not a failure"};
  for (const NodeRecord& rec : trace.records) {
    if (rec.status == StepStatus::Error) {
      Diagnosis d;
      d.v_err = rec.node_id;
      d.z_err = rec.error_message.empty() ? "unspecified execution error"
                                          : rec.error_message;
      d.confidence = 1.0;
      if (d.confidence < confidence_floor) {
        return Undiagnosable{"confidence below floor"};
      }
      return d;
    }
  }
  return Undiagnosable{"no error-status step in trace"};
}

// ---------------------------------------------------------------------------
// LLM-backed

std::string diagnosis_prompt(const Trace& trace) {
  static const std::string kTemplate =
      "You are an error analyzer. Given this execution trace: [TRACE].\n"
      "Identify the node causing the failure (verr) and extract a concise "
      "error message (zerr).\n"
      "Output only in JSON: {\"verr\": \"node_id\", "
      "\"zerr\": \"brief_error_description\"}.";
  std::string prompt = kTemplate;
  size_t slot = prompt.find("[TRACE]");
  prompt.replace(slot, 7, trace.to_json_string());
  return prompt;
}

LlmDiagnoser::LlmDiagnoser(std::shared_ptr<LlmClient> client)
    : client_(std::move(client)) {
  if (!client_) fail(ErrorCode::BackendUnavailable, "diagnoser needs a client");
}

DiagnosisOutcome LlmDiagnoser::distill(const Trace& trace,
                                       double confidence_floor) const {
  if (trace.success) return Undiagnosable{"trace is not a failure"};
  ChatResult res = client_->chat({{"user", diagnosis_prompt(trace)}});
  if (!res.ok) return Undiagnosable{"backend: " + res.error};

  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(res.content);
  } catch (const nlohmann::json::exception&) {
    return Undiagnosable{"reply is not valid JSON"};
  }
  if (!doc.is_object() || !doc.contains("verr") || !doc.contains("zerr") ||
      !doc["verr"].is_string() || !doc["zerr"].is_string()) {
    return Undiagnosable{"reply does not match the verr/zerr schema"};
  }
  Diagnosis d;
  d.v_err = doc["verr"].get<std::string>();
  d.z_err = doc["zerr"].get<std::string>();
  d.confidence = 1.0;
  if (d.z_err.empty()) return Undiagnosable{"empty error description"};
  bool known = false;
  for (const NodeRecord& rec : trace.records) {
    if (rec.node_id == d.v_err) {
      known = true;
      break;
    }
  }
  if (!known) return Undiagnosable{"verr names a node absent from the trace"};
  if (d.confidence < confidence_floor) {
    return Undiagnosable{"confidence below floor"};
  }
  return d;
}

}  // namespace wfopt
