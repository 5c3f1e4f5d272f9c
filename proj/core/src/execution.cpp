#include "wfopt/execution.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "json.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

namespace {

const char* step_status_name(StepStatus s) {
  return s == StepStatus::Ok ? "ok" : "error";
}

StepStatus step_status_from_name(const std::string& s) {
  if (s == "ok") return StepStatus::Ok;
  if (s == "error") return StepStatus::Error;
  fail(ErrorCode::MalformedArgs, "unknown step status '" + s + "'");
}

std::string replace_all(std::string text, const std::string& needle,
                        const std::string& value) {
  size_t pos = 0;
  while ((pos = text.find(needle, pos)) != std::string::npos) {
    text.replace(pos, needle.size(), value);
    pos += value.size();
  }
  return text;
}

bool contains(const std::string& haystack, const std::string& needle) {
  return haystack.find(needle) != std::string::npos;
}

constexpr const char* kErrorPrefix = "error: ";

bool is_error_output(const std::string& output) {
  return output.rfind(kErrorPrefix, 0) == 0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Trace serialization

std::string Trace::to_json_string() const {
  nlohmann::ordered_json doc;
  doc["instance_id"] = instance_id;
  doc["records"] = nlohmann::ordered_json::array();
  for (const NodeRecord& r : records) {
    doc["records"].push_back({{"node_id", r.node_id},
                              {"input", r.input},
                              {"output", r.output},
                              {"status", step_status_name(r.status)},
                              {"error_message", r.error_message}});
  }
  doc["final_output"] = final_output;
  doc["success"] = success;
  doc["seed"] = seed;
  return doc.dump();
}

Trace Trace::from_json_string(const std::string& text) {
  Trace t;
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    t.instance_id = doc.at("instance_id").get<std::string>();
    for (const auto& jr : doc.at("records")) {
      NodeRecord r;
      r.node_id = jr.at("node_id").get<std::string>();
      r.input = jr.at("input").get<std::string>();
      r.output = jr.at("output").get<std::string>();
      r.status = step_status_from_name(jr.at("status").get<std::string>());
      r.error_message = jr.at("error_message").get<std::string>();
      t.records.push_back(std::move(r));
    }
    t.final_output = doc.at("final_output").get<std::string>();
    t.success = doc.at("success").get<bool>();
    t.seed = doc.at("seed").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedArgs, std::string("trace json: ") + e.what());
  }
  return t;
}

// ---------------------------------------------------------------------------
// verify

namespace {

std::string normalize_answer(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char raw : s) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

bool parse_number(const std::string& s, double* value) {
  const char* begin = s.data();
  const char* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(begin, end, *value);
  return ec == std::errc() && ptr == end && !s.empty();
}

}  // namespace

bool verify(const std::string& output, const std::string& ground_truth,
            const VerifyOptions& options) {
  std::string a = normalize_answer(output);
  std::string b = normalize_answer(ground_truth);
  if (options.numeric) {
    double x = 0.0, y = 0.0;
    if (parse_number(a, &x) && parse_number(b, &y)) {
      return std::abs(x - y) <= options.numeric_tolerance;
    }
  }
  return a == b;
}

// ---------------------------------------------------------------------------
// SimWorldSpec

void SimWorldSpec::validate() const {
  if (base_noise_rate < 0.0 || base_noise_rate > 1.0) {
    fail(ErrorCode::ConfigError, "base_noise_rate outside [0, 1]");
  }
  std::vector<std::string> seen;
  for (const PlantedMode& m : modes) {
    if (m.mode_id.empty()) fail(ErrorCode::ConfigError, "mode with empty id");
    if (std::find(seen.begin(), seen.end(), m.mode_id) != seen.end()) {
      fail(ErrorCode::ConfigError, "duplicate mode id '" + m.mode_id + "'");
    }
    seen.push_back(m.mode_id);
    if (m.failure_probability < 0.0 || m.failure_probability > 1.0) {
      fail(ErrorCode::ConfigError,
           "mode '" + m.mode_id + "' probability outside [0, 1]");
    }
    if (m.error_message.empty()) {
      fail(ErrorCode::ConfigError, "mode '" + m.mode_id + "' has no message");
    }
  }
  for (const RepairRule& r : repairs) {
    if (r.neutralizes.empty()) {
      fail(ErrorCode::ConfigError, "repair rule neutralizes nothing");
    }
    for (const std::string& id : r.neutralizes) {
      if (std::find(seen.begin(), seen.end(), id) == seen.end()) {
        fail(ErrorCode::ConfigError, "repair refers to unknown mode '" + id + "'");
      }
    }
    if (r.when.node_id.empty()) {
      fail(ErrorCode::ConfigError, "repair condition has no node_id");
    }
    if (r.residual_failure_probability < 0.0 ||
        r.residual_failure_probability > 1.0) {
      fail(ErrorCode::ConfigError, "repair residual outside [0, 1]");
    }
  }
}

std::string SimWorldSpec::to_json_string(int indent) const {
  nlohmann::ordered_json doc;
  doc["base_noise_rate"] = base_noise_rate;
  doc["modes"] = nlohmann::ordered_json::array();
  for (const PlantedMode& m : modes) {
    nlohmann::ordered_json jt;
    if (!m.trigger.node_id.empty()) jt["node_id"] = m.trigger.node_id;
    if (!m.trigger.node_kind.empty()) jt["node_kind"] = m.trigger.node_kind;
    if (!m.trigger.prompt_contains.empty()) {
      jt["prompt_contains"] = m.trigger.prompt_contains;
    }
    if (!m.trigger.input_contains.empty()) {
      jt["input_contains"] = m.trigger.input_contains;
    }
    doc["modes"].push_back({{"mode_id", m.mode_id},
                            {"trigger", jt},
                            {"failure_probability", m.failure_probability},
                            {"error_message", m.error_message}});
  }
  doc["repairs"] = nlohmann::ordered_json::array();
  for (const RepairRule& r : repairs) {
    nlohmann::ordered_json jw;
    jw["node_id"] = r.when.node_id;
    if (!r.when.prompt_contains.empty()) {
      jw["prompt_contains"] = r.when.prompt_contains;
    }
    if (!r.when.successor_kind.empty()) {
      jw["successor_kind"] = r.when.successor_kind;
    }
    if (!r.when.param_key.empty()) jw["param_key"] = r.when.param_key;
    if (r.when.node_absent) jw["node_absent"] = true;
    doc["repairs"].push_back(
        {{"neutralizes", r.neutralizes},
         {"when", jw},
         {"residual_failure_probability", r.residual_failure_probability}});
  }
  doc["required_node_ids"] = required_node_ids;
  return doc.dump(indent);
}

SimWorldSpec SimWorldSpec::from_json_string(const std::string& text) {
  SimWorldSpec spec;
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    spec.base_noise_rate = doc.value("base_noise_rate", 0.0);
    for (const auto& jm : doc.value("modes", nlohmann::json::array())) {
      PlantedMode m;
      m.mode_id = jm.at("mode_id").get<std::string>();
      const auto& jt = jm.at("trigger");
      m.trigger.node_id = jt.value("node_id", std::string());
      m.trigger.node_kind = jt.value("node_kind", std::string());
      m.trigger.prompt_contains = jt.value("prompt_contains", std::string());
      m.trigger.input_contains = jt.value("input_contains", std::string());
      m.failure_probability = jm.at("failure_probability").get<double>();
      m.error_message = jm.at("error_message").get<std::string>();
      spec.modes.push_back(std::move(m));
    }
    for (const auto& jr : doc.value("repairs", nlohmann::json::array())) {
      RepairRule r;
      r.neutralizes = jr.at("neutralizes").get<std::vector<std::string>>();
      const auto& jw = jr.at("when");
      r.when.node_id = jw.value("node_id", std::string());
      r.when.prompt_contains = jw.value("prompt_contains", std::string());
      r.when.successor_kind = jw.value("successor_kind", std::string());
      r.when.param_key = jw.value("param_key", std::string());
      r.when.node_absent = jw.value("node_absent", false);
      r.residual_failure_probability =
          jr.value("residual_failure_probability", 0.0);
      spec.repairs.push_back(std::move(r));
    }
    spec.required_node_ids =
        doc.value("required_node_ids", std::vector<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("sim world json: ") + e.what());
  }
  spec.validate();
  return spec;
}

SimWorldSpec SimWorldSpec::from_json_file(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::IoFailure, "cannot open sim world " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return from_json_string(buf.str());
}

// ---------------------------------------------------------------------------
// SimExecutor

namespace {

bool trigger_matches(const ModeTrigger& t, const Node& node,
                     const DatasetInstance& x) {
  if (!t.node_id.empty() && t.node_id != node.id) return false;
  if (!t.node_kind.empty() && t.node_kind != node_kind_name(node.kind)) {
    return false;
  }
  if (!t.prompt_contains.empty() && !contains(node.prompt, t.prompt_contains)) {
    return false;
  }
  if (!t.input_contains.empty() && !contains(x.input, t.input_contains)) {
    return false;
  }
  return true;
}

bool repair_in_place(const RepairCondition& c, const WorkflowGraph& w) {
  if (c.node_absent) return !w.has_node(c.node_id);
  if (!w.has_node(c.node_id)) return false;
  const Node& node = w.node(c.node_id);
  if (!c.prompt_contains.empty() && !contains(node.prompt, c.prompt_contains)) {
    return false;
  }
  if (!c.successor_kind.empty()) {
    bool found = false;
    for (const NodeId& child : w.children(c.node_id)) {
      if (node_kind_name(w.node(child).kind) == c.successor_kind) {
        found = true;
        break;
      }
    }
    if (!found) return false;
  }
  if (!c.param_key.empty() && node.params.count(c.param_key) == 0) {
    return false;
  }
  return true;
}

double uniform_draw(uint64_t seed, const std::string& tag) {
  Rng rng(mix_seed(seed, tag));
  return rng.uniform();
}

}  // namespace

SimExecutor::SimExecutor(SimWorldSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
}

Trace SimExecutor::execute(const WorkflowGraph& w, const DatasetInstance& x,
                           uint64_t seed) const {
  // Effective failure probability per mode, given the repairs present in w.
  std::vector<double> mode_prob(spec_.modes.size());
  for (size_t i = 0; i < spec_.modes.size(); ++i) {
    mode_prob[i] = spec_.modes[i].failure_probability;
    for (const RepairRule& rule : spec_.repairs) {
      bool covers =
          std::find(rule.neutralizes.begin(), rule.neutralizes.end(),
                    spec_.modes[i].mode_id) != rule.neutralizes.end();
      if (covers && repair_in_place(rule.when, w)) {
        mode_prob[i] = rule.residual_failure_probability;
        break;
      }
    }
  }

  std::string missing_required;
  for (const std::string& id : spec_.required_node_ids) {
    if (!w.has_node(id)) {
      missing_required = id;
      break;
    }
  }

  Trace trace;
  trace.instance_id = x.id;
  trace.seed = seed;

  std::unordered_map<NodeId, size_t> record_of;
  bool failed = false;
  for (const NodeId& id : w.topological_order()) {
    const Node& node = w.node(id);
    cost_.fetch_add(1, std::memory_order_relaxed);

    NodeRecord rec;
    rec.node_id = id;

    std::vector<NodeId> ps = w.parents(id);
    if (ps.empty()) {
      rec.input = x.input;
    } else {
      std::string joined;
      for (size_t i = 0; i < ps.size(); ++i) {
        if (i) joined += "\n";
        joined += trace.records[record_of.at(ps[i])].output;
      }
      rec.input = joined;
    }

    std::string failure_message;
    if (!failed) {
      if (!missing_required.empty()) {
        failure_message =
            "required step '" + missing_required + "' is missing from the workflow";
      } else {
        for (size_t i = 0; i < spec_.modes.size() && failure_message.empty();
             ++i) {
          const PlantedMode& mode = spec_.modes[i];
          if (mode_prob[i] <= 0.0) continue;
          if (!trigger_matches(mode.trigger, node, x)) continue;
          double u = uniform_draw(seed, "mode:" + id + ":" + mode.mode_id);
          if (u < mode_prob[i]) {
            failure_message = replace_all(
                replace_all(mode.error_message, "{instance}", x.id), "{node}",
                id);
          }
        }
        if (failure_message.empty() && spec_.base_noise_rate > 0.0) {
          double u = uniform_draw(seed, "noise:" + id);
          if (u < spec_.base_noise_rate) {
            failure_message = "transient execution noise at step " + id;
          }
        }
      }
    }

    if (!failure_message.empty()) {
      failed = true;
      rec.status = StepStatus::Error;
      rec.error_message = failure_message;
      rec.output = kErrorPrefix + failure_message;
    } else {
      // Propagate the first upstream error verbatim; otherwise the step
      // "solves" its part and the correct answer flows through.
      rec.status = StepStatus::Ok;
      rec.output = x.ground_truth;
      for (const NodeId& p : ps) {
        const std::string& parent_out = trace.records[record_of.at(p)].output;
        if (is_error_output(parent_out)) {
          rec.output = parent_out;
          break;
        }
      }
    }

    record_of[id] = trace.records.size();
    trace.records.push_back(std::move(rec));
  }

  trace.final_output = trace.records[record_of.at(w.exit())].output;
  trace.success = verify(trace.final_output, x.ground_truth);
  return trace;
}

// ---------------------------------------------------------------------------
// RemoteExecutor

RemoteExecutor::RemoteExecutor(std::shared_ptr<LlmClient> client)
    : client_(std::move(client)) {
  if (!client_) {
    fail(ErrorCode::BackendUnavailable, "remote executor needs a client");
  }
}

Trace RemoteExecutor::execute(const WorkflowGraph& w, const DatasetInstance& x,
                              uint64_t seed) const {
  Trace trace;
  trace.instance_id = x.id;
  trace.seed = seed;

  std::unordered_map<NodeId, size_t> record_of;
  bool failed = false;
  for (const NodeId& id : w.topological_order()) {
    const Node& node = w.node(id);

    NodeRecord rec;
    rec.node_id = id;
    std::vector<NodeId> ps = w.parents(id);
    if (ps.empty()) {
      rec.input = x.input;
    } else {
      std::string joined;
      for (size_t i = 0; i < ps.size(); ++i) {
        if (i) joined += "\n";
        joined += trace.records[record_of.at(ps[i])].output;
      }
      rec.input = joined;
    }

    bool upstream_error = false;
    for (const NodeId& p : ps) {
      if (is_error_output(trace.records[record_of.at(p)].output)) {
        rec.output = trace.records[record_of.at(p)].output;
        upstream_error = true;
        break;
      }
    }

    if (!upstream_error) {
      std::string system = "You are workflow step '" + id + "' (" +
                           node_kind_name(node.kind) + ").";
      if (!node.prompt.empty()) system += " Instructions: " + node.prompt;
      ChatResult res = client_->chat(
          {{"system", system}, {"user", rec.input}});
      cost_.fetch_add(res.tokens, std::memory_order_relaxed);
      if (res.ok) {
        rec.status = StepStatus::Ok;
        rec.output = res.content;
      } else if (!failed) {
        failed = true;
        rec.status = StepStatus::Error;
        rec.error_message = "backend: " + res.error;
        rec.output = kErrorPrefix + rec.error_message;
      } else {
        rec.status = StepStatus::Ok;
        rec.output = std::string(kErrorPrefix) + "backend: " + res.error;
      }
    } else {
      rec.status = StepStatus::Ok;
    }

    record_of[id] = trace.records.size();
    trace.records.push_back(std::move(rec));
  }

  trace.final_output = trace.records[record_of.at(w.exit())].output;
  trace.success = verify(trace.final_output, x.ground_truth);
  return trace;
}

// ---------------------------------------------------------------------------
// run_dataset

uint64_t instance_seed(uint64_t run_seed, const std::string& instance_id) {
  return mix_seed(run_seed, "instance:" + instance_id);
}

DatasetRunResult run_dataset(const WorkflowGraph& w,
                             const std::vector<DatasetInstance>& instances,
                             const Executor& executor, uint64_t seed,
                             const VerifyOptions& verify_options) {
  DatasetRunResult result;
  result.total = instances.size();
  if (instances.empty()) {
    fail(ErrorCode::EmptyDataset, "run_dataset over no instances");
  }
  size_t successes = 0;
  for (const DatasetInstance& x : instances) {
    Trace t = executor.execute(w, x, instance_seed(seed, x.id));
    t.success = verify(t.final_output, x.ground_truth, verify_options);
    if (t.success) {
      ++successes;
    } else {
      result.failures.push_back(std::move(t));
    }
  }
  result.success_rate =
      static_cast<double>(successes) / static_cast<double>(instances.size());
  return result;
}

}  // namespace wfopt
