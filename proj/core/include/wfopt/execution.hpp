#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "wfopt/dataset.hpp"
#include "wfopt/graph.hpp"
#include "wfopt/llm_client.hpp"

namespace wfopt {

enum class StepStatus { Ok, Error };

struct NodeRecord {
  NodeId node_id;
  std::string input;
  std::string output;
  StepStatus status = StepStatus::Ok;
  std::string error_message;  // non-empty iff status == Error
};

// Full record of one workflow execution. Exactly the first failing node (if
// any) carries status Error; the error text propagates through downstream
// outputs so the trace reads like a real cascading failure.
struct Trace {
  std::string instance_id;
  std::vector<NodeRecord> records;  // topological order, every node covered
  std::string final_output;
  bool success = false;
  uint64_t seed = 0;

  std::string to_json_string() const;
  static Trace from_json_string(const std::string& text);
};

struct VerifyOptions {
  // When set, outputs that parse as numbers compare within tolerance
  // instead of textually.
  bool numeric = false;
  double numeric_tolerance = 1e-9;
};

// Exact match after trimming, lowercasing, and collapsing internal
// whitespace, with the optional numeric extension above.
bool verify(const std::string& output, const std::string& ground_truth,
            const VerifyOptions& options = {});

// ---------------------------------------------------------------------------
// Simulated world

// Predicate selecting (node, instance) pairs a mode fires on. Empty fields
// are wildcards; set fields must all match.
struct ModeTrigger {
  std::string node_id;
  std::string node_kind;        // "PromptStep" etc.
  std::string prompt_contains;  // substring of the node prompt
  std::string input_contains;   // substring of the instance input
};

struct PlantedMode {
  std::string mode_id;
  ModeTrigger trigger;
  double failure_probability = 0.0;
  // May contain "{instance}" and "{node}" placeholders.
  std::string error_message;
};

// Predicate over the *graph* deciding whether a repair is in place. Set
// fields are ANDed. With node_absent the rule matches when node_id is gone;
// otherwise node_id must exist.
struct RepairCondition {
  std::string node_id;
  std::string prompt_contains;   // substring of that node's prompt
  std::string successor_kind;    // some direct child has this kind
  std::string param_key;         // node params contain this key
  bool node_absent = false;
};

struct RepairRule {
  std::vector<std::string> neutralizes;  // mode ids
  RepairCondition when;
  // Failure probability the neutralized mode keeps (0 = fully repaired).
  double residual_failure_probability = 0.0;
};

struct SimWorldSpec {
  double base_noise_rate = 0.0;
  std::vector<PlantedMode> modes;
  std::vector<RepairRule> repairs;
  // Deleting any of these ids breaks the workflow outright: every execution
  // fails at the entry step until the node is restored.
  std::vector<std::string> required_node_ids;

  void validate() const;
  std::string to_json_string(int indent = -1) const;
  static SimWorldSpec from_json_string(const std::string& text);
  static SimWorldSpec from_json_file(const std::filesystem::path& p);
};

// ---------------------------------------------------------------------------
// Executors

// Runs one instance through a workflow. Implementations must be
// deterministic in (graph, instance, seed) and safe for concurrent calls.
class Executor {
 public:
  virtual ~Executor() = default;
  virtual Trace execute(const WorkflowGraph& w, const DatasetInstance& x,
                        uint64_t seed) const = 0;
  // Cumulative cost units: 1 per simulated node execution, reported token
  // counts for remote calls.
  virtual uint64_t cost_units() const = 0;
  virtual std::string backend_name() const = 0;
};

class SimExecutor final : public Executor {
 public:
  explicit SimExecutor(SimWorldSpec spec);
  Trace execute(const WorkflowGraph& w, const DatasetInstance& x,
                uint64_t seed) const override;
  uint64_t cost_units() const override { return cost_.load(); }
  std::string backend_name() const override { return "simulated"; }
  const SimWorldSpec& world() const { return spec_; }

 private:
  SimWorldSpec spec_;
  mutable std::atomic<uint64_t> cost_{0};
};

// Executes each node as one chat completion over the wire. Backend failures
// (transport, status, malformed reply) surface as an error-status node whose
// message carries the "backend: " prefix; execution still completes the
// trace.
class RemoteExecutor final : public Executor {
 public:
  explicit RemoteExecutor(std::shared_ptr<LlmClient> client);
  Trace execute(const WorkflowGraph& w, const DatasetInstance& x,
                uint64_t seed) const override;
  uint64_t cost_units() const override { return cost_.load(); }
  std::string backend_name() const override { return "remote"; }

 private:
  std::shared_ptr<LlmClient> client_;
  mutable std::atomic<uint64_t> cost_{0};
};

// ---------------------------------------------------------------------------
// Batch runs

struct DatasetRunResult {
  double success_rate = 0.0;
  std::vector<Trace> failures;  // in instance order
  size_t total = 0;
};

// Seed for one instance within a run; depends only on (run_seed, id), so
// permuting instance order never changes a per-instance outcome.
uint64_t instance_seed(uint64_t run_seed, const std::string& instance_id);

DatasetRunResult run_dataset(const WorkflowGraph& w,
                             const std::vector<DatasetInstance>& instances,
                             const Executor& executor, uint64_t seed,
                             const VerifyOptions& verify_options = {});

}  // namespace wfopt
