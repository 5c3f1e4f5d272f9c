#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "wfopt/dataset.hpp"
#include "wfopt/diagnosis.hpp"
#include "wfopt/execution.hpp"
#include "wfopt/gmm.hpp"
#include "wfopt/graph.hpp"
#include "wfopt/propose_verify.hpp"
#include "wfopt/signature.hpp"

namespace wfopt {

struct Hyperparams {
  size_t n_candidates = 5;            // N: proposals per mode
  size_t k_samples = 10;              // K: verification samples per candidate
  size_t convergence_window = 5;      // k: trailing scores examined
  double convergence_tolerance = 0.01;  // epsilon: variance threshold
  size_t max_rounds = 20;             // T_max
  size_t embedding_dim = 64;          // d
  uint64_t embedder_salt = 0;
  size_t gmm_k_min = 1;
  size_t gmm_k_max = 10;
  double confidence_floor = kDefaultConfidenceFloor;
  double struct_weight = 1.0;
  bool stopping_enabled = true;
  uint64_t master_seed = 0;

  void validate() const;
};

struct PoolEntry {
  std::string instance_id;
  Trace trace;
  DiagnosisOutcome diagnosis;
};

void write_pool_jsonl(const std::vector<PoolEntry>& pool,
                      const std::filesystem::path& path);
std::vector<PoolEntry> load_pool_jsonl(const std::filesystem::path& path);

struct RoundRecord {
  size_t round = 0;  // 1-based
  std::string mode_summary;
  Edit chosen_edit;
  double chosen_utility = 0.0;
  size_t verification_samples = 0;  // 0 when verification was skipped
  size_t pool_size = 0;
  size_t undiagnosable_count = 0;
  size_t signature_count = 0;
  size_t k_fit = 0;  // 0 when clustering was skipped
  double gmm_loglik = 0.0;
  double gmm_bic = 0.0;
  double silhouette = 0.0;      // NaN when undefined
  double davies_bouldin = 0.0;  // NaN when undefined
  double mode_soft_mass = 0.0;
  double validation_score = 0.0;
  double e0_accuracy = 0.0;
  uint64_t e0_hash = 0;  // constant across the run
  uint64_t cost_units = 0;  // cumulative at end of round
};

struct OptimizationState {
  WorkflowGraph workflow;
  size_t rounds_completed = 0;
  std::vector<double> validation_scores;  // score history, one per round
  std::vector<std::string> e0_ids;        // frozen after round 0
  std::vector<double> e0_trajectory;      // baseline + one entry per round
  std::vector<RoundRecord> history;
  std::string stop_reason;  // "no_failures" | "converged" | "max_rounds"
  uint64_t cost_units = 0;
  double final_train_score = 0.0;
  double final_validation_score = 0.0;
  double final_test_score = 0.0;
  // Signature set and registry from the last round that produced one, for
  // export.
  std::vector<FailureSignature> signatures;
  StructuralRegistry registry;
  GaussianMixture model;  // last fitted mixture (k_fit 0 if none)
};

// Test and CLI instrumentation.
struct OptimizerHooks {
  // Replaces the validation-split evaluation when set (round is 1-based).
  std::function<double(const WorkflowGraph&, size_t round)> validation_override;
  std::function<void(const RoundRecord&)> on_round;
  // When set, each round's pool is persisted to pool_dir/round_<t>.jsonl.
  std::filesystem::path pool_dir;
};

// True when at least `window` scores exist and the population variance of
// the trailing `window` of them is strictly below `tolerance`.
bool converged(const std::vector<double>& scores, size_t window,
               double tolerance);

// Fraction of the frozen instance list that now succeeds. Seeds derive from
// (seed, instance id) only, so the trajectory isolates workflow changes.
double eval_fixed_set(const WorkflowGraph& w,
                      const std::vector<std::string>& e0_ids,
                      const std::vector<DatasetInstance>& dataset,
                      const Executor& executor, uint64_t seed,
                      const VerifyOptions& verify_options = {});

// Executes the train split and attaches a diagnosis to every failure. The
// pool is rebuilt from scratch; nothing carries over between rounds.
std::vector<PoolEntry> populate_pool(const WorkflowGraph& w,
                                     const std::vector<DatasetInstance>& train,
                                     const Executor& executor,
                                     const Diagnoser& diagnoser,
                                     double confidence_floor, uint64_t seed,
                                     const VerifyOptions& verify_options = {});

// The full refinement loop: populate -> diagnose -> embed -> cluster ->
// propose -> verify -> apply, until the pool empties, the validation-score
// window converges (if enabled), or max_rounds is reached.
OptimizationState optimize(const WorkflowGraph& w0,
                           const std::vector<DatasetInstance>& dataset,
                           const Hyperparams& hp, const Executor& executor,
                           const Diagnoser& diagnoser, const Proposer& proposer,
                           const OperatorRegistry& ops,
                           const OptimizerHooks& hooks = {},
                           const VerifyOptions& verify_options = {});

}  // namespace wfopt
