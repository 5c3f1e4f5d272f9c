#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wfopt/execution.hpp"
#include "wfopt/gmm.hpp"
#include "wfopt/llm_client.hpp"
#include "wfopt/operators.hpp"

namespace wfopt {

// Candidate edits for one mode; the identity edit is always present, exactly
// once, at index 0, and every non-identity candidate is applicable to the
// workflow it was proposed for.
struct CandidateSet {
  std::vector<Edit> candidates;
  std::string mode_summary;
};

class Proposer {
 public:
  virtual ~Proposer() = default;
  virtual CandidateSet propose(const ModeSelection& mode,
                               const WorkflowGraph& w,
                               const OperatorRegistry& ops, size_t n,
                               uint64_t seed) const = 0;
  virtual std::string name() const = 0;
};

// Maps mode-summary features to edits directly: revise the modal node's
// prompt around the top token, guard the modal node with a verifier, wrap
// ToolCalls with a handler, precondition-check the incoming edge, and (last)
// delete the node. Deterministic for a fixed seed.
class RuleBasedProposer final : public Proposer {
 public:
  CandidateSet propose(const ModeSelection& mode, const WorkflowGraph& w,
                       const OperatorRegistry& ops, size_t n,
                       uint64_t seed) const override;
  std::string name() const override { return "rule_based"; }
};

// Fills the proposer prompt template, parses the JSON reply list, and drops
// edits that do not name a known operator or do not apply to w.
class LlmProposer final : public Proposer {
 public:
  explicit LlmProposer(std::shared_ptr<LlmClient> client);
  CandidateSet propose(const ModeSelection& mode, const WorkflowGraph& w,
                       const OperatorRegistry& ops, size_t n,
                       uint64_t seed) const override;
  std::string name() const override { return "llm"; }

 private:
  std::shared_ptr<LlmClient> client_;
};

// The exact proposer instruction text with both template slots substituted.
std::string proposer_prompt(const std::string& mode_summary,
                            const std::string& operator_library);

// Parses "OperatorName(arg1, arg2)" into an Edit (args split on top-level
// commas, trimmed, surrounding quotes stripped). Throws MalformedArgs.
Edit parse_edit_text(const std::string& text);

// Monte Carlo repair utility V(delta) = repaired / K_used over
// K_used = min(K, |members|) instances sampled without replacement.
struct UtilityEstimate {
  double value = 0.0;
  size_t samples_used = 0;
  std::vector<std::string> sample_instance_ids;  // draw order
  std::vector<bool> outcomes;                    // per sample, repaired?
};

// Verification samples are drawn from (members, K, seed) alone, so candidates
// estimated with the same seed share the same sample (common random numbers).
UtilityEstimate estimate_utility(const WorkflowGraph& w, const Edit& delta,
                                 const std::vector<DatasetInstance>& members,
                                 size_t k, const Executor& executor,
                                 const OperatorRegistry& ops, uint64_t seed,
                                 const VerifyOptions& verify_options = {});

// Argmax utility; ties prefer identity, then the lowest index.
size_t select_edit(const std::vector<double>& utilities,
                   const std::vector<Edit>& candidates);

}  // namespace wfopt
