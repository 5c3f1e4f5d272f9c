#include "wfopt/propose_verify.hpp"

#include <algorithm>

#include "json.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

namespace {

// Deduplicates while keeping first occurrence; identity lands at index 0.
CandidateSet assemble(std::vector<Edit> raw, const WorkflowGraph& w,
                      const OperatorRegistry& ops, size_t n,
                      const std::string& summary) {
  CandidateSet set;
  set.mode_summary = summary;
  set.candidates.push_back(Edit::identity());
  for (Edit& e : raw) {
    if (set.candidates.size() > n) break;  // identity + at most n proposals
    if (e.is_identity()) continue;
    bool dup = false;
    for (const Edit& seen : set.candidates) {
      if (seen == e) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    const Operator* op = ops.find(e.operator_name);
    if (op == nullptr || !op->applicable(w, e.args)) continue;
    set.candidates.push_back(std::move(e));
  }
  return set;
}

}  // namespace

CandidateSet RuleBasedProposer::propose(const ModeSelection& mode,
                                        const WorkflowGraph& w,
                                        const OperatorRegistry& ops, size_t n,
                                        uint64_t seed) const {
  (void)seed;  // the mapping is already deterministic
  std::vector<Edit> raw;
  const NodeId& target = mode.modal_node;
  if (!target.empty() && w.has_node(target)) {
    const Node& node = w.node(target);
    std::string top = mode.top_tokens.empty() ? "result" : mode.top_tokens[0];

    if (node.kind == NodeKind::PromptStep) {
      Edit e;
      e.operator_name = "RevisePrompt";
      e.args = {target,
                node.prompt + " Double-check the " + top + " before continuing."};
      raw.push_back(std::move(e));
    }
    {
      Edit e;
      e.operator_name = "AddVerifierNode";
      e.args = {target};
      raw.push_back(std::move(e));
    }
    if (node.kind == NodeKind::ToolCall) {
      Edit e;
      e.operator_name = "AddExceptionHandler";
      e.args = {target, "RuntimeError"};
      raw.push_back(std::move(e));
    }
    for (const NodeId& parent : w.parents(target)) {
      Edit e;
      e.operator_name = "InsertPreconditionCheck";
      e.args = {parent, target, "input mentions " + top};
      raw.push_back(std::move(e));
      break;  // one guard on the first incoming edge is enough
    }
    {
      Edit e;
      e.operator_name = "DeleteNode";
      e.args = {target};
      raw.push_back(std::move(e));
    }
  }
  for (Edit& e : raw) e.provenance.proposer_id = name();
  return assemble(std::move(raw), w, ops, n, mode.summary);
}

std::string proposer_prompt(const std::string& mode_summary,
                            const std::string& operator_library) {
  static const std::string kTemplate =
      "You are a workflow refinement expert.\n"
      "Failure mode summary: [FAILURE_MODE_SUMMARY].\n"
      "Operator library: [OPERATOR_LIBRARY_DEFINITION].\n"
      "\n"
      "Propose N=5 diverse graph edits using only these operators.\n"
      "Output as a list of JSON objects: [{\"edit\": \"OperatorName(arg1, "
      "arg2)\", \"explanation\": \"brief_reason\"}].";
  std::string prompt = kTemplate;
  size_t slot = prompt.find("[FAILURE_MODE_SUMMARY]");
  prompt.replace(slot, 22, mode_summary);
  slot = prompt.find("[OPERATOR_LIBRARY_DEFINITION]");
  prompt.replace(slot, 29, operator_library);
  return prompt;
}

Edit parse_edit_text(const std::string& text) {
  size_t open = text.find('(');
  if (open == std::string::npos || text.back() != ')') {
    fail(ErrorCode::MalformedArgs, "edit text is not OperatorName(...)");
  }
  Edit e;
  e.operator_name = text.substr(0, open);
  if (e.operator_name.empty()) {
    fail(ErrorCode::MalformedArgs, "edit text has no operator name");
  }
  std::string body = text.substr(open + 1, text.size() - open - 2);

  auto trim = [](std::string s) {
    size_t a = s.find_first_not_of(" \t");
    size_t b = s.find_last_not_of(" \t");
    if (a == std::string::npos) return std::string();
    s = s.substr(a, b - a + 1);
    if (s.size() >= 2 && ((s.front() == '"' && s.back() == '"') ||
                          (s.front() == '\'' && s.back() == '\''))) {
      s = s.substr(1, s.size() - 2);
    }
    return s;
  };

  // Split on commas outside quotes and parentheses.
  std::string cur;
  int depth = 0;
  char quote = 0;
  for (char c : body) {
    if (quote != 0) {
      if (c == quote) quote = 0;
      cur.push_back(c);
      continue;
    }
    if (c == '"' || c == '\'') {
      quote = c;
      cur.push_back(c);
    } else if (c == '(') {
      ++depth;
      cur.push_back(c);
    } else if (c == ')') {
      --depth;
      cur.push_back(c);
    } else if (c == ',' && depth == 0) {
      e.args.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  std::string last = trim(cur);
  if (!last.empty() || !e.args.empty()) e.args.push_back(last);
  return e;
}

LlmProposer::LlmProposer(std::shared_ptr<LlmClient> client)
    : client_(std::move(client)) {
  if (!client_) fail(ErrorCode::BackendUnavailable, "proposer needs a client");
}

CandidateSet LlmProposer::propose(const ModeSelection& mode,
                                  const WorkflowGraph& w,
                                  const OperatorRegistry& ops, size_t n,
                                  uint64_t seed) const {
  (void)seed;
  std::vector<Edit> raw;
  ChatResult res = client_->chat(
      {{"user", proposer_prompt(mode.summary, ops.library_definition())}});
  if (res.ok) {
    try {
      nlohmann::json doc = nlohmann::json::parse(res.content);
      if (doc.is_array()) {
        for (const auto& item : doc) {
          if (!item.is_object() || !item.contains("edit") ||
              !item["edit"].is_string()) {
            continue;
          }
          try {
            Edit e = parse_edit_text(item["edit"].get<std::string>());
            e.provenance.proposer_id = name();
            raw.push_back(std::move(e));
          } catch (const Error&) {
            // Unparseable edit text: drop the candidate.
          }
        }
      }
    } catch (const nlohmann::json::exception&) {
      // Non-JSON reply: the set degrades to {identity}.
    }
  }
  return assemble(std::move(raw), w, ops, n, mode.summary);
}

UtilityEstimate estimate_utility(const WorkflowGraph& w, const Edit& delta,
                                 const std::vector<DatasetInstance>& members,
                                 size_t k, const Executor& executor,
                                 const OperatorRegistry& ops, uint64_t seed,
                                 const VerifyOptions& verify_options) {
  if (members.empty()) {
    fail(ErrorCode::InsufficientData, "no mode members to verify against");
  }
  if (k == 0) fail(ErrorCode::MalformedArgs, "verification budget K = 0");

  WorkflowGraph candidate = apply_edit(w, delta, ops);

  // The draw depends only on (members, K, seed): candidates verified with
  // the same seed see the same instances (common random numbers).
  size_t k_used = std::min(k, members.size());
  Rng rng(mix_seed(seed, "verify_sample"));
  std::vector<size_t> picks =
      sample_without_replacement(members.size(), k_used, rng);

  UtilityEstimate est;
  est.samples_used = k_used;
  size_t repaired = 0;
  for (size_t pick : picks) {
    const DatasetInstance& x = members[pick];
    est.sample_instance_ids.push_back(x.id);
    uint64_t sample_seed = mix_seed(seed, "verify_exec:" + x.id);
    Trace t = executor.execute(candidate, x, sample_seed);
    bool ok = verify(t.final_output, x.ground_truth, verify_options);
    est.outcomes.push_back(ok);
    if (ok) ++repaired;
  }
  est.value = static_cast<double>(repaired) / static_cast<double>(k_used);
  return est;
}

size_t select_edit(const std::vector<double>& utilities,
                   const std::vector<Edit>& candidates) {
  if (utilities.size() != candidates.size() || candidates.empty()) {
    fail(ErrorCode::DimensionMismatch, "utilities/candidates mismatch");
  }
  size_t best = 0;
  for (size_t i = 1; i < candidates.size(); ++i) {
    bool better = utilities[i] > utilities[best];
    bool tie = utilities[i] == utilities[best];
    bool best_is_identity = candidates[best].is_identity();
    // On a tie the identity keeps the slot; among non-identity candidates
    // the lowest index wins.
    if (better || (tie && candidates[i].is_identity() && !best_is_identity)) {
      best = i;
    }
  }
  return best;
}

}  // namespace wfopt
