// Candidate proposal and Monte-Carlo verification: prompt template bytes,
// edit-text parsing, the rule-based and reply-driven proposers, utility
// estimation against a replay oracle and binomial statistics, and the
// argmax selection rule.

#include <algorithm>
#include <cmath>
#include <memory>
#include <set>
#include <string>
#include <vector>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "test_util.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/propose_verify.hpp"
#include "wfopt/rng.hpp"

using namespace wfopt;
using wfopt_test::make_dataset;
using wfopt_test::make_pipeline;
using wfopt_test::make_world;

namespace {

// Canned-reply chat client that records what it was asked.
class ScriptedClient final : public LlmClient {
 public:
  explicit ScriptedClient(ChatResult reply) : reply_(std::move(reply)) {}
  ChatResult chat(const std::vector<ChatMessage>& messages) override {
    last_messages = messages;
    ++calls;
    return reply_;
  }
  std::vector<ChatMessage> last_messages;
  int calls = 0;

 private:
  ChatResult reply_;
};

std::shared_ptr<ScriptedClient> scripted(const std::string& content,
                                         bool ok = true) {
  ChatResult r;
  r.ok = ok;
  r.content = content;
  if (!ok) r.error = "http 500";
  return std::make_shared<ScriptedClient>(r);
}

ModeSelection mode_at(const std::string& node,
                      std::vector<std::string> tokens) {
  ModeSelection m;
  m.modal_node = node;
  m.top_tokens = std::move(tokens);
  m.summary = "node=" + node + "; top_tokens=factorization; size=4";
  return m;
}

std::vector<std::string> names_of(const CandidateSet& set) {
  std::vector<std::string> out;
  for (const Edit& e : set.candidates) out.push_back(e.display());
  return out;
}

// Every execution reports a backend-style failure; used to show estimation
// treats backend errors as failed samples rather than aborting.
class BrokenBackend final : public Executor {
 public:
  Trace execute(const WorkflowGraph& w, const DatasetInstance& x,
                uint64_t seed) const override {
    Trace t;
    t.instance_id = x.id;
    t.seed = seed;
    for (const NodeId& id : w.topological_order()) {
      NodeRecord r;
      r.node_id = id;
      r.status = StepStatus::Error;
      r.error_message = "backend: connection reset";
      r.output = "error: backend: connection reset";
      t.records.push_back(r);
    }
    t.final_output = "error: backend: connection reset";
    t.success = false;
    return t;
  }
  uint64_t cost_units() const override { return 0; }
  std::string backend_name() const override { return "broken"; }
};

std::vector<DatasetInstance> tagged(const std::vector<DatasetInstance>& all,
                                    const std::string& tag) {
  std::vector<DatasetInstance> out;
  for (const auto& x : all) {
    if (x.input.find(tag) != std::string::npos) out.push_back(x);
  }
  return out;
}

}  // namespace

TEST_CASE("proposer_prompt: exact template with both slots substituted") {
  std::string got = proposer_prompt("SUMMARY_TEXT", "LIBRARY_TEXT");
  std::string want =
      "You are a workflow refinement expert.\n"
      "Failure mode summary: SUMMARY_TEXT.\n"
      "Operator library: LIBRARY_TEXT.\n"
      "\n"
      "Propose N=5 diverse graph edits using only these operators.\n"
      "Output as a list of JSON objects: [{\"edit\": \"OperatorName(arg1, "
      "arg2)\", \"explanation\": \"brief_reason\"}].";
  CHECK(got == want);
}

TEST_CASE("parse_edit_text: shapes and errors") {
  Edit e = parse_edit_text("RevisePrompt(solve, \"Check the sum.\")");
  CHECK(e.operator_name == "RevisePrompt");
  CHECK(e.args == std::vector<std::string>{"solve", "Check the sum."});

  // Commas inside quotes do not split.
  e = parse_edit_text("RevisePrompt(b, \"First, think. Then, answer.\")");
  CHECK(e.args == std::vector<std::string>{"b", "First, think. Then, answer."});

  // Nested parentheses stay inside one argument.
  e = parse_edit_text("Foo(bar(1,2), x)");
  CHECK(e.args == std::vector<std::string>{"bar(1,2)", "x"});

  // Single quotes strip like double quotes; whitespace trims.
  e = parse_edit_text("AddBranch( a ,  b , 'Aggregate' )");
  CHECK(e.args == std::vector<std::string>{"a", "b", "Aggregate"});

  // Zero-argument form.
  e = parse_edit_text("Noop()");
  CHECK(e.operator_name == "Noop");
  CHECK(e.args.empty());

  CHECK_THROWS_AS(parse_edit_text("RevisePrompt"), Error);
  CHECK_THROWS_AS(parse_edit_text("RevisePrompt(a, b"), Error);
  CHECK_THROWS_AS(parse_edit_text("(a, b)"), Error);
}

TEST_CASE("rule-based proposer: prompt-step mode yields revise + verifier") {
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  ModeSelection mode = mode_at("solve", {"factorization"});

  RuleBasedProposer proposer;
  CandidateSet set = proposer.propose(mode, w, ops, 5, 42);

  REQUIRE(!set.candidates.empty());
  CHECK(set.candidates[0].is_identity());
  size_t identity_count = 0;
  for (const Edit& e : set.candidates) {
    if (e.is_identity()) ++identity_count;
  }
  CHECK(identity_count == 1);
  CHECK(set.mode_summary == mode.summary);

  // The modal node's prompt is revised around the top token.
  bool has_revise = false, has_verifier = false;
  for (const Edit& e : set.candidates) {
    if (e.operator_name == "RevisePrompt") {
      has_revise = true;
      CHECK(e.args ==
            std::vector<std::string>{
                "solve",
                "Solve the task. Double-check the factorization before "
                "continuing."});
    }
    if (e.operator_name == "AddVerifierNode" && e.args[0] == "solve") {
      has_verifier = true;
      // Applying it splices a verification step directly after the node.
      WorkflowGraph next = apply_edit(w, e, ops);
      bool verify_child = false;
      for (const NodeId& child : next.children("solve")) {
        if (next.node(child).kind == NodeKind::VerifyStep) verify_child = true;
      }
      CHECK(verify_child);
    }
  }
  CHECK(has_revise);
  CHECK(has_verifier);

  // Every proposal is applicable and tagged with its proposer.
  for (const Edit& e : set.candidates) {
    CHECK_NOTHROW(apply_edit(w, e, ops));
    if (!e.is_identity()) CHECK(e.provenance.proposer_id == "rule_based");
  }

  // Deterministic: same mode and seed give the identical list.
  CHECK(names_of(proposer.propose(mode, w, ops, 5, 42)) == names_of(set));
}

TEST_CASE("rule-based proposer: tool-call mode, truncation, missing node") {
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  RuleBasedProposer proposer;

  SUBCASE("tool-call modal node gets an exception handler") {
    CandidateSet set = proposer.propose(mode_at("tool", {}), w, ops, 5, 1);
    bool has_handler = false, has_guard = false;
    for (const Edit& e : set.candidates) {
      if (e.operator_name == "AddExceptionHandler") {
        has_handler = true;
        CHECK(e.args == std::vector<std::string>{"tool", "RuntimeError"});
      }
      if (e.operator_name == "InsertPreconditionCheck") {
        has_guard = true;
        // No top token: the generic "result" placeholder is used, and the
        // guard lands on the first incoming edge.
        CHECK(e.args == std::vector<std::string>{"solve", "tool",
                                                 "input mentions result"});
      }
    }
    CHECK(has_handler);
    CHECK(has_guard);
  }

  SUBCASE("budget truncates the proposals, never the identity") {
    CandidateSet set = proposer.propose(mode_at("solve", {"sum"}), w, ops, 2, 1);
    CHECK(set.candidates.size() <= 3);  // identity + at most n
    CHECK(set.candidates[0].is_identity());
  }

  SUBCASE("modal node absent from the graph degrades to identity only") {
    CandidateSet set = proposer.propose(mode_at("ghost", {"x"}), w, ops, 5, 1);
    REQUIRE(set.candidates.size() == 1);
    CHECK(set.candidates[0].is_identity());
  }

  SUBCASE("empty modal node degrades to identity only") {
    ModeSelection empty;
    CandidateSet set = proposer.propose(empty, w, ops, 5, 1);
    REQUIRE(set.candidates.size() == 1);
    CHECK(set.candidates[0].is_identity());
  }
}

TEST_CASE("reply-driven proposer: parses, filters, and degrades") {
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  ModeSelection mode = mode_at("solve", {"sum"});

  SUBCASE("well-formed reply: valid edits kept, invalid dropped") {
    auto client = scripted(
        "[{\"edit\": \"RevisePrompt(solve, \\\"Recheck the sum.\\\")\","
        " \"explanation\": \"focus\"},"
        " {\"edit\": \"DeleteNode(ghost)\", \"explanation\": \"bad node\"},"
        " {\"edit\": \"Bogus(solve)\", \"explanation\": \"bad operator\"},"
        " {\"edit\": \"RevisePrompt(solve, \\\"Recheck the sum.\\\")\","
        " \"explanation\": \"duplicate\"},"
        " {\"edit\": 7}, \"not an object\", {\"note\": \"no edit key\"},"
        " {\"edit\": \"not parseable\", \"explanation\": \"syntax\"}]");
    LlmProposer proposer(client);
    CandidateSet set = proposer.propose(mode, w, ops, 5, 9);

    REQUIRE(set.candidates.size() == 2);
    CHECK(set.candidates[0].is_identity());
    CHECK(set.candidates[1].operator_name == "RevisePrompt");
    CHECK(set.candidates[1].args ==
          std::vector<std::string>{"solve", "Recheck the sum."});
    CHECK(set.candidates[1].provenance.proposer_id == "llm");

    // The request carried exactly the filled template as one user message.
    REQUIRE(client->last_messages.size() == 1);
    CHECK(client->last_messages[0].role == "user");
    CHECK(client->last_messages[0].content ==
          proposer_prompt(mode.summary, ops.library_definition()));
  }

  SUBCASE("non-JSON reply degrades to the identity-only set") {
    LlmProposer proposer(scripted("I would suggest revising the prompt."));
    CandidateSet set = proposer.propose(mode, w, ops, 5, 9);
    REQUIRE(set.candidates.size() == 1);
    CHECK(set.candidates[0].is_identity());
  }

  SUBCASE("transport failure degrades to the identity-only set") {
    LlmProposer proposer(scripted("", /*ok=*/false));
    CandidateSet set = proposer.propose(mode, w, ops, 5, 9);
    REQUIRE(set.candidates.size() == 1);
    CHECK(set.candidates[0].is_identity());
  }

  SUBCASE("reply longer than the budget is truncated") {
    std::string reply = "[";
    for (int i = 0; i < 8; ++i) {
      if (i) reply += ",";
      reply += "{\"edit\": \"RevisePrompt(solve, \\\"Variant " +
               std::to_string(i) + ".\\\")\", \"explanation\": \"v\"}";
    }
    reply += "]";
    LlmProposer proposer(scripted(reply));
    CandidateSet set = proposer.propose(mode, w, ops, 3, 9);
    CHECK(set.candidates.size() == 4);  // identity + 3
  }

  SUBCASE("null client is rejected at construction") {
    CHECK_THROWS_AS(LlmProposer(nullptr), Error);
  }
}

TEST_CASE("estimate_utility: forced outcomes on a deterministic world") {
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  SimExecutor executor(make_world());
  std::vector<DatasetInstance> members = tagged(make_dataset(100), "tagA");
  REQUIRE(members.size() == 30);

  // The planted mode fires with probability 1, so the unedited workflow
  // fails every sampled instance.
  UtilityEstimate base =
      estimate_utility(w, Edit::identity(), members, 10, executor, ops, 3);
  CHECK(base.value == 0.0);
  CHECK(base.samples_used == 10);
  CHECK(base.outcomes == std::vector<bool>(10, false));

  // A prompt revision that satisfies the repair predicate neutralizes the
  // mode outright.
  Edit fix;
  fix.operator_name = "RevisePrompt";
  fix.args = {"solve", "Solve the task. Double-check the result."};
  UtilityEstimate fixed =
      estimate_utility(w, fix, members, 10, executor, ops, 3);
  CHECK(fixed.value == 1.0);
  CHECK(fixed.outcomes == std::vector<bool>(10, true));

  // Common random numbers: equal seeds draw the identical sample.
  CHECK(base.sample_instance_ids == fixed.sample_instance_ids);

  SUBCASE("per-sample replay oracle reproduces ids, outcomes, and V") {
    uint64_t seed = 77;
    UtilityEstimate est =
        estimate_utility(w, fix, members, 10, executor, ops, seed);

    Rng rng(mix_seed(seed, "verify_sample"));
    std::vector<size_t> picks =
        sample_without_replacement(members.size(), 10, rng);
    WorkflowGraph edited = apply_edit(w, fix, ops);
    size_t repaired = 0;
    for (size_t i = 0; i < picks.size(); ++i) {
      const DatasetInstance& x = members[picks[i]];
      CHECK(est.sample_instance_ids[i] == x.id);
      Trace t =
          executor.execute(edited, x, mix_seed(seed, "verify_exec:" + x.id));
      bool ok = verify(t.final_output, x.ground_truth);
      CHECK(est.outcomes[i] == ok);
      if (ok) ++repaired;
    }
    CHECK(est.value == static_cast<double>(repaired) / 10.0);
  }

  SUBCASE("small member pools cap the sample without replacement") {
    std::vector<DatasetInstance> three(members.begin(), members.begin() + 3);
    UtilityEstimate est =
        estimate_utility(w, Edit::identity(), three, 10, executor, ops, 5);
    CHECK(est.samples_used == 3);
    std::set<std::string> distinct(est.sample_instance_ids.begin(),
                                   est.sample_instance_ids.end());
    CHECK(distinct.size() == 3);
  }

  SUBCASE("empty members and zero budget are rejected") {
    CHECK_THROWS_AS(
        estimate_utility(w, Edit::identity(), {}, 10, executor, ops, 1),
        Error);
    CHECK_THROWS_AS(
        estimate_utility(w, Edit::identity(), members, 0, executor, ops, 1),
        Error);
  }

  SUBCASE("backend failures count as failed samples, never abort") {
    BrokenBackend broken;
    UtilityEstimate est =
        estimate_utility(w, Edit::identity(), members, 10, broken, ops, 5);
    CHECK(est.value == 0.0);
    CHECK(est.outcomes == std::vector<bool>(10, false));
  }
}

TEST_CASE("estimate_utility: binomial statistics at true repair rate 0.8") {
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  SimWorldSpec world = make_world();
  world.repairs[0].residual_failure_probability = 0.2;
  SimExecutor executor(world);
  std::vector<DatasetInstance> members = tagged(make_dataset(100), "tagA");

  Edit fix;
  fix.operator_name = "RevisePrompt";
  fix.args = {"solve", "Solve the task. Double-check the result."};

  const size_t reps = 1000;
  const size_t k = 10;
  double sum = 0.0, sum_sq = 0.0;
  for (size_t r = 0; r < reps; ++r) {
    UtilityEstimate est = estimate_utility(w, fix, members, k, executor, ops,
                                           mix_seed(777, "rep", r));
    // V is an exact count ratio.
    double scaled = est.value * static_cast<double>(est.samples_used);
    CHECK(scaled == doctest::Approx(std::round(scaled)).epsilon(1e-12));
    sum += est.value;
    sum_sq += est.value * est.value;
  }
  double mean = sum / static_cast<double>(reps);
  double var = sum_sq / static_cast<double>(reps) - mean * mean;

  // Mean within 3 standard errors of the true rate; variance near p(1-p)/K.
  double se = std::sqrt(0.8 * 0.2 / static_cast<double>(k) /
                        static_cast<double>(reps));
  CHECK(std::abs(mean - 0.8) <= 3.0 * se);
  CHECK(var <= 0.8 * 0.2 / static_cast<double>(k) + 0.005);
}

TEST_CASE("select_edit: argmax with identity-preferring ties") {
  std::vector<Edit> candidates;
  candidates.push_back(Edit::identity());
  Edit a;
  a.operator_name = "RevisePrompt";
  a.args = {"solve", "A"};
  Edit b;
  b.operator_name = "RevisePrompt";
  b.args = {"solve", "B"};
  candidates.push_back(a);
  candidates.push_back(b);

  // Tied non-identity maxima: the first of them wins.
  CHECK(select_edit({0.2, 0.9, 0.9}, candidates) == 1);
  // Nothing beats the no-op: the identity keeps the slot.
  CHECK(select_edit({0.5, 0.3, 0.4}, candidates) == 0);
  // Identity ties the best proposal: safeguard prefers identity.
  CHECK(select_edit({0.9, 0.9, 0.3}, candidates) == 0);

  SUBCASE("identity wins ties from any slot") {
    std::vector<Edit> shuffled = {a, Edit::identity(), b};
    CHECK(select_edit({0.5, 0.5, 0.5}, shuffled) == 1);
    CHECK(select_edit({0.6, 0.5, 0.6}, shuffled) == 0);  // identity not maximal
  }

  SUBCASE("size mismatch and empty input are rejected") {
    CHECK_THROWS_AS(select_edit({0.5}, candidates), Error);
    CHECK_THROWS_AS(select_edit({}, {}), Error);
  }

  SUBCASE("random vectors agree with an exhaustive scan oracle") {
    Rng rng(15);
    for (int trial = 0; trial < 100; ++trial) {
      size_t n = 2 + rng.uniform_index(6);
      std::vector<Edit> cands;
      cands.push_back(Edit::identity());
      for (size_t i = 1; i < n; ++i) cands.push_back(a);
      std::vector<double> util;
      for (size_t i = 0; i < n; ++i) {
        util.push_back(static_cast<double>(rng.uniform_index(5)) / 4.0);
      }
      size_t got = select_edit(util, cands);

      double best = *std::max_element(util.begin(), util.end());
      size_t want = 0;  // identity (index 0) takes precedence on ties
      if (util[0] != best) {
        for (size_t i = 1; i < n; ++i) {
          if (util[i] == best) {
            want = i;
            break;
          }
        }
      }
      CHECK(got == want);
      CHECK(util[got] >= util[0]);  // never worse than the no-op
    }
  }
}
