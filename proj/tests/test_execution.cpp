// Execution harness: answer verification, trace structure, the simulated
// backend's failure/repair semantics, and batch runs.

#include <algorithm>
#include <cmath>
#include <set>
#include <string>
#include <vector>

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"
#include "test_util.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/execution.hpp"
#include "wfopt/operators.hpp"
#include "wfopt/rng.hpp"

using namespace wfopt;
using wfopt_test::make_dataset;
using wfopt_test::make_pipeline;
using wfopt_test::make_world;

namespace {

DatasetInstance make_instance(std::string id, std::string input,
                              std::string truth) {
  DatasetInstance x;
  x.id = std::move(id);
  x.input = std::move(input);
  x.ground_truth = std::move(truth);
  return x;
}

}  // namespace

TEST_CASE("verify: normalization rules") {
  CHECK(verify("  42 ", "42"));
  CHECK(!verify("43", "42"));
  CHECK(verify("The Answer", "the  answer"));
  CHECK(verify("a\tb\nc", "a b c"));
  CHECK(verify("", "   "));
  CHECK(!verify("", "x"));
}

TEST_CASE("verify: optional numeric tolerance") {
  VerifyOptions numeric;
  numeric.numeric = true;
  numeric.numeric_tolerance = 1e-6;
  CHECK(verify("0.5000000001", "0.5", numeric));
  CHECK(!verify("0.5000000001", "0.5"));  // textual by default
  CHECK(!verify("0.51", "0.5", numeric));
  CHECK(verify("hello", "HELLO", numeric));  // non-numeric falls back to text
  CHECK(!verify("12x", "12", numeric));      // trailing junk is not a number
}

TEST_CASE("trace JSON round trip") {
  Trace t;
  t.instance_id = "x0001";
  t.final_output = "error: boom";
  t.success = false;
  t.seed = 991;
  NodeRecord a{"read", "case", "fine", StepStatus::Ok, ""};
  NodeRecord b{"solve", "fine", "error: boom", StepStatus::Error, "boom"};
  t.records = {a, b};

  Trace back = Trace::from_json_string(t.to_json_string());
  CHECK(back.instance_id == t.instance_id);
  CHECK(back.final_output == t.final_output);
  CHECK(back.success == t.success);
  CHECK(back.seed == t.seed);
  REQUIRE(back.records.size() == 2);
  CHECK(back.records[1].node_id == "solve");
  CHECK(back.records[1].status == StepStatus::Error);
  CHECK(back.records[1].error_message == "boom");
  CHECK(back.to_json_string() == t.to_json_string());

  CHECK_THROWS_AS(Trace::from_json_string("{"), Error);
  CHECK_THROWS_AS(Trace::from_json_string("{\"instance_id\":1}"), Error);
}

TEST_CASE("sim world spec: JSON round trip and validation") {
  SimWorldSpec world = make_world(0.01);
  SimWorldSpec back = SimWorldSpec::from_json_string(world.to_json_string(2));
  CHECK(back.to_json_string(2) == world.to_json_string(2));
  CHECK(back.modes.size() == 3);
  CHECK(back.repairs.size() == 3);
  CHECK(back.required_node_ids.size() == 5);
  CHECK(back.base_noise_rate == doctest::Approx(0.01));

  SUBCASE("bad specs are rejected") {
    SimWorldSpec bad = make_world();
    bad.modes[0].failure_probability = 1.5;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = make_world();
    bad.modes[1].mode_id = bad.modes[0].mode_id;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = make_world();
    bad.repairs[0].neutralizes = {"no_such_mode"};
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = make_world();
    bad.modes[2].error_message.clear();
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = make_world();
    bad.base_noise_rate = -0.1;
    CHECK_THROWS_AS(bad.validate(), Error);

    bad = make_world();
    bad.repairs[0].residual_failure_probability = 2.0;
    CHECK_THROWS_AS(bad.validate(), Error);
  }
}

TEST_CASE("execute: clean world gives a successful covering trace") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{SimWorldSpec{}};
  DatasetInstance x = make_instance("i1", "case i1", "answer for i1");
  Trace t = ex.execute(w, x, 7);

  CHECK(t.success);
  CHECK(t.final_output == "answer for i1");
  CHECK(t.instance_id == "i1");
  CHECK(t.seed == 7);

  // Trace covers every node, in the library's own topological order.
  std::vector<NodeId> order = w.topological_order();
  REQUIRE(t.records.size() == order.size());
  for (size_t i = 0; i < order.size(); ++i) {
    CHECK(t.records[i].node_id == order[i]);
    CHECK(t.records[i].status == StepStatus::Ok);
    CHECK(t.records[i].error_message.empty());
  }
  CHECK(t.records[0].input == x.input);  // entry consumes the instance input
}

TEST_CASE("execute: probability-1 mode fails at its node with the template") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{make_world()};
  DatasetInstance x = make_instance("i9", "case i9 tagA", "answer for i9");
  Trace t = ex.execute(w, x, 3);

  CHECK(!t.success);
  size_t error_count = 0;
  size_t solve_row = 0;
  for (size_t i = 0; i < t.records.size(); ++i) {
    if (t.records[i].status == StepStatus::Error) {
      ++error_count;
      solve_row = i;
    }
  }
  REQUIRE(error_count == 1);  // exactly the first failing node
  CHECK(t.records[solve_row].node_id == "solve");
  CHECK(t.records[solve_row].error_message ==
        "unit mismatch in intermediate total at solve");  // {node} filled in
  // Downstream nodes propagate the error text without re-flagging it.
  CHECK(t.final_output == "error: unit mismatch in intermediate total at solve");

  SUBCASE("{instance} placeholder") {
    DatasetInstance y = make_instance("i10", "case i10 tagB", "answer");
    Trace u = ex.execute(w, y, 3);
    bool found = false;
    for (const NodeRecord& r : u.records) {
      if (r.status == StepStatus::Error) {
        CHECK(r.node_id == "tool");
        CHECK(r.error_message == "tool call raised RuntimeError for i10");
        found = true;
      }
    }
    CHECK(found);
  }
}

TEST_CASE("execute: first failing node wins when several could fire") {
  // tagA and tagC together trigger modes at both solve and plan; plan comes
  // first topologically, so the trace blames plan.
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{make_world()};
  DatasetInstance x = make_instance("z", "case z tagA tagC", "answer");
  Trace t = ex.execute(w, x, 5);
  size_t errors = 0;
  for (const NodeRecord& r : t.records) {
    if (r.status == StepStatus::Error) {
      ++errors;
      CHECK(r.node_id == "plan");
      CHECK(r.error_message == "plan skipped a required step");
    }
  }
  CHECK(errors == 1);
}

TEST_CASE("execute: deterministic bytes for identical inputs") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{make_world(0.05)};
  DatasetInstance x = make_instance("d", "case d tagA", "answer");
  CHECK(ex.execute(w, x, 11).to_json_string() ==
        ex.execute(w, x, 11).to_json_string());
  // A different seed is allowed to differ; with base noise it eventually
  // must (checked loosely over a few seeds).
  bool any_difference = false;
  Trace base = ex.execute(w, make_instance("e", "case e", "answer"), 0);
  for (uint64_t s = 1; s < 200 && !any_difference; ++s) {
    Trace other = ex.execute(w, make_instance("e", "case e", "answer"), s);
    any_difference = other.to_json_string() != base.to_json_string();
  }
  CHECK(any_difference);
}

TEST_CASE("execute: 1000 seeds of a p=0.3 mode stay within 3 sigma") {
  WorkflowGraph w = make_pipeline();
  SimWorldSpec world;
  PlantedMode m;
  m.mode_id = "flaky";
  m.trigger.node_id = "solve";
  m.failure_probability = 0.3;
  m.error_message = "intermittent slip at {node}";
  world.modes.push_back(m);
  SimExecutor ex{world};

  DatasetInstance x = make_instance("s", "case s", "answer for s");
  size_t failures = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    if (!ex.execute(w, x, seed).success) ++failures;
  }
  const double sigma = std::sqrt(1000 * 0.3 * 0.7);  // exact binomial sd
  CHECK(std::abs(static_cast<double>(failures) - 300.0) <= 3.0 * sigma);
}

TEST_CASE("execute: repairs neutralize exactly their mode") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{make_world()};
  OperatorRegistry ops = OperatorRegistry::builtins();
  DatasetInstance xa = make_instance("a", "case a tagA", "answer for a");
  DatasetInstance xb = make_instance("b", "case b tagB", "answer for b");
  DatasetInstance xc = make_instance("c", "case c tagC", "answer for c");

  CHECK(!ex.execute(w, xa, 1).success);
  CHECK(!ex.execute(w, xb, 1).success);
  CHECK(!ex.execute(w, xc, 1).success);

  // RevisePrompt on solve carries the "Double-check" marker -> alpha fixed.
  WorkflowGraph w1 = ops.require("RevisePrompt")
                         .apply(w, {"solve",
                                    "Solve the task. Double-check the total."});
  CHECK(ex.execute(w1, xa, 1).success);
  CHECK(!ex.execute(w1, xb, 1).success);  // beta untouched

  // AddExceptionHandler on tool -> beta fixed.
  WorkflowGraph w2 =
      ops.require("AddExceptionHandler").apply(w1, {"tool", "RuntimeError"});
  CHECK(ex.execute(w2, xb, 1).success);
  CHECK(!ex.execute(w2, xc, 1).success);  // gamma untouched

  // AddVerifierNode after plan -> gamma fixed; everything passes.
  WorkflowGraph w3 = ops.require("AddVerifierNode").apply(w2, {"plan"});
  CHECK(ex.execute(w3, xa, 1).success);
  CHECK(ex.execute(w3, xb, 1).success);
  CHECK(ex.execute(w3, xc, 1).success);
}

TEST_CASE("execute: residual failure probability survives the repair") {
  SimWorldSpec world = make_world();
  world.repairs[0].residual_failure_probability = 0.2;
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  WorkflowGraph repaired = ops.require("RevisePrompt")
                               .apply(w, {"solve", "Solve. Double-check it."});
  SimExecutor ex{world};
  DatasetInstance x = make_instance("r", "case r tagA", "answer for r");
  size_t failures = 0;
  for (uint64_t seed = 0; seed < 1000; ++seed) {
    if (!ex.execute(repaired, x, seed).success) ++failures;
  }
  const double sigma = std::sqrt(1000 * 0.2 * 0.8);
  CHECK(std::abs(static_cast<double>(failures) - 200.0) <= 3.0 * sigma);
}

TEST_CASE("execute: deleting a required node breaks every run at the entry") {
  SimWorldSpec world = make_world();
  WorkflowGraph w = make_pipeline();
  OperatorRegistry ops = OperatorRegistry::builtins();
  WorkflowGraph broken = ops.require("DeleteNode").apply(w, {"tool"});
  SimExecutor ex{world};
  DatasetInstance x = make_instance("q", "case q", "answer for q");  // no tag
  Trace t = ex.execute(broken, x, 1);
  CHECK(!t.success);
  REQUIRE(!t.records.empty());
  CHECK(t.records[0].node_id == "read");
  CHECK(t.records[0].status == StepStatus::Error);
  CHECK(t.records[0].error_message ==
        "required step 'tool' is missing from the workflow");
}

TEST_CASE("execute: base noise fires at the stated rate") {
  WorkflowGraph w = make_pipeline();
  SimWorldSpec world;
  world.base_noise_rate = 1.0;
  SimExecutor always{world};
  Trace t = always.execute(w, make_instance("n", "case n", "answer"), 4);
  CHECK(!t.success);
  CHECK(t.records[0].status == StepStatus::Error);
  CHECK(t.records[0].error_message == "transient execution noise at step read");

  world.base_noise_rate = 0.0;
  SimExecutor never{world};
  CHECK(never.execute(w, make_instance("n", "case n", "answer"), 4).success);
}

TEST_CASE("execute: cost units count simulated node executions") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{SimWorldSpec{}};
  CHECK(ex.cost_units() == 0);
  ex.execute(w, make_instance("c1", "case", "answer"), 1);
  CHECK(ex.cost_units() == w.node_count());
  ex.execute(w, make_instance("c2", "case", "answer"), 2);
  CHECK(ex.cost_units() == 2 * w.node_count());
}

TEST_CASE("run_dataset: perfect workflow") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{SimWorldSpec{}};
  auto instances = make_dataset(10);
  DatasetRunResult r = run_dataset(w, instances, ex, 5);
  CHECK(r.success_rate == 1.0);
  CHECK(r.failures.empty());
  CHECK(r.total == 10);
}

TEST_CASE("run_dataset: deterministic failures land on exactly the planted ids") {
  WorkflowGraph w = make_pipeline();
  SimWorldSpec world;
  PlantedMode m;
  m.mode_id = "targeted";
  m.trigger.input_contains = "failme";
  m.trigger.node_id = "solve";
  m.failure_probability = 1.0;
  m.error_message = "forced failure for {instance}";
  world.modes.push_back(m);
  SimExecutor ex{world};

  auto instances = make_dataset(10);
  instances[3].input += " failme";
  instances[7].input += " failme";
  DatasetRunResult r = run_dataset(w, instances, ex, 5);
  CHECK(r.success_rate == doctest::Approx(0.8));
  REQUIRE(r.failures.size() == 2);
  CHECK(r.failures[0].instance_id == "x0003");  // instance order
  CHECK(r.failures[1].instance_id == "x0007");
}

TEST_CASE("run_dataset: planted masses 0.30/0.15/0.05 fail half the fixture") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{make_world()};
  auto instances = make_dataset(400);
  DatasetRunResult r = run_dataset(w, instances, ex, 11);
  // Deterministic triggers make the planted failure rate exact here; the
  // 3-sigma binomial bound from the probabilistic reading also holds.
  CHECK(r.success_rate == doctest::Approx(0.5));
  const double sigma_rate = std::sqrt(0.5 * 0.5 / 400.0);
  CHECK(std::abs(r.success_rate - 0.5) <= 3.0 * sigma_rate);

  // Hand-labeled expectations for the whole 400-instance fixture.
  std::set<std::string> failed_ids;
  for (const Trace& t : r.failures) failed_ids.insert(t.instance_id);
  for (size_t i = 0; i < instances.size(); ++i) {
    const bool tagged = (i % 20) < 10;
    CHECK(failed_ids.count(instances[i].id) == (tagged ? 1 : 0));
  }
}

TEST_CASE("run_dataset: instance order does not change outcomes") {
  WorkflowGraph w = make_pipeline();
  SimExecutor ex{make_world(0.1)};
  auto instances = make_dataset(40);
  DatasetRunResult forward = run_dataset(w, instances, ex, 13);

  auto reversed = instances;
  std::reverse(reversed.begin(), reversed.end());
  DatasetRunResult backward = run_dataset(w, reversed, ex, 13);

  CHECK(forward.success_rate == backward.success_rate);
  REQUIRE(forward.failures.size() == backward.failures.size());
  // Outcomes per instance match because seeds depend only on (seed, id).
  std::set<std::string> fwd_ids, bwd_ids;
  std::set<std::string> fwd_bytes, bwd_bytes;
  for (const Trace& t : forward.failures) {
    fwd_ids.insert(t.instance_id);
    fwd_bytes.insert(t.to_json_string());
  }
  for (const Trace& t : backward.failures) {
    bwd_ids.insert(t.instance_id);
    bwd_bytes.insert(t.to_json_string());
  }
  CHECK(fwd_ids == bwd_ids);
  CHECK(fwd_bytes == bwd_bytes);

  CHECK(instance_seed(13, "x0001") == mix_seed(13, "instance:x0001"));
  CHECK_THROWS_AS(run_dataset(w, {}, ex, 1), Error);
}
