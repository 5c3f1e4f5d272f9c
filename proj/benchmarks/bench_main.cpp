// Microbenchmarks for the hot paths: embedding, mixture fitting, graph
// edits, and density bookkeeping.

#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "wfopt/gmm.hpp"
#include "wfopt/graph.hpp"
#include "wfopt/mass_oracle.hpp"
#include "wfopt/operators.hpp"
#include "wfopt/rng.hpp"
#include "wfopt/signature.hpp"

namespace {

using namespace wfopt;

WorkflowGraph make_chain(size_t n) {
  WorkflowGraph g;
  for (size_t i = 0; i < n; ++i) {
    Node node;
    node.id = "n" + std::to_string(i);
    node.kind = NodeKind::PromptStep;
    node.prompt = "step " + std::to_string(i);
    g.add_node(node);
    if (i > 0) g.add_edge("n" + std::to_string(i - 1), node.id);
  }
  g.set_entry("n0");
  g.set_exit("n" + std::to_string(n - 1));
  return g;
}

void BM_SemanticEmbed(benchmark::State& state) {
  HashingEmbedder embedder(64);
  const std::string message =
      "tool call failed with timeout while fetching upstream results for "
      "the aggregation stage";
  for (auto _ : state) {
    benchmark::DoNotOptimize(embedder.embed(message));
  }
}
BENCHMARK(BM_SemanticEmbed);

void BM_MakeSignature(benchmark::State& state) {
  StructuralRegistry registry;
  HashingEmbedder embedder(64);
  Diagnosis diagnosis;
  diagnosis.v_err = "n17";
  diagnosis.z_err = "numeric overflow in partial sum";
  diagnosis.confidence = 1.0;
  size_t i = 0;
  for (auto _ : state) {
    diagnosis.v_err = "n" + std::to_string(i++ % 512);
    benchmark::DoNotOptimize(
        make_signature(diagnosis, "x1", registry, embedder));
  }
}
BENCHMARK(BM_MakeSignature);

void BM_GmmFit(benchmark::State& state) {
  const size_t n = static_cast<size_t>(state.range(0));
  Rng rng(7);
  std::vector<std::vector<double>> points;
  points.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    const double cx = (i % 3) * 8.0;
    points.push_back({cx + rng.normal(), rng.normal()});
  }
  GmmFitOptions options;
  options.k_max = 5;
  for (auto _ : state) {
    benchmark::DoNotOptimize(fit_gmm(points, options, 42));
  }
}
BENCHMARK(BM_GmmFit)->Arg(64)->Arg(256);

void BM_ApplyEdit(benchmark::State& state) {
  WorkflowGraph g = make_chain(64);
  OperatorRegistry ops = OperatorRegistry::builtins();
  Edit edit;
  edit.operator_name = "AddVerifierNode";
  edit.args = {"n32"};
  for (auto _ : state) {
    benchmark::DoNotOptimize(apply_edit(g, edit, ops));
  }
}
BENCHMARK(BM_ApplyEdit);

void BM_TotalMass(benchmark::State& state) {
  DiscreteDensity density(64, 64);
  Rng rng(3);
  for (size_t c = 0; c < density.cell_count(); ++c) {
    density.set_value(c, rng.uniform());
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(total_mass(density));
  }
}
BENCHMARK(BM_TotalMass);

void BM_GreedyDescent(benchmark::State& state) {
  DiscreteDensity density(64, 64);
  Rng rng(3);
  for (size_t c = 0; c < density.cell_count(); ++c) {
    density.set_value(c, rng.uniform());
    density.set_region(c, static_cast<int>(c % 4));
  }
  std::vector<EditKernel> menu;
  menu.push_back(EditKernel::identity());
  for (int r = 0; r < 4; ++r) menu.push_back(EditKernel::region_scale(r, 0.5));
  for (auto _ : state) {
    benchmark::DoNotOptimize(greedy_kernel_descent(density, menu, 8));
  }
}
BENCHMARK(BM_GreedyDescent);

}  // namespace

BENCHMARK_MAIN();
