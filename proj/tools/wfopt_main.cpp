// wfopt: counterexample-guided workflow optimization toolkit.
//
// Subcommands:
//   optimize  full refinement run driven by a JSON config
//   oracle    exact mass bookkeeping on a synthetic density grid
//   cluster   fit a mixture over a saved failure pool and export metrics
//   eval      score a saved workflow on splits and a fixed instance set
//
// Every failure exits nonzero with {"error": {"code", "message"}} on stderr.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "wfopt/cluster_metrics.hpp"
#include "wfopt/config.hpp"
#include "wfopt/dataset.hpp"
#include "wfopt/diagnosis.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/execution.hpp"
#include "wfopt/gmm.hpp"
#include "wfopt/graph.hpp"
#include "wfopt/llm_client.hpp"
#include "wfopt/mass_oracle.hpp"
#include "wfopt/operators.hpp"
#include "wfopt/optimizer.hpp"
#include "wfopt/propose_verify.hpp"
#include "wfopt/report.hpp"
#include "wfopt/rng.hpp"
#include "wfopt/signature.hpp"

namespace {

using ordered_json = nlohmann::ordered_json;
using namespace wfopt;

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to read");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to write");
  }
  out << text;
  if (!out.good()) {
    fail(ErrorCode::IoFailure, "short write to '" + path.string() + "'");
  }
}

struct CommonFlags {
  std::string config_path;
  uint64_t seed = 0;
  bool seed_set = false;
  size_t max_iters = 0;
  bool max_iters_set = false;
  std::string out_dir;
};

void apply_overrides(RunConfig& config, const CommonFlags& flags) {
  if (flags.seed_set) {
    config.seed = flags.seed;
    config.hyperparams.master_seed = flags.seed;
  }
  if (flags.max_iters_set) config.hyperparams.max_rounds = flags.max_iters;
  if (!flags.out_dir.empty()) config.out_dir = flags.out_dir;
}

std::vector<DatasetInstance> load_and_split(const RunConfig& config) {
  auto dataset = load_dataset_jsonl(config.dataset_path);
  if (!config.use_dataset_splits) {
    auto splits = split_dataset(dataset, config.split_ratios, config.seed);
    for (size_t i = 0; i < dataset.size(); ++i) dataset[i].split = splits[i];
  }
  return dataset;
}

struct Backends {
  std::unique_ptr<Executor> executor;
  std::unique_ptr<Diagnoser> diagnoser;
  std::unique_ptr<Proposer> proposer;
};

Backends build_backends(const RunConfig& config) {
  Backends backends;
  std::shared_ptr<LlmClient> client;
  auto require_client = [&]() -> std::shared_ptr<LlmClient> {
    if (!client) client = make_http_llm_client(config.remote);
    return client;
  };
  if (config.backend == BackendKind::Simulated) {
    backends.executor = std::make_unique<SimExecutor>(
        SimWorldSpec::from_json_file(config.simworld_path));
  } else {
    backends.executor = std::make_unique<RemoteExecutor>(require_client());
  }
  if (config.diagnoser == "llm") {
    backends.diagnoser = std::make_unique<LlmDiagnoser>(require_client());
  } else {
    backends.diagnoser = std::make_unique<RuleBasedDiagnoser>();
  }
  if (config.proposer == "llm") {
    backends.proposer = std::make_unique<LlmProposer>(require_client());
  } else {
    backends.proposer = std::make_unique<RuleBasedProposer>();
  }
  return backends;
}

int run_optimize(const CommonFlags& flags) {
  RunConfig config = RunConfig::from_json_file(flags.config_path);
  apply_overrides(config, flags);
  config.validate();

  auto dataset = load_and_split(config);
  WorkflowGraph w0 =
      WorkflowGraph::from_json_string(read_text_file(config.workflow_path));
  Backends backends = build_backends(config);
  OperatorRegistry ops = config.operator_names.empty()
                             ? OperatorRegistry::builtins()
                             : OperatorRegistry::from_names(
                                   config.operator_names);

  std::filesystem::create_directories(config.out_dir);
  OptimizerHooks hooks;
  hooks.pool_dir = config.out_dir / "pools";
  hooks.on_round = [](const RoundRecord& r) {
    std::printf("round %zu: pool=%zu undiag=%zu k=%zu edit=%s V=%.3f "
                "g=%.3f e0=%.3f\n",
                r.round, r.pool_size, r.undiagnosable_count, r.k_fit,
                r.chosen_edit.display().c_str(), r.chosen_utility,
                r.validation_score, r.e0_accuracy);
    std::fflush(stdout);
  };

  OptimizationState state =
      optimize(w0, dataset, config.hyperparams, *backends.executor,
               *backends.diagnoser, *backends.proposer, ops, hooks,
               config.verify);

  emit_report(state, config.out_dir);
  write_text_file(config.out_dir / "final_workflow.json",
                  state.workflow.to_json_string(2) + "\n");
  {
    ordered_json ids = ordered_json::array();
    for (const auto& id : state.e0_ids) ids.push_back(id);
    write_text_file(config.out_dir / "e0_ids.json", ids.dump(2) + "\n");
  }
  write_text_file(config.out_dir / "config_used.json",
                  config.to_json_string(2) + "\n");

  std::printf("stopped after %zu round(s): %s\n", state.rounds_completed,
              state.stop_reason.c_str());
  std::printf("final scores: train=%.4f validation=%.4f test=%.4f\n",
              state.final_train_score, state.final_validation_score,
              state.final_test_score);
  std::printf("cost units: %llu\n",
              static_cast<unsigned long long>(state.cost_units));
  std::printf("artifacts written to %s\n", config.out_dir.string().c_str());
  return 0;
}

int run_oracle(const CommonFlags& flags, size_t sweeps, size_t rounds) {
  const std::filesystem::path out =
      flags.out_dir.empty() ? std::filesystem::path("oracle-out")
                            : std::filesystem::path(flags.out_dir);
  std::filesystem::create_directories(out);

  // Seeded random density on a 64x64 grid, partitioned into quadrants.
  DiscreteDensity density(64, 64);
  Rng rng(mix_seed(flags.seed, "oracle_density"));
  for (size_t c = 0; c < density.cell_count(); ++c) {
    density.set_value(c, rng.uniform());
  }
  for (size_t row = 0; row < density.rows(); ++row) {
    for (size_t col = 0; col < density.cols(); ++col) {
      const int quadrant = (row >= density.rows() / 2 ? 2 : 0) +
                           (col >= density.cols() / 2 ? 1 : 0);
      density.set_region(density.cell_at(col, row), quadrant);
    }
  }

  size_t holds = 0, inapplicable = 0, violations = 0;
  for (size_t i = 0; i < sweeps; ++i) {
    double delta = 0.0;
    EditKernel kernel = random_hypothesis_kernel(
        density, mix_seed(flags.seed, "sweep", i), &delta);
    KernelApplication application = apply_kernel(density, kernel);
    TheoremCheck check = check_mass_reduction_bound(
        density, application.density, kernel.declared().target_region, delta);
    if (!check.applicable) {
      ++inapplicable;
    } else if (check.holds) {
      ++holds;
    } else {
      ++violations;
    }
  }

  std::vector<EditKernel> menu;
  menu.push_back(EditKernel::identity());
  for (int region = 0; region < 4; ++region) {
    menu.push_back(EditKernel::region_scale(region, 0.5));
  }
  DescentResult descent = greedy_kernel_descent(density, menu, rounds);

  write_density_csv(density, out / "density_initial.csv");
  write_density_csv(descent.final_density, out / "density_final.csv");
  write_trajectory_csv(descent.trajectory, out / "trajectory.csv");

  ordered_json summary;
  summary["schema_version"] = 1;
  summary["grid"] = {{"cols", density.cols()}, {"rows", density.rows()}};
  summary["initial_mass"] = total_mass(density);
  summary["final_mass"] = descent.trajectory.back();
  summary["descent_rounds_applied"] = descent.applied.size();
  summary["sweep"] = {{"kernels", sweeps},
                      {"holds", holds},
                      {"inapplicable", inapplicable},
                      {"violations", violations}};
  write_text_file(out / "oracle_summary.json", summary.dump(2) + "\n");

  std::printf("mass %.6f -> %.6f over %zu descent round(s)\n",
              total_mass(density), descent.trajectory.back(),
              descent.applied.size());
  std::printf("reduction-bound sweep: %zu checked, %zu hold, %zu "
              "inapplicable, %zu violations\n",
              sweeps, holds, inapplicable, violations);
  if (violations > 0) {
    fail(ErrorCode::InvalidGraph,
         "mass-reduction bound violated on " + std::to_string(violations) +
             " kernel(s)");
  }
  return 0;
}

int run_cluster(const CommonFlags& flags, const std::string& pool_path,
                size_t dim) {
  const std::filesystem::path out =
      flags.out_dir.empty() ? std::filesystem::path("cluster-out")
                            : std::filesystem::path(flags.out_dir);
  std::filesystem::create_directories(out);

  auto pool = load_pool_jsonl(pool_path);
  StructuralRegistry registry;
  HashingEmbedder embedder(dim);
  std::vector<FailureSignature> signatures;
  for (const auto& entry : pool) {
    if (!is_diagnosed(entry.diagnosis)) continue;
    signatures.push_back(make_signature(diagnosis_of(entry.diagnosis),
                                        entry.instance_id, registry,
                                        embedder));
  }
  if (signatures.size() < 2) {
    fail(ErrorCode::InsufficientData,
         "need at least two diagnosed failures to cluster, got " +
             std::to_string(signatures.size()));
  }

  auto points = dense_matrix(signatures, registry.width());
  GaussianMixture model =
      fit_gmm(points, GmmFitOptions{}, mix_seed(flags.seed, "gmm"));
  ModeSelection mode = densest_mode(model, points);
  summarize_mode(mode, signatures, registry);

  auto resp = responsibilities(model, points);
  std::vector<int> labels(points.size(), 0);
  for (size_t i = 0; i < resp.size(); ++i) {
    size_t best = 0;
    for (size_t k = 1; k < resp[i].size(); ++k) {
      if (resp[i][k] > resp[i][best]) best = k;
    }
    labels[i] = static_cast<int>(best);
  }
  ClusterQuality quality = cluster_quality(points, labels);

  write_signature_csv(signatures, out / "signatures.csv");
  write_text_file(out / "registry.json", registry.to_json_string(2) + "\n");
  write_text_file(out / "gmm.json", model.to_json_string(2) + "\n");
  {
    std::string csv = "instance_id,x,y\n";
    PcaProjection projection = pca_project(points, 2);
    for (size_t i = 0; i < signatures.size(); ++i) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "%.17g,%.17g", projection.coords[i][0],
                    projection.coords[i][1]);
      csv += signatures[i].instance_id + "," + buf + "\n";
    }
    write_text_file(out / "pca.csv", csv);
  }
  ordered_json summary;
  summary["schema_version"] = 1;
  summary["pool_size"] = pool.size();
  summary["signatures"] = signatures.size();
  summary["undiagnosable"] = pool.size() - signatures.size();
  summary["k_fit"] = model.k_fit();
  summary["loglik"] = model.log_likelihood;
  summary["bic"] = model.bic;
  summary["silhouette"] = quality.silhouette;
  summary["davies_bouldin"] = quality.davies_bouldin;
  summary["mode_summary"] = mode.summary;
  summary["mode_soft_mass"] = mode.soft_mass;
  write_text_file(out / "cluster_summary.json", summary.dump(2) + "\n");

  std::printf("%zu signatures (%zu undiagnosable dropped), k=%zu, "
              "bic=%.3f\n",
              signatures.size(), pool.size() - signatures.size(),
              model.k_fit(), model.bic);
  std::printf("densest mode: %s\n", mode.summary.c_str());
  std::printf("artifacts written to %s\n", out.string().c_str());
  return 0;
}

int run_eval(const CommonFlags& flags, const std::string& graph_path,
             const std::string& fixed_set_path) {
  RunConfig config = RunConfig::from_json_file(flags.config_path);
  apply_overrides(config, flags);
  config.validate();

  auto dataset = load_and_split(config);
  const std::filesystem::path graph_file =
      graph_path.empty() ? config.workflow_path
                         : std::filesystem::path(graph_path);
  WorkflowGraph graph =
      WorkflowGraph::from_json_string(read_text_file(graph_file));
  Backends backends = build_backends(config);

  std::vector<std::string> fixed_ids;
  if (!fixed_set_path.empty()) {
    ordered_json doc = ordered_json::parse(read_text_file(fixed_set_path));
    for (const auto& id : doc) fixed_ids.push_back(id.get<std::string>());
  } else {
    for (const auto& x : dataset) {
      if (x.fixed_set_flag) fixed_ids.push_back(x.id);
    }
  }
  if (fixed_ids.empty()) {
    fail(ErrorCode::EmptyDataset,
         "no fixed-set instances: pass --fixed-set or set fixed_set_flag in "
         "the dataset");
  }

  const double fixed_accuracy =
      eval_fixed_set(graph, fixed_ids, dataset, *backends.executor,
                     mix_seed(config.seed, "e0"), config.verify);

  ordered_json summary;
  summary["schema_version"] = 1;
  summary["graph"] = graph_file.string();
  summary["backend"] = backend_kind_name(config.backend);
  summary["seed"] = config.seed;
  summary["fixed_set"] = {{"size", fixed_ids.size()},
                          {"accuracy", fixed_accuracy}};
  summary["splits"] = ordered_json::object();
  const struct {
    Split split;
    const char* name;
    const char* seed_tag;
  } kSplits[] = {{Split::Train, "train", "final_train"},
                 {Split::Validation, "validation", "val"},
                 {Split::Test, "test", "final_test"}};
  for (const auto& s : kSplits) {
    auto instances = filter_split(dataset, s.split);
    if (instances.empty()) {
      summary["splits"][s.name] = {{"size", 0}};
      continue;
    }
    auto result =
        run_dataset(graph, instances, *backends.executor,
                    mix_seed(config.seed, s.seed_tag), config.verify);
    summary["splits"][s.name] = {{"size", instances.size()},
                                 {"score", result.success_rate}};
  }

  std::printf("fixed set: %zu instance(s), accuracy %.4f\n", fixed_ids.size(),
              fixed_accuracy);
  for (const auto& s : kSplits) {
    const auto& entry = summary["splits"][s.name];
    if (entry.contains("score")) {
      std::printf("%s: %zu instance(s), score %.4f\n", s.name,
                  entry["size"].get<size_t>(), entry["score"].get<double>());
    }
  }
  if (!flags.out_dir.empty()) {
    std::filesystem::create_directories(flags.out_dir);
    write_text_file(std::filesystem::path(flags.out_dir) / "eval.json",
                    summary.dump(2) + "\n");
    std::printf("artifacts written to %s\n", flags.out_dir.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Counterexample-guided workflow optimization toolkit"};
  app.require_subcommand(1);

  CommonFlags optimize_flags, oracle_flags, cluster_flags, eval_flags;
  size_t oracle_sweeps = 100;
  size_t oracle_rounds = 20;
  std::string cluster_pool;
  size_t cluster_dim = 64;
  std::string eval_graph;
  std::string eval_fixed_set;

  auto add_common = [](CLI::App* cmd, CommonFlags& flags, bool need_config) {
    auto* config_opt =
        cmd->add_option("--config", flags.config_path, "Run config JSON file");
    if (need_config) {
      config_opt->required()->check(CLI::ExistingFile);
    }
    cmd->add_option("--seed", flags.seed, "Master seed override")
        ->each([&flags](const std::string&) { flags.seed_set = true; });
    cmd->add_option("--max-iters", flags.max_iters,
                    "Maximum optimization rounds override")
        ->each([&flags](const std::string&) { flags.max_iters_set = true; });
    cmd->add_option("--out", flags.out_dir, "Output directory override");
  };

  CLI::App* optimize_cmd = app.add_subcommand(
      "optimize", "Run the counterexample-guided refinement loop");
  add_common(optimize_cmd, optimize_flags, true);

  CLI::App* oracle_cmd = app.add_subcommand(
      "oracle",
      "Exact mass bookkeeping: reduction-bound sweep and greedy descent on a "
      "synthetic density");
  add_common(oracle_cmd, oracle_flags, false);
  oracle_cmd->add_option("--sweeps", oracle_sweeps,
                         "Randomized kernels to check");
  oracle_cmd->add_option("--rounds", oracle_rounds, "Greedy descent rounds");

  CLI::App* cluster_cmd = app.add_subcommand(
      "cluster", "Fit a mixture over a saved failure pool and export metrics");
  add_common(cluster_cmd, cluster_flags, false);
  cluster_cmd
      ->add_option("--pool", cluster_pool, "Failure pool JSONL file")
      ->required()
      ->check(CLI::ExistingFile);
  cluster_cmd->add_option("--dim", cluster_dim,
                          "Semantic embedding dimension");

  CLI::App* eval_cmd = app.add_subcommand(
      "eval", "Score a saved workflow on splits and a fixed instance set");
  add_common(eval_cmd, eval_flags, true);
  eval_cmd->add_option("--graph", eval_graph,
                       "Workflow JSON (defaults to the config's workflow)");
  eval_cmd->add_option("--fixed-set", eval_fixed_set,
                       "JSON array of instance ids to use as the fixed set");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    ordered_json error;
    error["error"] = {{"code", "UsageError"}, {"message", e.what()}};
    std::cerr << error.dump() << "\n";
    return 2;
  }

  try {
    if (optimize_cmd->parsed()) return run_optimize(optimize_flags);
    if (oracle_cmd->parsed())
      return run_oracle(oracle_flags, oracle_sweeps, oracle_rounds);
    if (cluster_cmd->parsed())
      return run_cluster(cluster_flags, cluster_pool, cluster_dim);
    if (eval_cmd->parsed())
      return run_eval(eval_flags, eval_graph, eval_fixed_set);
  } catch (const Error& e) {
    ordered_json error;
    error["error"] = {{"code", error_code_name(e.code())},
                      {"message", e.what()}};
    std::cerr << error.dump() << "\n";
    return 1;
  } catch (const std::exception& e) {
    ordered_json error;
    error["error"] = {{"code", "Internal"}, {"message", e.what()}};
    std::cerr << error.dump() << "\n";
    return 1;
  }
  return 0;
}
