#include "wfopt/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>
#include <unordered_map>

#include "json.hpp"

#include "wfopt/cluster_metrics.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

namespace {

using ordered_json = nlohmann::ordered_json;

// Index-stable parallel map: fn(i) writes only to slot i of its own output,
// so scheduling cannot affect results. The first exception is rethrown on
// the caller thread after every worker has joined.
void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
  if (n == 0) return;
  unsigned hw = std::thread::hardware_concurrency();
  size_t workers = std::min<size_t>(n, hw == 0 ? 4 : hw);
  if (workers <= 1) {
    for (size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (size_t t = 0; t < workers; ++t) {
    threads.emplace_back([&] {
      for (;;) {
        size_t i = next.fetch_add(1);
        if (i >= n || failed.load()) break;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
          failed.store(true);
          break;
        }
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

uint64_t hash_id_list(const std::vector<std::string>& ids) {
  std::string joined;
  for (const auto& id : ids) {
    joined += id;
    joined += '\n';
  }
  return fnv1a64(joined);
}

std::unordered_map<std::string, const DatasetInstance*> index_by_id(
    const std::vector<DatasetInstance>& instances) {
  std::unordered_map<std::string, const DatasetInstance*> index;
  index.reserve(instances.size());
  for (const auto& x : instances) index.emplace(x.id, &x);
  return index;
}

}  // namespace

void Hyperparams::validate() const {
  if (n_candidates < 1 || k_samples < 1 || convergence_window < 1 ||
      max_rounds < 1) {
    fail(ErrorCode::ConfigError, "all hyperparameter counts must be >= 1");
  }
  if (!(convergence_tolerance > 0.0)) {
    fail(ErrorCode::ConfigError, "convergence tolerance must be positive");
  }
  if (embedding_dim < 8) {
    fail(ErrorCode::ConfigError, "embedding dimension must be >= 8");
  }
  if (gmm_k_min < 1 || gmm_k_max < gmm_k_min) {
    fail(ErrorCode::ConfigError, "mixture size range is invalid");
  }
  if (confidence_floor < 0.0 || confidence_floor > 1.0) {
    fail(ErrorCode::ConfigError, "confidence floor must lie in [0, 1]");
  }
  if (struct_weight < 0.0) {
    fail(ErrorCode::ConfigError, "structural weight must be non-negative");
  }
}

void write_pool_jsonl(const std::vector<PoolEntry>& pool,
                      const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to write");
  }
  for (const auto& entry : pool) {
    ordered_json line;
    line["instance_id"] = entry.instance_id;
    line["trace"] = ordered_json::parse(entry.trace.to_json_string());
    line["diagnosis"] =
        ordered_json::parse(diagnosis_to_json_string(entry.diagnosis));
    out << line.dump() << '\n';
  }
  if (!out.good()) {
    fail(ErrorCode::IoFailure, "short write to '" + path.string() + "'");
  }
}

std::vector<PoolEntry> load_pool_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to read");
  }
  std::vector<PoolEntry> pool;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    ordered_json doc;
    try {
      doc = ordered_json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::IoFailure,
           "bad pool line in '" + path.string() + "': " + e.what());
    }
    PoolEntry entry;
    entry.instance_id = doc.at("instance_id").get<std::string>();
    entry.trace = Trace::from_json_string(doc.at("trace").dump());
    entry.diagnosis = diagnosis_from_json_string(doc.at("diagnosis").dump());
    pool.push_back(std::move(entry));
  }
  return pool;
}

bool converged(const std::vector<double>& scores, size_t window,
               double tolerance) {
  if (window == 0 || scores.size() < window) return false;
  const size_t start = scores.size() - window;
  double mean = 0.0;
  for (size_t i = start; i < scores.size(); ++i) mean += scores[i];
  mean /= static_cast<double>(window);
  double variance = 0.0;
  for (size_t i = start; i < scores.size(); ++i) {
    const double d = scores[i] - mean;
    variance += d * d;
  }
  variance /= static_cast<double>(window);
  return variance < tolerance;
}

double eval_fixed_set(const WorkflowGraph& w,
                      const std::vector<std::string>& e0_ids,
                      const std::vector<DatasetInstance>& dataset,
                      const Executor& executor, uint64_t seed,
                      const VerifyOptions& verify_options) {
  if (e0_ids.empty()) {
    fail(ErrorCode::EmptyDataset, "fixed evaluation set is empty");
  }
  auto index = index_by_id(dataset);
  std::vector<const DatasetInstance*> targets;
  targets.reserve(e0_ids.size());
  for (const auto& id : e0_ids) {
    auto it = index.find(id);
    if (it == index.end()) {
      fail(ErrorCode::ConfigError,
           "fixed-set instance '" + id + "' is not in the dataset");
    }
    targets.push_back(it->second);
  }
  std::vector<char> repaired(targets.size(), 0);
  parallel_for(targets.size(), [&](size_t i) {
    const DatasetInstance& x = *targets[i];
    Trace trace = executor.execute(w, x, instance_seed(seed, x.id));
    repaired[i] =
        verify(trace.final_output, x.ground_truth, verify_options) ? 1 : 0;
  });
  size_t count = 0;
  for (char r : repaired) count += static_cast<size_t>(r);
  return static_cast<double>(count) / static_cast<double>(targets.size());
}

std::vector<PoolEntry> populate_pool(const WorkflowGraph& w,
                                     const std::vector<DatasetInstance>& train,
                                     const Executor& executor,
                                     const Diagnoser& diagnoser,
                                     double confidence_floor, uint64_t seed,
                                     const VerifyOptions& verify_options) {
  std::vector<std::optional<PoolEntry>> slots(train.size());
  parallel_for(train.size(), [&](size_t i) {
    const DatasetInstance& x = train[i];
    Trace trace = executor.execute(w, x, instance_seed(seed, x.id));
    trace.success = verify(trace.final_output, x.ground_truth, verify_options);
    if (trace.success) return;
    PoolEntry entry;
    entry.instance_id = x.id;
    entry.diagnosis = diagnoser.distill(trace, confidence_floor);
    entry.trace = std::move(trace);
    slots[i] = std::move(entry);
  });
  std::vector<PoolEntry> pool;
  for (auto& slot : slots) {
    if (slot) pool.push_back(std::move(*slot));
  }
  return pool;
}

OptimizationState optimize(const WorkflowGraph& w0,
                           const std::vector<DatasetInstance>& dataset,
                           const Hyperparams& hp, const Executor& executor,
                           const Diagnoser& diagnoser, const Proposer& proposer,
                           const OperatorRegistry& ops,
                           const OptimizerHooks& hooks,
                           const VerifyOptions& verify_options) {
  hp.validate();
  w0.validate();
  if (dataset.empty()) {
    fail(ErrorCode::EmptyDataset, "optimization needs a dataset");
  }

  const auto train = filter_split(dataset, Split::Train);
  const auto validation = filter_split(dataset, Split::Validation);
  const auto test = filter_split(dataset, Split::Test);
  if (train.empty()) {
    fail(ErrorCode::EmptyDataset, "train split is empty");
  }
  auto train_index = index_by_id(train);

  const uint64_t cost_at_start = executor.cost_units();
  const uint64_t e0_seed = mix_seed(hp.master_seed, "e0");
  const uint64_t val_seed = mix_seed(hp.master_seed, "val");
  const HashingEmbedder embedder(hp.embedding_dim, hp.embedder_salt);

  OptimizationState state;
  state.workflow = w0;

  // E_0: the instances the starting workflow fails on, frozen before round 1
  // and re-evaluated with the same per-instance seeds every round (so the
  // baseline is 0 by construction for deterministic failures).
  {
    std::vector<char> failed(train.size(), 0);
    parallel_for(train.size(), [&](size_t i) {
      const DatasetInstance& x = train[i];
      Trace trace = executor.execute(w0, x, instance_seed(e0_seed, x.id));
      failed[i] =
          verify(trace.final_output, x.ground_truth, verify_options) ? 0 : 1;
    });
    for (size_t i = 0; i < train.size(); ++i) {
      if (failed[i]) state.e0_ids.push_back(train[i].id);
    }
  }
  const uint64_t e0_hash = hash_id_list(state.e0_ids);
  // An empty E_0 (perfect starting workflow) has vacuous accuracy 1.
  state.e0_trajectory.push_back(
      state.e0_ids.empty() ? 1.0
                           : eval_fixed_set(state.workflow, state.e0_ids,
                                            train, executor, e0_seed,
                                            verify_options));

  if (!hooks.pool_dir.empty()) {
    std::filesystem::create_directories(hooks.pool_dir);
  }

  GmmFitOptions gmm_options;
  gmm_options.k_min = hp.gmm_k_min;
  gmm_options.k_max = hp.gmm_k_max;

  for (size_t t = 1; t <= hp.max_rounds; ++t) {
    const uint64_t pool_seed = mix_seed(hp.master_seed, "pool", t);
    auto pool = populate_pool(state.workflow, train, executor, diagnoser,
                              hp.confidence_floor, pool_seed, verify_options);
    if (!hooks.pool_dir.empty()) {
      write_pool_jsonl(pool,
                       hooks.pool_dir / ("round_" + std::to_string(t) +
                                         ".jsonl"));
    }
    if (pool.empty()) {
      state.stop_reason = "no_failures";
      break;
    }

    std::vector<FailureSignature> signatures;
    signatures.reserve(pool.size());
    for (const auto& entry : pool) {
      if (!is_diagnosed(entry.diagnosis)) continue;
      signatures.push_back(make_signature(diagnosis_of(entry.diagnosis),
                                          entry.instance_id, state.registry,
                                          embedder, hp.struct_weight));
    }
    const size_t undiagnosable = pool.size() - signatures.size();

    RoundRecord record;
    record.round = t;
    record.pool_size = pool.size();
    record.undiagnosable_count = undiagnosable;
    record.signature_count = signatures.size();
    record.e0_hash = e0_hash;
    record.silhouette = std::numeric_limits<double>::quiet_NaN();
    record.davies_bouldin = std::numeric_limits<double>::quiet_NaN();

    Edit chosen = Edit::identity();
    double chosen_utility = 0.0;

    if (!signatures.empty()) {
      ModeSelection mode;
      GaussianMixture model;
      std::vector<std::vector<double>> points =
          dense_matrix(signatures, state.registry.width());
      if (signatures.size() == 1) {
        mode = single_signature_mode(signatures[0], state.registry);
      } else {
        model = fit_gmm(points, gmm_options, mix_seed(hp.master_seed, "gmm", t));
        mode = densest_mode(model, points);
        summarize_mode(mode, signatures, state.registry);
        record.k_fit = model.k_fit();
        record.gmm_loglik = model.log_likelihood;
        record.gmm_bic = model.bic;
        // Hard-assignment labels for the round's cluster-quality metrics.
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
        record.silhouette = quality.silhouette;
        record.davies_bouldin = quality.davies_bouldin;
      }

      record.mode_summary = mode.summary;
      record.mode_soft_mass = mode.soft_mass;

      // Mode members, in responsibility-row order.
      std::vector<DatasetInstance> members;
      members.reserve(mode.member_rows.size());
      for (size_t row : mode.member_rows) {
        auto it = train_index.find(signatures[row].instance_id);
        if (it != train_index.end()) members.push_back(*it->second);
      }

      CandidateSet candidates =
          proposer.propose(mode, state.workflow, ops, hp.n_candidates,
                           mix_seed(hp.master_seed, "prop", t));
      const uint64_t verify_seed = mix_seed(hp.master_seed, "ver", t);
      std::vector<double> utilities(candidates.candidates.size(), 0.0);
      std::vector<size_t> samples(candidates.candidates.size(), 0);
      parallel_for(candidates.candidates.size(), [&](size_t i) {
        try {
          UtilityEstimate estimate = estimate_utility(
              state.workflow, candidates.candidates[i], members, hp.k_samples,
              executor, ops, verify_seed, verify_options);
          utilities[i] = estimate.value;
          samples[i] = estimate.samples_used;
        } catch (const Error&) {
          // A candidate that cannot be applied or verified scores 0 and can
          // never beat identity.
          utilities[i] = 0.0;
        }
      });
      const size_t selected = select_edit(utilities, candidates.candidates);
      chosen = candidates.candidates[selected];
      chosen_utility = utilities[selected];
      record.verification_samples = samples[selected];
      state.workflow = apply_edit(state.workflow, chosen, ops);
      state.signatures = signatures;
      state.model = model;
    }

    record.chosen_edit = chosen;
    record.chosen_utility = chosen_utility;

    double g = 0.0;
    if (hooks.validation_override) {
      g = hooks.validation_override(state.workflow, t);
    } else {
      // Unsplit toy datasets fall back to the train split.
      const auto& eval_split = validation.empty() ? train : validation;
      g = run_dataset(state.workflow, eval_split, executor, val_seed,
                      verify_options)
              .success_rate;
    }
    record.validation_score = g;
    state.validation_scores.push_back(g);

    record.e0_accuracy =
        state.e0_ids.empty()
            ? 1.0
            : eval_fixed_set(state.workflow, state.e0_ids, train, executor,
                             e0_seed, verify_options);
    state.e0_trajectory.push_back(record.e0_accuracy);

    record.cost_units = executor.cost_units() - cost_at_start;
    state.history.push_back(record);
    state.rounds_completed = t;
    if (hooks.on_round) hooks.on_round(record);

    if (hp.stopping_enabled &&
        converged(state.validation_scores, hp.convergence_window,
                  hp.convergence_tolerance)) {
      state.stop_reason = "converged";
      break;
    }
  }
  if (state.stop_reason.empty()) state.stop_reason = "max_rounds";

  state.cost_units = executor.cost_units() - cost_at_start;

  const auto final_score = [&](const std::vector<DatasetInstance>& split,
                               uint64_t seed) {
    if (split.empty()) return std::numeric_limits<double>::quiet_NaN();
    return run_dataset(state.workflow, split, executor, seed, verify_options)
        .success_rate;
  };
  state.final_train_score =
      final_score(train, mix_seed(hp.master_seed, "final_train"));
  state.final_validation_score = final_score(validation, val_seed);
  state.final_test_score =
      final_score(test, mix_seed(hp.master_seed, "final_test"));
  return state;
}

}  // namespace wfopt
