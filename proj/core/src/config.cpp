#include "wfopt/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "wfopt/errors.hpp"

namespace wfopt {

namespace {

using ordered_json = nlohmann::ordered_json;

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

void require_exists(const std::filesystem::path& p, const std::string& what) {
  if (p.empty()) {
    fail(ErrorCode::ConfigError, what + " path is not set");
  }
  if (!std::filesystem::exists(p)) {
    fail(ErrorCode::ConfigError, what + " path '" + p.string() +
                                     "' does not exist");
  }
}

}  // namespace

std::string backend_kind_name(BackendKind kind) {
  switch (kind) {
    case BackendKind::Simulated:
      return "simulated";
    case BackendKind::Remote:
      return "remote";
  }
  fail(ErrorCode::ConfigError, "unhandled backend kind");
}

BackendKind backend_kind_from_name(const std::string& name) {
  if (name == "simulated") return BackendKind::Simulated;
  if (name == "remote") return BackendKind::Remote;
  fail(ErrorCode::ConfigError,
       "backend must be 'simulated' or 'remote', got '" + name + "'");
}

void RunConfig::validate() const {
  require_exists(dataset_path, "dataset");
  require_exists(workflow_path, "workflow");
  if (backend == BackendKind::Simulated) {
    require_exists(simworld_path, "simworld");
  } else {
    if (remote.base_url.empty()) {
      fail(ErrorCode::ConfigError, "remote backend needs remote.base_url");
    }
  }
  if (diagnoser != "rule_based" && diagnoser != "llm") {
    fail(ErrorCode::ConfigError,
         "diagnoser must be 'rule_based' or 'llm', got '" + diagnoser + "'");
  }
  if (proposer != "rule_based" && proposer != "llm") {
    fail(ErrorCode::ConfigError,
         "proposer must be 'rule_based' or 'llm', got '" + proposer + "'");
  }
  if ((diagnoser == "llm" || proposer == "llm") && remote.base_url.empty()) {
    fail(ErrorCode::ConfigError,
         "llm diagnoser/proposer needs remote.base_url");
  }
  const double ratio_sum = split_ratios[0] + split_ratios[1] + split_ratios[2];
  if (std::abs(ratio_sum - 1.0) > 1e-9) {
    fail(ErrorCode::ConfigError, "split ratios must sum to 1");
  }
  for (double r : split_ratios) {
    if (r < 0.0) fail(ErrorCode::ConfigError, "split ratios must be >= 0");
  }
  hyperparams.validate();
}

std::string RunConfig::to_json_string(int indent) const {
  ordered_json doc;
  doc["dataset"] = dataset_path.string();
  doc["workflow"] = workflow_path.string();
  doc["backend"] = backend_kind_name(backend);
  doc["simworld"] = simworld_path.string();
  doc["remote"] = {{"base_url", remote.base_url},
                   {"path", remote.path},
                   {"model", remote.model},
                   {"temperature", remote.temperature},
                   {"auth_env", remote.auth_env},
                   {"timeout_ms", remote.timeout_ms},
                   {"max_in_flight", remote.max_in_flight}};
  doc["out_dir"] = out_dir.string();
  doc["seed"] = seed;
  doc["split"] = {{"train", split_ratios[0]},
                  {"validation", split_ratios[1]},
                  {"test", split_ratios[2]},
                  {"use_dataset_splits", use_dataset_splits}};
  doc["operators"] = operator_names;
  doc["diagnoser"] = diagnoser;
  doc["proposer"] = proposer;
  doc["verify"] = {{"numeric", verify.numeric},
                   {"numeric_tolerance", verify.numeric_tolerance}};
  doc["hyperparams"] = {
      {"n_candidates", hyperparams.n_candidates},
      {"k_samples", hyperparams.k_samples},
      {"convergence_window", hyperparams.convergence_window},
      {"convergence_tolerance", hyperparams.convergence_tolerance},
      {"max_rounds", hyperparams.max_rounds},
      {"embedding_dim", hyperparams.embedding_dim},
      {"embedder_salt", hyperparams.embedder_salt},
      {"gmm_k_min", hyperparams.gmm_k_min},
      {"gmm_k_max", hyperparams.gmm_k_max},
      {"confidence_floor", hyperparams.confidence_floor},
      {"struct_weight", hyperparams.struct_weight},
      {"stopping_enabled", hyperparams.stopping_enabled}};
  return indent < 0 ? doc.dump() : doc.dump(indent);
}

RunConfig RunConfig::from_json_string(const std::string& text,
                                      const std::filesystem::path& base_dir) {
  ordered_json doc;
  try {
    doc = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError, std::string("config is not valid JSON: ") +
                                     e.what());
  }
  if (!doc.is_object()) {
    fail(ErrorCode::ConfigError, "config root must be a JSON object");
  }

  RunConfig config;
  try {
    if (doc.contains("dataset")) {
      config.dataset_path =
          resolve(base_dir, doc.at("dataset").get<std::string>());
    }
    if (doc.contains("workflow")) {
      config.workflow_path =
          resolve(base_dir, doc.at("workflow").get<std::string>());
    }
    if (doc.contains("backend")) {
      config.backend =
          backend_kind_from_name(doc.at("backend").get<std::string>());
    }
    if (doc.contains("simworld")) {
      config.simworld_path =
          resolve(base_dir, doc.at("simworld").get<std::string>());
    }
    if (doc.contains("remote")) {
      const auto& r = doc.at("remote");
      if (r.contains("base_url"))
        config.remote.base_url = r.at("base_url").get<std::string>();
      if (r.contains("path")) config.remote.path = r.at("path").get<std::string>();
      if (r.contains("model"))
        config.remote.model = r.at("model").get<std::string>();
      if (r.contains("temperature"))
        config.remote.temperature = r.at("temperature").get<double>();
      if (r.contains("auth_env"))
        config.remote.auth_env = r.at("auth_env").get<std::string>();
      if (r.contains("timeout_ms"))
        config.remote.timeout_ms = r.at("timeout_ms").get<int>();
      if (r.contains("max_in_flight"))
        config.remote.max_in_flight = r.at("max_in_flight").get<int>();
    }
    if (doc.contains("out_dir")) {
      config.out_dir = resolve(base_dir, doc.at("out_dir").get<std::string>());
    }
    if (doc.contains("seed")) config.seed = doc.at("seed").get<uint64_t>();
    if (doc.contains("split")) {
      const auto& s = doc.at("split");
      if (s.contains("train"))
        config.split_ratios[0] = s.at("train").get<double>();
      if (s.contains("validation"))
        config.split_ratios[1] = s.at("validation").get<double>();
      if (s.contains("test")) config.split_ratios[2] = s.at("test").get<double>();
      if (s.contains("use_dataset_splits"))
        config.use_dataset_splits = s.at("use_dataset_splits").get<bool>();
    }
    if (doc.contains("operators")) {
      config.operator_names =
          doc.at("operators").get<std::vector<std::string>>();
    }
    if (doc.contains("diagnoser"))
      config.diagnoser = doc.at("diagnoser").get<std::string>();
    if (doc.contains("proposer"))
      config.proposer = doc.at("proposer").get<std::string>();
    if (doc.contains("verify")) {
      const auto& v = doc.at("verify");
      if (v.contains("numeric")) config.verify.numeric = v.at("numeric").get<bool>();
      if (v.contains("numeric_tolerance"))
        config.verify.numeric_tolerance =
            v.at("numeric_tolerance").get<double>();
    }
    if (doc.contains("hyperparams")) {
      const auto& h = doc.at("hyperparams");
      Hyperparams& hp = config.hyperparams;
      if (h.contains("n_candidates"))
        hp.n_candidates = h.at("n_candidates").get<size_t>();
      if (h.contains("k_samples"))
        hp.k_samples = h.at("k_samples").get<size_t>();
      if (h.contains("convergence_window"))
        hp.convergence_window = h.at("convergence_window").get<size_t>();
      if (h.contains("convergence_tolerance"))
        hp.convergence_tolerance = h.at("convergence_tolerance").get<double>();
      if (h.contains("max_rounds"))
        hp.max_rounds = h.at("max_rounds").get<size_t>();
      if (h.contains("embedding_dim"))
        hp.embedding_dim = h.at("embedding_dim").get<size_t>();
      if (h.contains("embedder_salt"))
        hp.embedder_salt = h.at("embedder_salt").get<uint64_t>();
      if (h.contains("gmm_k_min"))
        hp.gmm_k_min = h.at("gmm_k_min").get<size_t>();
      if (h.contains("gmm_k_max"))
        hp.gmm_k_max = h.at("gmm_k_max").get<size_t>();
      if (h.contains("confidence_floor"))
        hp.confidence_floor = h.at("confidence_floor").get<double>();
      if (h.contains("struct_weight"))
        hp.struct_weight = h.at("struct_weight").get<double>();
      if (h.contains("stopping_enabled"))
        hp.stopping_enabled = h.at("stopping_enabled").get<bool>();
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::ConfigError,
         std::string("config field has the wrong type: ") + e.what());
  }
  config.hyperparams.master_seed = config.seed;
  return config;
}

RunConfig RunConfig::from_json_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to read");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return from_json_string(buffer.str(), path.parent_path());
}

}  // namespace wfopt
