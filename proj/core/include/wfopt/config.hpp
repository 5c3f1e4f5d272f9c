#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wfopt/execution.hpp"
#include "wfopt/llm_client.hpp"
#include "wfopt/optimizer.hpp"

namespace wfopt {

enum class BackendKind { Simulated, Remote };

std::string backend_kind_name(BackendKind kind);
BackendKind backend_kind_from_name(const std::string& name);

// One JSON file drives a run. Relative paths inside the file resolve
// against the file's own directory.
struct RunConfig {
  std::filesystem::path dataset_path;
  std::filesystem::path workflow_path;
  BackendKind backend = BackendKind::Simulated;
  std::filesystem::path simworld_path;  // simulated backend only
  HttpLlmClientConfig remote;           // remote backend only
  std::filesystem::path out_dir = "wfopt-out";
  uint64_t seed = 0;
  std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
  // True: honor the split field already present on each dataset instance
  // instead of re-splitting.
  bool use_dataset_splits = false;
  std::vector<std::string> operator_names;  // empty selects every builtin
  std::string diagnoser = "rule_based";     // "rule_based" | "llm"
  std::string proposer = "rule_based";      // "rule_based" | "llm"
  VerifyOptions verify;
  Hyperparams hyperparams;

  // Structural checks plus existence of every referenced input path.
  void validate() const;

  std::string to_json_string(int indent = 2) const;
  static RunConfig from_json_string(const std::string& text,
                                    const std::filesystem::path& base_dir = {});
  static RunConfig from_json_file(const std::filesystem::path& path);
};

}  // namespace wfopt
