#include "wfopt/dataset.hpp"

#include <cmath>
#include <fstream>

#include "json.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

const char* split_name(Split split) {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "train";
}

Split split_from_name(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "validation") return Split::Validation;
  if (name == "test") return Split::Test;
  fail(ErrorCode::MalformedArgs, "unknown split '" + std::string(name) + "'");
}

std::vector<DatasetInstance> load_dataset_jsonl(
    const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorCode::IoFailure, "cannot open dataset " + p.string());
  std::vector<DatasetInstance> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(line);
      DatasetInstance inst;
      inst.id = doc.at("id").get<std::string>();
      inst.input = doc.at("input").get<std::string>();
      inst.ground_truth = doc.at("ground_truth").get<std::string>();
      if (doc.contains("split")) {
        inst.split = split_from_name(doc.at("split").get<std::string>());
      }
      inst.fixed_set_flag = doc.value("fixed_set_flag", false);
      out.push_back(std::move(inst));
    } catch (const nlohmann::json::exception& e) {
      fail(ErrorCode::IoFailure, p.string() + ":" + std::to_string(lineno) +
                                     ": " + e.what());
    }
  }
  return out;
}

void save_dataset_jsonl(const std::vector<DatasetInstance>& instances,
                        const std::filesystem::path& p) {
  std::ofstream out(p);
  if (!out) fail(ErrorCode::IoFailure, "cannot write dataset " + p.string());
  for (const DatasetInstance& inst : instances) {
    nlohmann::ordered_json doc;
    doc["id"] = inst.id;
    doc["input"] = inst.input;
    doc["ground_truth"] = inst.ground_truth;
    doc["split"] = split_name(inst.split);
    doc["fixed_set_flag"] = inst.fixed_set_flag;
    out << doc.dump() << "\n";
  }
}

std::vector<Split> split_dataset(const std::vector<DatasetInstance>& instances,
                                 const std::array<double, 3>& ratios,
                                 uint64_t seed) {
  size_t n = instances.size();
  if (n == 0) fail(ErrorCode::EmptyDataset, "no instances to split");
  for (double r : ratios) {
    if (r < 0.0 || r > 1.0) {
      fail(ErrorCode::ConfigError, "split ratio outside [0, 1]");
    }
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) {
    fail(ErrorCode::ConfigError, "split ratios must sum to 1");
  }

  size_t n_val = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios[1]));
  size_t n_test = static_cast<size_t>(std::floor(static_cast<double>(n) * ratios[2]));
  size_t n_train = n - n_val - n_test;  // remainder goes to train

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(mix_seed(seed, "split_dataset"));
  shuffle_in_place(order, rng);

  std::vector<Split> splits(n, Split::Train);
  for (size_t pos = 0; pos < n; ++pos) {
    Split s = pos < n_train                ? Split::Train
              : pos < n_train + n_val      ? Split::Validation
                                           : Split::Test;
    splits[order[pos]] = s;
  }
  return splits;
}

std::vector<DatasetInstance> filter_split(
    const std::vector<DatasetInstance>& instances, Split split) {
  std::vector<DatasetInstance> out;
  for (const DatasetInstance& inst : instances) {
    if (inst.split == split) out.push_back(inst);
  }
  return out;
}

}  // namespace wfopt
