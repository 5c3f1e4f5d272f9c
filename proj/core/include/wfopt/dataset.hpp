#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wfopt {

enum class Split { Train, Validation, Test };

const char* split_name(Split split);
Split split_from_name(std::string_view name);  // throws MalformedArgs

struct DatasetInstance {
  std::string id;
  std::string input;
  std::string ground_truth;
  Split split = Split::Train;
  bool fixed_set_flag = false;
};

// JSONL, one instance per line:
//   {"id": ..., "input": ..., "ground_truth": ..., "split": "train",
//    "fixed_set_flag": false}
// split and fixed_set_flag are optional on load.
std::vector<DatasetInstance> load_dataset_jsonl(const std::filesystem::path& p);
void save_dataset_jsonl(const std::vector<DatasetInstance>& instances,
                        const std::filesystem::path& p);

// Seeded shuffle followed by contiguous assignment. Validation and test get
// floor(n * ratio) instances each; the remainder goes to train. The returned
// splits are in the order of `instances`.
std::vector<Split> split_dataset(const std::vector<DatasetInstance>& instances,
                                 const std::array<double, 3>& ratios,
                                 uint64_t seed);

std::vector<DatasetInstance> filter_split(
    const std::vector<DatasetInstance>& instances, Split split);

}  // namespace wfopt
