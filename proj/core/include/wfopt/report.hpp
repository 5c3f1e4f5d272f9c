#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wfopt/optimizer.hpp"

namespace wfopt {

// Mean-centered projection onto the top principal directions. Sign
// convention: each direction is flipped so its largest-magnitude entry
// (first such entry on ties) is positive, making the output reproducible.
struct PcaProjection {
  std::vector<std::vector<double>> coords;  // one row per input row
  std::vector<double> explained;            // top eigenvalues, descending
  double total_variance = 0.0;              // trace of the covariance
};

// Population-covariance eigendecomposition; rank-deficient data simply gets
// zero coordinates along the missing directions. Requires at least 2 rows
// and row dimension >= dims.
PcaProjection pca_project(const std::vector<std::vector<double>>& rows,
                          size_t dims = 2);

struct FinalScores {
  double train = 0.0;
  double validation = 0.0;
  double test = 0.0;
};

struct RunReport {
  int schema_version = 1;
  std::string stop_reason;
  std::vector<RoundRecord> rounds;
  FinalScores final_scores;
  std::vector<double> e0_trajectory;
  uint64_t cost_units = 0;
};

RunReport report_from_state(const OptimizationState& state);

void write_run_report(const RunReport& report,
                      const std::filesystem::path& path);
RunReport load_run_report(const std::filesystem::path& path);

// Writes the full artifact set into out_dir: run_report.json,
// e0_trajectory.csv, cluster_metrics.csv, signatures.csv, registry.json,
// pca.csv. Rewriting from the same state is byte-identical.
void emit_report(const OptimizationState& state,
                 const std::filesystem::path& out_dir);

}  // namespace wfopt
