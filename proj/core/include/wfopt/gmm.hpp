#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "wfopt/signature.hpp"

namespace wfopt {

struct GaussianComponent {
  std::vector<double> mean;
  std::vector<double> variances;  // diagonal, floored
  double weight = 0.0;
};

struct GaussianMixture {
  std::vector<GaussianComponent> components;
  size_t dimension = 0;
  double log_likelihood = 0.0;  // of the data it was fit on
  double bic = 0.0;
  size_t k_fit() const { return components.size(); }

  std::string to_json_string(int indent = -1) const;
  static GaussianMixture from_json_string(const std::string& text);
};

struct GmmFitOptions {
  size_t k_min = 1;
  size_t k_max = 10;
  double variance_floor = 1e-6;
  size_t max_iterations = 200;
  double tolerance = 1e-6;  // |Δ log-likelihood| stopping threshold
};

// Diagonal-covariance EM for a fixed k, seeded k-means++-style
// initialization. Deterministic in (points, k, options, seed).
GaussianMixture fit_gmm_k(const std::vector<std::vector<double>>& points,
                          size_t k, const GmmFitOptions& options,
                          uint64_t seed);

// Fits every k in [k_min, min(k_max, |points|)] and keeps the lowest-BIC
// model (ties to the smaller k). Requires |points| >= 2.
GaussianMixture fit_gmm(const std::vector<std::vector<double>>& points,
                        const GmmFitOptions& options, uint64_t seed);

// responsibilities[i][k] = p(component k | point i); rows sum to 1.
std::vector<std::vector<double>> responsibilities(
    const GaussianMixture& model,
    const std::vector<std::vector<double>>& points);

// Densest mode b* = argmax_k sum_i p(k | s_i), ties to the lowest index.
struct ModeSelection {
  size_t mode_index = 0;
  double soft_mass = 0.0;            // sum_i p(b* | s_i)
  std::vector<size_t> member_rows;   // hard assignments to b*, input order
  // Filled by summarize_mode:
  NodeId modal_node;
  std::vector<std::string> top_tokens;
  std::string summary;  // "node=<id>; top_tokens=<t1,..,t5>; size=<n>"
};

ModeSelection densest_mode(const GaussianMixture& model,
                           const std::vector<std::vector<double>>& points);

// Resolves the modal structural index back to a node id and the most
// frequent message tokens; fills modal_node/top_tokens/summary.
void summarize_mode(ModeSelection& selection,
                    const std::vector<FailureSignature>& signatures,
                    const StructuralRegistry& registry);

// Mode built directly from a single signature (used when clustering is
// impossible because the pool has fewer than two diagnosed failures).
ModeSelection single_signature_mode(const FailureSignature& signature,
                                    const StructuralRegistry& registry);

}  // namespace wfopt
