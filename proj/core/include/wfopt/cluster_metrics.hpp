#pragma once

#include <vector>

namespace wfopt {

// Internal quality metrics computed with Euclidean distances. Both come back
// NaN when fewer than two clusters are present (degenerate cases are
// reported, not thrown).
struct ClusterQuality {
  double silhouette = 0.0;
  double davies_bouldin = 0.0;
};

ClusterQuality cluster_quality(const std::vector<std::vector<double>>& points,
                               const std::vector<int>& labels);

// Adjusted Rand index between two labelings of the same points. Two
// identical single-cluster labelings score 1.
double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b);

}  // namespace wfopt
