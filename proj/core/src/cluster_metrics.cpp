#include "wfopt/cluster_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>

#include "wfopt/errors.hpp"

namespace wfopt {

namespace {

double distance(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    s += d * d;
  }
  return std::sqrt(s);
}

}  // namespace

ClusterQuality cluster_quality(const std::vector<std::vector<double>>& points,
                               const std::vector<int>& labels) {
  if (points.size() != labels.size()) {
    fail(ErrorCode::DimensionMismatch, "points/labels size mismatch");
  }
  ClusterQuality q;
  std::set<int> distinct(labels.begin(), labels.end());
  if (points.empty() || distinct.size() < 2) {
    q.silhouette = std::numeric_limits<double>::quiet_NaN();
    q.davies_bouldin = std::numeric_limits<double>::quiet_NaN();
    return q;
  }
  size_t n = points.size();

  std::map<int, std::vector<size_t>> clusters;
  for (size_t i = 0; i < n; ++i) clusters[labels[i]].push_back(i);

  // Silhouette: s_i = (b_i - a_i) / max(a_i, b_i); singleton clusters
  // contribute 0.
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const auto& own = clusters[labels[i]];
    if (own.size() == 1) continue;
    double a = 0.0;
    for (size_t j : own) {
      if (j != i) a += distance(points[i], points[j]);
    }
    a /= static_cast<double>(own.size() - 1);
    double b = std::numeric_limits<double>::infinity();
    for (const auto& [label, rows] : clusters) {
      if (label == labels[i]) continue;
      double mean = 0.0;
      for (size_t j : rows) mean += distance(points[i], points[j]);
      mean /= static_cast<double>(rows.size());
      b = std::min(b, mean);
    }
    double denom = std::max(a, b);
    if (denom > 0.0) total += (b - a) / denom;
  }
  q.silhouette = total / static_cast<double>(n);

  // Davies-Bouldin: mean over clusters of the worst (S_i + S_j) / d(c_i, c_j).
  std::map<int, std::vector<double>> centroids;
  std::map<int, double> scatter;
  size_t dim = points.front().size();
  for (const auto& [label, rows] : clusters) {
    std::vector<double> c(dim, 0.0);
    for (size_t i : rows) {
      for (size_t j = 0; j < dim; ++j) c[j] += points[i][j];
    }
    for (size_t j = 0; j < dim; ++j) c[j] /= static_cast<double>(rows.size());
    double s = 0.0;
    for (size_t i : rows) s += distance(points[i], c);
    scatter[label] = s / static_cast<double>(rows.size());
    centroids[label] = std::move(c);
  }
  double db = 0.0;
  for (const auto& [li, ci] : centroids) {
    double worst = 0.0;
    for (const auto& [lj, cj] : centroids) {
      if (li == lj) continue;
      double sep = distance(ci, cj);
      if (sep <= 0.0) {
        worst = std::numeric_limits<double>::infinity();
        continue;
      }
      worst = std::max(worst, (scatter.at(li) + scatter.at(lj)) / sep);
    }
    db += worst;
  }
  q.davies_bouldin = db / static_cast<double>(centroids.size());
  return q;
}

double adjusted_rand_index(const std::vector<int>& a,
                           const std::vector<int>& b) {
  if (a.size() != b.size()) {
    fail(ErrorCode::DimensionMismatch, "labelings differ in length");
  }
  if (a.empty()) fail(ErrorCode::InsufficientData, "empty labelings");
  auto choose2 = [](double m) { return m * (m - 1.0) / 2.0; };

  std::map<std::pair<int, int>, size_t> table;
  std::map<int, size_t> rows, cols;
  for (size_t i = 0; i < a.size(); ++i) {
    ++table[{a[i], b[i]}];
    ++rows[a[i]];
    ++cols[b[i]];
  }
  double sum_ij = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [key, count] : table) {
    sum_ij += choose2(static_cast<double>(count));
  }
  for (const auto& [label, count] : rows) {
    sum_a += choose2(static_cast<double>(count));
  }
  for (const auto& [label, count] : cols) {
    sum_b += choose2(static_cast<double>(count));
  }
  double pairs = choose2(static_cast<double>(a.size()));
  double expected = sum_a * sum_b / pairs;
  double maximum = 0.5 * (sum_a + sum_b);
  if (std::abs(maximum - expected) < 1e-300) {
    return 1.0;  // both labelings are single clusters (or equivalent)
  }
  return (sum_ij - expected) / (maximum - expected);
}

}  // namespace wfopt
