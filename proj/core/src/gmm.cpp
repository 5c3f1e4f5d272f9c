#include "wfopt/gmm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>

#include "json.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

namespace {

double squared_distance(const std::vector<double>& a,
                        const std::vector<double>& b) {
  double s = 0.0;
  for (size_t j = 0; j < a.size(); ++j) {
    double d = a[j] - b[j];
    s += d * d;
  }
  return s;
}

// log N(x | mean, diag(vars)).
double log_density(const std::vector<double>& x, const GaussianComponent& c) {
  double acc = 0.0;
  for (size_t j = 0; j < x.size(); ++j) {
    double d = x[j] - c.mean[j];
    acc += -0.5 * std::log(2.0 * std::numbers::pi * c.variances[j]) -
           d * d / (2.0 * c.variances[j]);
  }
  return acc;
}

double log_sum_exp(const std::vector<double>& xs) {
  double m = -std::numeric_limits<double>::infinity();
  for (double x : xs) m = std::max(m, x);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - m);
  return m + std::log(s);
}

// k-means++-style seeding: first center uniform, then proportional to the
// squared distance to the nearest chosen center.
std::vector<size_t> seed_centers(const std::vector<std::vector<double>>& pts,
                                 size_t k, Rng& rng) {
  std::vector<size_t> centers;
  centers.push_back(static_cast<size_t>(rng.uniform_index(pts.size())));
  std::vector<double> d2(pts.size());
  while (centers.size() < k) {
    double total = 0.0;
    for (size_t i = 0; i < pts.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (size_t c : centers) {
        best = std::min(best, squared_distance(pts[i], pts[c]));
      }
      d2[i] = best;
      total += best;
    }
    size_t pick;
    if (total <= 0.0) {
      pick = static_cast<size_t>(rng.uniform_index(pts.size()));
    } else {
      double r = rng.uniform() * total;
      double acc = 0.0;
      pick = pts.size() - 1;
      for (size_t i = 0; i < pts.size(); ++i) {
        acc += d2[i];
        if (r < acc) {
          pick = i;
          break;
        }
      }
    }
    centers.push_back(pick);
  }
  return centers;
}

}  // namespace

GaussianMixture fit_gmm_k(const std::vector<std::vector<double>>& points,
                          size_t k, const GmmFitOptions& options,
                          uint64_t seed) {
  size_t n = points.size();
  if (n == 0) fail(ErrorCode::InsufficientData, "no points");
  if (k == 0 || k > n) {
    fail(ErrorCode::InsufficientData,
         "k=" + std::to_string(k) + " infeasible for n=" + std::to_string(n));
  }
  size_t d = points.front().size();
  for (const auto& p : points) {
    if (p.size() != d) fail(ErrorCode::DimensionMismatch, "ragged point set");
  }

  Rng rng(mix_seed(seed, "gmm_init"));
  std::vector<size_t> centers = seed_centers(points, k, rng);

  GaussianMixture model;
  model.dimension = d;
  model.components.resize(k);

  // Hard assignment to the nearest seed center gives the initial M-step.
  std::vector<size_t> assign(n);
  for (size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    size_t arg = 0;
    for (size_t c = 0; c < k; ++c) {
      double dist = squared_distance(points[i], points[centers[c]]);
      if (dist < best) {
        best = dist;
        arg = c;
      }
    }
    assign[i] = arg;
  }
  for (size_t c = 0; c < k; ++c) {
    GaussianComponent& comp = model.components[c];
    comp.mean.assign(d, 0.0);
    comp.variances.assign(d, 0.0);
    size_t count = 0;
    for (size_t i = 0; i < n; ++i) {
      if (assign[i] != c) continue;
      ++count;
      for (size_t j = 0; j < d; ++j) comp.mean[j] += points[i][j];
    }
    if (count == 0) {
      // Empty seed cluster: park the component on its seed point.
      comp.mean = points[centers[c]];
      comp.variances.assign(d, options.variance_floor);
      comp.weight = 1.0 / static_cast<double>(n);
      continue;
    }
    for (size_t j = 0; j < d; ++j) comp.mean[j] /= static_cast<double>(count);
    for (size_t i = 0; i < n; ++i) {
      if (assign[i] != c) continue;
      for (size_t j = 0; j < d; ++j) {
        double diff = points[i][j] - comp.mean[j];
        comp.variances[j] += diff * diff;
      }
    }
    for (size_t j = 0; j < d; ++j) {
      comp.variances[j] = std::max(
          comp.variances[j] / static_cast<double>(count), options.variance_floor);
    }
    comp.weight = static_cast<double>(count) / static_cast<double>(n);
  }
  {
    double wsum = 0.0;
    for (const auto& c : model.components) wsum += c.weight;
    for (auto& c : model.components) c.weight /= wsum;
  }

  // EM until the log-likelihood stabilizes.
  std::vector<std::vector<double>> resp(n, std::vector<double>(k, 0.0));
  double prev_ll = -std::numeric_limits<double>::infinity();
  for (size_t iter = 0; iter < options.max_iterations; ++iter) {
    // E step.
    double ll = 0.0;
    std::vector<double> logp(k);
    for (size_t i = 0; i < n; ++i) {
      for (size_t c = 0; c < k; ++c) {
        logp[c] =
            std::log(model.components[c].weight) + log_density(points[i], model.components[c]);
      }
      double lse = log_sum_exp(logp);
      ll += lse;
      for (size_t c = 0; c < k; ++c) resp[i][c] = std::exp(logp[c] - lse);
    }
    model.log_likelihood = ll;
    if (std::abs(ll - prev_ll) < options.tolerance) break;
    prev_ll = ll;

    // M step.
    for (size_t c = 0; c < k; ++c) {
      GaussianComponent& comp = model.components[c];
      double nk = 0.0;
      for (size_t i = 0; i < n; ++i) nk += resp[i][c];
      if (nk < 1e-12) {
        comp.weight = 1e-12;
        continue;
      }
      comp.weight = nk / static_cast<double>(n);
      for (size_t j = 0; j < d; ++j) comp.mean[j] = 0.0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) comp.mean[j] += resp[i][c] * points[i][j];
      }
      for (size_t j = 0; j < d; ++j) comp.mean[j] /= nk;
      for (size_t j = 0; j < d; ++j) comp.variances[j] = 0.0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t j = 0; j < d; ++j) {
          double diff = points[i][j] - comp.mean[j];
          comp.variances[j] += resp[i][c] * diff * diff;
        }
      }
      for (size_t j = 0; j < d; ++j) {
        comp.variances[j] = std::max(comp.variances[j] / nk, options.variance_floor);
      }
    }
    double wsum = 0.0;
    for (const auto& c : model.components) wsum += c.weight;
    for (auto& c : model.components) c.weight /= wsum;
  }

  // BIC with p = k means + k variances (d each) + (k - 1) free weights.
  double p = static_cast<double>(k * 2 * d + (k - 1));
  model.bic = -2.0 * model.log_likelihood +
              p * std::log(static_cast<double>(n));
  return model;
}

GaussianMixture fit_gmm(const std::vector<std::vector<double>>& points,
                        const GmmFitOptions& options, uint64_t seed) {
  if (points.size() < 2) {
    fail(ErrorCode::InsufficientData, "fit_gmm needs at least 2 points");
  }
  if (options.k_min == 0 || options.k_min > options.k_max) {
    fail(ErrorCode::ConfigError, "bad k range");
  }
  size_t k_hi = std::min(options.k_max, points.size());
  GaussianMixture best;
  bool have = false;
  for (size_t k = options.k_min; k <= k_hi; ++k) {
    GaussianMixture m = fit_gmm_k(points, k, options, mix_seed(seed, "k", k));
    if (!have || m.bic < best.bic) {
      best = std::move(m);
      have = true;
    }
  }
  if (!have) fail(ErrorCode::InsufficientData, "empty k range after clamping");
  return best;
}

std::vector<std::vector<double>> responsibilities(
    const GaussianMixture& model,
    const std::vector<std::vector<double>>& points) {
  size_t k = model.components.size();
  std::vector<std::vector<double>> resp(points.size(),
                                        std::vector<double>(k, 0.0));
  std::vector<double> logp(k);
  for (size_t i = 0; i < points.size(); ++i) {
    if (points[i].size() != model.dimension) {
      fail(ErrorCode::DimensionMismatch, "point dimension != model dimension");
    }
    for (size_t c = 0; c < k; ++c) {
      logp[c] = std::log(model.components[c].weight) +
                log_density(points[i], model.components[c]);
    }
    double lse = log_sum_exp(logp);
    for (size_t c = 0; c < k; ++c) resp[i][c] = std::exp(logp[c] - lse);
  }
  return resp;
}

ModeSelection densest_mode(const GaussianMixture& model,
                           const std::vector<std::vector<double>>& points) {
  if (points.empty()) fail(ErrorCode::InsufficientData, "no points");
  std::vector<std::vector<double>> resp = responsibilities(model, points);
  size_t k = model.components.size();

  ModeSelection sel;
  std::vector<double> soft(k, 0.0);
  for (const auto& row : resp) {
    for (size_t c = 0; c < k; ++c) soft[c] += row[c];
  }
  for (size_t c = 1; c < k; ++c) {
    if (soft[c] > soft[sel.mode_index]) sel.mode_index = c;
  }
  sel.soft_mass = soft[sel.mode_index];
  for (size_t i = 0; i < points.size(); ++i) {
    size_t arg = 0;
    for (size_t c = 1; c < k; ++c) {
      if (resp[i][c] > resp[i][arg]) arg = c;
    }
    if (arg == sel.mode_index) sel.member_rows.push_back(i);
  }
  return sel;
}

namespace {

std::string join_tokens(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ",";
    out += tokens[i];
  }
  return out;
}

std::vector<std::string> top_tokens_of(
    const std::vector<const FailureSignature*>& members, size_t limit) {
  // Frequency descending, ties lexicographic, over all member messages.
  std::map<std::string, size_t> counts;
  for (const FailureSignature* sig : members) {
    for (const std::string& tok : tokenize_message(sig->z_err)) {
      ++counts[tok];
    }
  }
  std::vector<std::pair<std::string, size_t>> items(counts.begin(),
                                                    counts.end());
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  std::vector<std::string> out;
  for (size_t i = 0; i < items.size() && i < limit; ++i) {
    out.push_back(items[i].first);
  }
  return out;
}

}  // namespace

void summarize_mode(ModeSelection& selection,
                    const std::vector<FailureSignature>& signatures,
                    const StructuralRegistry& registry) {
  std::vector<const FailureSignature*> members;
  for (size_t row : selection.member_rows) {
    if (row >= signatures.size()) {
      fail(ErrorCode::DimensionMismatch, "member row out of range");
    }
    members.push_back(&signatures[row]);
  }
  if (members.empty()) {
    selection.modal_node.clear();
    selection.top_tokens.clear();
    selection.summary = "node=; top_tokens=; size=0";
    return;
  }
  // Modal structural index among members; ties to the lower index.
  std::map<size_t, size_t> index_counts;
  for (const FailureSignature* sig : members) ++index_counts[sig->node_index];
  size_t modal_index = index_counts.begin()->first;
  size_t modal_count = 0;
  for (const auto& [idx, count] : index_counts) {
    if (count > modal_count) {
      modal_index = idx;
      modal_count = count;
    }
  }
  if (modal_index >= registry.width()) {
    fail(ErrorCode::DimensionMismatch, "modal index outside registry");
  }
  selection.modal_node = registry.ids()[modal_index];
  selection.top_tokens = top_tokens_of(members, 5);
  selection.summary = "node=" + selection.modal_node +
                      "; top_tokens=" + join_tokens(selection.top_tokens) +
                      "; size=" + std::to_string(members.size());
}

ModeSelection single_signature_mode(const FailureSignature& signature,
                                    const StructuralRegistry& registry) {
  ModeSelection sel;
  sel.mode_index = 0;
  sel.soft_mass = 1.0;
  sel.member_rows = {0};
  summarize_mode(sel, {signature}, registry);
  return sel;
}

std::string GaussianMixture::to_json_string(int indent) const {
  nlohmann::ordered_json doc;
  doc["components"] = nlohmann::ordered_json::array();
  for (const GaussianComponent& c : components) {
    doc["components"].push_back({{"mean", c.mean},
                                 {"variances", c.variances},
                                 {"weight", c.weight}});
  }
  doc["k_fit"] = k_fit();
  doc["loglik"] = log_likelihood;
  doc["bic"] = bic;
  return doc.dump(indent);
}

GaussianMixture GaussianMixture::from_json_string(const std::string& text) {
  GaussianMixture m;
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    for (const auto& jc : doc.at("components")) {
      GaussianComponent c;
      c.mean = jc.at("mean").get<std::vector<double>>();
      c.variances = jc.at("variances").get<std::vector<double>>();
      c.weight = jc.at("weight").get<double>();
      m.components.push_back(std::move(c));
    }
    m.log_likelihood = doc.at("loglik").get<double>();
    m.bic = doc.at("bic").get<double>();
    if (!m.components.empty()) m.dimension = m.components.front().mean.size();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedArgs, std::string("gmm json: ") + e.what());
  }
  return m;
}

}  // namespace wfopt
