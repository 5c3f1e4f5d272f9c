#include "wfopt/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

#include <Eigen/Dense>
#include "json.hpp"

#include "wfopt/errors.hpp"

namespace wfopt {

namespace {

using ordered_json = nlohmann::ordered_json;

std::string fmt17(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to write");
  }
  out << text;
  if (!out.good()) {
    fail(ErrorCode::IoFailure, "short write to '" + path.string() + "'");
  }
}

// NaN has no JSON literal; nlohmann would emit it as null, which does not
// survive a typed reload. Encode as null explicitly and decode null back to
// NaN so report round trips are lossless.
ordered_json number_or_null(double x) {
  if (std::isnan(x)) return nullptr;
  return x;
}

double json_number(const ordered_json& j) {
  if (j.is_null()) return std::numeric_limits<double>::quiet_NaN();
  return j.get<double>();
}

}  // namespace

PcaProjection pca_project(const std::vector<std::vector<double>>& rows,
                          size_t dims) {
  if (rows.size() < 2) {
    fail(ErrorCode::InsufficientData, "projection needs at least two rows");
  }
  if (dims < 1) {
    fail(ErrorCode::ConfigError, "projection needs at least one dimension");
  }
  const size_t n = rows.size();
  const size_t d = rows[0].size();
  for (const auto& row : rows) {
    if (row.size() != d) {
      fail(ErrorCode::DimensionMismatch, "projection rows differ in length");
    }
  }
  if (d < dims) {
    fail(ErrorCode::DimensionMismatch,
         "row dimension is smaller than the projection dimension");
  }

  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < d; ++j) {
      x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          rows[i][j];
    }
  }
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    fail(ErrorCode::InsufficientData, "eigendecomposition did not converge");
  }

  PcaProjection projection;
  projection.total_variance = cov.trace();
  Eigen::MatrixXd directions(static_cast<Eigen::Index>(d),
                             static_cast<Eigen::Index>(dims));
  // Eigenvalues come back ascending; take the top `dims` in descending order.
  for (size_t k = 0; k < dims; ++k) {
    const Eigen::Index col = static_cast<Eigen::Index>(d - 1 - k);
    Eigen::VectorXd v = solver.eigenvectors().col(col);
    Eigen::Index pivot = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i) {
      if (std::abs(v(i)) > std::abs(v(pivot))) pivot = i;
    }
    if (v(pivot) < 0.0) v = -v;
    directions.col(static_cast<Eigen::Index>(k)) = v;
    projection.explained.push_back(std::max(0.0, solver.eigenvalues()(col)));
  }
  const Eigen::MatrixXd projected = centered * directions;
  projection.coords.assign(n, std::vector<double>(dims, 0.0));
  for (size_t i = 0; i < n; ++i) {
    for (size_t k = 0; k < dims; ++k) {
      projection.coords[i][k] = projected(static_cast<Eigen::Index>(i),
                                          static_cast<Eigen::Index>(k));
    }
  }
  return projection;
}

RunReport report_from_state(const OptimizationState& state) {
  RunReport report;
  report.stop_reason = state.stop_reason;
  report.rounds = state.history;
  report.final_scores = {state.final_train_score, state.final_validation_score,
                         state.final_test_score};
  report.e0_trajectory = state.e0_trajectory;
  report.cost_units = state.cost_units;
  return report;
}

void write_run_report(const RunReport& report,
                      const std::filesystem::path& path) {
  ordered_json doc;
  doc["schema_version"] = report.schema_version;
  doc["stop_reason"] = report.stop_reason;
  doc["rounds"] = ordered_json::array();
  for (const auto& r : report.rounds) {
    ordered_json jr;
    jr["round"] = r.round;
    jr["mode_summary"] = r.mode_summary;
    jr["edit"] = {{"operator", r.chosen_edit.operator_name},
                  {"args", r.chosen_edit.args}};
    jr["utility"] = number_or_null(r.chosen_utility);
    jr["verification_samples"] = r.verification_samples;
    jr["pool_size"] = r.pool_size;
    jr["undiagnosable_count"] = r.undiagnosable_count;
    jr["signature_count"] = r.signature_count;
    jr["k_fit"] = r.k_fit;
    jr["gmm_loglik"] = number_or_null(r.gmm_loglik);
    jr["gmm_bic"] = number_or_null(r.gmm_bic);
    jr["silhouette"] = number_or_null(r.silhouette);
    jr["davies_bouldin"] = number_or_null(r.davies_bouldin);
    jr["mode_soft_mass"] = number_or_null(r.mode_soft_mass);
    jr["validation_score"] = number_or_null(r.validation_score);
    jr["e0_accuracy"] = number_or_null(r.e0_accuracy);
    jr["e0_hash"] = r.e0_hash;
    jr["cost_units"] = r.cost_units;
    doc["rounds"].push_back(std::move(jr));
  }
  doc["final_scores"] = {{"train", number_or_null(report.final_scores.train)},
                         {"validation",
                          number_or_null(report.final_scores.validation)},
                         {"test", number_or_null(report.final_scores.test)}};
  doc["e0_trajectory"] = ordered_json::array();
  for (double v : report.e0_trajectory) {
    doc["e0_trajectory"].push_back(number_or_null(v));
  }
  doc["cost_units"] = report.cost_units;
  write_text_file(path, doc.dump(2) + "\n");
}

RunReport load_run_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    fail(ErrorCode::IoFailure, "cannot open '" + path.string() + "' to read");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  ordered_json doc;
  try {
    doc = ordered_json::parse(buffer.str());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoFailure,
         "bad report '" + path.string() + "': " + e.what());
  }
  RunReport report;
  try {
    report.schema_version = doc.at("schema_version").get<int>();
    report.stop_reason = doc.at("stop_reason").get<std::string>();
    for (const auto& jr : doc.at("rounds")) {
      RoundRecord r;
      r.round = jr.at("round").get<size_t>();
      r.mode_summary = jr.at("mode_summary").get<std::string>();
      r.chosen_edit.operator_name =
          jr.at("edit").at("operator").get<std::string>();
      r.chosen_edit.args =
          jr.at("edit").at("args").get<std::vector<std::string>>();
      r.chosen_utility = json_number(jr.at("utility"));
      r.verification_samples = jr.at("verification_samples").get<size_t>();
      r.pool_size = jr.at("pool_size").get<size_t>();
      r.undiagnosable_count = jr.at("undiagnosable_count").get<size_t>();
      r.signature_count = jr.at("signature_count").get<size_t>();
      r.k_fit = jr.at("k_fit").get<size_t>();
      r.gmm_loglik = json_number(jr.at("gmm_loglik"));
      r.gmm_bic = json_number(jr.at("gmm_bic"));
      r.silhouette = json_number(jr.at("silhouette"));
      r.davies_bouldin = json_number(jr.at("davies_bouldin"));
      r.mode_soft_mass = json_number(jr.at("mode_soft_mass"));
      r.validation_score = json_number(jr.at("validation_score"));
      r.e0_accuracy = json_number(jr.at("e0_accuracy"));
      r.e0_hash = jr.at("e0_hash").get<uint64_t>();
      r.cost_units = jr.at("cost_units").get<uint64_t>();
      report.rounds.push_back(std::move(r));
    }
    report.final_scores.train = json_number(doc.at("final_scores").at("train"));
    report.final_scores.validation =
        json_number(doc.at("final_scores").at("validation"));
    report.final_scores.test = json_number(doc.at("final_scores").at("test"));
    for (const auto& v : doc.at("e0_trajectory")) {
      report.e0_trajectory.push_back(json_number(v));
    }
    report.cost_units = doc.at("cost_units").get<uint64_t>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::IoFailure,
         "report '" + path.string() + "' is missing fields: " + e.what());
  }
  return report;
}

void emit_report(const OptimizationState& state,
                 const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) {
    fail(ErrorCode::IoFailure,
         "cannot create '" + out_dir.string() + "': " + ec.message());
  }

  write_run_report(report_from_state(state), out_dir / "run_report.json");

  {
    std::string csv = "round,accuracy\n";
    for (size_t i = 0; i < state.e0_trajectory.size(); ++i) {
      csv += std::to_string(i) + "," + fmt17(state.e0_trajectory[i]) + "\n";
    }
    write_text_file(out_dir / "e0_trajectory.csv", csv);
  }

  {
    std::string csv =
        "round,k_fit,loglik,bic,silhouette,davies_bouldin,mode_soft_mass\n";
    for (const auto& r : state.history) {
      csv += std::to_string(r.round) + "," + std::to_string(r.k_fit) + "," +
             fmt17(r.gmm_loglik) + "," + fmt17(r.gmm_bic) + "," +
             fmt17(r.silhouette) + "," + fmt17(r.davies_bouldin) + "," +
             fmt17(r.mode_soft_mass) + "\n";
    }
    write_text_file(out_dir / "cluster_metrics.csv", csv);
  }

  write_signature_csv(state.signatures, out_dir / "signatures.csv");
  write_text_file(out_dir / "registry.json",
                  state.registry.to_json_string(2) + "\n");

  {
    std::string csv = "instance_id,x,y\n";
    if (state.signatures.size() >= 2) {
      auto rows = dense_matrix(state.signatures, state.registry.width());
      PcaProjection projection = pca_project(rows, 2);
      for (size_t i = 0; i < state.signatures.size(); ++i) {
        csv += state.signatures[i].instance_id + "," +
               fmt17(projection.coords[i][0]) + "," +
               fmt17(projection.coords[i][1]) + "\n";
      }
    }
    write_text_file(out_dir / "pca.csv", csv);
  }
}

}  // namespace wfopt
