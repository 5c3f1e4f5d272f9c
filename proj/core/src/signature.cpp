#include "wfopt/signature.hpp"

#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "json.hpp"
#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

size_t StructuralRegistry::index_of(const NodeId& id) {
  auto it = index_.find(id);
  if (it != index_.end()) return it->second;
  auto t0 = std::chrono::steady_clock::now();
  size_t idx = ids_.size();
  index_.emplace(id, idx);
  ids_.push_back(id);
  auto t1 = std::chrono::steady_clock::now();
  resize_nanos_ += static_cast<uint64_t>(
      std::chrono::duration_cast<std::chrono::nanoseconds>(t1 - t0).count());
  return idx;
}

std::optional<size_t> StructuralRegistry::find(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::string StructuralRegistry::to_json_string(int indent) const {
  nlohmann::ordered_json doc = nlohmann::ordered_json::object();
  for (size_t i = 0; i < ids_.size(); ++i) {
    doc[ids_[i]] = i;
  }
  return doc.dump(indent);
}

StructuralRegistry StructuralRegistry::from_json_string(
    const std::string& text) {
  StructuralRegistry reg;
  try {
    nlohmann::json doc = nlohmann::json::parse(text);
    std::vector<NodeId> by_index(doc.size());
    for (const auto& [id, idx] : doc.items()) {
      size_t i = idx.get<size_t>();
      if (i >= by_index.size()) {
        fail(ErrorCode::MalformedArgs, "registry index out of range");
      }
      by_index[i] = id;
    }
    for (const NodeId& id : by_index) {
      if (id.empty()) fail(ErrorCode::MalformedArgs, "registry has index gaps");
      reg.index_of(id);
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedArgs, std::string("registry json: ") + e.what());
  }
  return reg;
}

std::vector<double> embed_structural(const NodeId& id,
                                     StructuralRegistry& registry) {
  size_t idx = registry.index_of(id);
  std::vector<double> out(registry.width(), 0.0);
  out[idx] = 1.0;
  return out;
}

std::vector<std::string> tokenize_message(const std::string& text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (char raw : text) {
    unsigned char c = static_cast<unsigned char>(raw);
    if (std::isalnum(c)) {
      cur.push_back(static_cast<char>(std::tolower(c)));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  return tokens;
}

HashingEmbedder::HashingEmbedder(size_t dim, uint64_t salt)
    : dim_(dim), salt_(salt) {
  if (dim_ < 8) fail(ErrorCode::ConfigError, "embedding dim must be >= 8");
}

std::vector<double> HashingEmbedder::embed(const std::string& message) const {
  std::vector<std::string> tokens = tokenize_message(message);
  if (tokens.empty()) {
    fail(ErrorCode::EmptyMessage, "no tokens in error message");
  }
  std::vector<double> v(dim_, 0.0);
  for (const std::string& tok : tokens) {
    uint64_t h = splitmix64(fnv1a64(tok) ^ splitmix64(salt_));
    size_t bucket = static_cast<size_t>(h % dim_);
    double sign = ((h >> 62) & 1ULL) ? -1.0 : 1.0;
    v[bucket] += sign;
  }
  double norm_sq = 0.0;
  for (double x : v) norm_sq += x * x;
  if (norm_sq > 0.0) {
    double inv = 1.0 / std::sqrt(norm_sq);
    for (double& x : v) x *= inv;
  } else {
    // Signed counts cancelled exactly; fall back to a deterministic unit
    // vector keyed off the first token so the embedding stays unit-norm.
    uint64_t h = splitmix64(fnv1a64(tokens.front()) ^ splitmix64(salt_ + 1));
    v[h % dim_] = 1.0;
  }
  return v;
}

std::vector<double> embed_semantic(const std::string& message, size_t dim) {
  return HashingEmbedder(dim).embed(message);
}

std::vector<double> FailureSignature::dense(size_t width) const {
  if (node_index >= width) {
    fail(ErrorCode::DimensionMismatch,
         "signature node index " + std::to_string(node_index) +
             " exceeds width " + std::to_string(width));
  }
  std::vector<double> out(width + semantic.size(), 0.0);
  out[node_index] = struct_weight;
  for (size_t i = 0; i < semantic.size(); ++i) out[width + i] = semantic[i];
  return out;
}

bool operator==(const FailureSignature& a, const FailureSignature& b) {
  return a.node_index == b.node_index && a.struct_weight == b.struct_weight &&
         a.semantic == b.semantic;
}

FailureSignature make_signature(const Diagnosis& diagnosis,
                                const std::string& instance_id,
                                StructuralRegistry& registry,
                                const SemanticEmbedder& embedder,
                                double struct_weight) {
  FailureSignature sig;
  sig.instance_id = instance_id;
  sig.v_err = diagnosis.v_err;
  sig.z_err = diagnosis.z_err;
  sig.node_index = registry.index_of(diagnosis.v_err);
  sig.struct_weight = struct_weight;
  sig.semantic = embedder.embed(diagnosis.z_err);
  return sig;
}

std::vector<std::vector<double>> dense_matrix(
    const std::vector<FailureSignature>& signatures, size_t width) {
  std::vector<std::vector<double>> rows;
  rows.reserve(signatures.size());
  for (const FailureSignature& sig : signatures) {
    rows.push_back(sig.dense(width));
  }
  return rows;
}

void write_signature_csv(const std::vector<FailureSignature>& signatures,
                         const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoFailure, "cannot write " + path.string());
  size_t dim = signatures.empty() ? 0 : signatures.front().semantic.size();
  out << "instance_id,node_index";
  for (size_t i = 0; i < dim; ++i) out << ",s" << i;
  out << "\n";
  char buf[64];
  for (const FailureSignature& sig : signatures) {
    out << sig.instance_id << "," << sig.node_index;
    for (double x : sig.semantic) {
      std::snprintf(buf, sizeof buf, "%.17g", x);
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace wfopt
