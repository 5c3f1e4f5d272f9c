#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "wfopt/diagnosis.hpp"
#include "wfopt/graph.hpp"

namespace wfopt {

// Stable node-id -> one-hot index assignment, first-seen order. Indices are
// never reassigned, so signatures taken early in a run stay comparable after
// the graph (and hence the registry) has grown; older signatures are
// zero-padded on read. Cumulative time spent growing the map is tracked so
// the resize overhead can be measured against total embedding time.
class StructuralRegistry {
 public:
  // Index for id, registering it first if unseen.
  size_t index_of(const NodeId& id);
  std::optional<size_t> find(const NodeId& id) const;
  size_t width() const { return ids_.size(); }
  const std::vector<NodeId>& ids() const { return ids_; }

  uint64_t resize_nanos() const { return resize_nanos_; }

  std::string to_json_string(int indent = -1) const;  // {"node_id": index}
  static StructuralRegistry from_json_string(const std::string& text);

 private:
  std::unordered_map<NodeId, size_t> index_;
  std::vector<NodeId> ids_;
  uint64_t resize_nanos_ = 0;
};

// One-hot vector of the registry's current width (after registering id).
std::vector<double> embed_structural(const NodeId& id,
                                     StructuralRegistry& registry);

// Lowercased alphanumeric tokens of a message, in order.
std::vector<std::string> tokenize_message(const std::string& text);

// Deterministic bag-of-tokens feature hashing: each token lands in bucket
// h % dim with sign read off a high bit of h, counts accumulated, then the
// vector is L2-normalized. Portable across platforms (no std::hash).
class SemanticEmbedder {
 public:
  virtual ~SemanticEmbedder() = default;
  virtual std::vector<double> embed(const std::string& message) const = 0;
  virtual size_t dim() const = 0;
};

class HashingEmbedder final : public SemanticEmbedder {
 public:
  explicit HashingEmbedder(size_t dim = 64, uint64_t salt = 0);
  std::vector<double> embed(const std::string& message) const override;
  size_t dim() const override { return dim_; }
  uint64_t salt() const { return salt_; }

 private:
  size_t dim_;
  uint64_t salt_;
};

std::vector<double> embed_semantic(const std::string& message, size_t dim);

// Failure signature s = (one-hot over nodes) * struct_weight ++ semantic.
// Stored sparse on the structural side; dense(width) materializes the full
// vector against any width >= node_index + 1.
struct FailureSignature {
  std::string instance_id;  // source trace reference
  NodeId v_err;
  std::string z_err;
  size_t node_index = 0;
  double struct_weight = 1.0;
  std::vector<double> semantic;

  std::vector<double> dense(size_t width) const;
};

bool operator==(const FailureSignature& a, const FailureSignature& b);

FailureSignature make_signature(const Diagnosis& diagnosis,
                                const std::string& instance_id,
                                StructuralRegistry& registry,
                                const SemanticEmbedder& embedder,
                                double struct_weight = 1.0);

// Dense matrix over a common width; rows follow the input order.
std::vector<std::vector<double>> dense_matrix(
    const std::vector<FailureSignature>& signatures, size_t width);

// CSV with header instance_id,node_index,s0..s{d-1}.
void write_signature_csv(const std::vector<FailureSignature>& signatures,
                         const std::filesystem::path& path);

}  // namespace wfopt
