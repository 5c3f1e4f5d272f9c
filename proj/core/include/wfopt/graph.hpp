#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

namespace wfopt {

enum class NodeKind { PromptStep, ToolCall, VerifyStep, Aggregate };

const char* node_kind_name(NodeKind kind);
NodeKind node_kind_from_name(std::string_view name);  // throws MalformedArgs

using NodeId = std::string;

struct Node {
  NodeId id;
  NodeKind kind = NodeKind::PromptStep;
  std::string prompt;  // non-empty iff kind == PromptStep
  std::map<std::string, std::string> params;
};

bool operator==(const Node& a, const Node& b);

// A directed acyclic workflow with a single entry and a single exit.
//
// Graphs are value types: the edit operators copy, mutate the copy, and
// validate before returning, so a graph that reached a caller always
// satisfies the invariants checked by validate(). Node ids minted by edits
// are never recycled, even after DeleteNode, which keeps one-hot structural
// indices stable over the life of a run.
class WorkflowGraph {
 public:
  WorkflowGraph() = default;

  // Construction phase. validate() must pass before the graph is used.
  void add_node(Node node);
  void add_edge(const NodeId& from, const NodeId& to);
  void remove_edge(const NodeId& from, const NodeId& to);
  void remove_node(const NodeId& id);  // raw removal; caller rewires first
  void set_entry(const NodeId& id) { entry_ = id; }
  void set_exit(const NodeId& id) { exit_ = id; }

  bool has_node(const NodeId& id) const { return index_.count(id) > 0; }
  const Node& node(const NodeId& id) const;  // throws UnknownNode
  Node& mutable_node(const NodeId& id);      // throws UnknownNode
  const std::vector<Node>& nodes() const { return nodes_; }
  const std::set<std::pair<NodeId, NodeId>>& edges() const { return edges_; }
  bool has_edge(const NodeId& from, const NodeId& to) const;
  const NodeId& entry() const { return entry_; }
  const NodeId& exit() const { return exit_; }
  size_t node_count() const { return nodes_.size(); }

  // Neighbors in node insertion order (deterministic).
  std::vector<NodeId> parents(const NodeId& id) const;
  std::vector<NodeId> children(const NodeId& id) const;

  // Kahn topological order with insertion-order tie-breaking. Throws
  // InvalidGraph on a cycle.
  std::vector<NodeId> topological_order() const;

  // True if `to` is reachable from `from` along directed edges.
  bool reaches(const NodeId& from, const NodeId& to) const;

  // Checks every structural invariant: unique non-empty ids, entry/exit
  // present with in-degree 0 / out-degree 0 respectively, acyclicity, every
  // node reachable from entry and reaching exit, edges endpoints present,
  // prompt text present exactly on PromptStep nodes.
  void validate() const;  // throws InvalidGraph / EntryExitViolation

  int version() const { return version_; }
  void bump_version() { ++version_; }

  // Mints a fresh node id ("n<k>"); skips both live and retired ids. The
  // ordinal only grows, so a minted id can never collide with a deleted one
  // within a process run.
  NodeId mint_node_id();

  std::string to_json_string(int indent = -1) const;
  static WorkflowGraph from_json_string(const std::string& text);

 private:
  std::vector<Node> nodes_;  // insertion order, preserved by serialization
  std::unordered_map<NodeId, size_t> index_;
  std::set<std::pair<NodeId, NodeId>> edges_;
  NodeId entry_;
  NodeId exit_;
  int version_ = 0;
  uint64_t next_ordinal_ = 0;
  std::set<NodeId> retired_;
};

// Structural equality: same node set (id, kind, prompt, params), same edge
// set, same entry/exit. Versions and insertion order are ignored.
bool structurally_equal(const WorkflowGraph& a, const WorkflowGraph& b);

}  // namespace wfopt
