#include "wfopt/graph.hpp"

#include <algorithm>
#include <cctype>
#include <deque>

#include "json.hpp"
#include "wfopt/errors.hpp"

namespace wfopt {

const char* node_kind_name(NodeKind kind) {
  switch (kind) {
    case NodeKind::PromptStep: return "PromptStep";
    case NodeKind::ToolCall: return "ToolCall";
    case NodeKind::VerifyStep: return "VerifyStep";
    case NodeKind::Aggregate: return "Aggregate";
  }
  return "PromptStep";
}

NodeKind node_kind_from_name(std::string_view name) {
  if (name == "PromptStep") return NodeKind::PromptStep;
  if (name == "ToolCall") return NodeKind::ToolCall;
  if (name == "VerifyStep") return NodeKind::VerifyStep;
  if (name == "Aggregate") return NodeKind::Aggregate;
  fail(ErrorCode::MalformedArgs, "unknown node kind '" + std::string(name) + "'");
}

bool operator==(const Node& a, const Node& b) {
  return a.id == b.id && a.kind == b.kind && a.prompt == b.prompt &&
         a.params == b.params;
}

void WorkflowGraph::add_node(Node node) {
  if (node.id.empty()) fail(ErrorCode::InvalidGraph, "node id is empty");
  if (has_node(node.id)) {
    fail(ErrorCode::InvalidGraph, "duplicate node id '" + node.id + "'");
  }
  index_[node.id] = nodes_.size();
  nodes_.push_back(std::move(node));
}

void WorkflowGraph::add_edge(const NodeId& from, const NodeId& to) {
  if (!has_node(from)) fail(ErrorCode::UnknownNode, "edge source '" + from + "'");
  if (!has_node(to)) fail(ErrorCode::UnknownNode, "edge target '" + to + "'");
  edges_.emplace(from, to);
}

void WorkflowGraph::remove_edge(const NodeId& from, const NodeId& to) {
  edges_.erase({from, to});
}

void WorkflowGraph::remove_node(const NodeId& id) {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorCode::UnknownNode, "'" + id + "'");
  size_t pos = it->second;
  nodes_.erase(nodes_.begin() + static_cast<ptrdiff_t>(pos));
  index_.erase(it);
  for (auto& [node_id, idx] : index_) {
    if (idx > pos) --idx;
  }
  for (auto e = edges_.begin(); e != edges_.end();) {
    if (e->first == id || e->second == id) {
      e = edges_.erase(e);
    } else {
      ++e;
    }
  }
  retired_.insert(id);
}

const Node& WorkflowGraph::node(const NodeId& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorCode::UnknownNode, "'" + id + "'");
  return nodes_[it->second];
}

Node& WorkflowGraph::mutable_node(const NodeId& id) {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorCode::UnknownNode, "'" + id + "'");
  return nodes_[it->second];
}

bool WorkflowGraph::has_edge(const NodeId& from, const NodeId& to) const {
  return edges_.count({from, to}) > 0;
}

std::vector<NodeId> WorkflowGraph::parents(const NodeId& id) const {
  std::vector<NodeId> out;
  for (const auto& [from, to] : edges_) {
    if (to == id) out.push_back(from);
  }
  // The edge set is ordered by id; callers are promised insertion order.
  std::sort(out.begin(), out.end(), [this](const NodeId& a, const NodeId& b) {
    return index_.at(a) < index_.at(b);
  });
  return out;
}

std::vector<NodeId> WorkflowGraph::children(const NodeId& id) const {
  std::vector<NodeId> out;
  for (auto it = edges_.lower_bound({id, NodeId()});
       it != edges_.end() && it->first == id; ++it) {
    out.push_back(it->second);
  }
  std::sort(out.begin(), out.end(), [this](const NodeId& a, const NodeId& b) {
    return index_.at(a) < index_.at(b);
  });
  return out;
}

std::vector<NodeId> WorkflowGraph::topological_order() const {
  std::unordered_map<NodeId, size_t> indegree;
  for (const Node& n : nodes_) indegree[n.id] = 0;
  for (const auto& [from, to] : edges_) ++indegree[to];

  // Ready queue kept in insertion order for a deterministic result.
  std::vector<NodeId> order;
  order.reserve(nodes_.size());
  std::deque<NodeId> ready;
  for (const Node& n : nodes_) {
    if (indegree[n.id] == 0) ready.push_back(n.id);
  }
  while (!ready.empty()) {
    NodeId id = ready.front();
    ready.pop_front();
    order.push_back(id);
    for (const NodeId& child : children(id)) {
      if (--indegree[child] == 0) ready.push_back(child);
    }
  }
  if (order.size() != nodes_.size()) {
    fail(ErrorCode::InvalidGraph, "graph contains a cycle");
  }
  return order;
}

bool WorkflowGraph::reaches(const NodeId& from, const NodeId& to) const {
  if (from == to) return true;
  std::set<NodeId> seen{from};
  std::deque<NodeId> frontier{from};
  while (!frontier.empty()) {
    NodeId cur = frontier.front();
    frontier.pop_front();
    for (const NodeId& child : children(cur)) {
      if (child == to) return true;
      if (seen.insert(child).second) frontier.push_back(child);
    }
  }
  return false;
}

void WorkflowGraph::validate() const {
  if (nodes_.empty()) fail(ErrorCode::InvalidGraph, "graph has no nodes");
  if (entry_.empty() || !has_node(entry_)) {
    fail(ErrorCode::EntryExitViolation, "entry node missing");
  }
  if (exit_.empty() || !has_node(exit_)) {
    fail(ErrorCode::EntryExitViolation, "exit node missing");
  }
  for (const Node& n : nodes_) {
    bool has_prompt = !n.prompt.empty();
    bool wants_prompt = n.kind == NodeKind::PromptStep;
    if (has_prompt != wants_prompt) {
      fail(ErrorCode::InvalidGraph,
           "node '" + n.id + "' prompt text inconsistent with kind " +
               node_kind_name(n.kind));
    }
  }
  for (const auto& [from, to] : edges_) {
    if (!has_node(from) || !has_node(to)) {
      fail(ErrorCode::InvalidGraph, "edge endpoint missing");
    }
    if (to == entry_) {
      fail(ErrorCode::EntryExitViolation, "entry has an incoming edge");
    }
    if (from == exit_) {
      fail(ErrorCode::EntryExitViolation, "exit has an outgoing edge");
    }
  }
  topological_order();  // throws on cycle

  // One sweep from the entry and one reverse sweep from the exit cover
  // every per-node reachability requirement.
  const size_t n_nodes = nodes_.size();
  std::vector<std::vector<size_t>> fwd(n_nodes);
  std::vector<std::vector<size_t>> bwd(n_nodes);
  for (const auto& [from, to] : edges_) {
    size_t f = index_.at(from);
    size_t t = index_.at(to);
    fwd[f].push_back(t);
    bwd[t].push_back(f);
  }
  auto sweep = [n_nodes](size_t start,
                         const std::vector<std::vector<size_t>>& adj) {
    std::vector<char> seen(n_nodes, 0);
    std::deque<size_t> frontier{start};
    seen[start] = 1;
    while (!frontier.empty()) {
      size_t cur = frontier.front();
      frontier.pop_front();
      for (size_t next : adj[cur]) {
        if (!seen[next]) {
          seen[next] = 1;
          frontier.push_back(next);
        }
      }
    }
    return seen;
  };
  std::vector<char> from_entry = sweep(index_.at(entry_), fwd);
  std::vector<char> to_exit = sweep(index_.at(exit_), bwd);
  for (size_t i = 0; i < n_nodes; ++i) {
    if (!from_entry[i]) {
      fail(ErrorCode::InvalidGraph,
           "node '" + nodes_[i].id + "' unreachable from entry");
    }
    if (!to_exit[i]) {
      fail(ErrorCode::InvalidGraph,
           "node '" + nodes_[i].id + "' cannot reach exit");
    }
  }
}

NodeId WorkflowGraph::mint_node_id() {
  for (;;) {
    NodeId candidate = "n" + std::to_string(next_ordinal_++);
    if (!has_node(candidate) && retired_.count(candidate) == 0) {
      return candidate;
    }
  }
}

std::string WorkflowGraph::to_json_string(int indent) const {
  nlohmann::ordered_json doc;
  doc["nodes"] = nlohmann::ordered_json::array();
  for (const Node& n : nodes_) {
    nlohmann::ordered_json jn;
    jn["id"] = n.id;
    jn["kind"] = node_kind_name(n.kind);
    jn["prompt"] = n.prompt;
    jn["params"] = nlohmann::ordered_json::object();
    for (const auto& [k, v] : n.params) jn["params"][k] = v;
    doc["nodes"].push_back(std::move(jn));
  }
  doc["edges"] = nlohmann::ordered_json::array();
  for (const auto& [from, to] : edges_) {
    doc["edges"].push_back(nlohmann::ordered_json::array({from, to}));
  }
  doc["entry"] = entry_;
  doc["exit"] = exit_;
  return doc.dump(indent);
}

WorkflowGraph WorkflowGraph::from_json_string(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedArgs, std::string("graph json: ") + e.what());
  }
  WorkflowGraph g;
  try {
    for (const auto& jn : doc.at("nodes")) {
      Node n;
      n.id = jn.at("id").get<std::string>();
      n.kind = node_kind_from_name(jn.at("kind").get<std::string>());
      n.prompt = jn.value("prompt", std::string());
      if (jn.contains("params")) {
        for (const auto& [k, v] : jn.at("params").items()) {
          n.params[k] = v.get<std::string>();
        }
      }
      g.add_node(std::move(n));
    }
    for (const auto& je : doc.at("edges")) {
      g.add_edge(je.at(0).get<std::string>(), je.at(1).get<std::string>());
    }
    g.set_entry(doc.at("entry").get<std::string>());
    g.set_exit(doc.at("exit").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::MalformedArgs, std::string("graph json: ") + e.what());
  }
  // Future mints must not collide with ids already present in the file.
  uint64_t max_ordinal = 0;
  for (const Node& n : g.nodes()) {
    if (n.id.size() > 1 && n.id[0] == 'n') {
      bool numeric = true;
      for (size_t i = 1; i < n.id.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(n.id[i]))) {
          numeric = false;
          break;
        }
      }
      if (numeric) {
        max_ordinal = std::max(
            max_ordinal,
            static_cast<uint64_t>(std::stoull(n.id.substr(1)) + 1));
      }
    }
  }
  g.next_ordinal_ = max_ordinal;
  g.validate();
  return g;
}

bool structurally_equal(const WorkflowGraph& a, const WorkflowGraph& b) {
  if (a.entry() != b.entry() || a.exit() != b.exit()) return false;
  if (a.edges() != b.edges()) return false;
  if (a.node_count() != b.node_count()) return false;
  for (const Node& n : a.nodes()) {
    if (!b.has_node(n.id) || !(b.node(n.id) == n)) return false;
  }
  return true;
}

}  // namespace wfopt
