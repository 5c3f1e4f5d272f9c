#include "wfopt/operators.hpp"

#include <algorithm>
#include <unordered_map>

#include "wfopt/errors.hpp"
#include "wfopt/rng.hpp"

namespace wfopt {

Edit Edit::identity() {
  Edit e;
  e.operator_name = kIdentityOperatorName;
  return e;
}

std::string Edit::display() const {
  std::string out = operator_name + "(";
  for (size_t i = 0; i < args.size(); ++i) {
    if (i) out += ", ";
    out += args[i];
  }
  out += ")";
  return out;
}

bool operator==(const Edit& a, const Edit& b) {
  return a.operator_name == b.operator_name && a.args == b.args;
}

bool Operator::applicable(const WorkflowGraph& w,
                          const std::vector<std::string>& args) const {
  try {
    apply(w, args);
    return true;
  } catch (const Error&) {
    return false;
  }
}

namespace {

void require_arity(const std::vector<std::string>& args, size_t lo, size_t hi,
                   const std::string& op) {
  if (args.size() < lo || args.size() > hi) {
    fail(ErrorCode::MalformedArgs,
         op + " expects " + std::to_string(lo) +
             (hi > lo ? ".." + std::to_string(hi) : "") + " args, got " +
             std::to_string(args.size()));
  }
  for (size_t i = 0; i < std::min(args.size(), lo); ++i) {
    if (args[i].empty()) {
      fail(ErrorCode::MalformedArgs, op + " arg " + std::to_string(i) + " empty");
    }
  }
}

const Node& require_node(const WorkflowGraph& w, const NodeId& id) {
  if (!w.has_node(id)) fail(ErrorCode::UnknownNode, "'" + id + "'");
  return w.node(id);
}

void require_edge(const WorkflowGraph& w, const NodeId& from, const NodeId& to,
                  const std::string& op) {
  require_node(w, from);
  require_node(w, to);
  if (!w.has_edge(from, to)) {
    fail(ErrorCode::MalformedArgs,
         op + ": no edge (" + from + ", " + to + ")");
  }
}

WorkflowGraph finish(WorkflowGraph g) {
  g.validate();
  return g;
}

// Splices a fresh node onto the existing edge (parent, child).
WorkflowGraph splice_on_edge(const WorkflowGraph& w, const NodeId& parent,
                             const NodeId& child, Node fresh) {
  WorkflowGraph g = w;
  fresh.id = g.mint_node_id();
  NodeId fresh_id = fresh.id;
  g.add_node(std::move(fresh));
  g.remove_edge(parent, child);
  g.add_edge(parent, fresh_id);
  g.add_edge(fresh_id, child);
  return finish(std::move(g));
}

class RevisePromptOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "RevisePrompt";
    return n;
  }
  std::string signature() const override {
    return "RevisePrompt(node_id, new_prompt)";
  }
  std::string description() const override {
    return "replaces the prompt text of a PromptStep node";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 2, 2, name());
    const Node& n = require_node(w, args[0]);
    if (n.kind != NodeKind::PromptStep) {
      fail(ErrorCode::MalformedArgs,
           "RevisePrompt target '" + args[0] + "' is not a PromptStep");
    }
    WorkflowGraph g = w;
    g.mutable_node(args[0]).prompt = args[1];
    return finish(std::move(g));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    std::vector<std::vector<std::string>> out;
    for (const Node& n : w.nodes()) {
      if (n.kind == NodeKind::PromptStep) {
        out.push_back(
            {n.id, n.prompt + " Double-check intermediate results."});
      }
    }
    return out;
  }
};

class InsertNodeOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "InsertNode";
    return n;
  }
  std::string signature() const override {
    return "InsertNode(parent_id, child_id, kind[, prompt])";
  }
  std::string description() const override {
    return "splits the existing edge (parent, child) with a fresh node";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 3, 4, name());
    require_edge(w, args[0], args[1], name());
    Node fresh;
    fresh.kind = node_kind_from_name(args[2]);
    fresh.prompt = args.size() > 3 ? args[3] : std::string();
    if (fresh.kind == NodeKind::PromptStep && fresh.prompt.empty()) {
      fail(ErrorCode::MalformedArgs, "InsertNode PromptStep needs a prompt");
    }
    if (fresh.kind != NodeKind::PromptStep && !fresh.prompt.empty()) {
      fail(ErrorCode::MalformedArgs,
           "InsertNode prompt given for non-prompt kind");
    }
    return splice_on_edge(w, args[0], args[1], std::move(fresh));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    std::vector<std::vector<std::string>> out;
    for (const auto& [from, to] : w.edges()) {
      out.push_back({from, to, "VerifyStep"});
    }
    return out;
  }
};

class DeleteNodeOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "DeleteNode";
    return n;
  }
  std::string signature() const override { return "DeleteNode(node_id)"; }
  std::string description() const override {
    return "removes a non-terminal node, rewiring each parent to each child";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 1, 1, name());
    require_node(w, args[0]);
    if (args[0] == w.entry() || args[0] == w.exit()) {
      fail(ErrorCode::EntryExitViolation, "cannot delete '" + args[0] + "'");
    }
    WorkflowGraph g = w;
    std::vector<NodeId> ps = g.parents(args[0]);
    std::vector<NodeId> cs = g.children(args[0]);
    g.remove_node(args[0]);
    for (const NodeId& p : ps) {
      for (const NodeId& c : cs) g.add_edge(p, c);
    }
    return finish(std::move(g));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    std::vector<std::vector<std::string>> out;
    for (const Node& n : w.nodes()) {
      if (n.id != w.entry() && n.id != w.exit() && applicable(w, {n.id})) {
        out.push_back({n.id});
      }
    }
    return out;
  }
};

class AddBranchOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "AddBranch";
    return n;
  }
  std::string signature() const override {
    return "AddBranch(from_id, to_id, kind[, prompt])";
  }
  std::string description() const override {
    return "adds a fresh node on a new parallel path from one node to another";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 3, 4, name());
    require_node(w, args[0]);
    require_node(w, args[1]);
    if (args[0] == args[1] || w.reaches(args[1], args[0])) {
      fail(ErrorCode::CycleWouldForm,
           "branch (" + args[0] + " -> " + args[1] + ") closes a cycle");
    }
    Node fresh;
    fresh.kind = node_kind_from_name(args[2]);
    fresh.prompt = args.size() > 3 ? args[3] : std::string();
    if (fresh.kind == NodeKind::PromptStep && fresh.prompt.empty()) {
      fail(ErrorCode::MalformedArgs, "AddBranch PromptStep needs a prompt");
    }
    if (fresh.kind != NodeKind::PromptStep && !fresh.prompt.empty()) {
      fail(ErrorCode::MalformedArgs,
           "AddBranch prompt given for non-prompt kind");
    }
    WorkflowGraph g = w;
    fresh.id = g.mint_node_id();
    NodeId fresh_id = fresh.id;
    g.add_node(std::move(fresh));
    g.add_edge(args[0], fresh_id);
    g.add_edge(fresh_id, args[1]);
    return finish(std::move(g));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    // A full reachability closure up front keeps the pair loop below from
    // running one graph search per candidate pair.
    const std::vector<Node>& nodes = w.nodes();
    const size_t n = nodes.size();
    std::unordered_map<NodeId, size_t> pos;
    pos.reserve(n);
    for (size_t i = 0; i < n; ++i) pos[nodes[i].id] = i;
    std::vector<std::vector<size_t>> adj(n);
    for (const auto& [from, to] : w.edges()) {
      adj[pos.at(from)].push_back(pos.at(to));
    }
    std::vector<std::vector<char>> descends(n);
    for (size_t s = 0; s < n; ++s) {
      std::vector<char>& seen = descends[s];
      seen.assign(n, 0);
      seen[s] = 1;
      std::vector<size_t> frontier{s};
      while (!frontier.empty()) {
        size_t cur = frontier.back();
        frontier.pop_back();
        for (size_t next : adj[cur]) {
          if (!seen[next]) {
            seen[next] = 1;
            frontier.push_back(next);
          }
        }
      }
    }
    std::vector<std::vector<std::string>> out;
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = 0; j < n; ++j) {
        if (i == j || nodes[i].id == w.exit() || nodes[j].id == w.entry()) {
          continue;
        }
        if (descends[j][i]) continue;  // new edge would close a cycle
        out.push_back({nodes[i].id, nodes[j].id, "Aggregate"});
      }
    }
    return out;
  }
};

class AddExceptionHandlerOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "AddExceptionHandler";
    return n;
  }
  std::string signature() const override {
    return "AddExceptionHandler(node_id, exception_type)";
  }
  std::string description() const override {
    return "wraps a ToolCall node with a handler for the given exception type";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 2, 2, name());
    const Node& n = require_node(w, args[0]);
    if (n.kind != NodeKind::ToolCall) {
      fail(ErrorCode::MalformedArgs,
           "AddExceptionHandler target '" + args[0] + "' is not a ToolCall");
    }
    WorkflowGraph g = w;
    g.mutable_node(args[0]).params["exception_handler"] = args[1];
    return finish(std::move(g));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    std::vector<std::vector<std::string>> out;
    for (const Node& n : w.nodes()) {
      if (n.kind == NodeKind::ToolCall) out.push_back({n.id, "RuntimeError"});
    }
    return out;
  }
};

class InsertPreconditionCheckOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "InsertPreconditionCheck";
    return n;
  }
  std::string signature() const override {
    return "InsertPreconditionCheck(parent_id, child_id, condition)";
  }
  std::string description() const override {
    return "guards the edge (parent, child) with a VerifyStep checking the "
           "condition";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 3, 3, name());
    require_edge(w, args[0], args[1], name());
    Node fresh;
    fresh.kind = NodeKind::VerifyStep;
    fresh.params["condition"] = args[2];
    return splice_on_edge(w, args[0], args[1], std::move(fresh));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    std::vector<std::vector<std::string>> out;
    for (const auto& [from, to] : w.edges()) {
      out.push_back({from, to, "inputs are well-formed"});
    }
    return out;
  }
};

class AddVerifierNodeOp final : public Operator {
 public:
  const std::string& name() const override {
    static const std::string n = "AddVerifierNode";
    return n;
  }
  std::string signature() const override {
    return "AddVerifierNode(node_id)";
  }
  std::string description() const override {
    return "inserts a VerifyStep directly after the node, on every outgoing "
           "edge";
  }
  WorkflowGraph apply(const WorkflowGraph& w,
                      const std::vector<std::string>& args) const override {
    require_arity(args, 1, 1, name());
    require_node(w, args[0]);
    if (args[0] == w.exit()) {
      fail(ErrorCode::EntryExitViolation,
           "cannot append a verifier after the exit node");
    }
    WorkflowGraph g = w;
    std::vector<NodeId> cs = g.children(args[0]);
    Node fresh;
    fresh.kind = NodeKind::VerifyStep;
    fresh.params["checks"] = args[0];
    fresh.id = g.mint_node_id();
    NodeId fresh_id = fresh.id;
    g.add_node(std::move(fresh));
    for (const NodeId& c : cs) {
      g.remove_edge(args[0], c);
      g.add_edge(fresh_id, c);
    }
    g.add_edge(args[0], fresh_id);
    return finish(std::move(g));
  }
  std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const override {
    std::vector<std::vector<std::string>> out;
    for (const Node& n : w.nodes()) {
      if (n.id != w.exit()) out.push_back({n.id});
    }
    return out;
  }
};

}  // namespace

OperatorRegistry OperatorRegistry::builtins() {
  OperatorRegistry reg;
  reg.register_operator(std::make_shared<RevisePromptOp>());
  reg.register_operator(std::make_shared<InsertNodeOp>());
  reg.register_operator(std::make_shared<DeleteNodeOp>());
  reg.register_operator(std::make_shared<AddBranchOp>());
  reg.register_operator(std::make_shared<AddExceptionHandlerOp>());
  reg.register_operator(std::make_shared<InsertPreconditionCheckOp>());
  reg.register_operator(std::make_shared<AddVerifierNodeOp>());
  return reg;
}

OperatorRegistry OperatorRegistry::from_names(
    const std::vector<std::string>& names) {
  OperatorRegistry all = builtins();
  OperatorRegistry reg;
  for (const std::string& name : names) {
    const Operator* op = all.find(name);
    if (op == nullptr) fail(ErrorCode::UnknownOperator, "'" + name + "'");
    for (const auto& existing : reg.ops_) {
      if (existing->name() == name) {
        fail(ErrorCode::ConfigError, "operator '" + name + "' listed twice");
      }
    }
    for (auto& candidate : all.ops_) {
      if (candidate->name() == name) reg.register_operator(candidate);
    }
  }
  return reg;
}

void OperatorRegistry::register_operator(std::shared_ptr<const Operator> op) {
  ops_.push_back(std::move(op));
}

const Operator* OperatorRegistry::find(const std::string& name) const {
  for (const auto& op : ops_) {
    if (op->name() == name) return op.get();
  }
  return nullptr;
}

const Operator& OperatorRegistry::require(const std::string& name) const {
  const Operator* op = find(name);
  if (op == nullptr) fail(ErrorCode::UnknownOperator, "'" + name + "'");
  return *op;
}

std::vector<std::string> OperatorRegistry::names() const {
  std::vector<std::string> out;
  out.reserve(ops_.size());
  for (const auto& op : ops_) out.push_back(op->name());
  return out;
}

std::string OperatorRegistry::library_definition() const {
  std::string out;
  for (const auto& op : ops_) {
    out += "- " + op->signature() + ": " + op->description() + "\n";
  }
  return out;
}

WorkflowGraph apply_edit(const WorkflowGraph& w, const Edit& edit,
                         const OperatorRegistry& ops) {
  WorkflowGraph next;
  if (edit.is_identity()) {
    next = w;
  } else {
    next = ops.require(edit.operator_name).apply(w, edit.args);
  }
  next.bump_version();
  return next;
}

std::vector<Edit> edit_space_sample(const WorkflowGraph& w,
                                    const OperatorRegistry& ops,
                                    size_t budget, uint64_t seed) {
  std::vector<Edit> out;
  if (budget == 0) return out;
  out.push_back(Edit::identity());

  std::vector<Edit> pool;
  for (const std::string& name : ops.names()) {
    const Operator& op = ops.require(name);
    // enumerate_bindings only emits bindings the operator accepts, so no
    // per-binding trial application is needed here.
    for (auto& args : op.enumerate_bindings(w)) {
      Edit e;
      e.operator_name = name;
      e.args = std::move(args);
      pool.push_back(std::move(e));
    }
  }
  if (pool.size() + 1 > budget) {
    Rng rng(mix_seed(seed, "edit_space_sample"));
    shuffle_in_place(pool, rng);
    pool.resize(budget - 1);
  }
  for (auto& e : pool) out.push_back(std::move(e));
  return out;
}

}  // namespace wfopt
