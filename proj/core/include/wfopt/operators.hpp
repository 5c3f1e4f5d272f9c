#pragma once

#include <memory>
#include <string>
#include <vector>

#include "wfopt/graph.hpp"

namespace wfopt {

inline constexpr const char* kIdentityOperatorName = "Identity";

struct EditProvenance {
  std::string proposer_id;
  int iteration = -1;
  std::string mode_id;
};

// A named graph edit: operator name plus positional string arguments.
// The identity edit is always valid on any graph and changes nothing but
// the version counter.
struct Edit {
  std::string operator_name;
  std::vector<std::string> args;
  EditProvenance provenance;

  bool is_identity() const { return operator_name == kIdentityOperatorName; }
  static Edit identity();

  // "RevisePrompt(solve, ...)" rendering used in reports and history.
  std::string display() const;
};

bool operator==(const Edit& a, const Edit& b);  // name + args

// One graph-rewriting operator. apply() assumes applicable() args; it throws
// the typed rejection otherwise (UnknownNode, CycleWouldForm,
// EntryExitViolation, MalformedArgs).
class Operator {
 public:
  virtual ~Operator() = default;

  virtual const std::string& name() const = 0;

  // Human-readable call signature, e.g. "RevisePrompt(node_id, new_prompt)".
  virtual std::string signature() const = 0;

  // One-line behavior description; together with signature() this forms the
  // operator-library text handed to a remote proposer.
  virtual std::string description() const = 0;

  virtual bool applicable(const WorkflowGraph& w,
                          const std::vector<std::string>& args) const;

  virtual WorkflowGraph apply(const WorkflowGraph& w,
                              const std::vector<std::string>& args) const = 0;

  // Canonical argument tuples for this operator on w, in deterministic
  // order. edit_space_sample draws from the union of these.
  virtual std::vector<std::vector<std::string>> enumerate_bindings(
      const WorkflowGraph& w) const = 0;
};

// Name -> operator. Populated with the built-ins at startup; callers may
// register additional operators or select a subset by name via config.
class OperatorRegistry {
 public:
  static OperatorRegistry builtins();
  static OperatorRegistry from_names(const std::vector<std::string>& names);

  void register_operator(std::shared_ptr<const Operator> op);
  const Operator* find(const std::string& name) const;
  const Operator& require(const std::string& name) const;  // UnknownOperator
  std::vector<std::string> names() const;  // registration order

  // Text block describing every registered operator, used verbatim as the
  // proposer prompt's operator-library slot.
  std::string library_definition() const;

 private:
  std::vector<std::shared_ptr<const Operator>> ops_;
};

// Applies an edit and returns the new graph; the input is never modified.
// The result has version() == w.version() + 1 and satisfies every graph
// invariant. Identity applies without touching the registry.
WorkflowGraph apply_edit(const WorkflowGraph& w, const Edit& edit,
                         const OperatorRegistry& ops);

// Deterministic sample of at most `budget` distinct valid edits, identity
// always at index 0. When the applicable bindings fit the budget they are
// all returned in registry-then-enumeration order.
std::vector<Edit> edit_space_sample(const WorkflowGraph& w,
                                    const OperatorRegistry& ops,
                                    size_t budget, uint64_t seed);

}  // namespace wfopt
