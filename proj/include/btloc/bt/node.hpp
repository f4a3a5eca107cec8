#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "btloc/bt/blackboard.hpp"

namespace btloc::bt {

enum class NodeStatus { Success, Failure, Running };
enum class NodeKind { Sequence, Selector, Parallel, Condition, Action };

inline constexpr std::string_view to_string(NodeStatus s) {
  switch (s) {
    case NodeStatus::Success: return "SUCCESS";
    case NodeStatus::Failure: return "FAILURE";
    case NodeStatus::Running: return "RUNNING";
  }
  return "?";
}

inline constexpr std::string_view to_string(NodeKind k) {
  switch (k) {
    case NodeKind::Sequence: return "SEQUENCE";
    case NodeKind::Selector: return "SELECTOR";
    case NodeKind::Parallel: return "PARALLEL";
    case NodeKind::Condition: return "CONDITION";
    case NodeKind::Action: return "ACTION";
  }
  return "?";
}

inline NodeKind node_kind_from_string(std::string_view s) {
  if (s == "SEQUENCE") return NodeKind::Sequence;
  if (s == "SELECTOR") return NodeKind::Selector;
  if (s == "PARALLEL") return NodeKind::Parallel;
  if (s == "CONDITION") return NodeKind::Condition;
  if (s == "ACTION") return NodeKind::Action;
  throw std::invalid_argument("unknown node kind: " + std::string(s));
}

inline bool is_composite(NodeKind k) {
  return k == NodeKind::Sequence || k == NodeKind::Selector || k == NodeKind::Parallel;
}

using NodeId = std::int64_t;
using LeafCallback = std::function<NodeStatus(Blackboard&)>;
using Hook = std::function<void()>;

struct Node {
  NodeId id = 0;
  NodeKind kind = NodeKind::Action;
  std::string name;
  /// Binding the node was built from (leaf callback or halt hook); empty if built in code.
  std::string binding;
  std::vector<std::unique_ptr<Node>> children;

  LeafCallback callback;
  /// Fired when the node was RUNNING and a parent stops ticking it.
  Hook on_halt;
  /// Fired once when the node is pruned from the tree.
  Hook on_teardown;

  /// Status returned on the most recent tick that reached this node.
  std::optional<NodeStatus> last_status;

  bool composite() const { return is_composite(kind); }
};

using NodePtr = std::unique_ptr<Node>;

class NodeIds {
 public:
  NodeId next() { return next_++; }
  void reserve_above(NodeId id) {
    if (id >= next_) next_ = id + 1;
  }

 private:
  NodeId next_ = 1;
};

inline NodePtr make_leaf(NodeIds& ids, NodeKind kind, std::string name, LeafCallback cb) {
  if (is_composite(kind)) throw std::invalid_argument("make_leaf: composite kind");
  auto n = std::make_unique<Node>();
  n->id = ids.next();
  n->kind = kind;
  n->name = std::move(name);
  n->callback = std::move(cb);
  return n;
}

inline NodePtr make_condition(NodeIds& ids, std::string name, LeafCallback cb) {
  return make_leaf(ids, NodeKind::Condition, std::move(name), std::move(cb));
}

inline NodePtr make_action(NodeIds& ids, std::string name, LeafCallback cb) {
  return make_leaf(ids, NodeKind::Action, std::move(name), std::move(cb));
}

inline NodePtr make_composite(NodeIds& ids, NodeKind kind, std::string name,
                              std::vector<NodePtr> children = {}) {
  if (!is_composite(kind)) throw std::invalid_argument("make_composite: leaf kind");
  auto n = std::make_unique<Node>();
  n->id = ids.next();
  n->kind = kind;
  n->name = std::move(name);
  n->children = std::move(children);
  return n;
}

template <class... Children>
std::vector<NodePtr> node_list(Children&&... c) {
  std::vector<NodePtr> v;
  (v.push_back(std::forward<Children>(c)), ...);
  return v;
}

}  // namespace btloc::bt
