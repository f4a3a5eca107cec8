#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "btloc/bt/blackboard.hpp"
#include "btloc/bt/node.hpp"
#include "btloc/core/log.hpp"

namespace btloc::bt {

/// Blackboard key holding the index of the tick in progress.
inline constexpr const char* kTickKey = "bt/tick";

/// Reactive behavior tree.
///
/// Composites are memoryless: every tick restarts at the first child, so a
/// higher-priority child can preempt a running sibling. A child that was
/// RUNNING on the previous tick and is not reached this tick gets halted.
/// Structural edits requested while a tick is in progress are queued and
/// applied once the traversal returns.
class BehaviorTree {
 public:
  BehaviorTree(NodePtr root, Blackboard& bb) : root_(std::move(root)), bb_(&bb) {
    if (!root_) throw std::invalid_argument("BehaviorTree: null root");
    std::set<NodeId> seen;
    collect_ids(*root_, seen, /*throw_on_dup=*/true);
    if (!seen.empty()) ids_.reserve_above(*seen.rbegin());
  }

  NodeStatus tick() {
    if (ticking_) throw std::logic_error("BehaviorTree::tick: re-entrant tick");
    ticking_ = true;
    bb_->refresh();
    bb_->set<std::int64_t>(kTickKey, static_cast<std::int64_t>(tick_index_));
    NodeStatus s = NodeStatus::Failure;
    try {
      s = tick_node(*root_);
    } catch (...) {
      ticking_ = false;
      throw;
    }
    ticking_ = false;
    apply_pending();
    ++tick_index_;
    return s;
  }

  /// Inserts `subtree` as child `index` of composite `parent`.
  void insert_subtree(NodeId parent, std::size_t index, NodePtr subtree) {
    if (!subtree) throw std::invalid_argument("insert_subtree: null subtree");
    validate_insert(parent, index, *subtree);
    if (ticking_) {
      pending_.push_back(InsertEdit{parent, index, std::shared_ptr<Node>(subtree.release())});
      return;
    }
    do_insert(parent, index, std::move(subtree));
  }

  /// Removes a node and its descendants. Returns the ids whose teardown hook
  /// fired; empty when the edit was deferred to the tick boundary.
  std::vector<NodeId> prune_subtree(NodeId id) {
    validate_prune(id);
    if (ticking_) {
      pending_.push_back(PruneEdit{id});
      return {};
    }
    return do_prune(id);
  }

  /// New child order: child i becomes old child permutation[i].
  void reorder_children(NodeId parent, std::vector<std::size_t> permutation) {
    validate_reorder(parent, permutation);
    if (ticking_) {
      pending_.push_back(ReorderEdit{parent, std::move(permutation)});
      return;
    }
    do_reorder(parent, permutation);
  }

  const Node& root() const { return *root_; }
  Node& root() { return *root_; }
  Blackboard& blackboard() { return *bb_; }
  NodeIds& ids() { return ids_; }
  bool ticking() const { return ticking_; }
  std::uint64_t tick_index() const { return tick_index_; }
  std::size_t pending_edits() const { return pending_.size(); }

  /// JSON-lines trace sink, one record per visited node. nullptr disables.
  void set_trace(std::ostream* out) { trace_ = out; }

  Node* find(NodeId id) { return find_in(*root_, id); }
  const Node* find(NodeId id) const { return find_in(*root_, id); }

  Node* find_by_name(const std::string& name) { return find_name_in(*root_, name); }

  Node* parent_of(NodeId id) { return parent_in(*root_, id); }

 private:
  struct InsertEdit {
    NodeId parent;
    std::size_t index;
    std::shared_ptr<Node> subtree;
  };
  struct PruneEdit {
    NodeId id;
  };
  struct ReorderEdit {
    NodeId parent;
    std::vector<std::size_t> permutation;
  };
  using Edit = std::variant<InsertEdit, PruneEdit, ReorderEdit>;

  NodeStatus tick_node(Node& n) {
    NodeStatus s = NodeStatus::Failure;
    switch (n.kind) {
      case NodeKind::Sequence:
      case NodeKind::Selector: {
        const NodeStatus keep_going =
            n.kind == NodeKind::Sequence ? NodeStatus::Success : NodeStatus::Failure;
        s = keep_going;
        std::size_t i = 0;
        while (i < n.children.size()) {
          const NodeStatus cs = tick_node(*n.children[i]);
          ++i;
          if (cs != keep_going) {
            s = cs;
            break;
          }
        }
        for (std::size_t j = i; j < n.children.size(); ++j) halt(*n.children[j]);
        break;
      }
      case NodeKind::Parallel: {
        // All children are ticked every time; completion of the parallel does
        // not halt children that are still running.
        bool any_failure = false;
        bool all_success = true;
        for (auto& c : n.children) {
          const NodeStatus cs = tick_node(*c);
          any_failure |= cs == NodeStatus::Failure;
          all_success &= cs == NodeStatus::Success;
        }
        s = any_failure ? NodeStatus::Failure
                        : (all_success ? NodeStatus::Success : NodeStatus::Running);
        break;
      }
      case NodeKind::Condition:
      case NodeKind::Action:
        s = tick_leaf(n);
        break;
    }
    n.last_status = s;
    if (trace_ != nullptr) {
      *trace_ << "{\"tick_index\":" << tick_index_ << ",\"node_id\":" << n.id
              << ",\"status\":\"" << to_string(s) << "\"}\n";
    }
    return s;
  }

  NodeStatus tick_leaf(Node& n) {
    if (!n.callback) {
      log::warn("bt: leaf '", n.name, "' has no callback");
      return NodeStatus::Failure;
    }
    try {
      return n.callback(*bb_);
    } catch (const std::exception& e) {
      log::error("bt: leaf '", n.name, "' (", n.id, ") threw: ", e.what());
    } catch (...) {
      log::error("bt: leaf '", n.name, "' (", n.id, ") threw a non-standard exception");
    }
    return NodeStatus::Failure;
  }

  void halt(Node& n) {
    if (n.last_status != NodeStatus::Running) return;
    for (auto& c : n.children) halt(*c);
    n.last_status.reset();
    if (n.on_halt) {
      try {
        n.on_halt();
      } catch (const std::exception& e) {
        log::error("bt: halt hook of '", n.name, "' threw: ", e.what());
      }
    }
  }

  static Node* find_in(Node& n, NodeId id) {
    if (n.id == id) return &n;
    for (auto& c : n.children) {
      if (Node* f = find_in(*c, id)) return f;
    }
    return nullptr;
  }
  static const Node* find_in(const Node& n, NodeId id) {
    if (n.id == id) return &n;
    for (const auto& c : n.children) {
      if (const Node* f = find_in(*c, id)) return f;
    }
    return nullptr;
  }
  static Node* find_name_in(Node& n, const std::string& name) {
    if (n.name == name) return &n;
    for (auto& c : n.children) {
      if (Node* f = find_name_in(*c, name)) return f;
    }
    return nullptr;
  }
  static Node* parent_in(Node& n, NodeId id) {
    for (auto& c : n.children) {
      if (c->id == id) return &n;
      if (Node* p = parent_in(*c, id)) return p;
    }
    return nullptr;
  }

  static void collect_ids(const Node& n, std::set<NodeId>& out, bool throw_on_dup) {
    if (!out.insert(n.id).second && throw_on_dup) {
      throw std::invalid_argument("duplicate node id " + std::to_string(n.id));
    }
    if (!n.composite() && !n.children.empty()) {
      throw std::invalid_argument("leaf node '" + n.name + "' has children");
    }
    for (const auto& c : n.children) collect_ids(*c, out, throw_on_dup);
  }

  void validate_insert(NodeId parent, std::size_t index, const Node& subtree) const {
    const Node* p = find(parent);
    if (p == nullptr) throw std::invalid_argument("insert_subtree: unknown parent id");
    if (!p->composite()) throw std::invalid_argument("insert_subtree: parent is a leaf");
    if (index > p->children.size()) throw std::out_of_range("insert_subtree: index past end");
    std::set<NodeId> tree_ids;
    collect_ids(*root_, tree_ids, false);
    std::set<NodeId> sub_ids;
    collect_ids(subtree, sub_ids, true);
    for (NodeId id : sub_ids) {
      if (tree_ids.count(id) != 0) {
        throw std::invalid_argument("insert_subtree: duplicate node id " + std::to_string(id));
      }
    }
  }

  void validate_prune(NodeId id) const {
    if (id == root_->id) throw std::invalid_argument("prune_subtree: cannot prune root");
    if (find(id) == nullptr) throw std::invalid_argument("prune_subtree: unknown node id");
  }

  void validate_reorder(NodeId parent, const std::vector<std::size_t>& perm) const {
    const Node* p = find(parent);
    if (p == nullptr) throw std::invalid_argument("reorder_children: unknown parent id");
    if (perm.size() != p->children.size()) {
      throw std::invalid_argument("reorder_children: permutation size mismatch");
    }
    std::vector<bool> hit(perm.size(), false);
    for (std::size_t v : perm) {
      if (v >= perm.size() || hit[v]) throw std::invalid_argument("reorder_children: not a bijection");
      hit[v] = true;
    }
  }

  void do_insert(NodeId parent, std::size_t index, NodePtr subtree) {
    Node* p = find(parent);
    std::set<NodeId> sub_ids;
    collect_ids(*subtree, sub_ids, false);
    if (!sub_ids.empty()) ids_.reserve_above(*sub_ids.rbegin());
    p->children.insert(p->children.begin() + static_cast<std::ptrdiff_t>(index), std::move(subtree));
  }

  std::vector<NodeId> do_prune(NodeId id) {
    Node* p = parent_of(id);
    auto it = std::find_if(p->children.begin(), p->children.end(),
                           [id](const NodePtr& c) { return c->id == id; });
    NodePtr removed = std::move(*it);
    p->children.erase(it);
    std::vector<NodeId> notified;
    teardown(*removed, notified);
    return notified;
  }

  static void teardown(Node& n, std::vector<NodeId>& notified) {
    for (auto& c : n.children) teardown(*c, notified);
    if (n.on_teardown) {
      notified.push_back(n.id);
      try {
        n.on_teardown();
      } catch (const std::exception& e) {
        log::error("bt: teardown hook of '", n.name, "' threw: ", e.what());
      }
    }
  }

  void do_reorder(NodeId parent, const std::vector<std::size_t>& perm) {
    Node* p = find(parent);
    std::vector<NodePtr> reordered;
    reordered.reserve(perm.size());
    for (std::size_t v : perm) reordered.push_back(std::move(p->children[v]));
    p->children = std::move(reordered);
  }

  void apply_pending() {
    std::vector<Edit> edits;
    edits.swap(pending_);
    for (auto& e : edits) {
      try {
        if (auto* ins = std::get_if<InsertEdit>(&e)) {
          Node* raw = ins->subtree.get();
          validate_insert(ins->parent, ins->index, *raw);
          // shared_ptr was created from a released unique_ptr; hand ownership back.
          auto copy = std::make_unique<Node>(std::move(*raw));
          do_insert(ins->parent, ins->index, std::move(copy));
        } else if (auto* pr = std::get_if<PruneEdit>(&e)) {
          validate_prune(pr->id);
          do_prune(pr->id);
        } else if (auto* re = std::get_if<ReorderEdit>(&e)) {
          validate_reorder(re->parent, re->permutation);
          do_reorder(re->parent, re->permutation);
        }
      } catch (const std::exception& ex) {
        log::error("bt: deferred edit dropped: ", ex.what());
      }
    }
  }

  NodePtr root_;
  Blackboard* bb_;
  NodeIds ids_;
  bool ticking_ = false;
  std::uint64_t tick_index_ = 0;
  std::vector<Edit> pending_;
  std::ostream* trace_ = nullptr;
};

}  // namespace btloc::bt
