#include <gtest/gtest.h>

#include <atomic>
#include <map>
#include <sstream>
#include <thread>
#include <vector>

#include "btloc/bt/loader.hpp"
#include "btloc/bt/tree.hpp"

using namespace btloc::bt;

namespace {

/// Leaf returning a scripted status and counting its ticks.
struct Probe {
  NodeStatus status = NodeStatus::Success;
  int ticks = 0;
  int halts = 0;
  int teardowns = 0;
};

NodePtr probe_leaf(NodeIds& ids, const std::string& name, Probe& p, NodeKind kind = NodeKind::Action) {
  auto n = make_leaf(ids, kind, name, [&p](Blackboard&) {
    ++p.ticks;
    return p.status;
  });
  n->on_halt = [&p] { ++p.halts; };
  n->on_teardown = [&p] { ++p.teardowns; };
  return n;
}

NodeStatus run(NodeKind kind, std::vector<NodeStatus> statuses, std::vector<int>* tick_counts = nullptr) {
  NodeIds ids;
  std::vector<Probe> probes(statuses.size());
  std::vector<NodePtr> children;
  for (std::size_t i = 0; i < statuses.size(); ++i) {
    probes[i].status = statuses[i];
    children.push_back(probe_leaf(ids, "c" + std::to_string(i), probes[i]));
  }
  Blackboard bb;
  BehaviorTree tree(make_composite(ids, kind, "root", std::move(children)), bb);
  const NodeStatus s = tree.tick();
  if (tick_counts != nullptr) {
    tick_counts->clear();
    for (const auto& p : probes) tick_counts->push_back(p.ticks);
  }
  return s;
}

constexpr NodeStatus S = NodeStatus::Success;
constexpr NodeStatus F = NodeStatus::Failure;
constexpr NodeStatus R = NodeStatus::Running;

}  // namespace

TEST(Composite, SequenceTruthTable) {
  std::vector<int> ticks;
  EXPECT_EQ(run(NodeKind::Sequence, {S, S}, &ticks), S);
  EXPECT_EQ(ticks, (std::vector<int>{1, 1}));
  EXPECT_EQ(run(NodeKind::Sequence, {S, R, S}, &ticks), R);
  EXPECT_EQ(ticks, (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(run(NodeKind::Sequence, {F, S}, &ticks), F);
  EXPECT_EQ(ticks, (std::vector<int>{1, 0}));
  EXPECT_EQ(run(NodeKind::Sequence, {}, &ticks), S);
}

TEST(Composite, SelectorTruthTable) {
  std::vector<int> ticks;
  EXPECT_EQ(run(NodeKind::Selector, {F, S}, &ticks), S);
  EXPECT_EQ(ticks, (std::vector<int>{1, 1}));
  EXPECT_EQ(run(NodeKind::Selector, {F, R, S}, &ticks), R);
  EXPECT_EQ(ticks, (std::vector<int>{1, 1, 0}));
  EXPECT_EQ(run(NodeKind::Selector, {F, F}, &ticks), F);
  EXPECT_EQ(run(NodeKind::Selector, {S, F}, &ticks), S);
  EXPECT_EQ(ticks, (std::vector<int>{1, 0}));
  EXPECT_EQ(run(NodeKind::Selector, {}, &ticks), F);
}

TEST(Composite, ParallelTruthTable) {
  std::vector<int> ticks;
  EXPECT_EQ(run(NodeKind::Parallel, {S, R}, &ticks), R);
  EXPECT_EQ(ticks, (std::vector<int>{1, 1}));
  EXPECT_EQ(run(NodeKind::Parallel, {S, S}), S);
  EXPECT_EQ(run(NodeKind::Parallel, {F, R, S}, &ticks), F);
  EXPECT_EQ(ticks, (std::vector<int>{1, 1, 1}));
  EXPECT_EQ(run(NodeKind::Parallel, {R, R}), R);
}

TEST(Composite, ExhaustiveTwoChildTables) {
  const std::vector<NodeStatus> all = {S, F, R};
  for (NodeStatus a : all) {
    for (NodeStatus b : all) {
      const NodeStatus seq = a != S ? a : b;
      const NodeStatus sel = a != F ? a : b;
      const NodeStatus par = (a == F || b == F) ? F : ((a == S && b == S) ? S : R);
      EXPECT_EQ(run(NodeKind::Sequence, {a, b}), seq);
      EXPECT_EQ(run(NodeKind::Selector, {a, b}), sel);
      EXPECT_EQ(run(NodeKind::Parallel, {a, b}), par);
    }
  }
}

TEST(Tick, LeafExceptionMapsToFailure) {
  NodeIds ids;
  Blackboard bb;
  Probe after;
  auto thrower = make_action(ids, "boom", [](Blackboard&) -> NodeStatus { throw std::runtime_error("bad"); });
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(std::move(thrower), probe_leaf(ids, "next", after))), bb);
  EXPECT_EQ(tree.tick(), S);
  EXPECT_EQ(after.ticks, 1);
}

TEST(Tick, EachLeafAtMostOncePerTick) {
  NodeIds ids;
  Blackboard bb;
  std::vector<Probe> probes(12);
  std::vector<NodePtr> groups;
  for (int g = 0; g < 4; ++g) {
    std::vector<NodePtr> leaves;
    for (int i = 0; i < 3; ++i) {
      Probe& p = probes[static_cast<std::size_t>(g * 3 + i)];
      p.status = (i == 1) ? R : S;
      leaves.push_back(probe_leaf(ids, "l", p));
    }
    const NodeKind k = g % 2 == 0 ? NodeKind::Sequence : NodeKind::Selector;
    groups.push_back(make_composite(ids, k, "g", std::move(leaves)));
  }
  BehaviorTree tree(make_composite(ids, NodeKind::Parallel, "root", std::move(groups)), bb);
  for (int t = 0; t < 5; ++t) {
    for (auto& p : probes) p.ticks = 0;
    tree.tick();
    for (const auto& p : probes) ASSERT_LE(p.ticks, 1);
  }
}

TEST(Tick, ReactivePreemptionHaltsRunningChild) {
  NodeIds ids;
  Blackboard bb;
  Probe high, low;
  high.status = F;
  low.status = R;
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(probe_leaf(ids, "high", high), probe_leaf(ids, "low", low))), bb);
  EXPECT_EQ(tree.tick(), R);
  EXPECT_EQ(low.ticks, 1);
  high.status = R;
  EXPECT_EQ(tree.tick(), R);
  EXPECT_EQ(high.ticks, 2);
  EXPECT_EQ(low.ticks, 1);
  EXPECT_EQ(low.halts, 1);
  EXPECT_EQ(tree.tick(), R);
  EXPECT_EQ(low.halts, 1);
}

TEST(Tick, HaltRecursesIntoRunningSubtree) {
  NodeIds ids;
  Blackboard bb;
  Probe high, inner;
  high.status = F;
  inner.status = R;
  int subtree_halts = 0;
  auto sub = make_composite(ids, NodeKind::Sequence, "sub", node_list(probe_leaf(ids, "inner", inner)));
  sub->on_halt = [&] { ++subtree_halts; };
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(probe_leaf(ids, "high", high), std::move(sub))), bb);
  tree.tick();
  high.status = S;
  tree.tick();
  EXPECT_EQ(inner.halts, 1);
  EXPECT_EQ(subtree_halts, 1);
}

TEST(Blackboard, SnapshotStableUnderConcurrentInjection) {
  NodeIds ids;
  Blackboard bb;
  bb.post<int>("topic", -1);
  std::atomic<bool> go{false};
  std::atomic<int> mismatches{0};
  std::atomic<int> reads{0};
  auto reader = make_condition(ids, "reader", [&](Blackboard& b) {
    const int first = b.value<int>("topic").value_or(-2);
    go = true;
    // Give the producer time to push values while this tick is in progress.
    for (int spin = 0; spin < 2000; ++spin) {
      const int again = b.value<int>("topic").value_or(-2);
      if (again != first) ++mismatches;
      ++reads;
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
    if (b.value<int>("topic").value_or(-2) != first) ++mismatches;
    return NodeStatus::Success;
  });
  BehaviorTree tree(std::move(reader), bb);
  std::thread producer([&] {
    while (!go) std::this_thread::yield();
    for (int i = 0; i < 1000; ++i) bb.post<int>("topic", i);
  });
  tree.tick();
  producer.join();
  EXPECT_EQ(mismatches.load(), 0);
  tree.tick();
  EXPECT_EQ(bb.value<int>("topic").value(), 999);
}

TEST(Blackboard, AppendTopicsHoldValuesSinceLastRefresh) {
  Blackboard bb;
  bb.append<int>("s", 1);
  bb.append<int>("s", 2);
  bb.refresh();
  EXPECT_EQ(bb.list<int>("s"), (std::vector<int>{1, 2}));
  bb.refresh();
  EXPECT_TRUE(bb.list<int>("s").empty());
  bb.append<int>("s", 3);
  bb.refresh();
  EXPECT_EQ(bb.list<int>("s"), (std::vector<int>{3}));
}

TEST(Blackboard, EraseByPrefix) {
  Blackboard bb;
  bb.set<int>("gps.main.a", 1);
  bb.set<int>("gps.main.b", 2);
  bb.set<int>("gps.backup.a", 3);
  bb.erase_prefix("gps.main.");
  EXPECT_FALSE(bb.contains("gps.main.a"));
  EXPECT_FALSE(bb.contains("gps.main.b"));
  EXPECT_TRUE(bb.contains("gps.backup.a"));
}

TEST(StructuralEdit, InsertAtFrontBecomesHighestPriority) {
  NodeIds ids;
  Blackboard bb;
  Probe a, b, c;
  a.status = S;
  b.status = S;
  c.status = S;
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(probe_leaf(ids, "a", a), probe_leaf(ids, "b", b))), bb);
  tree.insert_subtree(tree.root().id, 0, probe_leaf(tree.ids(), "c", c));
  tree.tick();
  EXPECT_EQ(c.ticks, 1);
  EXPECT_EQ(a.ticks, 0);
}

TEST(StructuralEdit, InsertIntoEmptyComposite) {
  NodeIds ids;
  Blackboard bb;
  Probe p;
  BehaviorTree tree(make_composite(ids, NodeKind::Sequence, "root"), bb);
  tree.insert_subtree(tree.root().id, 0, probe_leaf(tree.ids(), "p", p));
  EXPECT_EQ(tree.root().children.size(), 1u);
}

TEST(StructuralEdit, InsertErrors) {
  NodeIds ids;
  Blackboard bb;
  Probe p, q;
  auto leaf = probe_leaf(ids, "p", p);
  const NodeId leaf_id = leaf->id;
  BehaviorTree tree(make_composite(ids, NodeKind::Sequence, "root", node_list(std::move(leaf))), bb);
  EXPECT_THROW(tree.insert_subtree(leaf_id, 0, probe_leaf(tree.ids(), "q", q)), std::invalid_argument);
  auto dup = probe_leaf(tree.ids(), "dup", q);
  dup->id = leaf_id;
  EXPECT_THROW(tree.insert_subtree(tree.root().id, 0, std::move(dup)), std::invalid_argument);
  EXPECT_THROW(tree.insert_subtree(tree.root().id, 5, probe_leaf(tree.ids(), "q", q)), std::out_of_range);
}

TEST(StructuralEdit, InsertThenPruneRestoresStructure) {
  NodeIds ids;
  Blackboard bb;
  Probe a, b, c;
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(probe_leaf(ids, "a", a), probe_leaf(ids, "b", b))), bb);
  const auto before = dump_tree(tree.root());
  auto sub = make_composite(tree.ids(), NodeKind::Sequence, "sub", node_list(probe_leaf(tree.ids(), "c", c)));
  const NodeId sub_id = sub->id;
  tree.insert_subtree(tree.root().id, 1, std::move(sub));
  EXPECT_NE(dump_tree(tree.root()), before);
  tree.prune_subtree(sub_id);
  EXPECT_EQ(dump_tree(tree.root()), before);
}

TEST(StructuralEdit, PruneRunningSubtreeFiresTeardownOnce) {
  NodeIds ids;
  Blackboard bb;
  Probe running, sibling;
  running.status = R;
  sibling.status = R;
  auto leaf = probe_leaf(ids, "running", running);
  const NodeId id = leaf->id;
  BehaviorTree tree(make_composite(ids, NodeKind::Parallel, "root", node_list(std::move(leaf), probe_leaf(ids, "sib", sibling))), bb);
  tree.tick();
  const auto notified = tree.prune_subtree(id);
  EXPECT_EQ(notified, std::vector<NodeId>{id});
  EXPECT_EQ(running.teardowns, 1);
  tree.tick();
  tree.tick();
  EXPECT_EQ(running.teardowns, 1);
  EXPECT_EQ(running.ticks, 1);
  EXPECT_EQ(sibling.ticks, 3);
}

TEST(StructuralEdit, PruneLeafWithoutHooks) {
  NodeIds ids;
  Blackboard bb;
  auto plain = make_action(ids, "plain", [](Blackboard&) { return NodeStatus::Success; });
  const NodeId id = plain->id;
  Probe keep1, keep2;
  BehaviorTree tree(make_composite(ids, NodeKind::Sequence, "root",
                                   node_list(probe_leaf(ids, "k1", keep1), std::move(plain), probe_leaf(ids, "k2", keep2))),
                    bb);
  EXPECT_TRUE(tree.prune_subtree(id).empty());
  ASSERT_EQ(tree.root().children.size(), 2u);
  EXPECT_EQ(tree.root().children[0]->name, "k1");
  EXPECT_EQ(tree.root().children[1]->name, "k2");
  tree.tick();
  EXPECT_EQ(keep1.ticks, 1);
  EXPECT_EQ(keep2.ticks, 1);
}

TEST(StructuralEdit, PruneErrors) {
  NodeIds ids;
  Blackboard bb;
  BehaviorTree tree(make_composite(ids, NodeKind::Sequence, "root"), bb);
  EXPECT_THROW(tree.prune_subtree(tree.root().id), std::invalid_argument);
  EXPECT_THROW(tree.prune_subtree(12345), std::invalid_argument);
}

TEST(StructuralEdit, ReorderChildren) {
  NodeIds ids;
  Blackboard bb;
  Probe a, b;
  a.status = S;
  b.status = S;
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(probe_leaf(ids, "a", a), probe_leaf(ids, "b", b))), bb);
  const auto before = dump_tree(tree.root());
  tree.reorder_children(tree.root().id, {0, 1});
  EXPECT_EQ(dump_tree(tree.root()), before);
  tree.reorder_children(tree.root().id, {1, 0});
  tree.tick();
  EXPECT_EQ(b.ticks, 1);
  EXPECT_EQ(a.ticks, 0);
  EXPECT_THROW(tree.reorder_children(tree.root().id, {0, 0}), std::invalid_argument);
  EXPECT_THROW(tree.reorder_children(tree.root().id, {0}), std::invalid_argument);
}

TEST(StructuralEdit, EditsRequestedMidTickApplyAtBoundary) {
  NodeIds ids;
  Blackboard bb;
  std::vector<std::string> order;
  BehaviorTree* tree_ptr = nullptr;
  bool requested = false;
  auto first = make_action(ids, "first", [&](Blackboard&) {
    order.push_back("first");
    if (!requested) {
      requested = true;
      tree_ptr->reorder_children(tree_ptr->root().id, {1, 0});
      EXPECT_EQ(tree_ptr->pending_edits(), 1u);
    }
    return NodeStatus::Success;
  });
  auto second = make_action(ids, "second", [&](Blackboard&) {
    order.push_back("second");
    return NodeStatus::Success;
  });
  BehaviorTree tree(make_composite(ids, NodeKind::Sequence, "root", node_list(std::move(first), std::move(second))), bb);
  tree_ptr = &tree;
  tree.tick();
  EXPECT_EQ(order, (std::vector<std::string>{"first", "second"}));
  EXPECT_EQ(tree.pending_edits(), 0u);
  order.clear();
  tree.tick();
  EXPECT_EQ(order, (std::vector<std::string>{"second", "first"}));
}

TEST(StructuralEdit, PruneRequestedMidTickIsDeferred) {
  NodeIds ids;
  Blackboard bb;
  Probe victim;
  victim.status = S;
  auto leaf = probe_leaf(ids, "victim", victim);
  const NodeId victim_id = leaf->id;
  BehaviorTree* tree_ptr = nullptr;
  auto pruner = make_action(ids, "pruner", [&](Blackboard&) {
    if (tree_ptr->find(victim_id) != nullptr) {
      EXPECT_TRUE(tree_ptr->prune_subtree(victim_id).empty());
    }
    return NodeStatus::Success;
  });
  BehaviorTree tree(make_composite(ids, NodeKind::Sequence, "root", node_list(std::move(pruner), std::move(leaf))), bb);
  tree_ptr = &tree;
  tree.tick();
  EXPECT_EQ(victim.ticks, 1);
  EXPECT_EQ(victim.teardowns, 1);
  tree.tick();
  EXPECT_EQ(victim.ticks, 1);
}

TEST(Trace, EmitsOneRecordPerVisitedNode) {
  NodeIds ids;
  Blackboard bb;
  Probe a, b;
  a.status = F;
  b.status = S;
  BehaviorTree tree(make_composite(ids, NodeKind::Selector, "root", node_list(probe_leaf(ids, "a", a), probe_leaf(ids, "b", b))), bb);
  std::ostringstream trace;
  tree.set_trace(&trace);
  tree.tick();
  std::istringstream lines(trace.str());
  std::vector<nlohmann::json> records;
  for (std::string line; std::getline(lines, line);) records.push_back(nlohmann::json::parse(line));
  ASSERT_EQ(records.size(), 3u);
  EXPECT_EQ(records[0]["status"], "FAILURE");
  EXPECT_EQ(records[2]["node_id"], tree.root().id);
  EXPECT_EQ(records[2]["tick_index"], 0);
}

TEST(Loader, BuildsTreeFromJsonAndDumpsItBack) {
  BindingRegistry reg;
  int hits = 0;
  reg.add("ok", [&](Node& n) {
    n.callback = [&](Blackboard&) {
      ++hits;
      return NodeStatus::Success;
    };
  });
  reg.add("no", [](Node& n) { n.callback = [](Blackboard&) { return NodeStatus::Failure; }; });
  const auto j = nlohmann::json::parse(R"({
    "kind": "SELECTOR", "name": "root", "children": [
      {"kind": "CONDITION", "name": "c", "binding": "no"},
      {"kind": "SEQUENCE", "name": "s", "children": [{"kind": "ACTION", "name": "a", "binding": "ok"}]}
    ]})");
  NodeIds ids;
  Blackboard bb;
  BehaviorTree tree(load_tree(j, reg, ids), bb);
  EXPECT_EQ(tree.tick(), NodeStatus::Success);
  EXPECT_EQ(hits, 1);
  const auto dumped = dump_tree(tree.root(), false);
  EXPECT_EQ(dumped["children"][1]["children"][0]["binding"], "ok");
  NodeIds ids2;
  EXPECT_EQ(dump_tree(*load_tree(dumped, reg, ids2), false), dumped);
}

TEST(Loader, RejectsUnknownBindingAndKind) {
  BindingRegistry reg;
  NodeIds ids;
  EXPECT_THROW(load_tree(nlohmann::json::parse(R"({"kind":"ACTION","name":"a","binding":"missing"})"), reg, ids),
               std::invalid_argument);
  EXPECT_THROW(load_tree(nlohmann::json::parse(R"({"kind":"DECORATOR","name":"a"})"), reg, ids), std::invalid_argument);
  EXPECT_THROW(load_tree(nlohmann::json::parse(R"({"kind":"ACTION","name":"a"})"), reg, ids), std::invalid_argument);
}
