#pragma once

#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "btloc/behaviors/ladder.hpp"
#include "btloc/behaviors/system.hpp"
#include "btloc/bt/loader.hpp"
#include "btloc/bt/tree.hpp"

namespace btloc::beh {

using bt::NodeKind;
using bt::NodeStatus;

struct SensorSubtreeSpec {
  est::Sensor sensor = est::Sensor::Lidar;
  Target target = Target::Main;
  int priority = 0;
  std::vector<est::GateBound> ladder{est::GateBound::TwoSigma, est::GateBound::ThreeSigma, est::GateBound::All};
  /// Report RUNNING instead of FAILURE while waiting for the sensor. Used for
  /// subtrees that are not under a selector (the backup filter).
  bool block_while_initialising = false;
};

inline std::string subtree_name(est::Sensor s, Target t) { return sensor_key(s) + "." + std::string(to_string(t)); }

inline void validate(const SensorSubtreeSpec& spec) {
  if (spec.ladder.empty()) throw std::invalid_argument("subtree spec: empty gate ladder");
  for (std::size_t i = 1; i < spec.ladder.size(); ++i) {
    if (ladder_index(spec.ladder[i]) <= ladder_index(spec.ladder[i - 1])) {
      throw std::invalid_argument("subtree spec: gate ladder must be strictly increasing");
    }
  }
}

struct ResetCommand {
  Pose2D pose;
  Covariance3 cov;
};

/// Main is reset from the backup when their headings disagree by more than
/// `threshold` and the backup is strictly healthier.
inline std::optional<ResetCommand> cross_filter_reset_check(const est::FilterState& main,
                                                           const est::FilterState& backup, double threshold) {
  if (!main.initialized() || !backup.initialized()) return std::nullopt;
  const double diff = std::abs(normalize_heading(main.pose.heading - backup.pose.heading));
  if (diff <= threshold) return std::nullopt;
  if (est::health_rank(backup.health) <= est::health_rank(main.health)) return std::nullopt;
  return ResetCommand{backup.pose, backup.cov};
}

/// Debounces a wanted on/off state: the state flips only after `needed`
/// consecutive observations disagree with it.
class Hysteresis {
 public:
  explicit Hysteresis(int needed, bool initial = true) : needed_(needed), state_(initial) {}

  /// Returns the new state when it flips.
  std::optional<bool> observe(bool want) {
    if (want == state_) {
      streak_ = 0;
      return std::nullopt;
    }
    if (++streak_ < needed_) return std::nullopt;
    streak_ = 0;
    state_ = want;
    return state_;
  }

  bool state() const { return state_; }

 private:
  int needed_;
  bool state_;
  int streak_ = 0;
};

/// Parsed control-channel line: `reset <x> <y> <heading_deg>` or `reinit`.
struct ControlCommand {
  enum class Kind { Reset, Reinit } kind = Kind::Reinit;
  Pose2D pose;
};

inline std::optional<ControlCommand> parse_control_command(const std::string& line) {
  std::istringstream in(line);
  std::string verb;
  if (!(in >> verb)) return std::nullopt;
  ControlCommand c;
  if (verb == "reinit") {
    c.kind = ControlCommand::Kind::Reinit;
  } else if (verb == "reset") {
    double x = 0, y = 0, h = 0;
    if (!(in >> x >> y >> h) || !std::isfinite(x) || !std::isfinite(y) || !std::isfinite(h)) return std::nullopt;
    c.kind = ControlCommand::Kind::Reset;
    c.pose = Pose2D(x, y, deg2rad(h));
  } else {
    return std::nullopt;
  }
  std::string extra;
  if (in >> extra) return std::nullopt;
  return c;
}

struct ExperimentTreeConfig {
  bool backup_gps = true;
  bool main_lidar = true;
  bool main_gps = true;
  bool manual_reset = true;
  bool gps_context_gate = true;
};

/// The localisation behaviors as named bindings over a LocalisationSystem,
/// plus builders for the sensor subtree, the sensor selector and the
/// experiment tree. Trees loaded from JSON use the same bindings.
class BehaviorLibrary {
 public:
  explicit BehaviorLibrary(LocalisationSystem& sys) : sys_(&sys), gate_(sys.config().context_hysteresis) {
    register_bindings();
  }

  BehaviorLibrary(const BehaviorLibrary&) = delete;
  BehaviorLibrary& operator=(const BehaviorLibrary&) = delete;

  /// The tree the context gate edits. Set once the tree is built.
  void attach(bt::BehaviorTree* tree) { tree_ = tree; }

  const bt::BindingRegistry& registry() const { return reg_; }

  bt::NodePtr build_single_sensor_subtree(const SensorSubtreeSpec& spec, bt::NodeIds& ids) const {
    validate(spec);
    const std::string s = sensor_key(spec.sensor);
    const std::string t(to_string(spec.target));
    const std::string name = subtree_name(spec.sensor, spec.target);
    const std::string st = ":" + s + ":" + t;

    auto init = reg_.composite(ids, NodeKind::Sequence, name + ".init",
                               bt::node_list(reg_.leaf(ids, NodeKind::Condition, name + ".ready",
                                                       (spec.block_while_initialising ? "ready_blocking" : "ready") + st),
                                             reg_.leaf(ids, NodeKind::Action, name + ".connect", "connect" + st)));

    std::vector<bt::NodePtr> localise;
    localise.push_back(reg_.leaf(ids, NodeKind::Action, name + ".monitor", "monitor" + st));
    if (spec.target == Target::Main) {
      localise.push_back(reg_.leaf(ids, NodeKind::Action, name + ".cross_filter_reset", "cross_filter_reset"));
    }
    for (est::GateBound b : spec.ladder) {
      const std::string bs(est::to_string(b));
      localise.push_back(reg_.composite(
          ids, NodeKind::Sequence, name + "." + bs,
          bt::node_list(reg_.leaf(ids, NodeKind::Action, name + ".set_bound." + bs, "set_bound" + st + ":" + bs),
                        reg_.leaf(ids, NodeKind::Condition, name + ".localising." + bs, "localising" + st + ":" + bs))));
    }
    localise.push_back(reg_.leaf(ids, NodeKind::Action, name + ".ended", "localise_ended"));
    auto loc = reg_.composite(ids, NodeKind::Selector, name + ".localise", std::move(localise));

    auto fail = reg_.composite(ids, NodeKind::Sequence, name + ".fail",
                               bt::node_list(reg_.leaf(ids, NodeKind::Action, name + ".disconnect", "disconnect" + st),
                                             reg_.leaf(ids, NodeKind::Action, name + ".clear", "clear" + st),
                                             reg_.leaf(ids, NodeKind::Action, name + ".failed", "fail")));

    return reg_.composite(ids, NodeKind::Sequence, name, bt::node_list(std::move(init), std::move(loc), std::move(fail)),
                          "subtree" + st);
  }

  /// Sensor subtrees ordered by priority (lowest rank first), followed by the
  /// dead-reckoning fallback; optionally headed by the manual reset node.
  bt::NodePtr build_sensor_selector(std::vector<SensorSubtreeSpec> specs, bt::NodeIds& ids,
                                    bool manual_reset = false) const {
    if (specs.empty()) throw std::invalid_argument("sensor selector needs at least one subtree");
    std::stable_sort(specs.begin(), specs.end(), [](const auto& a, const auto& b) { return a.priority < b.priority; });
    std::vector<bt::NodePtr> children;
    if (manual_reset) children.push_back(reg_.leaf(ids, NodeKind::Action, "manual_reset", "manual_reset"));
    for (const auto& s : specs) children.push_back(build_single_sensor_subtree(s, ids));
    children.push_back(reg_.leaf(ids, NodeKind::Action, "dr_only", "dr_only"));
    return reg_.composite(ids, NodeKind::Selector, "main", std::move(children));
  }

  bt::NodePtr build_experiment_tree(const ExperimentTreeConfig& cfg, bt::NodeIds& ids) const {
    const mapdb::MapDatabase* map = sys_->map();
    if (cfg.main_lidar && (map == nullptr || map->features.empty())) {
      throw std::invalid_argument("experiment tree: lidar subtree needs a feature layer");
    }
    if (cfg.gps_context_gate && (map == nullptr || map->location.empty())) {
      throw std::invalid_argument("experiment tree: GPS context gate needs a location model");
    }
    std::vector<bt::NodePtr> listeners;
    listeners.push_back(reg_.leaf(ids, NodeKind::Action, "listen", "listen"));
    if (cfg.gps_context_gate) {
      listeners.push_back(reg_.leaf(ids, NodeKind::Action, "gps_context_gate", "gps_context_gate"));
    }
    std::vector<bt::NodePtr> root;
    root.push_back(reg_.composite(ids, NodeKind::Sequence, "listeners", std::move(listeners)));
    if (cfg.backup_gps) root.push_back(reg_.subtree(subtree_name(est::Sensor::Gps, Target::Backup), ids));
    std::vector<SensorSubtreeSpec> main;
    if (cfg.main_lidar) main.push_back(default_spec(est::Sensor::Lidar, Target::Main));
    if (cfg.main_gps) main.push_back(default_spec(est::Sensor::Gps, Target::Main));
    if (main.empty()) {
      std::vector<bt::NodePtr> children;
      if (cfg.manual_reset) children.push_back(reg_.leaf(ids, NodeKind::Action, "manual_reset", "manual_reset"));
      children.push_back(reg_.leaf(ids, NodeKind::Action, "dr_only", "dr_only"));
      root.push_back(reg_.composite(ids, NodeKind::Selector, "main", std::move(children)));
    } else {
      root.push_back(build_sensor_selector(std::move(main), ids, cfg.manual_reset));
    }
    return reg_.composite(ids, NodeKind::Parallel, "root", std::move(root));
  }

  static SensorSubtreeSpec default_spec(est::Sensor s, Target t) {
    SensorSubtreeSpec spec;
    spec.sensor = s;
    spec.target = t;
    spec.priority = s == est::Sensor::Lidar ? 0 : 1;
    spec.block_while_initialising = t == Target::Backup;
    return spec;
  }

  /// Ladder position of a subtree, if it has folded any records.
  std::optional<LadderState> ladder(est::Sensor s, Target t) const {
    return sys_->blackboard().value<LadderState>(key(s, t, "ladder"));
  }

  /// True while the GPS subtrees are in the tree (context gate view).
  bool gps_subtrees_present() const { return gate_.state(); }

 private:
  static std::string key(est::Sensor s, Target t, const std::string& leaf) {
    return subtree_name(s, t) + "." + leaf;
  }

  bt::Blackboard& bb() { return sys_->blackboard(); }

  NodeStatus ready(est::Sensor s, Target t, bool blocking) {
    const NodeStatus waiting = blocking ? NodeStatus::Running : NodeStatus::Failure;
    if (sys_->connected(s, t)) return NodeStatus::Success;
    listen();  // a subtree may run without the listeners branch
    // Readiness is earned while this check is being ticked: a gap in ticking
    // (another sibling was running) starts the count over.
    const auto tick = bb().value<std::int64_t>(bt::kTickKey).value_or(0);
    auto& last = bb().get_or_create<std::int64_t>(key(s, t, "ready_tick"));
    auto& count = bb().get_or_create<int>(key(s, t, "ready_count"));
    if (last != tick - 1 && last != tick) count = 0;
    last = tick;
    if (s == est::Sensor::Gps) {
      for (const auto& g : bb().list<GpsSample>(kGpsFixTopic)) {
        count = g.fix.status == GpsStatus::Fix ? count + 1 : 0;
      }
      const auto latest = bb().value<GpsSample>("gps/latest");
      if (!latest || latest->fix.status != GpsStatus::Fix) return waiting;
      if (elapsed(latest->stamp, sys_->now()) > 1.5) return waiting;
      if (const auto* loc = sys_->location();
          loc != nullptr && loc->query_gps_model(latest->fix.position) == mapdb::GpsQuality::Unavailable) {
        return waiting;
      }
      return count >= sys_->config().gps_ready_fixes ? NodeStatus::Success : waiting;
    }
    for (const auto& a : bb().list<pipe::LidarObservation>(kAlignmentTopic)) {
      count = a.result.converged && a.history_consistent ? count + 1 : 0;
    }
    return count >= sys_->config().lidar_ready_frames ? NodeStatus::Success : waiting;
  }

  NodeStatus connect(est::Sensor s, Target t) {
    if (sys_->connected(s, t)) return NodeStatus::Success;
    listen();
    const auto& st = sys_->kernel(t).state();
    const bool lost = !st.initialized() || st.health == est::Health::Lost;
    if (lost && s == est::Sensor::Gps) {
      if (const auto fix = bb().value<GpsSample>("gps/latest")) sys_->reinit_from_fix(t, fix->fix);
    } else if (lost) {
      if (const auto a = bb().value<pipe::LidarObservation>("lidar/latest")) {
        sys_->reinit(t, a->result.pose, sys_->config().kernel.lidar_noise.covariance());
      }
    }
    sys_->connect(s, t);
    sys_->kernel(t).set_bound(s, est::GateBound::TwoSigma);
    bb().set(key(s, t, "ladder"), LadderState{});
    bb().set(key(s, t, "connected_at"), sys_->now());
    return NodeStatus::Success;
  }

  NodeStatus monitor(est::Sensor s, Target t) {
    auto& ladder = bb().get_or_create<LadderState>(key(s, t, "ladder"));
    for (const auto& r : bb().list<est::UpdateStats>(std::string(to_string(t)) + "/stats")) {
      if (r.sensor == s) ladder_observe(ladder, r, sys_->config().ladder);
    }
    if (s == est::Sensor::Gps) {
      const auto* loc = sys_->location();
      const auto& pose = sys_->kernel(t).state().pose;
      if (loc != nullptr && loc->query_gps_model(pose.position()) == mapdb::GpsQuality::Noisy) {
        ladder.level = 0;
        ladder.failing = 0;
      }
    }
    return NodeStatus::Failure;
  }

  NodeStatus localising(est::Sensor s, Target t, est::GateBound b) {
    const auto* ladder = bb().get<LadderState>(key(s, t, "ladder"));
    const int level = ladder != nullptr ? ladder->level : 0;
    if (level > ladder_index(b)) return NodeStatus::Failure;
    if (sys_->kernel(t).state().health == est::Health::Lost) return NodeStatus::Failure;
    Timestamp since = bb().value<Timestamp>(key(s, t, "connected_at")).value_or(sys_->now());
    if (ladder != nullptr && ladder->last_accepted) since = std::max(since, *ladder->last_accepted);
    return elapsed(since, sys_->now()) <= sys_->config().localising_window ? NodeStatus::Running
                                                                          : NodeStatus::Failure;
  }

  void release(est::Sensor s, Target t) {
    sys_->disconnect(s, t);
    bb().erase_prefix(subtree_name(s, t) + ".");
  }

  void cross_filter_reset() {
    const auto cmd = cross_filter_reset_check(sys_->kernel(Target::Main).state(), sys_->kernel(Target::Backup).state(),
                                              sys_->config().reset_heading_threshold);
    if (cmd) sys_->reset_main(cmd->pose, cmd->cov, "cross_filter");
  }

  NodeStatus manual_reset() {
    bool handled = false;
    for (const auto& line : bb().list<std::string>(kCommandTopic)) {
      const auto cmd = parse_control_command(line);
      if (!cmd) {
        log::warn("control: ignoring '", line, "'");
        continue;
      }
      if (cmd->kind == ControlCommand::Kind::Reset) {
        sys_->reset_main(cmd->pose, sys_->config().initial_covariance(), "manual");
        handled = true;
        continue;
      }
      const auto& backup = sys_->kernel(Target::Backup).state();
      if (backup.initialized()) {
        sys_->reset_main(backup.pose, backup.cov, "manual");
        handled = true;
      } else if (const auto fix = bb().value<GpsSample>("gps/latest"); fix && fix->fix.status == GpsStatus::Fix) {
        sys_->reinit_from_fix(Target::Main, fix->fix);
        handled = true;
      } else {
        log::warn("control: reinit without a backup estimate or GPS fix");
      }
    }
    return handled ? NodeStatus::Success : NodeStatus::Failure;
  }

  NodeStatus listen() {
    const auto fixes = bb().list<GpsSample>(kGpsFixTopic);
    if (!fixes.empty()) bb().set("gps/latest", fixes.back());
    for (const auto& a : bb().list<pipe::LidarObservation>(kAlignmentTopic)) {
      if (a.result.converged) bb().set("lidar/latest", a);
    }
    return NodeStatus::Success;
  }

  NodeStatus context_gate() {
    const auto* loc = sys_->location();
    if (loc == nullptr || tree_ == nullptr) return NodeStatus::Success;
    const auto& main = sys_->kernel(Target::Main).state();
    if (!main.initialized()) return NodeStatus::Success;
    const bool usable = loc->query_gps_model(main.pose.position()) != mapdb::GpsQuality::Unavailable;
    const auto flip = gate_.observe(usable);
    if (!flip) return NodeStatus::Success;
    for (Target t : {Target::Backup, Target::Main}) {
      const std::string name = subtree_name(est::Sensor::Gps, t);
      if (!*flip) {
        bt::Node* n = tree_->find_by_name(name);
        if (n == nullptr) continue;
        bt::Node* parent = tree_->parent_of(n->id);
        const auto& kids = parent->children;
        const auto idx = static_cast<std::size_t>(
            std::find_if(kids.begin(), kids.end(), [&](const bt::NodePtr& c) { return c.get() == n; }) - kids.begin());
        pruned_[name] = {parent->id, idx};
        tree_->prune_subtree(n->id);
        log::info("context gate: pruned ", name);
      } else if (auto it = pruned_.find(name); it != pruned_.end()) {
        tree_->insert_subtree(it->second.first, it->second.second, reg_.subtree(name, tree_->ids()));
        pruned_.erase(it);
        log::info("context gate: inserted ", name);
      }
    }
    return NodeStatus::Success;
  }

  void register_bindings() {
    auto action = [this](const std::string& name, std::function<NodeStatus()> f) {
      reg_.add(name, [f](bt::Node& n) { n.callback = [f](bt::Blackboard&) { return f(); }; });
    };
    action("listen", [this] { return listen(); });
    action("gps_context_gate", [this] { return context_gate(); });
    action("manual_reset", [this] { return manual_reset(); });
    action("dr_only", [this] {
      cross_filter_reset();
      return NodeStatus::Running;
    });
    action("cross_filter_reset", [this] {
      cross_filter_reset();
      return NodeStatus::Failure;
    });
    action("localise_ended", [] { return NodeStatus::Success; });
    action("fail", [] { return NodeStatus::Failure; });

    for (est::Sensor s : {est::Sensor::Gps, est::Sensor::Lidar}) {
      for (Target t : {Target::Main, Target::Backup}) {
        const std::string st = ":" + sensor_key(s) + ":" + std::string(to_string(t));
        action("ready" + st, [this, s, t] { return ready(s, t, false); });
        action("ready_blocking" + st, [this, s, t] { return ready(s, t, true); });
        action("connect" + st, [this, s, t] { return connect(s, t); });
        action("monitor" + st, [this, s, t] { return monitor(s, t); });
        action("disconnect" + st, [this, s, t] {
          sys_->disconnect(s, t);
          return NodeStatus::Success;
        });
        action("clear" + st, [this, s, t] {
          bb().erase_prefix(subtree_name(s, t) + ".");
          return NodeStatus::Success;
        });
        for (est::GateBound b : kLadder) {
          const std::string bs = ":" + std::string(est::to_string(b));
          action("set_bound" + st + bs, [this, s, t, b] {
            sys_->kernel(t).set_bound(s, b);
            return NodeStatus::Success;
          });
          action("localising" + st + bs, [this, s, t, b] { return localising(s, t, b); });
        }
        reg_.add("subtree" + st, [this, s, t](bt::Node& n) {
          n.on_halt = [this, s, t] { release(s, t); };
          n.on_teardown = [this, s, t] { release(s, t); };
        });
        reg_.add_subtree(subtree_name(s, t), [this, s, t](bt::NodeIds& ids) {
          return build_single_sensor_subtree(default_spec(s, t), ids);
        });
      }
    }
  }

  LocalisationSystem* sys_;
  bt::BindingRegistry reg_;
  bt::BehaviorTree* tree_ = nullptr;
  Hysteresis gate_;
  std::map<std::string, std::pair<bt::NodeId, std::size_t>> pruned_;
};

}  // namespace btloc::beh
