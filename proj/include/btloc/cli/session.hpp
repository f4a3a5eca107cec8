#pragma once

#include <chrono>
#include <condition_variable>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "btloc/behaviors/subtrees.hpp"
#include "btloc/behaviors/system.hpp"
#include "btloc/bt/loader.hpp"
#include "btloc/bt/tree.hpp"
#include "btloc/metrics/logs.hpp"
#include "btloc/metrics/report.hpp"
#include "btloc/sim/world.hpp"

namespace btloc::cli {

/// Hands measurements from a producer thread to the tick loop in stamp order.
class IngestionQueue {
 public:
  void push(Measurement m) {
    {
      std::lock_guard lock(mutex_);
      queue_.push_back(std::move(m));
    }
    cv_.notify_one();
  }

  void close() {
    {
      std::lock_guard lock(mutex_);
      closed_ = true;
    }
    cv_.notify_all();
  }

  /// Calls `f` on every measurement stamped at or before `t`. Blocks until the
  /// producer has delivered something later than `t` or closed the queue, so
  /// the result does not depend on thread timing.
  template <class F>
  void drain_until(Timestamp t, F&& f) {
    for (;;) {
      std::unique_lock lock(mutex_);
      cv_.wait(lock, [&] { return closed_ || !queue_.empty(); });
      if (queue_.empty()) return;
      if (queue_.front().stamp > t) return;
      Measurement m = std::move(queue_.front());
      queue_.pop_front();
      lock.unlock();
      f(m);
    }
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Measurement> queue_;
  bool closed_ = false;
};

/// Line-oriented control file, re-read from the last offset on every poll.
class ControlChannel {
 public:
  explicit ControlChannel(std::string path) : path_(std::move(path)) {}

  std::vector<std::string> poll() {
    std::vector<std::string> out;
    if (path_.empty()) return out;
    std::ifstream in(path_);
    if (!in) return out;
    in.seekg(offset_);
    std::string line;
    while (std::getline(in, line)) {
      if (in.eof()) break;  // incomplete last line; pick it up next time
      offset_ += static_cast<std::streamoff>(line.size() + 1);
      if (!line.empty()) out.push_back(line);
    }
    return out;
  }

 private:
  std::string path_;
  std::streamoff offset_ = 0;
};

struct SessionOptions {
  beh::SystemConfig system;
  /// Tree definition; the built-in experiment tree when empty.
  std::optional<nlohmann::json> tree;
  beh::ExperimentTreeConfig tree_config;
  double tick_period = 0.5;
  /// Seconds; 0 runs to the last measurement.
  double duration = 0.0;
  Pose2D start;
  std::string control_path;
  std::ostream* trace = nullptr;
  bool threaded = true;
  /// Called after measurements are ingested and health assessed, before the tree ticks.
  std::function<void(beh::LocalisationSystem&, Timestamp)> before_tick;
  std::function<void(beh::LocalisationSystem&, const beh::BehaviorLibrary&, const metrics::TickRecord&)> after_tick;
};

struct SessionResult {
  std::vector<metrics::TickRecord> ticks;
  std::vector<beh::TransitionEvent> events;
  std::vector<est::UpdateStats> stats;
  /// Update outcomes with poses, the input format of the location model builder.
  mapdb::RunLog location_log;
  metrics::TimingLog timing;
  bool main_lost = false;
};

inline SessionResult run_session(const std::vector<Measurement>& ms, const std::vector<sim::TruthSample>* truth,
                                 const mapdb::MapDatabase& map, const SessionOptions& opt) {
  using Clock = std::chrono::steady_clock;
  auto ms_since = [](Clock::time_point a) {
    return std::chrono::duration<double, std::milli>(Clock::now() - a).count();
  };
  if (!(opt.tick_period > 0)) throw std::invalid_argument("tick period must be positive");

  beh::LocalisationSystem sys(&map, opt.system);
  beh::BehaviorLibrary lib(sys);
  bt::NodeIds ids;
  bt::NodePtr root = opt.tree ? bt::load_tree(*opt.tree, lib.registry(), ids)
                              : lib.build_experiment_tree(opt.tree_config, ids);
  bt::BehaviorTree tree(std::move(root), sys.blackboard());
  lib.attach(&tree);
  tree.set_trace(opt.trace);

  std::map<std::int64_t, Pose2D> truth_at;
  if (truth != nullptr) {
    for (const auto& t : *truth) truth_at[t.stamp.micros] = t.pose;
  }

  SessionResult res;
  sys.initialize(opt.start, Timestamp{});

  const double duration = opt.duration > 0 ? opt.duration : (ms.empty() ? 0.0 : ms.back().stamp.seconds());
  IngestionQueue queue;
  std::thread producer;
  if (opt.threaded) {
    producer = std::thread([&] {
      for (const auto& m : ms) queue.push(m);
      queue.close();
    });
  } else {
    for (const auto& m : ms) queue.push(m);
    queue.close();
  }

  ControlChannel control(opt.control_path);
  auto ingest = [&](const Measurement& m) {
    const std::size_t before = sys.stats().size();
    const auto t0 = Clock::now();
    sys.ingest(m);
    const double cost = ms_since(t0);
    if (m.holds<LidarScan>()) res.timing.lidar_ms.push_back(cost);
    if (!m.holds<GpsFix>() && !m.holds<LidarScan>()) return;
    if (m.holds<GpsFix>()) res.timing.gps_ms.push_back(cost);
    bool logged = false;
    for (std::size_t i = before; i < sys.stats().size(); ++i) {
      const auto& s = sys.stats()[i];
      const bool wanted = s.sensor == est::Sensor::Gps ? s.filter == "backup" : s.filter == "main";
      if (!wanted || !s.mahalanobis) continue;
      res.location_log.push_back({s.sensor, s.outcome, s.pose});
      logged = true;
    }
    if (!logged && m.holds<GpsFix>() && m.as<GpsFix>().status == GpsStatus::NoFix) {
      res.location_log.push_back({est::Sensor::Gps, est::Outcome::NoFix, sys.kernel(beh::Target::Main).state().pose});
    }
  };

  try {
    std::size_t stats_seen = 0;
    for (std::int64_t k = 0;; ++k) {
      const double tsec = static_cast<double>(k) * opt.tick_period;
      if (tsec > duration + 1e-9) break;
      const Timestamp now = Timestamp::from_seconds(tsec);
      const auto t0 = Clock::now();
      queue.drain_until(now, ingest);
      for (auto& line : control.poll()) sys.blackboard().append(beh::kCommandTopic, line);
      sys.begin_tick(now);
      if (opt.before_tick) opt.before_tick(sys, now);
      tree.tick();
      sys.end_tick();
      res.timing.tick_ms.push_back(ms_since(t0));

      metrics::TickRecord rec;
      rec.stamp = now;
      const auto& m = sys.kernel(beh::Target::Main).state();
      const auto& b = sys.kernel(beh::Target::Backup).state();
      rec.main_pose = m.pose;
      rec.main_mode = m.mode;
      rec.main_health = m.health;
      rec.backup_pose = b.pose;
      rec.backup_mode = b.mode;
      rec.backup_health = b.health;
      for (; stats_seen < sys.stats().size(); ++stats_seen) {
        const auto& s = sys.stats()[stats_seen];
        if (s.filter == "backup" && s.sensor == est::Sensor::Gps) rec.backup_gps = s.outcome;
      }
      if (auto it = truth_at.find(now.micros); it != truth_at.end()) rec.truth = it->second;
      res.ticks.push_back(rec);
      if (opt.after_tick) opt.after_tick(sys, lib, rec);
    }
  } catch (...) {
    queue.close();
    if (producer.joinable()) producer.join();
    throw;
  }
  if (producer.joinable()) producer.join();

  res.events = sys.events();
  res.stats = sys.stats();
  res.main_lost = !res.ticks.empty() && res.ticks.back().main_health == est::Health::Lost;
  return res;
}

}  // namespace btloc::cli
