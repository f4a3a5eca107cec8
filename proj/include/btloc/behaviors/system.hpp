#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "btloc/behaviors/events.hpp"
#include "btloc/behaviors/ladder.hpp"
#include "btloc/bt/blackboard.hpp"
#include "btloc/core/log.hpp"
#include "btloc/mapdb/map_io.hpp"
#include "btloc/pipeline/modules.hpp"

namespace btloc::beh {

enum class Target { Main, Backup };

inline constexpr std::string_view to_string(Target t) { return t == Target::Main ? "main" : "backup"; }

inline Target target_from_string(std::string_view s) {
  if (s == "main") return Target::Main;
  if (s == "backup") return Target::Backup;
  throw std::invalid_argument("unknown filter target: " + std::string(s));
}

inline std::string sensor_key(est::Sensor s) { return s == est::Sensor::Gps ? "gps" : "lidar"; }

inline est::Sensor sensor_from_key(std::string_view s) {
  if (s == "gps") return est::Sensor::Gps;
  if (s == "lidar") return est::Sensor::Lidar;
  throw std::invalid_argument("unknown sensor: " + std::string(s));
}

struct SystemConfig {
  pipe::KernelConfig kernel;
  pipe::LidarMatcherConfig matcher;
  LadderConfig ladder;
  /// A localising branch fails after this long without an ACCEPTED update, s.
  double localising_window = 5.0;
  int gps_ready_fixes = 3;
  int lidar_ready_frames = 3;
  int context_hysteresis = 3;
  double reset_heading_threshold = deg2rad(10.0);
  double initial_position_sigma = 0.5;
  double initial_heading_sigma = deg2rad(2.0);
  /// Heading sigma floor when a filter is re-initialised from a GPS fix.
  double reinit_heading_sigma = deg2rad(5.0);

  Covariance3 initial_covariance() const {
    return Eigen::Vector3d(initial_position_sigma * initial_position_sigma,
                           initial_position_sigma * initial_position_sigma,
                           initial_heading_sigma * initial_heading_sigma)
        .asDiagonal();
  }
};

inline nlohmann::json to_json(const SystemConfig& c) {
  const auto& k = c.kernel;
  return {{"process_noise", {{"x", k.process_noise.x}, {"y", k.process_noise.y}, {"heading", k.process_noise.heading}}},
          {"lidar_noise", {{"sigma_xy", k.lidar_noise.sigma_xy},
                           {"heading_sigma_deg", rad2deg(k.lidar_noise.sigma_heading)}}},
          {"health", {{"recent_window", k.health.recent_window},
                      {"trace_good", k.health.trace_good},
                      {"trace_lost", k.health.trace_lost},
                      {"max_dr_distance", k.health.max_dr_distance}}},
          {"matcher", {{"association_radius", c.matcher.alignment.association_radius},
                       {"min_matches", c.matcher.alignment.min_matches},
                       {"max_rms", c.matcher.alignment.max_rms},
                       {"max_iterations", c.matcher.alignment.max_iterations},
                       {"sensor_range", c.matcher.sensor_range},
                       {"heading_tolerance_deg", rad2deg(c.matcher.heading_tolerance)},
                       {"history_box", c.matcher.history_box}}},
          {"ladder", {{"descend_after", c.ladder.descend_after}, {"improve_after", c.ladder.improve_after}}},
          {"localising_window", c.localising_window},
          {"gps_ready_fixes", c.gps_ready_fixes},
          {"lidar_ready_frames", c.lidar_ready_frames},
          {"context_hysteresis", c.context_hysteresis},
          {"reset_heading_threshold_deg", rad2deg(c.reset_heading_threshold)},
          {"initial_position_sigma", c.initial_position_sigma},
          {"initial_heading_sigma_deg", rad2deg(c.initial_heading_sigma)},
          {"reinit_heading_sigma_deg", rad2deg(c.reinit_heading_sigma)}};
}

/// Missing keys keep their defaults.
inline SystemConfig system_config_from_json(const nlohmann::json& j) {
  SystemConfig c;
  auto& k = c.kernel;
  if (j.contains("process_noise")) {
    const auto& p = j.at("process_noise");
    k.process_noise.x = p.value("x", k.process_noise.x);
    k.process_noise.y = p.value("y", k.process_noise.y);
    k.process_noise.heading = p.value("heading", k.process_noise.heading);
  }
  if (j.contains("lidar_noise")) {
    const auto& p = j.at("lidar_noise");
    k.lidar_noise.sigma_xy = p.value("sigma_xy", k.lidar_noise.sigma_xy);
    k.lidar_noise.sigma_heading = deg2rad(p.value("heading_sigma_deg", rad2deg(k.lidar_noise.sigma_heading)));
  }
  if (j.contains("health")) {
    const auto& p = j.at("health");
    k.health.recent_window = p.value("recent_window", k.health.recent_window);
    k.health.trace_good = p.value("trace_good", k.health.trace_good);
    k.health.trace_lost = p.value("trace_lost", k.health.trace_lost);
    k.health.max_dr_distance = p.value("max_dr_distance", k.health.max_dr_distance);
  }
  if (j.contains("matcher")) {
    const auto& p = j.at("matcher");
    auto& a = c.matcher.alignment;
    a.association_radius = p.value("association_radius", a.association_radius);
    a.min_matches = p.value("min_matches", a.min_matches);
    a.max_rms = p.value("max_rms", a.max_rms);
    a.max_iterations = p.value("max_iterations", a.max_iterations);
    c.matcher.sensor_range = p.value("sensor_range", c.matcher.sensor_range);
    c.matcher.heading_tolerance = deg2rad(p.value("heading_tolerance_deg", rad2deg(c.matcher.heading_tolerance)));
    c.matcher.history_box = p.value("history_box", c.matcher.history_box);
  }
  if (j.contains("ladder")) {
    c.ladder.descend_after = j.at("ladder").value("descend_after", c.ladder.descend_after);
    c.ladder.improve_after = j.at("ladder").value("improve_after", c.ladder.improve_after);
  }
  c.localising_window = j.value("localising_window", c.localising_window);
  c.gps_ready_fixes = j.value("gps_ready_fixes", c.gps_ready_fixes);
  c.lidar_ready_frames = j.value("lidar_ready_frames", c.lidar_ready_frames);
  c.context_hysteresis = j.value("context_hysteresis", c.context_hysteresis);
  c.reset_heading_threshold = deg2rad(j.value("reset_heading_threshold_deg", rad2deg(c.reset_heading_threshold)));
  c.initial_position_sigma = j.value("initial_position_sigma", c.initial_position_sigma);
  c.initial_heading_sigma = deg2rad(j.value("initial_heading_sigma_deg", rad2deg(c.initial_heading_sigma)));
  c.reinit_heading_sigma = deg2rad(j.value("reinit_heading_sigma_deg", rad2deg(c.reinit_heading_sigma)));
  return c;
}

struct GpsSample {
  Timestamp stamp;
  GpsFix fix;
};

/// Blackboard topics written outside the tree.
inline constexpr const char* kGpsFixTopic = "gps/fix";
inline constexpr const char* kAlignmentTopic = "lidar/alignment";
inline constexpr const char* kCommandTopic = "control/command";

/// The estimation pipeline plus the handles the behavior layer acts on:
/// main and backup EKF kernels, switchable sensor edges, the blackboard, and
/// the transition event log.
class LocalisationSystem {
 public:
  explicit LocalisationSystem(const mapdb::MapDatabase* map, SystemConfig cfg = {}) : map_(map), cfg_(cfg) {
    using pipe::Connection;
    for (std::size_t i = 0; i < 4; ++i) {
      static const char* names[] = {"encoder", "gyro", "gps", "lidar"};
      sources_[i] = graph_.add_module(std::make_shared<pipe::SourceModule>(names[i], i));
    }
    const auto motion = graph_.add_module(std::make_shared<pipe::MotionModel>());
    gps_model_ = graph_.add_module(std::make_shared<pipe::GpsObservationModel>());
    main_ = std::make_shared<pipe::EkfKernel>("main", cfg_.kernel);
    backup_ = std::make_shared<pipe::EkfKernel>("backup", cfg_.kernel);
    auto matcher = std::make_shared<pipe::LidarMatcher>(
        map_ != nullptr ? &map_->features : nullptr, map_ != nullptr ? &map_->location : nullptr,
        [k = main_.get()](Timestamp t) { return k->predicted_pose(t); }, cfg_.matcher);
    matcher->set_listener([this](const pipe::LidarObservation& o) { bb_.append(kAlignmentTopic, o); });
    matcher_ = graph_.add_module(matcher);
    kernels_[0] = graph_.add_module(main_);
    kernels_[1] = graph_.add_module(backup_);
    recorder_ = std::make_shared<pipe::StatsRecorder>();
    const auto rec = graph_.add_module(recorder_);
    const auto pub = graph_.add_module(std::make_shared<pipe::BlackboardPublisher>(bb_));

    graph_.connect({sources_[0], "out", motion, "encoder"});
    graph_.connect({sources_[1], "out", motion, "gyro"});
    graph_.connect({sources_[2], "out", gps_model_, "fix"});
    graph_.connect({sources_[3], "out", matcher_, "scan"});
    for (auto k : kernels_) {
      graph_.connect({motion, "motion", k, "motion"});
      graph_.connect({k, "stats", rec, "stats"});
      graph_.connect({k, "stats", pub, "stats"});
      graph_.connect({k, "state", pub, "state"});
    }
  }

  LocalisationSystem(const LocalisationSystem&) = delete;
  LocalisationSystem& operator=(const LocalisationSystem&) = delete;

  void initialize(const Pose2D& pose, Timestamp t) {
    main_->initialize(pose, cfg_.initial_covariance(), t);
    backup_->initialize(pose, cfg_.initial_covariance(), t);
    now_ = t;
    last_mode_ = main_->state().mode;
  }

  /// Feeds one measurement through the pipeline. Caller keeps time order.
  void ingest(const Measurement& m) {
    if (const auto* fix = std::get_if<GpsFix>(&m.payload)) bb_.append(kGpsFixTopic, GpsSample{m.stamp, *fix});
    graph_.dispatch(sources_[m.payload.index()], m);
  }

  void begin_tick(Timestamp now) {
    now_ = now;
    main_->assess(now);
    backup_->assess(now);
  }

  /// Attributes jumps of pending switches, then records a switch if the
  /// main filter's mode changed during the tick.
  void end_tick() {
    const auto& recs = recorder_->records();
    for (; stats_cursor_ < recs.size(); ++stats_cursor_) {
      const auto& r = recs[stats_cursor_];
      if (!pending_switch_ || r.filter != "main" || r.outcome != est::Outcome::Accepted) continue;
      events_[*pending_switch_].jump_distance = r.correction;
      pending_switch_.reset();
    }
    const est::Mode mode = main_->state().mode;
    if (mode != last_mode_) {
      events_.push_back({now_, EventKind::SensorSwitch, last_mode_, mode, 0.0, "selector"});
      pending_switch_.reset();
      if (mode == est::Mode::LidarDr || mode == est::Mode::GpsDr) pending_switch_ = events_.size() - 1;
      last_mode_ = mode;
    }
  }

  bool connected(est::Sensor s, Target t) const { return graph_.connected(edge(s, t)); }

  /// Routes a sensor's observations into a filter. The main filter takes at
  /// most one global sensor at a time.
  void connect(est::Sensor s, Target t) {
    if (t == Target::Main) {
      const est::Sensor other = s == est::Sensor::Gps ? est::Sensor::Lidar : est::Sensor::Gps;
      if (connected(other, t)) disconnect(other, t);
    }
    graph_.connect(edge(s, t));
    kernel(t).set_mode(s == est::Sensor::Gps ? est::Mode::GpsDr : est::Mode::LidarDr);
  }

  void disconnect(est::Sensor s, Target t) {
    if (!connected(s, t)) return;
    graph_.disconnect(edge(s, t));
    const est::Sensor other = s == est::Sensor::Gps ? est::Sensor::Lidar : est::Sensor::Gps;
    if (!connected(other, t)) kernel(t).set_mode(est::Mode::DrOnly);
  }

  /// Main filter loss recovery; logged as a LOSS_RECOVERY event.
  void reset_main(const Pose2D& pose, const Covariance3& cov, const std::string& cause) {
    const est::Mode mode = main_->state().mode;
    const auto ev = main_->reset(pose, cov, now_);
    events_.push_back({now_, EventKind::LossRecovery, mode, mode, ev.jump_distance, cause});
    log::info("loss recovery (", cause, "): jump ", ev.jump_distance, " m");
  }

  /// Re-seeds a filter from a global sensor. The main filter logs it as a
  /// LOSS_RECOVERY event; the backup filter is reset silently.
  void reinit(Target t, const Pose2D& pose, const Covariance3& cov, const std::string& cause = "reinit") {
    if (t == Target::Main) {
      reset_main(pose, cov, cause);
    } else {
      backup_->reset(pose, cov, now_);
    }
  }

  /// Position from a GPS fix, heading kept from the filter.
  void reinit_from_fix(Target t, const GpsFix& fix) {
    const auto& st = kernel(t).state();
    Covariance3 cov = Covariance3::Zero();
    cov.topLeftCorner<2, 2>() = fix.cov;
    const double hv = st.initialized() ? st.cov(2, 2) : 0.0;
    cov(2, 2) = std::max(hv, cfg_.reinit_heading_sigma * cfg_.reinit_heading_sigma);
    reinit(t, Pose2D(fix.position.x(), fix.position.y(), st.pose.heading), cov);
  }

  pipe::EkfKernel& kernel(Target t) { return t == Target::Main ? *main_ : *backup_; }
  const pipe::EkfKernel& kernel(Target t) const { return t == Target::Main ? *main_ : *backup_; }

  bt::Blackboard& blackboard() { return bb_; }
  pipe::PipelineGraph& graph() { return graph_; }
  const mapdb::MapDatabase* map() const { return map_; }
  const mapdb::LocationModel* location() const { return map_ != nullptr ? &map_->location : nullptr; }
  const SystemConfig& config() const { return cfg_; }
  Timestamp now() const { return now_; }
  est::Mode main_mode() const { return main_->state().mode; }

  const std::vector<TransitionEvent>& events() const { return events_; }
  /// Every update record from both filters, in dispatch order.
  const std::vector<est::UpdateStats>& stats() const { return recorder_->records(); }

 private:
  pipe::Connection edge(est::Sensor s, Target t) const {
    const pipe::ModuleId from = s == est::Sensor::Gps ? gps_model_ : matcher_;
    return {from, "obs", kernels_[t == Target::Main ? 0 : 1], "observation"};
  }

  const mapdb::MapDatabase* map_;
  SystemConfig cfg_;
  bt::Blackboard bb_;
  pipe::PipelineGraph graph_;
  std::array<pipe::ModuleId, 4> sources_{};
  pipe::ModuleId gps_model_ = 0;
  pipe::ModuleId matcher_ = 0;
  std::array<pipe::ModuleId, 2> kernels_{};
  std::shared_ptr<pipe::EkfKernel> main_;
  std::shared_ptr<pipe::EkfKernel> backup_;
  std::shared_ptr<pipe::StatsRecorder> recorder_;

  Timestamp now_;
  est::Mode last_mode_ = est::Mode::Uninitialized;
  std::vector<TransitionEvent> events_;
  std::optional<std::size_t> pending_switch_;
  std::size_t stats_cursor_ = 0;
};

}  // namespace btloc::beh
