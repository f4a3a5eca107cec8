#pragma once

#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "btloc/bt/blackboard.hpp"
#include "btloc/core/measurement.hpp"
#include "btloc/estimation/alignment.hpp"
#include "btloc/estimation/filter.hpp"
#include "btloc/mapdb/feature_layer.hpp"
#include "btloc/mapdb/location_model.hpp"
#include "btloc/pipeline/graph.hpp"

namespace btloc::pipe {

/// Entry point for one sensor stream. Forwards measurements whose payload
/// alternative matches `stream` (EncoderSpeed=0 ... LidarScan=3).
class SourceModule : public Module {
 public:
  SourceModule(std::string n, std::size_t stream) : stream_(stream) { name = std::move(n); }

  Layer layer() const override { return Layer::Source; }
  std::string type_name() const override { return "source"; }
  std::vector<PortSpec> inputs() const override { return {}; }
  std::vector<PortSpec> outputs() const override { return {{"out", PortType::RawMeasurement}}; }
  nlohmann::json config() const override { return {{"stream", stream_}}; }

  void process(const std::string&, const Payload& p, const Emit& emit) override {
    const auto* m = std::get_if<Measurement>(&p);
    if (m == nullptr || m->payload.index() != stream_) return;
    emit("out", p);
  }

  std::size_t stream() const { return stream_; }

 private:
  std::size_t stream_;
};

/// Pairs each encoder speed with the most recent gyro rate (zero-order hold).
class MotionModel : public Module {
 public:
  explicit MotionModel(std::string n = "motion_model") { name = std::move(n); }

  Layer layer() const override { return Layer::Model; }
  std::string type_name() const override { return "motion_model"; }
  std::vector<PortSpec> inputs() const override {
    return {{"encoder", PortType::RawMeasurement}, {"gyro", PortType::RawMeasurement}};
  }
  std::vector<PortSpec> outputs() const override { return {{"motion", PortType::MotionInput}}; }

  void process(const std::string&, const Payload& p, const Emit& emit) override {
    const auto& m = std::get<Measurement>(p);
    if (m.holds<GyroYawRate>()) {
      yaw_rate_ = m.as<GyroYawRate>().rate;
    } else if (m.holds<EncoderSpeed>()) {
      emit("motion", MotionInput{m.stamp, m.as<EncoderSpeed>().speed, yaw_rate_});
    }
  }

 private:
  double yaw_rate_ = 0.0;
};

/// Turns GPS fixes into observations; NO_FIX records are forwarded so the
/// kernel can report them.
class GpsObservationModel : public Module {
 public:
  explicit GpsObservationModel(std::string n = "gps_model") { name = std::move(n); }

  Layer layer() const override { return Layer::Model; }
  std::string type_name() const override { return "gps_model"; }
  std::vector<PortSpec> inputs() const override { return {{"fix", PortType::RawMeasurement}}; }
  std::vector<PortSpec> outputs() const override { return {{"obs", PortType::Observation}}; }

  void process(const std::string&, const Payload& p, const Emit& emit) override {
    const auto& m = std::get<Measurement>(p);
    if (!m.holds<GpsFix>()) return;
    emit("obs", Observation{GpsObservation{m.stamp, m.as<GpsFix>()}});
  }
};

struct LidarMatcherConfig {
  est::AlignmentConfig alignment;
  double sensor_range = 50.0;
  double heading_tolerance = deg2rad(10.0);
  double history_box = 10.0;
};

/// Scan-to-map matcher seeded by a prior pose provider. Runs whether or not
/// a kernel is subscribed, so the behavior layer can judge lidar readiness.
class LidarMatcher : public Module {
 public:
  using PriorProvider = std::function<std::optional<Pose2D>(Timestamp)>;
  using Listener = std::function<void(const LidarObservation&)>;

  LidarMatcher(const mapdb::FeatureLayer* features, const mapdb::LocationModel* location, PriorProvider prior,
               LidarMatcherConfig cfg = {}, std::string n = "lidar_matcher")
      : features_(features), location_(location), prior_(std::move(prior)), cfg_(cfg) {
    name = std::move(n);
  }

  Layer layer() const override { return Layer::Model; }
  std::string type_name() const override { return "lidar_matcher"; }
  std::vector<PortSpec> inputs() const override { return {{"scan", PortType::RawMeasurement}}; }
  std::vector<PortSpec> outputs() const override { return {{"obs", PortType::Observation}}; }
  nlohmann::json config() const override {
    return {{"association_radius", cfg_.alignment.association_radius},
            {"min_matches", cfg_.alignment.min_matches},
            {"max_rms", cfg_.alignment.max_rms},
            {"max_iterations", cfg_.alignment.max_iterations},
            {"sensor_range", cfg_.sensor_range},
            {"heading_tolerance_deg", rad2deg(cfg_.heading_tolerance)}};
  }

  void set_listener(Listener l) { listener_ = std::move(l); }

  void process(const std::string&, const Payload& p, const Emit& emit) override {
    const auto& m = std::get<Measurement>(p);
    if (!m.holds<LidarScan>() || !prior_) return;
    const std::optional<Pose2D> prior = prior_(m.stamp);
    if (!prior) return;
    LidarObservation obs;
    obs.stamp = m.stamp;
    if (features_ != nullptr && !features_->empty()) {
      const auto candidates =
          features_->query(prior->position(), cfg_.sensor_range + cfg_.alignment.association_radius);
      obs.result = est::align_scan(m.as<LidarScan>(), *prior, candidates, cfg_.alignment);
    } else {
      obs.result.pose = *prior;
    }
    if (obs.result.converged && location_ != nullptr) {
      const auto history = location_->query_lidar_history(obs.result.pose.position(), cfg_.history_box);
      obs.history_consistent = mapdb::heading_consistent(history, obs.result.pose.heading, cfg_.heading_tolerance);
    }
    if (listener_) listener_(obs);
    emit("obs", Observation{obs});
  }

 private:
  const mapdb::FeatureLayer* features_;
  const mapdb::LocationModel* location_;
  PriorProvider prior_;
  LidarMatcherConfig cfg_;
  Listener listener_;
};

struct KernelConfig {
  est::ProcessNoise process_noise;
  est::LidarPoseNoise lidar_noise;
  est::HealthConfig health;
};

/// EKF localisation kernel. Motion inputs drive prediction; observations are
/// gated at the per-sensor bound set by the behavior layer. Every observation
/// yields exactly one UpdateStats record on "stats".
class EkfKernel : public Module {
 public:
  explicit EkfKernel(std::string filter_name, KernelConfig cfg = {}) : cfg_(cfg) { name = std::move(filter_name); }

  Layer layer() const override { return Layer::Kernel; }
  std::string type_name() const override { return "ekf"; }
  std::vector<PortSpec> inputs() const override {
    return {{"motion", PortType::MotionInput}, {"observation", PortType::Observation}};
  }
  std::vector<PortSpec> outputs() const override {
    return {{"state", PortType::StateEstimate}, {"stats", PortType::UpdateStats}};
  }

  void process(const std::string& port, const Payload& p, const Emit& emit) override {
    if (port == "motion") {
      const auto& in = std::get<MotionInput>(p);
      if (!state_.initialized()) return;
      advance_to(in.stamp);
      speed_ = in.speed;
      yaw_rate_ = in.yaw_rate;
      assess(in.stamp);
      emit("state", StateEstimate{in.stamp, name, state_});
      return;
    }
    const auto& obs = std::get<Observation>(p);
    const Timestamp t = stamp_of(obs);
    est::UpdateResult r;
    if (!state_.initialized()) {
      r.state = state_;
      r.stats.stamp = t;
      r.stats.sensor = std::holds_alternative<GpsObservation>(obs) ? est::Sensor::Gps : est::Sensor::Lidar;
      r.stats.outcome = est::Outcome::NotConverged;
    } else {
      advance_to(t);
      if (const auto* g = std::get_if<GpsObservation>(&obs)) {
        r = est::update_gps(state_, g->fix, t, bound(est::Sensor::Gps));
      } else {
        const auto& l = std::get<LidarObservation>(obs);
        r = est::update_lidar(state_, l.result, t, bound(est::Sensor::Lidar), l.history_consistent,
                              cfg_.lidar_noise);
      }
    }
    r.stats.bound = bound(r.stats.sensor);
    r.stats.filter = name;
    state_ = r.state;
    record(r.stats);
    assess(t);
    emit("stats", r.stats);
    emit("state", StateEstimate{t, name, state_});
  }

  void on_error(const std::string& port, const Payload& p, const std::exception&, const Emit& emit) override {
    if (port != "observation") return;
    const auto& obs = std::get<Observation>(p);
    est::UpdateStats s;
    s.stamp = stamp_of(obs);
    s.sensor = std::holds_alternative<GpsObservation>(obs) ? est::Sensor::Gps : est::Sensor::Lidar;
    s.filter = name;
    s.outcome = est::Outcome::NotConverged;
    s.bound = bound(s.sensor);
    s.pose = state_.pose;
    record(s);
    emit("stats", s);
  }

  void initialize(const Pose2D& pose, const Covariance3& cov, Timestamp t, est::Mode mode = est::Mode::DrOnly) {
    state_ = est::FilterState{};
    state_.pose = pose;
    state_.cov = cov;
    state_.last_update_time = t;
    state_.mode = mode;
    state_.health = est::Health::Degraded;
    window_.clear();
  }

  est::LossRecovery reset(const Pose2D& target, const Covariance3& cov, Timestamp t) {
    const est::Mode mode = state_.mode;
    auto r = est::reset(state_, target, cov, t);
    state_ = r.state;
    if (mode != est::Mode::Uninitialized) state_.mode = mode;
    return r.event;
  }

  /// Mean propagated to `t` with the held motion input; the state itself is untouched.
  std::optional<Pose2D> predicted_pose(Timestamp t) const {
    if (!state_.initialized()) return std::nullopt;
    const double dt = elapsed(state_.last_update_time, t);
    if (dt <= 0.0) return state_.pose;
    return est::propagate_pose(state_.pose, speed_, yaw_rate_, dt);
  }

  const est::FilterState& state() const { return state_; }
  void set_mode(est::Mode m) {
    if (state_.initialized()) state_.mode = m;
  }
  /// Test hook for fault injection.
  void overwrite_state(const est::FilterState& s) { state_ = s; }

  void set_bound(est::Sensor s, est::GateBound b) { bounds_[s] = b; }
  est::GateBound bound(est::Sensor s) const {
    auto it = bounds_.find(s);
    return it == bounds_.end() ? est::GateBound::TwoSigma : it->second;
  }

  const KernelConfig& kernel_config() const { return cfg_; }

  /// Re-evaluates health at `now` (the behavior tick calls this so health
  /// also ages when no input arrives).
  void assess(Timestamp now) {
    while (!window_.empty() && elapsed(window_.front().stamp, now) > cfg_.health.recent_window) window_.pop_front();
    std::vector<est::UpdateStats> w(window_.begin(), window_.end());
    state_.health = est::health_assess(state_, w, state_.dr_distance, now, cfg_.health);
  }

 private:
  void advance_to(Timestamp t) {
    const double dt = elapsed(state_.last_update_time, t);
    if (dt <= 0.0) return;
    state_ = est::predict(state_, speed_, yaw_rate_, dt, cfg_.process_noise);
    state_.last_update_time = t;
  }

  void record(const est::UpdateStats& s) { window_.push_back(s); }

  KernelConfig cfg_;
  est::FilterState state_;
  std::map<est::Sensor, est::GateBound> bounds_;
  std::deque<est::UpdateStats> window_;
  double speed_ = 0.0;
  double yaw_rate_ = 0.0;
};

class StatsRecorder : public Module {
 public:
  explicit StatsRecorder(std::string n = "stats_recorder") { name = std::move(n); }

  Layer layer() const override { return Layer::Sink; }
  std::string type_name() const override { return "stats_recorder"; }
  std::vector<PortSpec> inputs() const override { return {{"stats", PortType::UpdateStats}}; }
  std::vector<PortSpec> outputs() const override { return {}; }

  void process(const std::string&, const Payload& p, const Emit&) override {
    records_.push_back(std::get<est::UpdateStats>(p));
  }

  const std::vector<est::UpdateStats>& records() const { return records_; }
  void clear() { records_.clear(); }

 private:
  std::vector<est::UpdateStats> records_;
};

class TrajectoryRecorder : public Module {
 public:
  explicit TrajectoryRecorder(std::string n = "trajectory_recorder") { name = std::move(n); }

  Layer layer() const override { return Layer::Sink; }
  std::string type_name() const override { return "trajectory_recorder"; }
  std::vector<PortSpec> inputs() const override { return {{"state", PortType::StateEstimate}}; }
  std::vector<PortSpec> outputs() const override { return {}; }

  void process(const std::string&, const Payload& p, const Emit&) override {
    states_.push_back(std::get<StateEstimate>(p));
  }

  const std::vector<StateEstimate>& states() const { return states_; }

 private:
  std::vector<StateEstimate> states_;
};

/// Publishes kernel outputs to the blackboard inbox: "<filter>/state" holds
/// the latest estimate, "<filter>/stats" accumulates update records.
class BlackboardPublisher : public Module {
 public:
  explicit BlackboardPublisher(bt::Blackboard& bb, std::string n = "blackboard_publisher") : bb_(&bb) {
    name = std::move(n);
  }

  Layer layer() const override { return Layer::Sink; }
  std::string type_name() const override { return "blackboard_publisher"; }
  std::vector<PortSpec> inputs() const override {
    return {{"state", PortType::StateEstimate}, {"stats", PortType::UpdateStats}};
  }
  std::vector<PortSpec> outputs() const override { return {}; }

  void process(const std::string& port, const Payload& p, const Emit&) override {
    if (port == "state") {
      const auto& s = std::get<StateEstimate>(p);
      bb_->post(s.filter + "/state", s);
    } else {
      const auto& s = std::get<est::UpdateStats>(p);
      bb_->append(s.filter + "/stats", s);
    }
  }

 private:
  bt::Blackboard* bb_;
};

}  // namespace btloc::pipe
