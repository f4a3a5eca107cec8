#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "btloc/core/measurement.hpp"
#include "btloc/core/types.hpp"

namespace btloc::est {

enum class Mode { LidarDr, GpsDr, DrOnly, Uninitialized };
enum class Health { Good, Degraded, Lost };
enum class GateBound { TwoSigma, ThreeSigma, All };
enum class Sensor { Gps, Lidar };
enum class Outcome { Accepted, Rejected, NotConverged, NoFix };

inline constexpr std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::LidarDr: return "LIDAR_DR";
    case Mode::GpsDr: return "GPS_DR";
    case Mode::DrOnly: return "DR_ONLY";
    case Mode::Uninitialized: return "UNINITIALIZED";
  }
  return "?";
}
inline constexpr std::string_view to_string(Health h) {
  switch (h) {
    case Health::Good: return "GOOD";
    case Health::Degraded: return "DEGRADED";
    case Health::Lost: return "LOST";
  }
  return "?";
}
inline constexpr std::string_view to_string(GateBound b) {
  switch (b) {
    case GateBound::TwoSigma: return "TWO_SIGMA";
    case GateBound::ThreeSigma: return "THREE_SIGMA";
    case GateBound::All: return "ALL";
  }
  return "?";
}
inline constexpr std::string_view to_string(Sensor s) { return s == Sensor::Gps ? "GPS" : "LIDAR"; }
inline constexpr std::string_view to_string(Outcome o) {
  switch (o) {
    case Outcome::Accepted: return "ACCEPTED";
    case Outcome::Rejected: return "REJECTED";
    case Outcome::NotConverged: return "NOT_CONVERGED";
    case Outcome::NoFix: return "NO_FIX";
  }
  return "?";
}

template <class E>
E enum_from_string(std::string_view s);

template <>
inline Mode enum_from_string<Mode>(std::string_view s) {
  for (Mode m : {Mode::LidarDr, Mode::GpsDr, Mode::DrOnly, Mode::Uninitialized}) {
    if (to_string(m) == s) return m;
  }
  throw std::invalid_argument("unknown mode: " + std::string(s));
}
template <>
inline Health enum_from_string<Health>(std::string_view s) {
  for (Health h : {Health::Good, Health::Degraded, Health::Lost}) {
    if (to_string(h) == s) return h;
  }
  throw std::invalid_argument("unknown health: " + std::string(s));
}
template <>
inline GateBound enum_from_string<GateBound>(std::string_view s) {
  for (GateBound b : {GateBound::TwoSigma, GateBound::ThreeSigma, GateBound::All}) {
    if (to_string(b) == s) return b;
  }
  throw std::invalid_argument("unknown gate bound: " + std::string(s));
}
template <>
inline Sensor enum_from_string<Sensor>(std::string_view s) {
  if (s == "GPS") return Sensor::Gps;
  if (s == "LIDAR") return Sensor::Lidar;
  throw std::invalid_argument("unknown sensor: " + std::string(s));
}
template <>
inline Outcome enum_from_string<Outcome>(std::string_view s) {
  for (Outcome o : {Outcome::Accepted, Outcome::Rejected, Outcome::NotConverged, Outcome::NoFix}) {
    if (to_string(o) == s) return o;
  }
  throw std::invalid_argument("unknown outcome: " + std::string(s));
}

/// GOOD > DEGRADED > LOST.
inline constexpr int health_rank(Health h) {
  switch (h) {
    case Health::Good: return 2;
    case Health::Degraded: return 1;
    case Health::Lost: return 0;
  }
  return 0;
}

/// Mahalanobis threshold of a gate bound; infinity for ALL.
inline constexpr double gate_threshold(GateBound b) {
  switch (b) {
    case GateBound::TwoSigma: return 2.0;
    case GateBound::ThreeSigma: return 3.0;
    case GateBound::All: return std::numeric_limits<double>::infinity();
  }
  return 0.0;
}

struct FilterState {
  Pose2D pose;
  Covariance3 cov = Covariance3::Identity();
  Timestamp last_update_time;
  Mode mode = Mode::Uninitialized;
  Health health = Health::Good;

  std::optional<Timestamp> last_accepted;
  /// Distance dead reckoned since the last accepted update.
  double dr_distance = 0.0;
  /// Set by reset(); health is capped at DEGRADED until the next accepted update.
  bool hold_degraded = false;

  bool initialized() const { return mode != Mode::Uninitialized; }
};

/// Process noise spectral densities; Q(dt) = diag(x, y, heading) * dt.
struct ProcessNoise {
  double x = 0.02;
  double y = 0.02;
  double heading = 2e-5;
};

struct UpdateStats {
  Timestamp stamp;
  Sensor sensor = Sensor::Gps;
  std::string filter;
  std::vector<double> innovation;
  /// Present iff outcome is ACCEPTED or REJECTED.
  std::optional<double> mahalanobis;
  Outcome outcome = Outcome::NotConverged;
  GateBound bound = GateBound::TwoSigma;
  /// Rejected by the location-dependent heading check rather than the gate.
  bool history_rejected = false;
  /// Position shift applied by an accepted update.
  double correction = 0.0;
  /// Filter pose after processing the record.
  Pose2D pose;
};

struct UpdateResult {
  FilterState state;
  UpdateStats stats;
};

struct LossRecovery {
  Timestamp stamp;
  Pose2D from;
  Pose2D to;
  double jump_distance = 0.0;
};

struct ResetResult {
  FilterState state;
  LossRecovery event;
};

/// d/d(state) of the unicycle Euler step.
inline Eigen::Matrix3d motion_jacobian(const Pose2D& pose, double v, double dt) {
  Eigen::Matrix3d f = Eigen::Matrix3d::Identity();
  f(0, 2) = -v * dt * std::sin(pose.heading);
  f(1, 2) = v * dt * std::cos(pose.heading);
  return f;
}

/// Unicycle Euler step of the mean only.
inline Pose2D propagate_pose(const Pose2D& pose, double v, double omega, double dt) {
  return Pose2D(pose.x + v * dt * std::cos(pose.heading), pose.y + v * dt * std::sin(pose.heading),
                pose.heading + omega * dt);
}

/// Euler step of the unicycle model; the position error of one step against
/// the exact arc is bounded by |v| * |omega| * dt^2 / 2.
inline FilterState predict(const FilterState& state, double v, double omega, double dt,
                           const ProcessNoise& q) {
  if (!(dt >= 0.0)) throw std::invalid_argument("predict: negative dt");
  if (!state.initialized()) throw std::logic_error("predict: filter not initialized");
  FilterState out = state;
  const Eigen::Matrix3d f = motion_jacobian(state.pose, v, dt);
  out.pose = propagate_pose(state.pose, v, omega, dt);
  out.cov = f * state.cov * f.transpose();
  out.cov.diagonal() += Eigen::Vector3d(q.x, q.y, q.heading) * dt;
  symmetrize(out.cov);
  out.dr_distance += std::abs(v) * dt;
  return out;
}

struct GateDecision {
  bool accept = false;
  double mahalanobis = std::numeric_limits<double>::quiet_NaN();
  /// S was not positive definite; accept is false and mahalanobis is NaN.
  bool singular = false;
};

inline GateDecision gate(const Eigen::VectorXd& innovation, const Eigen::MatrixXd& s, GateBound bound) {
  GateDecision g;
  if (s.rows() != innovation.size() || s.cols() != innovation.size() || !s.allFinite() ||
      !innovation.allFinite()) {
    g.singular = true;
    return g;
  }
  Eigen::LLT<Eigen::MatrixXd> llt(s);
  if (llt.info() != Eigen::Success) {
    g.singular = true;
    return g;
  }
  const Eigen::VectorXd w = llt.matrixL().solve(innovation);
  g.mahalanobis = std::sqrt(w.squaredNorm());
  g.accept = bound == GateBound::All || g.mahalanobis <= gate_threshold(bound);
  return g;
}

namespace detail {

template <int N>
FilterState kalman_apply(const FilterState& state, const Eigen::Matrix<double, N, 3>& h,
                         const Eigen::Matrix<double, N, N>& r, const Eigen::Matrix<double, N, N>& s,
                         const Eigen::Matrix<double, N, 1>& innovation, Timestamp stamp) {
  FilterState out = state;
  const Eigen::Matrix<double, 3, N> k = state.cov * h.transpose() * s.inverse();
  const Eigen::Vector3d dx = k * innovation;
  out.pose = Pose2D(state.pose.x + dx(0), state.pose.y + dx(1), state.pose.heading + dx(2));
  const Eigen::Matrix3d ikh = Eigen::Matrix3d::Identity() - k * h;
  out.cov = ikh * state.cov * ikh.transpose() + k * r * k.transpose();
  symmetrize(out.cov);
  out.last_accepted = stamp;
  out.last_update_time = std::max(state.last_update_time, stamp);
  out.dr_distance = 0.0;
  out.hold_degraded = false;
  return out;
}

inline std::vector<double> to_std(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

}  // namespace detail

/// Position update with H = [I2 0], R = fix covariance.
inline UpdateResult update_gps(const FilterState& state, const GpsFix& fix, Timestamp stamp,
                               GateBound bound) {
  if (!state.initialized()) throw std::logic_error("update_gps: filter not initialized");
  UpdateResult res{state, {}};
  res.stats.stamp = stamp;
  res.stats.sensor = Sensor::Gps;
  res.stats.bound = bound;
  res.stats.pose = state.pose;
  if (fix.status == GpsStatus::NoFix) {
    res.stats.outcome = Outcome::NoFix;
    return res;
  }
  const Eigen::Vector2d nu = fix.position - state.pose.position();
  const Eigen::Matrix2d s = state.cov.topLeftCorner<2, 2>() + fix.cov;
  res.stats.innovation = detail::to_std(nu);
  const GateDecision g = gate(nu, s, bound);
  if (g.singular) {
    res.stats.outcome = Outcome::NotConverged;
    return res;
  }
  res.stats.mahalanobis = g.mahalanobis;
  if (!g.accept) {
    res.stats.outcome = Outcome::Rejected;
    return res;
  }
  Eigen::Matrix<double, 2, 3> h = Eigen::Matrix<double, 2, 3>::Zero();
  h.leftCols<2>().setIdentity();
  res.state = detail::kalman_apply<2>(state, h, fix.cov, s, nu, stamp);
  res.stats.outcome = Outcome::Accepted;
  res.stats.correction = (res.state.pose.position() - state.pose.position()).norm();
  res.stats.pose = res.state.pose;
  return res;
}

/// Standard deviations of the pose observation produced by scan alignment.
struct LidarPoseNoise {
  double sigma_xy = 0.25;
  double sigma_heading = deg2rad(1.0);

  Covariance3 covariance() const {
    return Eigen::Vector3d(sigma_xy * sigma_xy, sigma_xy * sigma_xy, sigma_heading * sigma_heading)
        .asDiagonal();
  }
};

struct AlignmentResult {
  Pose2D pose;
  int matched_count = 0;
  double rms_residual = 0.0;
  bool converged = false;
};

/// Full-pose update from a scan alignment, H = I3. `history_consistent` is
/// the outcome of the location-dependent heading check.
inline UpdateResult update_lidar(const FilterState& state, const AlignmentResult& result,
                                 Timestamp stamp, GateBound bound, bool history_consistent,
                                 const LidarPoseNoise& noise = {}) {
  if (!state.initialized()) throw std::logic_error("update_lidar: filter not initialized");
  UpdateResult res{state, {}};
  res.stats.stamp = stamp;
  res.stats.sensor = Sensor::Lidar;
  res.stats.bound = bound;
  res.stats.pose = state.pose;
  if (!result.converged) {
    res.stats.outcome = Outcome::NotConverged;
    return res;
  }
  const Eigen::Vector3d nu(result.pose.x - state.pose.x, result.pose.y - state.pose.y,
                           normalize_heading(result.pose.heading - state.pose.heading));
  const Covariance3 r = noise.covariance();
  const Eigen::Matrix3d s = state.cov + r;
  res.stats.innovation = detail::to_std(nu);
  const GateDecision g = gate(nu, s, bound);
  if (g.singular) {
    res.stats.outcome = Outcome::NotConverged;
    return res;
  }
  res.stats.mahalanobis = g.mahalanobis;
  if (!history_consistent) {
    res.stats.outcome = Outcome::Rejected;
    res.stats.history_rejected = true;
    return res;
  }
  if (!g.accept) {
    res.stats.outcome = Outcome::Rejected;
    return res;
  }
  res.state = detail::kalman_apply<3>(state, Eigen::Matrix3d::Identity(), r, s, nu, stamp);
  res.stats.outcome = Outcome::Accepted;
  res.stats.correction = (res.state.pose.position() - state.pose.position()).norm();
  res.stats.pose = res.state.pose;
  return res;
}

/// Overwrites the estimate; health is held at DEGRADED until the next accepted update.
inline ResetResult reset(const FilterState& state, const Pose2D& target, const Covariance3& target_cov,
                         Timestamp stamp) {
  if (!is_valid_covariance(target_cov)) throw std::invalid_argument("reset: invalid covariance");
  ResetResult r{state, {}};
  r.state.pose = target;
  r.state.cov = target_cov;
  symmetrize(r.state.cov);
  r.state.hold_degraded = true;
  r.state.health = Health::Degraded;
  r.state.dr_distance = 0.0;
  r.state.last_update_time = std::max(state.last_update_time, stamp);
  if (!state.initialized()) r.state.mode = Mode::DrOnly;
  r.event.stamp = stamp;
  r.event.from = state.pose;
  r.event.to = target;
  r.event.jump_distance = state.initialized() ? (state.pose.position() - target.position()).norm() : 0.0;
  return r;
}

struct HealthConfig {
  /// An accepted update within this many seconds is required for GOOD.
  double recent_window = 5.0;
  /// Position covariance trace limits, m^2.
  double trace_good = 4.0;
  double trace_lost = 100.0;
  /// Dead-reckoned distance without accepted updates before LOST, m.
  double max_dr_distance = 200.0;
};

inline Health health_assess(const FilterState& state, std::span<const UpdateStats> window,
                            double dr_distance_since_update, Timestamp now,
                            const HealthConfig& cfg = {}) {
  if (!state.initialized()) return Health::Lost;
  const double trace = state.cov(0, 0) + state.cov(1, 1);
  if (dr_distance_since_update > cfg.max_dr_distance || trace > cfg.trace_lost || !std::isfinite(trace)) {
    return Health::Lost;
  }
  bool recent = false;
  for (const auto& s : window) {
    if (s.outcome == Outcome::Accepted && s.stamp <= now && elapsed(s.stamp, now) <= cfg.recent_window) {
      recent = true;
      break;
    }
  }
  if (recent && trace <= cfg.trace_good && !state.hold_degraded) return Health::Good;
  return Health::Degraded;
}

}  // namespace btloc::est
