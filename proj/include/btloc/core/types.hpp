#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <numbers>
#include <stdexcept>

#include <Eigen/Dense>

namespace btloc {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using Covariance3 = Eigen::Matrix3d;

/// Wraps an angle into (-pi, pi]. Throws on NaN/inf.
inline double normalize_heading(double angle) {
  if (!std::isfinite(angle)) {
    throw std::invalid_argument("normalize_heading: non-finite angle");
  }
  constexpr double kTwoPi = 2.0 * std::numbers::pi;
  double r = std::remainder(angle, kTwoPi);
  if (r <= -std::numbers::pi) r += kTwoPi;
  return r;
}

inline constexpr double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline constexpr double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Planar vehicle pose in the map frame. Heading kept in (-pi, pi].
struct Pose2D {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;

  Pose2D() = default;
  Pose2D(double x_, double y_, double heading_)
      : x(x_), y(y_), heading(normalize_heading(heading_)) {}

  Vec2 position() const { return {x, y}; }
  Eigen::Vector3d vector() const { return {x, y, heading}; }

  bool operator==(const Pose2D&) const = default;
};

inline Eigen::Matrix2d rotation(double heading) {
  const double c = std::cos(heading);
  const double s = std::sin(heading);
  Eigen::Matrix2d r;
  r << c, -s, s, c;
  return r;
}

/// Vehicle frame -> map frame.
inline Vec2 transform_to_map(const Pose2D& pose, const Vec2& local) {
  return rotation(pose.heading) * local + pose.position();
}

/// Map frame -> vehicle frame.
inline Vec2 transform_to_vehicle(const Pose2D& pose, const Vec2& global) {
  return rotation(pose.heading).transpose() * (global - pose.position());
}

inline void symmetrize(Covariance3& cov) { cov = 0.5 * (cov + cov.transpose()).eval(); }

/// Symmetric within 1e-9 relative, eigenvalues >= -1e-9.
inline bool is_valid_covariance(const Covariance3& cov) {
  if (!cov.allFinite()) return false;
  const double scale = std::max(1.0, cov.cwiseAbs().maxCoeff());
  if ((cov - cov.transpose()).cwiseAbs().maxCoeff() > 1e-9 * scale) return false;
  Eigen::SelfAdjointEigenSolver<Covariance3> es(cov);
  return es.eigenvalues().minCoeff() >= -1e-9;
}

/// Simulation time in integer microseconds so replays are bit-reproducible.
struct Timestamp {
  std::int64_t micros = 0;

  static constexpr Timestamp from_micros(std::int64_t us) { return Timestamp{us}; }
  static Timestamp from_seconds(double s) {
    return Timestamp{static_cast<std::int64_t>(std::llround(s * 1e6))};
  }
  constexpr double seconds() const { return static_cast<double>(micros) * 1e-6; }

  auto operator<=>(const Timestamp&) const = default;
};

/// Seconds elapsed from `from` to `to` (negative when `to` precedes `from`).
inline constexpr double elapsed(Timestamp from, Timestamp to) {
  return static_cast<double>(to.micros - from.micros) * 1e-6;
}

}  // namespace btloc
