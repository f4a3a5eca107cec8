#pragma once

#include <cstdint>
#include <string_view>
#include <variant>
#include <vector>

#include "btloc/core/types.hpp"

namespace btloc {

enum class FeatureKind { Pole, Corner };

inline constexpr std::string_view to_string(FeatureKind k) {
  return k == FeatureKind::Pole ? "POLE" : "CORNER";
}

/// One extracted lidar feature, vehicle frame, isotropic sigma.
struct LidarFeatureObs {
  FeatureKind kind = FeatureKind::Pole;
  Vec2 position = Vec2::Zero();
  double sigma = 0.1;
};

struct MapFeature {
  std::int64_t id = 0;
  FeatureKind kind = FeatureKind::Pole;
  Vec2 position = Vec2::Zero();
};

struct EncoderSpeed {
  double speed = 0.0;
  double sigma = 0.05;
};

struct GyroYawRate {
  double rate = 0.0;
  double sigma = 0.005;
};

enum class GpsStatus { Fix, NoFix };

/// A NoFix record carries no usable position.
struct GpsFix {
  Vec2 position = Vec2::Zero();
  GpsStatus status = GpsStatus::Fix;
  Mat2 cov = Mat2::Identity();
};

struct LidarScan {
  std::vector<LidarFeatureObs> features;
};

using MeasurementPayload = std::variant<EncoderSpeed, GyroYawRate, GpsFix, LidarScan>;

struct Measurement {
  Timestamp stamp;
  MeasurementPayload payload;

  template <class T>
  bool holds() const {
    return std::holds_alternative<T>(payload);
  }
  template <class T>
  const T& as() const {
    return std::get<T>(payload);
  }
};

/// Stream order used to break timestamp ties; also the synthesis draw order.
inline int stream_rank(const Measurement& m) { return static_cast<int>(m.payload.index()); }

}  // namespace btloc
