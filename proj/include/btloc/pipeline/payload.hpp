#pragma once

#include <string>
#include <string_view>
#include <variant>

#include "btloc/core/measurement.hpp"
#include "btloc/core/types.hpp"
#include "btloc/estimation/filter.hpp"

namespace btloc::pipe {

/// Order matches the alternatives of Payload.
enum class PortType { RawMeasurement, MotionInput, Observation, StateEstimate, UpdateStats };

inline constexpr std::string_view to_string(PortType t) {
  switch (t) {
    case PortType::RawMeasurement: return "RAW_MEASUREMENT";
    case PortType::MotionInput: return "MOTION_INPUT";
    case PortType::Observation: return "OBSERVATION";
    case PortType::StateEstimate: return "STATE_ESTIMATE";
    case PortType::UpdateStats: return "UPDATE_STATS";
  }
  return "?";
}

inline PortType port_type_from_string(std::string_view s) {
  for (PortType t : {PortType::RawMeasurement, PortType::MotionInput, PortType::Observation,
                     PortType::StateEstimate, PortType::UpdateStats}) {
    if (to_string(t) == s) return t;
  }
  throw std::invalid_argument("unknown port type: " + std::string(s));
}

/// Speed and yaw rate valid from `stamp` until the next motion input.
struct MotionInput {
  Timestamp stamp;
  double speed = 0.0;
  double yaw_rate = 0.0;
};

struct GpsObservation {
  Timestamp stamp;
  GpsFix fix;
};

struct LidarObservation {
  Timestamp stamp;
  est::AlignmentResult result;
  /// Outcome of the location-dependent heading check on result.pose.
  bool history_consistent = true;
};

using Observation = std::variant<GpsObservation, LidarObservation>;

inline Timestamp stamp_of(const Observation& o) {
  return std::visit([](const auto& v) { return v.stamp; }, o);
}

struct StateEstimate {
  Timestamp stamp;
  std::string filter;
  est::FilterState state;
};

using Payload = std::variant<Measurement, MotionInput, Observation, StateEstimate, est::UpdateStats>;

inline PortType port_type_of(const Payload& p) { return static_cast<PortType>(p.index()); }

}  // namespace btloc::pipe
