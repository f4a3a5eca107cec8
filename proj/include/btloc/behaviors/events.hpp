#pragma once

#include <string>
#include <string_view>

#include <json.hpp>

#include "btloc/estimation/filter.hpp"

namespace btloc::beh {

enum class EventKind { SensorSwitch, LossRecovery };

inline constexpr std::string_view to_string(EventKind k) {
  return k == EventKind::SensorSwitch ? "SENSOR_SWITCH" : "LOSS_RECOVERY";
}

inline EventKind event_kind_from_string(std::string_view s) {
  if (s == "SENSOR_SWITCH") return EventKind::SensorSwitch;
  if (s == "LOSS_RECOVERY") return EventKind::LossRecovery;
  throw std::invalid_argument("unknown event kind: " + std::string(s));
}

struct TransitionEvent {
  Timestamp stamp;
  EventKind kind = EventKind::SensorSwitch;
  est::Mode from_mode = est::Mode::DrOnly;
  est::Mode to_mode = est::Mode::DrOnly;
  double jump_distance = 0.0;
  /// What triggered it: "selector", "cross_filter", "manual", "reinit".
  std::string cause;
};

inline nlohmann::json to_json(const TransitionEvent& e) {
  return {{"t", e.stamp.micros},
          {"kind", std::string(to_string(e.kind))},
          {"from", std::string(est::to_string(e.from_mode))},
          {"to", std::string(est::to_string(e.to_mode))},
          {"jump", e.jump_distance},
          {"cause", e.cause}};
}

inline TransitionEvent event_from_json(const nlohmann::json& j) {
  TransitionEvent e;
  e.stamp = Timestamp::from_micros(j.at("t").get<std::int64_t>());
  e.kind = event_kind_from_string(j.at("kind").get<std::string>());
  e.from_mode = est::enum_from_string<est::Mode>(j.at("from").get<std::string>());
  e.to_mode = est::enum_from_string<est::Mode>(j.at("to").get<std::string>());
  e.jump_distance = j.at("jump").get<double>();
  e.cause = j.value("cause", std::string{});
  return e;
}

}  // namespace btloc::beh
