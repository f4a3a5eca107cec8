#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "btloc/core/types.hpp"

namespace btloc::sim {

enum class SegmentKind { Line, Arc, Stop };
enum class ZoneKind { FeatureRich, FeatureSparse, GpsNoisy, GpsDenied, Carpark };

inline constexpr std::string_view to_string(SegmentKind k) {
  switch (k) {
    case SegmentKind::Line: return "line";
    case SegmentKind::Arc: return "arc";
    case SegmentKind::Stop: return "stop";
  }
  return "?";
}

inline constexpr std::string_view to_string(ZoneKind k) {
  switch (k) {
    case ZoneKind::FeatureRich: return "FEATURE_RICH";
    case ZoneKind::FeatureSparse: return "FEATURE_SPARSE";
    case ZoneKind::GpsNoisy: return "GPS_NOISY";
    case ZoneKind::GpsDenied: return "GPS_DENIED";
    case ZoneKind::Carpark: return "CARPARK";
  }
  return "?";
}

inline ZoneKind zone_kind_from_string(std::string_view s) {
  for (ZoneKind k : {ZoneKind::FeatureRich, ZoneKind::FeatureSparse, ZoneKind::GpsNoisy, ZoneKind::GpsDenied,
                     ZoneKind::Carpark}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown zone kind: " + std::string(s));
}

struct RouteSegment {
  SegmentKind kind = SegmentKind::Line;
  double length = 0.0;
  /// Arc only; signed turn angle, positive to the left.
  double radius = 0.0;
  double angle = 0.0;
  double speed = 0.0;
  /// Stop only.
  double duration = 0.0;
};

/// Arc-length interval along the route with sensing conditions. Later zones
/// override earlier ones for the attributes they set.
struct Zone {
  ZoneKind kind = ZoneKind::FeatureRich;
  double from = 0.0;
  double to = 0.0;
  /// GPS_NOISY: lateral offset (left of travel) unless `bias_vector` is given.
  double bias = 0.0;
  std::optional<Vec2> bias_vector;
  /// GPS_NOISY: multiplier on the true noise sigma; the reported covariance keeps the nominal sigma.
  double inflation = 1.0;
  /// Feature density override, features/m^2 (CARPARK: interior density).
  std::optional<double> density;
  /// CARPARK: length of the feature-rich entrance and exit.
  double portal = 30.0;
};

struct NoiseConfig {
  double encoder_sigma = 0.05;
  double gyro_sigma = 0.002;
  double gps_sigma = 1.5;
  double lidar_sigma = 0.1;
};

struct SensorGeometry {
  double lidar_range = 50.0;
  /// Features are placed in a band this far to either side of the route.
  double band_inner = 4.0;
  double band_outer = 20.0;
};

struct Scenario {
  std::string name = "scenario";
  std::uint64_t seed = 1;
  std::uint64_t map_seed = 1;
  /// Seconds; 0 means the route's own travel time.
  double duration = 0.0;
  Pose2D start;
  std::vector<RouteSegment> route;
  std::vector<Zone> zones;
  double rich_density = 0.05;
  double sparse_density = 0.002;
  NoiseConfig noise;
  SensorGeometry sensor;
  /// Opaque block for the localisation stack (filter noise, tick period, ...).
  nlohmann::json localisation = nlohmann::json::object();
};

inline nlohmann::json to_json(const Scenario& s) {
  nlohmann::json j;
  j["name"] = s.name;
  j["seed"] = s.seed;
  j["map_seed"] = s.map_seed;
  j["duration"] = s.duration;
  j["start"] = {{"x", s.start.x}, {"y", s.start.y}, {"heading_deg", rad2deg(s.start.heading)}};
  j["route"] = nlohmann::json::array();
  for (const auto& seg : s.route) {
    nlohmann::json r{{"type", std::string(to_string(seg.kind))}};
    switch (seg.kind) {
      case SegmentKind::Line: r["length"] = seg.length; r["speed"] = seg.speed; break;
      case SegmentKind::Arc:
        r["radius"] = seg.radius;
        r["angle_deg"] = rad2deg(seg.angle);
        r["speed"] = seg.speed;
        break;
      case SegmentKind::Stop: r["duration"] = seg.duration; break;
    }
    j["route"].push_back(r);
  }
  j["zones"] = nlohmann::json::array();
  for (const auto& z : s.zones) {
    nlohmann::json zj{{"kind", std::string(to_string(z.kind))}, {"from", z.from}, {"to", z.to}};
    if (z.kind == ZoneKind::GpsNoisy) {
      if (z.bias_vector) {
        zj["bias"] = {z.bias_vector->x(), z.bias_vector->y()};
      } else {
        zj["bias"] = z.bias;
      }
      zj["inflation"] = z.inflation;
    }
    if (z.density) zj["density"] = *z.density;
    if (z.kind == ZoneKind::Carpark) zj["portal"] = z.portal;
    j["zones"].push_back(zj);
  }
  j["densities"] = {{"rich", s.rich_density}, {"sparse", s.sparse_density}};
  j["noise"] = {{"encoder", s.noise.encoder_sigma},
                {"gyro", s.noise.gyro_sigma},
                {"gps", s.noise.gps_sigma},
                {"lidar", s.noise.lidar_sigma}};
  j["sensor"] = {{"lidar_range", s.sensor.lidar_range},
                 {"band_inner", s.sensor.band_inner},
                 {"band_outer", s.sensor.band_outer}};
  j["localisation"] = s.localisation;
  return j;
}

inline Scenario scenario_from_json(const nlohmann::json& j) {
  Scenario s;
  s.name = j.value("name", s.name);
  s.seed = j.value("seed", s.seed);
  s.map_seed = j.value("map_seed", s.seed);
  s.duration = j.value("duration", 0.0);
  if (j.contains("start")) {
    const auto& st = j.at("start");
    s.start = Pose2D(st.value("x", 0.0), st.value("y", 0.0), deg2rad(st.value("heading_deg", 0.0)));
  }
  for (const auto& r : j.at("route")) {
    RouteSegment seg;
    const std::string type = r.at("type").get<std::string>();
    if (type == "line") {
      seg.kind = SegmentKind::Line;
      seg.length = r.at("length").get<double>();
      seg.speed = r.at("speed").get<double>();
    } else if (type == "arc") {
      seg.kind = SegmentKind::Arc;
      seg.radius = r.at("radius").get<double>();
      seg.angle = deg2rad(r.at("angle_deg").get<double>());
      seg.speed = r.at("speed").get<double>();
      seg.length = seg.radius * std::abs(seg.angle);
    } else if (type == "stop") {
      seg.kind = SegmentKind::Stop;
      seg.duration = r.at("duration").get<double>();
    } else {
      throw std::invalid_argument("unknown route segment type: " + type);
    }
    s.route.push_back(seg);
  }
  if (j.contains("zones")) {
    for (const auto& zj : j.at("zones")) {
      Zone z;
      z.kind = zone_kind_from_string(zj.at("kind").get<std::string>());
      z.from = zj.at("from").get<double>();
      z.to = zj.at("to").get<double>();
      if (z.to < z.from) throw std::invalid_argument("zone with to < from");
      if (zj.contains("bias")) {
        const auto& b = zj.at("bias");
        if (b.is_array()) {
          z.bias_vector = Vec2(b.at(0).get<double>(), b.at(1).get<double>());
        } else {
          z.bias = b.get<double>();
        }
      }
      z.inflation = zj.value("inflation", 1.0);
      if (zj.contains("density")) z.density = zj.at("density").get<double>();
      z.portal = zj.value("portal", z.portal);
      s.zones.push_back(z);
    }
  }
  if (j.contains("densities")) {
    s.rich_density = j.at("densities").value("rich", s.rich_density);
    s.sparse_density = j.at("densities").value("sparse", s.sparse_density);
  }
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    s.noise.encoder_sigma = n.value("encoder", s.noise.encoder_sigma);
    s.noise.gyro_sigma = n.value("gyro", s.noise.gyro_sigma);
    s.noise.gps_sigma = n.value("gps", s.noise.gps_sigma);
    s.noise.lidar_sigma = n.value("lidar", s.noise.lidar_sigma);
  }
  if (j.contains("sensor")) {
    const auto& g = j.at("sensor");
    s.sensor.lidar_range = g.value("lidar_range", s.sensor.lidar_range);
    s.sensor.band_inner = g.value("band_inner", s.sensor.band_inner);
    s.sensor.band_outer = g.value("band_outer", s.sensor.band_outer);
  }
  if (j.contains("localisation")) s.localisation = j.at("localisation");
  return s;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario: " + path);
  try {
    return scenario_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("bad scenario " + path + ": " + e.what());
  }
}

}  // namespace btloc::sim
