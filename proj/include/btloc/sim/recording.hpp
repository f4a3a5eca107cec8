#pragma once

#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "btloc/core/measurement.hpp"
#include "btloc/sim/scenario.hpp"
#include "btloc/sim/world.hpp"

namespace btloc::sim {

// Measurement log, one JSON object per line:
//   {"type":"header","scenario":{...}}
//   {"type":"encoder","t":<micros>,"v":..,"sigma":..}
//   {"type":"gyro","t":..,"w":..,"sigma":..}
//   {"type":"gps","t":..,"status":"FIX"|"NO_FIX","x":..,"y":..,"cov":[a,b,c,d]}
//   {"type":"lidar","t":..,"features":[[kind,x,y,sigma],...]}
//   {"type":"truth","t":..,"x":..,"y":..,"h":..,"v":..,"w":..,"s":..}
// Doubles are written in shortest round-trip form, so a replay is bit-exact.

inline nlohmann::json measurement_to_json(const Measurement& m) {
  nlohmann::json j;
  j["t"] = m.stamp.micros;
  if (const auto* e = std::get_if<EncoderSpeed>(&m.payload)) {
    j["type"] = "encoder";
    j["v"] = e->speed;
    j["sigma"] = e->sigma;
  } else if (const auto* g = std::get_if<GyroYawRate>(&m.payload)) {
    j["type"] = "gyro";
    j["w"] = g->rate;
    j["sigma"] = g->sigma;
  } else if (const auto* f = std::get_if<GpsFix>(&m.payload)) {
    j["type"] = "gps";
    j["status"] = f->status == GpsStatus::Fix ? "FIX" : "NO_FIX";
    j["x"] = f->position.x();
    j["y"] = f->position.y();
    j["cov"] = {f->cov(0, 0), f->cov(0, 1), f->cov(1, 0), f->cov(1, 1)};
  } else {
    const auto& scan = std::get<LidarScan>(m.payload);
    j["type"] = "lidar";
    j["features"] = nlohmann::json::array();
    for (const auto& o : scan.features) {
      j["features"].push_back({std::string(to_string(o.kind)), o.position.x(), o.position.y(), o.sigma});
    }
  }
  return j;
}

inline Measurement measurement_from_json(const nlohmann::json& j) {
  Measurement m;
  m.stamp = Timestamp::from_micros(j.at("t").get<std::int64_t>());
  const std::string type = j.at("type").get<std::string>();
  if (type == "encoder") {
    m.payload = EncoderSpeed{j.at("v").get<double>(), j.at("sigma").get<double>()};
  } else if (type == "gyro") {
    m.payload = GyroYawRate{j.at("w").get<double>(), j.at("sigma").get<double>()};
  } else if (type == "gps") {
    GpsFix f;
    f.status = j.at("status").get<std::string>() == "FIX" ? GpsStatus::Fix : GpsStatus::NoFix;
    f.position = Vec2(j.at("x").get<double>(), j.at("y").get<double>());
    const auto& c = j.at("cov");
    f.cov << c.at(0).get<double>(), c.at(1).get<double>(), c.at(2).get<double>(), c.at(3).get<double>();
    m.payload = f;
  } else if (type == "lidar") {
    LidarScan scan;
    for (const auto& o : j.at("features")) {
      const std::string kind = o.at(0).get<std::string>();
      scan.features.push_back({kind == "POLE" ? FeatureKind::Pole : FeatureKind::Corner,
                               Vec2(o.at(1).get<double>(), o.at(2).get<double>()), o.at(3).get<double>()});
    }
    m.payload = std::move(scan);
  } else {
    throw std::invalid_argument("unknown measurement type: " + type);
  }
  return m;
}

inline nlohmann::json truth_to_json(const TruthSample& t) {
  return {{"type", "truth"}, {"t", t.stamp.micros}, {"x", t.pose.x}, {"y", t.pose.y}, {"h", t.pose.heading},
          {"v", t.speed},    {"w", t.yaw_rate},     {"s", t.s}};
}

inline TruthSample truth_from_json(const nlohmann::json& j) {
  TruthSample t;
  t.stamp = Timestamp::from_micros(j.at("t").get<std::int64_t>());
  t.pose = Pose2D(j.at("x").get<double>(), j.at("y").get<double>(), j.at("h").get<double>());
  t.speed = j.at("v").get<double>();
  t.yaw_rate = j.at("w").get<double>();
  t.s = j.at("s").get<double>();
  return t;
}

struct Recording {
  Scenario scenario;
  std::vector<TruthSample> truth;
  std::vector<Measurement> measurements;
};

/// Truth is kept at the encoder rate, which includes every tick instant.
inline void write_recording(const std::string& path, const Scenario& sc, const std::vector<TruthSample>& truth,
                            const std::vector<Measurement>& measurements) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write recording: " + path);
  out << nlohmann::json{{"type", "header"}, {"scenario", to_json(sc)}}.dump() << '\n';
  std::size_t ti = 0;
  for (const auto& m : measurements) {
    while (ti < truth.size() && truth[ti].stamp <= m.stamp) {
      if (truth[ti].stamp.micros % (kStepMicros * kEncoderEvery) == 0) out << truth_to_json(truth[ti]).dump() << '\n';
      ++ti;
    }
    out << measurement_to_json(m).dump() << '\n';
  }
  for (; ti < truth.size(); ++ti) {
    if (truth[ti].stamp.micros % (kStepMicros * kEncoderEvery) == 0) out << truth_to_json(truth[ti]).dump() << '\n';
  }
}

inline Recording read_recording(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open recording: " + path);
  Recording r;
  std::string line;
  bool header = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        r.scenario = scenario_from_json(j.at("scenario"));
        header = true;
      } else if (type == "truth") {
        r.truth.push_back(truth_from_json(j));
      } else {
        r.measurements.push_back(measurement_from_json(j));
      }
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw std::runtime_error("recording without header: " + path);
  return r;
}

}  // namespace btloc::sim
