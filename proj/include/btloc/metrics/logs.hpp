#pragma once

#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "btloc/behaviors/events.hpp"
#include "btloc/estimation/filter.hpp"
#include "btloc/mapdb/location_model.hpp"

namespace btloc::metrics {

/// Both filters sampled at one behavior tick.
struct TickRecord {
  Timestamp stamp;
  Pose2D main_pose;
  est::Mode main_mode = est::Mode::Uninitialized;
  est::Health main_health = est::Health::Lost;
  Pose2D backup_pose;
  est::Mode backup_mode = est::Mode::Uninitialized;
  est::Health backup_health = est::Health::Lost;
  /// Outcome of the last GPS record the backup filter processed during the tick.
  std::optional<est::Outcome> backup_gps;
  std::optional<Pose2D> truth;
};

inline nlohmann::json pose_json(const Pose2D& p) { return {p.x, p.y, p.heading}; }
inline Pose2D pose_from_json(const nlohmann::json& j) {
  return Pose2D(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

inline nlohmann::json to_json(const TickRecord& r) {
  nlohmann::json j = {{"t", r.stamp.micros},
                      {"main", {{"pose", pose_json(r.main_pose)},
                                {"mode", std::string(est::to_string(r.main_mode))},
                                {"health", std::string(est::to_string(r.main_health))}}},
                      {"backup", {{"pose", pose_json(r.backup_pose)},
                                  {"mode", std::string(est::to_string(r.backup_mode))},
                                  {"health", std::string(est::to_string(r.backup_health))}}}};
  if (r.backup_gps) j["backup"]["gps"] = std::string(est::to_string(*r.backup_gps));
  if (r.truth) j["truth"] = pose_json(*r.truth);
  return j;
}

inline TickRecord tick_from_json(const nlohmann::json& j) {
  TickRecord r;
  r.stamp = Timestamp::from_micros(j.at("t").get<std::int64_t>());
  const auto& m = j.at("main");
  r.main_pose = pose_from_json(m.at("pose"));
  r.main_mode = est::enum_from_string<est::Mode>(m.at("mode").get<std::string>());
  r.main_health = est::enum_from_string<est::Health>(m.at("health").get<std::string>());
  const auto& b = j.at("backup");
  r.backup_pose = pose_from_json(b.at("pose"));
  r.backup_mode = est::enum_from_string<est::Mode>(b.at("mode").get<std::string>());
  r.backup_health = est::enum_from_string<est::Health>(b.at("health").get<std::string>());
  if (b.contains("gps")) r.backup_gps = est::enum_from_string<est::Outcome>(b.at("gps").get<std::string>());
  if (j.contains("truth")) r.truth = pose_from_json(j.at("truth"));
  return r;
}

inline nlohmann::json to_json(const est::UpdateStats& s) {
  nlohmann::json j = {{"t", s.stamp.micros},
                      {"filter", s.filter},
                      {"sensor", std::string(est::to_string(s.sensor))},
                      {"outcome", std::string(est::to_string(s.outcome))},
                      {"bound", std::string(est::to_string(s.bound))},
                      {"innovation", s.innovation},
                      {"correction", s.correction},
                      {"pose", pose_json(s.pose)}};
  if (s.mahalanobis) j["mahalanobis"] = *s.mahalanobis;
  if (s.history_rejected) j["history_rejected"] = true;
  return j;
}

inline est::UpdateStats stats_from_json(const nlohmann::json& j) {
  est::UpdateStats s;
  s.stamp = Timestamp::from_micros(j.at("t").get<std::int64_t>());
  s.filter = j.at("filter").get<std::string>();
  s.sensor = est::enum_from_string<est::Sensor>(j.at("sensor").get<std::string>());
  s.outcome = est::enum_from_string<est::Outcome>(j.at("outcome").get<std::string>());
  s.bound = est::enum_from_string<est::GateBound>(j.at("bound").get<std::string>());
  s.innovation = j.at("innovation").get<std::vector<double>>();
  s.correction = j.at("correction").get<double>();
  s.pose = pose_from_json(j.at("pose"));
  if (j.contains("mahalanobis")) s.mahalanobis = j.at("mahalanobis").get<double>();
  s.history_rejected = j.value("history_rejected", false);
  return s;
}

inline nlohmann::json to_json(const mapdb::LocationSample& s) {
  return {{"sensor", std::string(est::to_string(s.sensor))},
          {"outcome", std::string(est::to_string(s.outcome))},
          {"pose", pose_json(s.pose)}};
}

inline mapdb::LocationSample location_sample_from_json(const nlohmann::json& j) {
  mapdb::LocationSample s;
  s.sensor = est::enum_from_string<est::Sensor>(j.at("sensor").get<std::string>());
  s.outcome = est::enum_from_string<est::Outcome>(j.at("outcome").get<std::string>());
  s.pose = pose_from_json(j.at("pose"));
  return s;
}

template <class T>
void write_jsonl(const std::string& path, const std::vector<T>& items) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  for (const auto& it : items) out << to_json(it).dump() << '\n';
}

template <class F>
auto read_jsonl(const std::string& path, F parse) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<decltype(parse(nlohmann::json{}))> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw std::runtime_error(path + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace btloc::metrics
