#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "btloc/mapdb/feature_layer.hpp"
#include "btloc/mapdb/location_model.hpp"

namespace btloc::mapdb {

struct MapDatabase {
  FeatureLayer features;
  LocationModel location;
};

inline FeatureKind feature_kind_from_string(const std::string& s) {
  if (s == "POLE") return FeatureKind::Pole;
  if (s == "CORNER") return FeatureKind::Corner;
  throw std::invalid_argument("unknown feature kind: " + s);
}

/// {features: [{id, kind, x, y}],
///  cells: [{cx, cy, gps_quality, headings[], samples, heading_points[[x,y]...],
///           gps_accepted, gps_rejected, gps_no_fix}]}
inline nlohmann::json to_json(const MapDatabase& db) {
  nlohmann::json j;
  j["cell_size"] = db.location.config().cell_size;
  j["features"] = nlohmann::json::array();
  for (const auto& [id, f] : db.features.features()) {
    j["features"].push_back(
        {{"id", id}, {"kind", std::string(to_string(f.kind))}, {"x", f.position.x()}, {"y", f.position.y()}});
  }
  j["cells"] = nlohmann::json::array();
  for (const auto& [k, c] : db.location.cells()) {
    nlohmann::json headings = nlohmann::json::array();
    nlohmann::json points = nlohmann::json::array();
    for (const auto& h : c.headings) {
      headings.push_back(h.heading);
      points.push_back({h.position.x(), h.position.y()});
    }
    j["cells"].push_back({{"cx", c.cx},
                          {"cy", c.cy},
                          {"gps_quality", std::string(to_string(c.gps_quality))},
                          {"headings", headings},
                          {"heading_points", points},
                          {"samples", c.samples},
                          {"gps_accepted", c.gps_accepted},
                          {"gps_rejected", c.gps_rejected},
                          {"gps_no_fix", c.gps_no_fix}});
  }
  return j;
}

inline MapDatabase map_from_json(const nlohmann::json& j) {
  LocationModelConfig lcfg;
  lcfg.cell_size = j.value("cell_size", 10.0);
  MapDatabase db{FeatureLayer(lcfg.cell_size), LocationModel(lcfg)};
  if (j.contains("features")) {
    for (const auto& f : j.at("features")) {
      db.features.add({f.at("id").get<std::int64_t>(), feature_kind_from_string(f.at("kind").get<std::string>()),
                       Vec2(f.at("x").get<double>(), f.at("y").get<double>())});
    }
  }
  if (j.contains("cells")) {
    for (const auto& cj : j.at("cells")) {
      LocationModelCell c;
      c.cx = cj.at("cx").get<std::int64_t>();
      c.cy = cj.at("cy").get<std::int64_t>();
      c.gps_quality = gps_quality_from_string(cj.at("gps_quality").get<std::string>());
      c.samples = cj.value("samples", std::int64_t{0});
      c.gps_accepted = cj.value("gps_accepted", std::int64_t{0});
      c.gps_rejected = cj.value("gps_rejected", std::int64_t{0});
      c.gps_no_fix = cj.value("gps_no_fix", std::int64_t{0});
      const auto& hs = cj.at("headings");
      const bool has_points = cj.contains("heading_points");
      for (std::size_t i = 0; i < hs.size(); ++i) {
        HeadingSample s;
        s.heading = hs[i].get<double>();
        if (has_points) {
          s.position = Vec2(cj["heading_points"][i][0].get<double>(), cj["heading_points"][i][1].get<double>());
        } else {
          // Without recorded positions, attribute headings to the cell centre.
          s.position = Vec2((static_cast<double>(c.cx) + 0.5) * lcfg.cell_size,
                            (static_cast<double>(c.cy) + 0.5) * lcfg.cell_size);
        }
        c.headings.push_back(s);
      }
      db.location.set_cell(c);
    }
  }
  return db;
}

inline void save_map(const MapDatabase& db, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write map file: " + path);
  out << to_json(db).dump(1) << '\n';
}

inline MapDatabase load_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open map file: " + path);
  return map_from_json(nlohmann::json::parse(in));
}

}  // namespace btloc::mapdb
