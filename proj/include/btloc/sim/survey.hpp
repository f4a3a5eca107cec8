#pragma once

#include <map>
#include <vector>

#include "btloc/estimation/alignment.hpp"
#include "btloc/mapdb/location_model.hpp"
#include "btloc/mapdb/map_io.hpp"
#include "btloc/sim/world.hpp"

namespace btloc::sim {

struct SurveyConfig {
  /// GPS fixes farther than this (Mahalanobis, reported covariance) from truth count as rejected.
  double gps_gate = 3.0;
  double lidar_range = 50.0;
  est::AlignmentConfig alignment;
};

/// Location log of a reference pass that knows the true pose: GPS fixes are
/// judged against truth and lidar frames are aligned from the true pose.
/// Truth must contain every GPS and lidar stamp.
inline mapdb::RunLog survey_location_log(const std::vector<TruthSample>& truth, const std::vector<Measurement>& ms,
                                         const mapdb::FeatureLayer& features, const SurveyConfig& cfg = {}) {
  std::map<std::int64_t, Pose2D> at;
  for (const auto& t : truth) at[t.stamp.micros] = t.pose;
  mapdb::RunLog log;
  for (const auto& m : ms) {
    const bool gps = m.holds<GpsFix>();
    if (!gps && !m.holds<LidarScan>()) continue;
    auto it = at.find(m.stamp.micros);
    if (it == at.end()) continue;
    const Pose2D& pose = it->second;
    if (gps) {
      const auto& fix = m.as<GpsFix>();
      est::Outcome o = est::Outcome::NoFix;
      if (fix.status == GpsStatus::Fix) {
        const Vec2 e = fix.position - pose.position();
        const double d2 = e.dot(fix.cov.ldlt().solve(e));
        o = d2 <= cfg.gps_gate * cfg.gps_gate ? est::Outcome::Accepted : est::Outcome::Rejected;
      }
      log.push_back({est::Sensor::Gps, o, pose});
      continue;
    }
    const auto& scan = m.as<LidarScan>();
    if (scan.features.empty() || features.empty()) continue;
    const auto candidates = features.query(pose.position(), cfg.lidar_range + cfg.alignment.association_radius);
    const auto res = est::align_scan(scan, pose, candidates, cfg.alignment);
    if (res.converged) log.push_back({est::Sensor::Lidar, est::Outcome::Accepted, pose});
  }
  return log;
}

/// Feature layer of the scenario plus a location model from the survey pass.
inline mapdb::MapDatabase build_default_map(const World& w, const SurveyConfig& cfg = {}) {
  mapdb::MapDatabase db{w.map, mapdb::LocationModel{}};
  const std::vector<mapdb::RunLog> logs{survey_location_log(w.truth, w.measurements, w.map, cfg)};
  db.location = mapdb::build_location_model(logs);
  return db;
}

}  // namespace btloc::sim
