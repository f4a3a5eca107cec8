#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "btloc/behaviors/events.hpp"
#include "btloc/metrics/logs.hpp"

namespace btloc::metrics {

struct OutcomeShares {
  double accepted = 0.0;
  double rejected = 0.0;
  double not_converged = 0.0;
  std::int64_t frames = 0;
};

struct RunReport {
  /// Percent of main-filter distance travelled in each mode.
  std::map<est::Mode, double> distance_pct;
  double distance = 0.0;
  int switch_count = 0;
  int recovery_count = 0;
  std::vector<double> jump_distances;
  /// Position RMSE against truth per filter ("main", "backup").
  std::map<std::string, double> rmse;
  /// Main filter position RMSE and standard deviation of the error norm per mode.
  std::map<est::Mode, double> rmse_per_mode;
  std::map<est::Mode, double> std_dev_per_mode;
  OutcomeShares lidar_frames;
};

/// Mode attribution: each segment between consecutive tick poses counts for
/// the mode at its start. A run that never moves is credited to its first mode.
inline std::map<est::Mode, double> mode_distance(const std::vector<Pose2D>& poses, const std::vector<est::Mode>& modes,
                                                 double* total_out = nullptr) {
  if (poses.size() != modes.size()) throw std::invalid_argument("mode_distance: poses and modes differ in length");
  if (poses.empty()) throw std::invalid_argument("mode_distance: empty trajectory");
  std::map<est::Mode, double> dist{{est::Mode::LidarDr, 0.0}, {est::Mode::GpsDr, 0.0}, {est::Mode::DrOnly, 0.0}};
  double total = 0.0;
  for (std::size_t i = 1; i < poses.size(); ++i) {
    const double d = (poses[i].position() - poses[i - 1].position()).norm();
    dist[modes[i - 1]] += d;
    total += d;
  }
  if (total_out != nullptr) *total_out = total;
  std::map<est::Mode, double> pct;
  for (const auto& [m, d] : dist) pct[m] = total > 0.0 ? 100.0 * d / total : 0.0;
  if (!(total > 0.0)) pct[modes.front()] = 100.0;
  return pct;
}

inline RunReport compute_report(const std::vector<TickRecord>& ticks, const std::vector<beh::TransitionEvent>& events,
                                const std::vector<est::UpdateStats>& stats) {
  if (ticks.empty()) throw std::invalid_argument("compute_report: no ticks");
  const bool with_truth = ticks.front().truth.has_value();
  for (const auto& t : ticks) {
    if (t.truth.has_value() != with_truth) throw std::invalid_argument("compute_report: truth missing for some ticks");
  }
  RunReport r;
  std::vector<Pose2D> poses;
  std::vector<est::Mode> modes;
  for (const auto& t : ticks) {
    poses.push_back(t.main_pose);
    modes.push_back(t.main_mode);
  }
  r.distance_pct = mode_distance(poses, modes, &r.distance);

  for (const auto& e : events) {
    if (e.kind == beh::EventKind::SensorSwitch) {
      ++r.switch_count;
    } else {
      ++r.recovery_count;
    }
    r.jump_distances.push_back(e.jump_distance);
  }

  if (with_truth) {
    double main_sq = 0.0, backup_sq = 0.0;
    std::map<est::Mode, std::vector<double>> errs;
    for (const auto& t : ticks) {
      const double em = (t.main_pose.position() - t.truth->position()).norm();
      const double eb = (t.backup_pose.position() - t.truth->position()).norm();
      main_sq += em * em;
      backup_sq += eb * eb;
      errs[t.main_mode].push_back(em);
    }
    const auto n = static_cast<double>(ticks.size());
    r.rmse["main"] = std::sqrt(main_sq / n);
    r.rmse["backup"] = std::sqrt(backup_sq / n);
    for (const auto& [m, e] : errs) {
      const auto k = static_cast<double>(e.size());
      double sq = 0.0, sum = 0.0;
      for (double v : e) {
        sq += v * v;
        sum += v;
      }
      const double mean = sum / k;
      double var = 0.0;
      for (double v : e) var += (v - mean) * (v - mean);
      r.rmse_per_mode[m] = std::sqrt(sq / k);
      r.std_dev_per_mode[m] = std::sqrt(var / k);
    }
  }

  std::int64_t acc = 0, rej = 0, nc = 0;
  for (const auto& s : stats) {
    if (s.filter != "main" || s.sensor != est::Sensor::Lidar) continue;
    switch (s.outcome) {
      case est::Outcome::Accepted: ++acc; break;
      case est::Outcome::Rejected: ++rej; break;
      default: ++nc; break;
    }
  }
  r.lidar_frames.frames = acc + rej + nc;
  if (r.lidar_frames.frames > 0) {
    const auto f = static_cast<double>(r.lidar_frames.frames);
    r.lidar_frames.accepted = 100.0 * static_cast<double>(acc) / f;
    r.lidar_frames.rejected = 100.0 * static_cast<double>(rej) / f;
    r.lidar_frames.not_converged = 100.0 * static_cast<double>(nc) / f;
  }
  return r;
}

inline nlohmann::json to_json(const RunReport& r) {
  auto by_mode = [](const std::map<est::Mode, double>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[std::string(est::to_string(k))] = v;
    return j;
  };
  const double mean_jump =
      r.jump_distances.empty()
          ? 0.0
          : std::accumulate(r.jump_distances.begin(), r.jump_distances.end(), 0.0) /
                static_cast<double>(r.jump_distances.size());
  return {{"distance_pct", by_mode(r.distance_pct)},
          {"distance_m", r.distance},
          {"switch_count", r.switch_count},
          {"recovery_count", r.recovery_count},
          {"jump_distances", r.jump_distances},
          {"mean_jump", mean_jump},
          {"translation_rmse", r.rmse},
          {"rmse_per_mode", by_mode(r.rmse_per_mode)},
          {"error_std_dev_per_mode", by_mode(r.std_dev_per_mode)},
          {"lidar_frame_outcomes", {{"accepted_pct", r.lidar_frames.accepted},
                                    {"rejected_pct", r.lidar_frames.rejected},
                                    {"not_converged_pct", r.lidar_frames.not_converged},
                                    {"frames", r.lidar_frames.frames}}}};
}

/// Point colours: green lidar, red GPS, blue dead reckoning; yellow marks a
/// backup-filter tick whose GPS sample was rejected.
inline std::string mode_color(est::Mode m) {
  switch (m) {
    case est::Mode::LidarDr: return "green";
    case est::Mode::GpsDr: return "red";
    default: return "blue";
  }
}

inline nlohmann::json export_geojson(const std::vector<TickRecord>& ticks) {
  if (ticks.empty()) throw std::invalid_argument("export_geojson: empty trajectory");
  nlohmann::json features = nlohmann::json::array();
  auto point = [&](const TickRecord& t, const char* filter, const Pose2D& p, est::Mode m, const std::string& color) {
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {p.x, p.y}}}},
                        {"properties", {{"t", t.stamp.seconds()},
                                        {"mode", std::string(est::to_string(m))},
                                        {"filter", filter},
                                        {"color", color}}}});
  };
  for (const auto& t : ticks) point(t, "main", t.main_pose, t.main_mode, mode_color(t.main_mode));
  for (const auto& t : ticks) {
    const bool rejected = t.backup_gps == est::Outcome::Rejected;
    point(t, "backup", t.backup_pose, t.backup_mode, rejected ? "yellow" : mode_color(t.backup_mode));
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

/// Wall-clock cost samples in milliseconds.
struct TimingLog {
  std::vector<double> tick_ms;
  std::vector<double> lidar_ms;
  std::vector<double> gps_ms;
};

inline constexpr std::array<double, 12> kHistogramEdgesMs{0.0, 0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 50.0};

inline std::vector<std::int64_t> histogram(const std::vector<double>& samples) {
  std::vector<std::int64_t> counts(kHistogramEdgesMs.size(), 0);
  for (double v : samples) {
    const auto it = std::upper_bound(kHistogramEdgesMs.begin(), kHistogramEdgesMs.end(), v);
    const auto i = static_cast<std::size_t>(std::max<std::ptrdiff_t>(it - kHistogramEdgesMs.begin() - 1, 0));
    ++counts[i];
  }
  return counts;
}

inline std::string histogram_csv(const std::vector<double>& samples) {
  const auto counts = histogram(samples);
  std::ostringstream out;
  out << "lower_ms,upper_ms,count\n";
  for (std::size_t i = 0; i < counts.size(); ++i) {
    out << kHistogramEdgesMs[i] << ',';
    if (i + 1 < counts.size()) out << kHistogramEdgesMs[i + 1];
    else out << "inf";
    out << ',' << counts[i] << '\n';
  }
  return out.str();
}

inline nlohmann::json to_json(const TimingLog& t) {
  auto mean = [](const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return {{"mean_tick_ms", mean(t.tick_ms)},
          {"mean_lidar_frame_ms", mean(t.lidar_ms)},
          {"mean_gps_update_ms", mean(t.gps_ms)},
          {"ticks", t.tick_ms.size()},
          {"lidar_frames", t.lidar_ms.size()},
          {"gps_updates", t.gps_ms.size()}};
}

}  // namespace btloc::metrics
