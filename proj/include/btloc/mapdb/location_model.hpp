#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "btloc/core/types.hpp"
#include "btloc/estimation/filter.hpp"
#include "btloc/mapdb/feature_layer.hpp"

namespace btloc::mapdb {

enum class GpsQuality { Usable, Noisy, Unavailable };

inline constexpr std::string_view to_string(GpsQuality q) {
  switch (q) {
    case GpsQuality::Usable: return "USABLE";
    case GpsQuality::Noisy: return "NOISY";
    case GpsQuality::Unavailable: return "UNAVAILABLE";
  }
  return "?";
}

inline GpsQuality gps_quality_from_string(std::string_view s) {
  if (s == "USABLE") return GpsQuality::Usable;
  if (s == "NOISY") return GpsQuality::Noisy;
  if (s == "UNAVAILABLE") return GpsQuality::Unavailable;
  throw std::invalid_argument("unknown gps quality: " + std::string(s));
}

/// Heading of a lidar-localised pose, with where it was observed.
struct HeadingSample {
  Vec2 position = Vec2::Zero();
  double heading = 0.0;
};

struct LocationModelCell {
  std::int64_t cx = 0;
  std::int64_t cy = 0;
  GpsQuality gps_quality = GpsQuality::Usable;
  std::vector<HeadingSample> headings;
  std::int64_t samples = 0;
  std::int64_t gps_accepted = 0;
  std::int64_t gps_rejected = 0;
  std::int64_t gps_no_fix = 0;
};

/// One past update record: which sensor, how it ended, and the pose it was
/// associated with.
struct LocationSample {
  est::Sensor sensor = est::Sensor::Gps;
  est::Outcome outcome = est::Outcome::Accepted;
  Pose2D pose;
};

using RunLog = std::vector<LocationSample>;

struct LocationModelConfig {
  double cell_size = 10.0;
  /// Acceptance ratio at or above which GPS is USABLE.
  double usable_ratio = 0.8;
  /// Acceptance ratio below which GPS is UNAVAILABLE.
  double unavailable_ratio = 0.1;
};

class LocationModel {
 public:
  explicit LocationModel(LocationModelConfig cfg = {}) : cfg_(cfg) {
    if (!(cfg.cell_size > 0.0)) throw std::invalid_argument("LocationModel: cell size must be positive");
  }

  const LocationModelConfig& config() const { return cfg_; }
  const std::map<CellKey, LocationModelCell>& cells() const { return cells_; }
  bool empty() const { return cells_.empty(); }

  void set_cell(const LocationModelCell& c) { cells_[{c.cx, c.cy}] = c; }

  const LocationModelCell* cell_at(const Vec2& p) const {
    auto it = cells_.find(cell_of(p, cfg_.cell_size));
    return it == cells_.end() ? nullptr : &it->second;
  }

  /// Quality of the containing cell; cells without history are USABLE.
  GpsQuality query_gps_model(const Vec2& p) const {
    const LocationModelCell* c = cell_at(p);
    return c == nullptr ? GpsQuality::Usable : c->gps_quality;
  }

  /// Historical lidar headings observed inside the axis-aligned box of side
  /// `box` centred on `p`.
  std::vector<HeadingSample> query_lidar_history_samples(const Vec2& p, double box = 10.0) const {
    std::vector<HeadingSample> out;
    const double h = 0.5 * box;
    const CellKey lo = cell_of(p - Vec2(h, h), cfg_.cell_size);
    const CellKey hi = cell_of(p + Vec2(h, h), cfg_.cell_size);
    for (auto it = cells_.lower_bound({lo.first, std::numeric_limits<std::int64_t>::min()});
         it != cells_.end() && it->first.first <= hi.first; ++it) {
      if (it->first.second < lo.second || it->first.second > hi.second) continue;
      for (const auto& s : it->second.headings) {
        if (std::abs(s.position.x() - p.x()) <= h && std::abs(s.position.y() - p.y()) <= h) out.push_back(s);
      }
    }
    return out;
  }

  std::vector<double> query_lidar_history(const Vec2& p, double box = 10.0) const {
    std::vector<double> out;
    for (const auto& s : query_lidar_history_samples(p, box)) out.push_back(s.heading);
    return out;
  }

  GpsQuality classify(std::int64_t accepted, std::int64_t rejected, std::int64_t no_fix) const {
    const std::int64_t decided = accepted + rejected;
    if (decided == 0) return no_fix > 0 ? GpsQuality::Unavailable : GpsQuality::Usable;
    const double r = static_cast<double>(accepted) / static_cast<double>(decided);
    if (r >= cfg_.usable_ratio) return GpsQuality::Usable;
    if (r >= cfg_.unavailable_ratio) return GpsQuality::Noisy;
    return GpsQuality::Unavailable;
  }

 private:
  LocationModelConfig cfg_;
  std::map<CellKey, LocationModelCell> cells_;
};

/// Passes when no history exists or any historical heading is within
/// `tolerance` of `heading`.
inline bool heading_consistent(std::span<const double> history, double heading, double tolerance) {
  if (history.empty()) return true;
  return std::any_of(history.begin(), history.end(), [&](double h) {
    return std::abs(normalize_heading(heading - h)) <= tolerance;
  });
}

/// Aggregates past update records into per-cell GPS quality and lidar
/// heading history. Depends only on the multiset of records.
inline LocationModel build_location_model(std::span<const RunLog> logs, LocationModelConfig cfg = {}) {
  LocationModel model(cfg);
  std::map<CellKey, LocationModelCell> cells;
  for (const auto& log : logs) {
    for (const auto& s : log) {
      const CellKey k = cell_of(s.pose.position(), cfg.cell_size);
      auto& c = cells[k];
      c.cx = k.first;
      c.cy = k.second;
      ++c.samples;
      if (s.sensor == est::Sensor::Gps) {
        switch (s.outcome) {
          case est::Outcome::Accepted: ++c.gps_accepted; break;
          case est::Outcome::Rejected: ++c.gps_rejected; break;
          case est::Outcome::NoFix: ++c.gps_no_fix; break;
          case est::Outcome::NotConverged: break;
        }
      } else if (s.outcome == est::Outcome::Accepted) {
        c.headings.push_back({s.pose.position(), s.pose.heading});
      }
    }
  }
  for (auto& [k, c] : cells) {
    c.gps_quality = model.classify(c.gps_accepted, c.gps_rejected, c.gps_no_fix);
    std::sort(c.headings.begin(), c.headings.end(), [](const HeadingSample& a, const HeadingSample& b) {
      return std::tuple(a.position.x(), a.position.y(), a.heading) <
             std::tuple(b.position.x(), b.position.y(), b.heading);
    });
    model.set_cell(c);
  }
  return model;
}

}  // namespace btloc::mapdb
