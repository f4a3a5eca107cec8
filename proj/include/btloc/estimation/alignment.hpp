#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "btloc/core/measurement.hpp"
#include "btloc/core/types.hpp"
#include "btloc/estimation/filter.hpp"

namespace btloc::est {

struct AlignmentConfig {
  double association_radius = 2.0;
  int min_matches = 3;
  double max_rms = 0.5;
  /// Associate/fit rounds; stops early once the association set is stable.
  int max_iterations = 10;
};

/// Rigid transform (rotation angle + translation) mapping `src` onto `dst`
/// in the least-squares sense. Closed form for 2D point pairs.
struct RigidTransform2D {
  double angle = 0.0;
  Vec2 translation = Vec2::Zero();

  Vec2 apply(const Vec2& p) const { return rotation(angle) * p + translation; }
};

inline RigidTransform2D fit_rigid_2d(std::span<const Vec2> src, std::span<const Vec2> dst) {
  if (src.size() != dst.size() || src.empty()) {
    throw std::invalid_argument("fit_rigid_2d: need equal, non-empty point sets");
  }
  const double n = static_cast<double>(src.size());
  Vec2 src_mean = Vec2::Zero();
  Vec2 dst_mean = Vec2::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    src_mean += src[i];
    dst_mean += dst[i];
  }
  src_mean /= n;
  dst_mean /= n;
  Eigen::Matrix2d h = Eigen::Matrix2d::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    h += (src[i] - src_mean) * (dst[i] - dst_mean).transpose();
  }
  RigidTransform2D t;
  t.angle = std::atan2(h(0, 1) - h(1, 0), h(0, 0) + h(1, 1));
  t.translation = dst_mean - rotation(t.angle) * src_mean;
  return t;
}

namespace detail {

/// Hash grid over candidate map features for nearest-neighbour lookups.
class CandidateGrid {
 public:
  CandidateGrid(std::span<const MapFeature> features, double cell) : features_(features), cell_(cell) {
    for (std::size_t i = 0; i < features.size(); ++i) {
      cells_[key(cell_of(features[i].position.x()), cell_of(features[i].position.y()))].push_back(i);
    }
  }

  /// Index of the nearest same-kind feature within `radius`, or -1.
  std::ptrdiff_t nearest(const Vec2& p, FeatureKind kind, double radius, double& dist) const {
    const std::int64_t cx = cell_of(p.x());
    const std::int64_t cy = cell_of(p.y());
    const std::int64_t reach = static_cast<std::int64_t>(std::ceil(radius / cell_));
    std::ptrdiff_t best = -1;
    double best_d2 = radius * radius;
    for (std::int64_t dx = -reach; dx <= reach; ++dx) {
      for (std::int64_t dy = -reach; dy <= reach; ++dy) {
        auto it = cells_.find(key(cx + dx, cy + dy));
        if (it == cells_.end()) continue;
        for (std::size_t idx : it->second) {
          const MapFeature& f = features_[idx];
          if (f.kind != kind) continue;
          const double d2 = (f.position - p).squaredNorm();
          // Ties resolved by lower index so the result is independent of hash order.
          if (d2 < best_d2 || (d2 == best_d2 && (best < 0 || static_cast<std::ptrdiff_t>(idx) < best))) {
            best_d2 = d2;
            best = static_cast<std::ptrdiff_t>(idx);
          }
        }
      }
    }
    dist = std::sqrt(best_d2);
    return best;
  }

 private:
  std::int64_t cell_of(double v) const { return static_cast<std::int64_t>(std::floor(v / cell_)); }
  static std::int64_t key(std::int64_t cx, std::int64_t cy) { return cx * 73856093LL ^ cy * 19349663LL; }

  std::span<const MapFeature> features_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<std::size_t>> cells_;
};

struct Pair {
  std::size_t obs;
  std::size_t feature;
  bool operator==(const Pair&) const = default;
};

/// Each observation takes its nearest same-kind feature; a feature claimed
/// twice keeps the closer observation.
inline std::vector<Pair> associate(const LidarScan& scan, const Pose2D& pose, const CandidateGrid& grid,
                                   std::size_t feature_count, double radius) {
  std::vector<std::ptrdiff_t> owner(feature_count, -1);
  std::vector<double> owner_dist(feature_count, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < scan.features.size(); ++i) {
    const auto& o = scan.features[i];
    double d = 0.0;
    const std::ptrdiff_t f = grid.nearest(transform_to_map(pose, o.position), o.kind, radius, d);
    if (f < 0) continue;
    if (d < owner_dist[f]) {
      owner[f] = static_cast<std::ptrdiff_t>(i);
      owner_dist[f] = d;
    }
  }
  std::vector<Pair> pairs;
  for (std::size_t f = 0; f < feature_count; ++f) {
    if (owner[f] >= 0) pairs.push_back({static_cast<std::size_t>(owner[f]), f});
  }
  std::sort(pairs.begin(), pairs.end(), [](const Pair& a, const Pair& b) { return a.obs < b.obs; });
  return pairs;
}

}  // namespace detail

/// Scan-to-map alignment seeded at `prior`: nearest-neighbour association
/// followed by a closed-form rigid fit, repeated until the association set
/// stops changing. `map_features` should already be limited to the sensor
/// range around the prior.
inline AlignmentResult align_scan(const LidarScan& scan, const Pose2D& prior,
                                  std::span<const MapFeature> map_features,
                                  const AlignmentConfig& cfg = {}) {
  AlignmentResult res;
  res.pose = prior;
  if (scan.features.empty() || map_features.empty()) return res;

  const detail::CandidateGrid grid(map_features, std::max(cfg.association_radius, 1e-3));
  Pose2D pose = prior;
  std::vector<detail::Pair> pairs;
  std::vector<Vec2> src;
  std::vector<Vec2> dst;
  for (int it = 0; it < std::max(cfg.max_iterations, 1); ++it) {
    auto next = detail::associate(scan, pose, grid, map_features.size(), cfg.association_radius);
    if (it > 0 && next == pairs) break;
    pairs = std::move(next);
    if (static_cast<int>(pairs.size()) < std::max(cfg.min_matches, 1)) {
      res.matched_count = static_cast<int>(pairs.size());
      return res;
    }
    src.clear();
    dst.clear();
    for (const auto& p : pairs) {
      src.push_back(scan.features[p.obs].position);
      dst.push_back(map_features[p.feature].position);
    }
    // Vehicle-frame observations mapped straight onto the map: the fitted
    // transform is the vehicle pose itself.
    const RigidTransform2D t = fit_rigid_2d(src, dst);
    pose = Pose2D(t.translation.x(), t.translation.y(), t.angle);
  }

  double sse = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i) sse += (transform_to_map(pose, src[i]) - dst[i]).squaredNorm();
  res.pose = pose;
  res.matched_count = static_cast<int>(pairs.size());
  res.rms_residual = std::sqrt(sse / static_cast<double>(src.size()));
  res.converged = res.matched_count >= cfg.min_matches && res.rms_residual <= cfg.max_rms;
  return res;
}

}  // namespace btloc::est
