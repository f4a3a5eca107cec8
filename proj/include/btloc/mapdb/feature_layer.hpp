#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include "btloc/core/measurement.hpp"
#include "btloc/core/types.hpp"

namespace btloc::mapdb {

using CellKey = std::pair<std::int64_t, std::int64_t>;

inline CellKey cell_of(const Vec2& p, double cell_size) {
  return {static_cast<std::int64_t>(std::floor(p.x() / cell_size)),
          static_cast<std::int64_t>(std::floor(p.y() / cell_size))};
}

/// Map features with a uniform grid index.
class FeatureLayer {
 public:
  explicit FeatureLayer(double cell_size = 10.0) : cell_size_(cell_size) {
    if (!(cell_size > 0.0)) throw std::invalid_argument("FeatureLayer: cell size must be positive");
  }

  void add(const MapFeature& f) {
    if (!f.position.allFinite()) throw std::invalid_argument("FeatureLayer: non-finite position");
    if (!features_.emplace(f.id, f).second) {
      throw std::invalid_argument("FeatureLayer: duplicate feature id " + std::to_string(f.id));
    }
    grid_[cell_of(f.position, cell_size_)].push_back(f.id);
  }

  bool remove(std::int64_t id) {
    auto it = features_.find(id);
    if (it == features_.end()) return false;
    const CellKey k = cell_of(it->second.position, cell_size_);
    auto& ids = grid_[k];
    ids.erase(std::find(ids.begin(), ids.end(), id));
    if (ids.empty()) grid_.erase(k);
    features_.erase(it);
    return true;
  }

  /// Features within the closed ball, ordered by id.
  std::vector<MapFeature> query(const Vec2& center, double radius) const {
    if (!(radius > 0.0)) throw std::invalid_argument("FeatureLayer::query: radius must be positive");
    std::vector<MapFeature> out;
    const CellKey lo = cell_of(center - Vec2(radius, radius), cell_size_);
    const CellKey hi = cell_of(center + Vec2(radius, radius), cell_size_);
    const double r2 = radius * radius;
    for (std::int64_t cx = lo.first; cx <= hi.first; ++cx) {
      for (std::int64_t cy = lo.second; cy <= hi.second; ++cy) {
        auto it = grid_.find({cx, cy});
        if (it == grid_.end()) continue;
        for (std::int64_t id : it->second) {
          const MapFeature& f = features_.at(id);
          if ((f.position - center).squaredNorm() <= r2) out.push_back(f);
        }
      }
    }
    std::sort(out.begin(), out.end(), [](const MapFeature& a, const MapFeature& b) { return a.id < b.id; });
    return out;
  }

  std::size_t size() const { return features_.size(); }
  bool empty() const { return features_.empty(); }
  double cell_size() const { return cell_size_; }
  const std::map<std::int64_t, MapFeature>& features() const { return features_; }

  /// Every feature is listed in exactly the cell its position falls in.
  bool index_consistent() const {
    std::size_t indexed = 0;
    for (const auto& [k, ids] : grid_) {
      for (std::int64_t id : ids) {
        auto it = features_.find(id);
        if (it == features_.end() || cell_of(it->second.position, cell_size_) != k) return false;
        ++indexed;
      }
    }
    return indexed == features_.size();
  }

 private:
  double cell_size_;
  std::map<std::int64_t, MapFeature> features_;
  std::map<CellKey, std::vector<std::int64_t>> grid_;
};

}  // namespace btloc::mapdb
