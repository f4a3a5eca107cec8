#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <vector>

#include "btloc/core/measurement.hpp"
#include "btloc/mapdb/feature_layer.hpp"
#include "btloc/sim/scenario.hpp"

namespace btloc::sim {

/// Simulation base step (100 Hz) and per-stream decimation.
inline constexpr std::int64_t kStepMicros = 10'000;
inline constexpr int kEncoderEvery = 10;
inline constexpr int kGpsEvery = 100;
inline constexpr int kLidarEvery = 10;

struct TruthSample {
  Timestamp stamp;
  Pose2D pose;
  double speed = 0.0;
  double yaw_rate = 0.0;
  /// Arc length travelled.
  double s = 0.0;
};

/// Arc-length parameterised route with a piecewise constant speed profile.
class Route {
 public:
  Route(const Pose2D& start, const std::vector<RouteSegment>& segments) {
    Pose2D pose = start;
    double s = 0.0, t = 0.0;
    for (const auto& seg : segments) {
      Piece p{seg, pose, s, t};
      if (seg.kind == SegmentKind::Stop) {
        if (seg.duration < 0) throw std::invalid_argument("route: negative stop duration");
        p.seg.length = 0.0;
        p.seg.speed = 0.0;
        t += seg.duration;
      } else {
        if (!(seg.speed > 0)) throw std::invalid_argument("route: moving segment needs positive speed");
        if (seg.kind == SegmentKind::Arc && !(seg.radius > 0)) throw std::invalid_argument("route: arc radius");
        if (!(seg.length >= 0)) throw std::invalid_argument("route: negative length");
        t += seg.length / seg.speed;
        s += seg.length;
      }
      pieces_.push_back(p);
      pose = local_pose(p, p.seg.length);
    }
    length_ = s;
    travel_time_ = t;
    if (!(length_ > 0)) throw std::invalid_argument("route: zero-length route");
  }

  double length() const { return length_; }
  double travel_time() const { return travel_time_; }

  Pose2D pose_at(double s) const {
    s = std::clamp(s, 0.0, length_);
    const Piece& p = piece_at_s(s);
    return local_pose(p, s - p.s0);
  }

  /// Signed curvature at arc length s.
  double curvature_at(double s) const {
    const Piece& p = piece_at_s(std::clamp(s, 0.0, length_));
    return curvature(p.seg);
  }

  TruthSample sample(double t) const {
    TruthSample out;
    out.stamp = Timestamp::from_seconds(t);
    if (t >= travel_time_) {
      out.s = length_;
      out.pose = pose_at(length_);
      return out;
    }
    t = std::max(t, 0.0);
    // Last piece starting at or before t; ties favour the later piece so that
    // zero-duration pieces are skipped.
    std::size_t i = 0;
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      if (pieces_[k].t0 <= t) i = k;
    }
    const Piece& p = pieces_[i];
    const double ds = p.seg.speed * (t - p.t0);
    out.s = p.s0 + ds;
    out.pose = local_pose(p, ds);
    out.speed = p.seg.speed;
    out.yaw_rate = p.seg.speed * curvature(p.seg);
    return out;
  }

 private:
  struct Piece {
    RouteSegment seg;
    Pose2D start;
    double s0 = 0.0;
    double t0 = 0.0;
  };

  static double curvature(const RouteSegment& seg) {
    if (seg.kind != SegmentKind::Arc) return 0.0;
    return (seg.angle >= 0 ? 1.0 : -1.0) / seg.radius;
  }

  static Pose2D local_pose(const Piece& p, double ds) {
    const double k = curvature(p.seg);
    const double h0 = p.start.heading;
    if (k == 0.0) return Pose2D(p.start.x + ds * std::cos(h0), p.start.y + ds * std::sin(h0), h0);
    const double h = h0 + k * ds;
    return Pose2D(p.start.x + (std::sin(h) - std::sin(h0)) / k, p.start.y - (std::cos(h) - std::cos(h0)) / k, h);
  }

  const Piece& piece_at_s(double s) const {
    std::size_t i = 0;
    for (std::size_t k = 0; k < pieces_.size(); ++k) {
      if (pieces_[k].seg.length > 0 && pieces_[k].s0 <= s) i = k;
    }
    return pieces_[i];
  }

  std::vector<Piece> pieces_;
  double length_ = 0.0;
  double travel_time_ = 0.0;
};

inline double scenario_duration(const Scenario& sc, const Route& route) {
  return sc.duration > 0 ? sc.duration : route.travel_time();
}

/// Ground truth at 100 Hz from t = 0 through the scenario duration inclusive.
inline std::vector<TruthSample> generate_ground_truth(const Scenario& sc) {
  const Route route(sc.start, sc.route);
  const double duration = scenario_duration(sc, route);
  const auto steps = static_cast<std::int64_t>(std::floor(duration * 1e6 / kStepMicros + 1e-9));
  std::vector<TruthSample> out;
  out.reserve(static_cast<std::size_t>(steps + 1));
  for (std::int64_t k = 0; k <= steps; ++k) {
    TruthSample ts = route.sample(static_cast<double>(k * kStepMicros) / 1e6);
    ts.stamp = Timestamp::from_micros(k * kStepMicros);
    out.push_back(ts);
  }
  return out;
}

enum class GpsCondition { Nominal, Noisy, Denied };

struct ZoneAttributes {
  double density = 0.0;
  GpsCondition gps = GpsCondition::Nominal;
  Vec2 bias = Vec2::Zero();
  double inflation = 1.0;
};

/// Sensing conditions at arc length s. Outside every zone: sparse features, nominal GPS.
inline ZoneAttributes zone_attributes(const Scenario& sc, const Route& route, double s) {
  ZoneAttributes a;
  a.density = sc.sparse_density;
  for (const auto& z : sc.zones) {
    if (s < z.from || s > z.to) continue;
    switch (z.kind) {
      case ZoneKind::FeatureRich: a.density = z.density.value_or(sc.rich_density); break;
      case ZoneKind::FeatureSparse: a.density = z.density.value_or(sc.sparse_density); break;
      case ZoneKind::GpsNoisy: {
        a.gps = GpsCondition::Noisy;
        a.inflation = z.inflation;
        if (z.bias_vector) {
          a.bias = *z.bias_vector;
        } else {
          const double h = route.pose_at(s).heading;
          a.bias = z.bias * Vec2(-std::sin(h), std::cos(h));
        }
        break;
      }
      case ZoneKind::GpsDenied: a.gps = GpsCondition::Denied; break;
      case ZoneKind::Carpark: {
        a.gps = GpsCondition::Denied;
        const bool portal = s < z.from + z.portal || s > z.to - z.portal;
        a.density = portal ? sc.rich_density : z.density.value_or(sc.sparse_density);
        break;
      }
    }
  }
  return a;
}

/// Landmarks scattered in bands either side of the route at the local zone density.
inline mapdb::FeatureLayer generate_map(const Scenario& sc) {
  const Route route(sc.start, sc.route);
  std::mt19937_64 rng(sc.map_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double band = sc.sensor.band_outer - sc.sensor.band_inner;
  mapdb::FeatureLayer layer;
  std::int64_t next_id = 0;
  const auto steps = static_cast<std::int64_t>(std::ceil(route.length()));
  for (std::int64_t i = 0; i < steps; ++i) {
    const double s0 = static_cast<double>(i);
    const double step = std::min(1.0, route.length() - s0);
    const double density = zone_attributes(sc, route, s0 + 0.5 * step).density;
    if (!(density > 0)) continue;
    for (double side : {1.0, -1.0}) {
      std::poisson_distribution<int> count(density * band * step);
      const int n = count(rng);
      for (int k = 0; k < n; ++k) {
        const double s = s0 + step * unit(rng);
        const double lateral = side * (sc.sensor.band_inner + band * unit(rng));
        const FeatureKind kind = unit(rng) < 0.5 ? FeatureKind::Pole : FeatureKind::Corner;
        const Pose2D p = route.pose_at(s);
        const Vec2 pos = p.position() + lateral * Vec2(-std::sin(p.heading), std::cos(p.heading));
        layer.add({next_id++, kind, pos});
      }
    }
  }
  return layer;
}

/// Noisy sensor streams ordered by (stamp, stream_rank), which is also the
/// draw order. One generator, fixed draw order: identical inputs give
/// bit-identical output.
inline std::vector<Measurement> synthesize_measurements(const Scenario& sc, const std::vector<TruthSample>& truth,
                                                        const mapdb::FeatureLayer& map) {
  const Route route(sc.start, sc.route);
  std::mt19937_64 rng(sc.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const NoiseConfig& nz = sc.noise;
  std::vector<Measurement> out;
  out.reserve(truth.size() * 2);
  for (std::size_t k = 0; k < truth.size(); ++k) {
    const TruthSample& ts = truth[k];
    const Timestamp t = ts.stamp;
    if (k % kEncoderEvery == 0) {
      out.push_back({t, EncoderSpeed{ts.speed + nz.encoder_sigma * gauss(rng), nz.encoder_sigma}});
    }
    out.push_back({t, GyroYawRate{ts.yaw_rate + nz.gyro_sigma * gauss(rng), nz.gyro_sigma}});
    if (k % kGpsEvery == 0) {
      const ZoneAttributes za = zone_attributes(sc, route, ts.s);
      GpsFix fix;
      fix.cov = Mat2::Identity() * nz.gps_sigma * nz.gps_sigma;
      if (za.gps == GpsCondition::Denied) {
        fix.status = GpsStatus::NoFix;
        fix.position = Vec2::Zero();
      } else {
        const double sigma = nz.gps_sigma * (za.gps == GpsCondition::Noisy ? za.inflation : 1.0);
        const double ex = gauss(rng), ey = gauss(rng);
        fix.position = ts.pose.position() + sigma * Vec2(ex, ey);
        if (za.gps == GpsCondition::Noisy) fix.position += za.bias;
      }
      out.push_back({t, fix});
    }
    if (k % kLidarEvery == 0) {
      LidarScan scan;
      if (!map.empty()) {
        for (const auto& f : map.query(ts.pose.position(), sc.sensor.lidar_range)) {
          const Vec2 local = transform_to_vehicle(ts.pose, f.position);
          const double ex = gauss(rng), ey = gauss(rng);
          scan.features.push_back({f.kind, local + nz.lidar_sigma * Vec2(ex, ey), nz.lidar_sigma});
        }
      }
      out.push_back({t, std::move(scan)});
    }
  }
  return out;
}

/// Everything a run needs from the simulator.
struct World {
  Scenario scenario;
  std::vector<TruthSample> truth;
  mapdb::FeatureLayer map;
  std::vector<Measurement> measurements;
};

inline World build_world(const Scenario& sc) {
  World w;
  w.scenario = sc;
  w.truth = generate_ground_truth(sc);
  w.map = generate_map(sc);
  w.measurements = synthesize_measurements(sc, w.truth, w.map);
  return w;
}

}  // namespace btloc::sim
