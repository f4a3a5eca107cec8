#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "btloc/core/measurement.hpp"
#include "btloc/core/types.hpp"

using namespace btloc;

namespace {
constexpr double kPi = std::numbers::pi;
}

TEST(NormalizeHeading, FixedPoints) {
  EXPECT_DOUBLE_EQ(normalize_heading(0.0), 0.0);
  EXPECT_NEAR(normalize_heading(3 * kPi), kPi, 1e-12);
  EXPECT_GT(normalize_heading(3 * kPi), 0.0);
  EXPECT_NEAR(normalize_heading(-3 * kPi / 2), kPi / 2, 1e-12);
  EXPECT_DOUBLE_EQ(normalize_heading(kPi), kPi);
  EXPECT_DOUBLE_EQ(normalize_heading(-kPi), kPi);
}

TEST(NormalizeHeading, RejectsNonFinite) {
  EXPECT_THROW(normalize_heading(std::numeric_limits<double>::quiet_NaN()), std::invalid_argument);
  EXPECT_THROW(normalize_heading(std::numeric_limits<double>::infinity()), std::invalid_argument);
}

TEST(NormalizeHeading, RangeCongruenceAndIdempotence) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> d(-100.0, 100.0);
  for (int i = 0; i < 10000; ++i) {
    const double a = d(rng);
    const double r = normalize_heading(a);
    ASSERT_GT(r, -kPi);
    ASSERT_LE(r, kPi);
    const double k = (a - r) / (2 * kPi);
    ASSERT_NEAR(k, std::round(k), 1e-9);
    ASSERT_EQ(normalize_heading(r), r);
  }
}

TEST(Pose2D, ConstructorNormalizesHeading) {
  const Pose2D p(1.0, 2.0, 5 * kPi / 2);
  EXPECT_NEAR(p.heading, kPi / 2, 1e-12);
}

TEST(TransformToMap, Examples) {
  auto check = [](const Pose2D& pose, Vec2 local, Vec2 expected) {
    const Vec2 r = transform_to_map(pose, local);
    EXPECT_NEAR(r.x(), expected.x(), 1e-12);
    EXPECT_NEAR(r.y(), expected.y(), 1e-12);
  };
  check(Pose2D(0, 0, 0), Vec2(1, 0), Vec2(1, 0));
  check(Pose2D(0, 0, kPi / 2), Vec2(1, 0), Vec2(0, 1));
  check(Pose2D(2, 3, kPi), Vec2(1, 1), Vec2(1, 2));
}

TEST(TransformToMap, MatchesHomogeneousMatrixOracle) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-50.0, 50.0);
  std::uniform_real_distribution<double> h(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const Pose2D pose(u(rng), u(rng), h(rng));
    const Vec2 local(u(rng), u(rng));
    Eigen::Matrix3d T;
    T << std::cos(pose.heading), -std::sin(pose.heading), pose.x, std::sin(pose.heading),
        std::cos(pose.heading), pose.y, 0, 0, 1;
    const Eigen::Vector3d expected = T * Eigen::Vector3d(local.x(), local.y(), 1.0);
    const Vec2 got = transform_to_map(pose, local);
    ASSERT_NEAR(got.x(), expected.x(), 1e-9);
    ASSERT_NEAR(got.y(), expected.y(), 1e-9);
  }
}

TEST(TransformToMap, RoundTripRecoversInput) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-1000.0, 1000.0);
  std::uniform_real_distribution<double> h(-kPi, kPi);
  for (int i = 0; i < 1000; ++i) {
    const Pose2D pose(u(rng), u(rng), h(rng));
    const Vec2 local(u(rng) / 10.0, u(rng) / 10.0);
    const Vec2 back = transform_to_vehicle(pose, transform_to_map(pose, local));
    ASSERT_LT((back - local).norm(), 1e-9);
  }
}

TEST(Covariance, ValidityCheck) {
  Covariance3 c = Covariance3::Identity();
  EXPECT_TRUE(is_valid_covariance(c));
  c(0, 1) = 0.5;
  EXPECT_FALSE(is_valid_covariance(c));
  symmetrize(c);
  EXPECT_TRUE(is_valid_covariance(c));
  c = Covariance3::Identity();
  c(2, 2) = -1.0;
  EXPECT_FALSE(is_valid_covariance(c));
}

TEST(Timestamp, FixedPointArithmetic) {
  const Timestamp a = Timestamp::from_seconds(0.1);
  const Timestamp b = Timestamp::from_seconds(0.3);
  EXPECT_EQ(a.micros, 100000);
  EXPECT_EQ(b.micros, 300000);
  EXPECT_DOUBLE_EQ(elapsed(a, b), 0.2);
  EXPECT_LT(a, b);
}

TEST(Measurement, StreamRankFollowsPayloadOrder) {
  EXPECT_EQ(stream_rank(Measurement{{}, EncoderSpeed{}}), 0);
  EXPECT_EQ(stream_rank(Measurement{{}, GyroYawRate{}}), 1);
  EXPECT_EQ(stream_rank(Measurement{{}, GpsFix{}}), 2);
  EXPECT_EQ(stream_rank(Measurement{{}, LidarScan{}}), 3);
}
