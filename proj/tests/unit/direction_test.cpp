#include <cmath>
#include <numbers>

#include <gtest/gtest.h>

#include "hrtfgp/direction.hpp"
#include "hrtfgp/error.hpp"

namespace hrtfgp {
namespace {

constexpr double kPi = std::numbers::pi;

TEST(Direction, RejectsNonUnitVectors) {
  EXPECT_THROW(Direction::unit(1.0, 1.0, 0.0), InvalidArgument);
  EXPECT_NO_THROW(Direction::unit(0.0, 1.0, 0.0));
  EXPECT_THROW(Direction::normalized(0.0, 0.0, 0.0), InvalidArgument);
}

TEST(Direction, AngleRoundTrip) {
  for (double az = -3.0; az <= 3.1; az += 0.37) {
    for (double el = -1.4; el <= 1.45; el += 0.23) {
      const Direction d = Direction::from_angles(az, el);
      EXPECT_NEAR(d.vector().norm(), 1.0, 1e-12);
      EXPECT_NEAR(d.azimuth(), az, 1e-12);
      EXPECT_NEAR(d.elevation(), el, 1e-12);
    }
  }
  EXPECT_NEAR(Direction::from_angles(kPi, 0.0).azimuth(), kPi, 1e-12);
  EXPECT_NEAR(Direction::from_angles(-kPi, 0.0).azimuth(), kPi, 1e-12);
}

TEST(Direction, AxesFollowListenerConvention) {
  const Direction left = Direction::from_angles(kPi / 2, 0.0);
  EXPECT_NEAR(left.x(), 1.0, 1e-15);
  const Direction up = Direction::from_angles(0.0, kPi / 2);
  EXPECT_NEAR(up.z(), 1.0, 1e-15);
}

TEST(AngularSeparation, KnownAngles) {
  const Direction x = Direction::unit(1, 0, 0);
  const Direction y = Direction::unit(0, 1, 0);
  EXPECT_DOUBLE_EQ(angular_separation(x, x), 0.0);
  EXPECT_NEAR(angular_separation(x, y), kPi / 2, 1e-15);
  EXPECT_NEAR(angular_separation(x, Direction::unit(-1, 0, 0)), kPi, 1e-15);
  EXPECT_THROW(angular_separation(Eigen::Vector3d::Zero(), Eigen::Vector3d::UnitX()),
               InvalidArgument);
}

TEST(WrapAngle, PrincipalRange) {
  EXPECT_DOUBLE_EQ(wrap_angle(kPi), kPi);
  EXPECT_DOUBLE_EQ(wrap_angle(-kPi), kPi);
  EXPECT_NEAR(wrap_angle(3 * kPi / 2), -kPi / 2, 1e-15);
  for (double a = -20.0; a < 20.0; a += 0.61) {
    const double w = wrap_angle(a);
    EXPECT_GT(w, -kPi);
    EXPECT_LE(w, kPi);
    EXPECT_NEAR(std::remainder(w - a, 2 * kPi), 0.0, 1e-12);
  }
}

}  // namespace
}  // namespace hrtfgp
