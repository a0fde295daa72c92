#include "hrtfgp/direction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hrtfgp/error.hpp"

namespace hrtfgp {

Direction Direction::unit(double x, double y, double z) {
  const Eigen::Vector3d v(x, y, z);
  if (!v.allFinite()) throw InvalidArgument("direction has non-finite components");
  const double norm = v.norm();
  if (std::abs(norm - 1.0) > kUnitTolerance) {
    throw InvalidArgument("direction is not a unit vector (norm " + std::to_string(norm) + ")");
  }
  return Direction(v);
}

Direction Direction::normalized(double x, double y, double z) {
  const Eigen::Vector3d v(x, y, z);
  if (!v.allFinite()) throw InvalidArgument("direction has non-finite components");
  const double norm = v.norm();
  if (norm == 0.0) throw InvalidArgument("cannot normalize the zero vector");
  return Direction(v / norm);
}

Direction Direction::from_angles(double azimuth, double elevation) {
  if (!std::isfinite(azimuth) || !std::isfinite(elevation)) {
    throw InvalidArgument("non-finite angle");
  }
  const double ce = std::cos(elevation);
  return normalized(ce * std::sin(azimuth), ce * std::cos(azimuth), std::sin(elevation));
}

double Direction::azimuth() const {
  const double a = std::atan2(v_.x(), v_.y());
  return a == -std::numbers::pi ? std::numbers::pi : a;
}

double Direction::elevation() const { return std::asin(std::clamp(v_.z(), -1.0, 1.0)); }

double angular_separation(const Eigen::Vector3d& u, const Eigen::Vector3d& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw InvalidArgument("angular separation of a zero vector");
  return std::acos(std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0));
}

double wrap_angle(double radians) {
  constexpr double kPi = std::numbers::pi;
  double w = std::remainder(radians, 2.0 * kPi);  // [-pi, pi]
  if (w <= -kPi) w += 2.0 * kPi;
  return w;
}

}  // namespace hrtfgp
