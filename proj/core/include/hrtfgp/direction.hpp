#pragma once

#include <Eigen/Core>

namespace hrtfgp {

// Unit vector in listener-centred coordinates: +x points out of the left ear,
// +y to the front and +z to the top of the head.
//
// Azimuth is measured in the horizontal plane from the front towards the left
// ear, in (-pi, pi]; elevation is measured from the horizontal plane, in
// [-pi/2, pi/2].
class Direction {
 public:
  static constexpr double kUnitTolerance = 1e-9;

  // Rejects vectors whose norm differs from one by more than kUnitTolerance.
  static Direction unit(double x, double y, double z);
  static Direction unit(const Eigen::Vector3d& v) { return unit(v.x(), v.y(), v.z()); }

  // Rejects the zero vector; everything else is scaled onto the sphere.
  static Direction normalized(double x, double y, double z);
  static Direction normalized(const Eigen::Vector3d& v) {
    return normalized(v.x(), v.y(), v.z());
  }

  static Direction from_angles(double azimuth, double elevation);

  double x() const noexcept { return v_.x(); }
  double y() const noexcept { return v_.y(); }
  double z() const noexcept { return v_.z(); }
  const Eigen::Vector3d& vector() const noexcept { return v_; }

  double azimuth() const;
  double elevation() const;

  // Reflection through the median plane (x -> -x).
  Direction mirrored() const { return Direction(Eigen::Vector3d(-v_.x(), v_.y(), v_.z())); }

  bool operator==(const Direction& other) const { return v_ == other.v_; }

 private:
  explicit Direction(const Eigen::Vector3d& v) : v_(v) {}

  Eigen::Vector3d v_;
};

// Great-circle angle between two nonzero vectors, in [0, pi].
double angular_separation(const Eigen::Vector3d& u, const Eigen::Vector3d& v);
inline double angular_separation(const Direction& u, const Direction& v) {
  return angular_separation(u.vector(), v.vector());
}

// Wraps an angle into (-pi, pi].
double wrap_angle(double radians);

constexpr double rad_to_deg(double r) { return r * 57.29577951308232; }
constexpr double deg_to_rad(double d) { return d / 57.29577951308232; }

}  // namespace hrtfgp
