#pragma once

#include <Eigen/Dense>
#include <random>

namespace pointpose {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;

/// Rotation as radians times unit axis; the zero vector is the identity.
struct AxisAngle {
  Vec3 r = Vec3::Zero();

  AxisAngle() = default;
  explicit AxisAngle(const Vec3& v) : r(v) {}
  AxisAngle(double x, double y, double z) : r(x, y, z) {}

  double angle() const { return r.norm(); }
};

/// Unit quaternion (w, x, y, z); q and -q denote the same rotation.
struct Quaternion {
  double w = 1.0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
};

Mat3 skew(const Vec3& r);

/// Rodrigues formula. Switches to the series for sin(t)/t and (1-cos t)/t^2
/// below t = 1e-4.
Mat3 exp_map(const AxisAngle& aa);

/// Inverse of exp_map, angle in [0, pi]. Stable near 0 and pi; throws
/// std::invalid_argument when R is not a rotation matrix (tolerance 1e-4).
AxisAngle log_map(const Mat3& R);

/// arccos((trace(a * b^T) - 1) / 2), argument clamped 1e-7 inside [-1, 1]
/// to keep the value (and its derivative) finite under rounding.
double geodesic_distance(const Mat3& a, const Mat3& b);

/// Accepts any nonzero quaternion; picks the w >= 0 representative so the
/// angle lands in [0, pi]. Throws std::invalid_argument on a zero quaternion.
AxisAngle quat_to_axis_angle(const Quaternion& q);

/// Wraps the angle into [0, pi]; at exactly pi the axis sign is fixed so the
/// first nonzero component is positive.
AxisAngle canonicalize(const AxisAngle& aa);

bool is_rotation_matrix(const Mat3& R, double tol = 1e-6);

/// Uniform over SO(3): four Gaussian draws normalized to a quaternion.
AxisAngle random_rotation(std::mt19937_64& gen);

}  // namespace pointpose
