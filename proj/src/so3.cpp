#include "pointpose/so3.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "pointpose/rng.hpp"

namespace pointpose {

namespace {

constexpr double kPi = std::numbers::pi;
constexpr double kTaylorSwitch = 1e-4;
constexpr double kAcosClamp = 1e-7;

// Axis sign convention at angle pi, where r and -r are the same rotation.
AxisAngle fix_pi_sign(AxisAngle aa) {
  for (int i = 0; i < 3; ++i) {
    if (std::abs(aa.r[i]) > 1e-9) {
      if (aa.r[i] < 0.0) aa.r = -aa.r;
      break;
    }
  }
  return aa;
}

}  // namespace

Mat3 skew(const Vec3& r) {
  Mat3 s;
  // clang-format off
  s <<     0.0, -r.z(),  r.y(),
         r.z(),    0.0, -r.x(),
        -r.y(),  r.x(),    0.0;
  // clang-format on
  return s;
}

Mat3 exp_map(const AxisAngle& aa) {
  const double theta2 = aa.r.squaredNorm();
  const double theta = std::sqrt(theta2);
  double a, b;
  if (theta < kTaylorSwitch) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  const Mat3 rx = skew(aa.r);
  return Mat3::Identity() + a * rx + b * rx * rx;
}

bool is_rotation_matrix(const Mat3& R, double tol) {
  return (R.transpose() * R - Mat3::Identity()).norm() <= tol &&
         std::abs(R.determinant() - 1.0) <= tol;
}

AxisAngle log_map(const Mat3& R) {
  if (!is_rotation_matrix(R, 1e-4)) {
    throw std::invalid_argument("log_map: input is not a rotation matrix");
  }
  // v = unskew((R - R^T) / 2) = sin(theta) * axis
  const Vec3 v(0.5 * (R(2, 1) - R(1, 2)), 0.5 * (R(0, 2) - R(2, 0)),
               0.5 * (R(1, 0) - R(0, 1)));
  const double s = v.norm();
  const double c = std::clamp(0.5 * (R.trace() - 1.0), -1.0, 1.0);
  const double theta = std::atan2(s, c);

  if (theta < 1e-7) {
    // v = theta * axis + O(theta^3); first correction of theta / sin(theta)
    return AxisAngle(v * (1.0 + theta * theta / 6.0));
  }
  if (theta < 3.0) {
    return AxisAngle(v * (theta / s));
  }
  // Near pi the skew part degrades as sin(theta); recover the axis from the
  // symmetric part instead: (R + R^T)/2 = c*I + (1-c) * u*u^T.
  const Mat3 outer = (0.5 * (R + R.transpose()) - c * Mat3::Identity()) / (1.0 - c);
  int j = 0;
  outer.diagonal().maxCoeff(&j);
  Vec3 axis = outer.col(j) / std::sqrt(outer(j, j));
  axis.normalize();
  if (s > 1e-12 && v.dot(axis) < 0.0) {
    axis = -axis;
  }
  AxisAngle out(axis * theta);
  if (s <= 1e-12) out = fix_pi_sign(out);
  return out;
}

double geodesic_distance(const Mat3& a, const Mat3& b) {
  const double t = ((a * b.transpose()).trace() - 1.0) * 0.5;
  return std::acos(std::clamp(t, -1.0 + kAcosClamp, 1.0 - kAcosClamp));
}

AxisAngle quat_to_axis_angle(const Quaternion& q) {
  Vec4 qv(q.w, q.x, q.y, q.z);
  const double n = qv.norm();
  if (n < 1e-12) {
    throw std::invalid_argument("quat_to_axis_angle: zero quaternion");
  }
  qv /= n;
  if (qv[0] < 0.0) qv = -qv;
  const Vec3 vec = qv.tail<3>();
  const double vn = vec.norm();
  if (vn < 1e-8) return AxisAngle();
  const double w = std::clamp(qv[0], -1.0 + kAcosClamp, 1.0 - kAcosClamp);
  return AxisAngle(vec * (2.0 * std::acos(w) / vn));
}

AxisAngle canonicalize(const AxisAngle& aa) {
  double theta = aa.r.norm();
  if (theta == 0.0) return AxisAngle();
  Vec3 axis = aa.r / theta;
  theta = std::fmod(theta, 2.0 * kPi);
  if (theta > kPi) {
    theta = 2.0 * kPi - theta;
    axis = -axis;
  }
  AxisAngle out(axis * theta);
  if (std::abs(theta - kPi) < 1e-12) out = fix_pi_sign(out);
  return out;
}

AxisAngle random_rotation(std::mt19937_64& gen) {
  Quaternion q;
  double n2 = 0.0;
  do {
    q.w = normal(gen);
    q.x = normal(gen);
    q.y = normal(gen);
    q.z = normal(gen);
    n2 = q.w * q.w + q.x * q.x + q.y * q.y + q.z * q.z;
  } while (n2 < 1e-12);
  return quat_to_axis_angle(q);
}

}  // namespace pointpose
