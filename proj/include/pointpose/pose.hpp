#pragma once

#include "pointpose/so3.hpp"

namespace pointpose {

/// Rigid transform x -> R x + t with the rotation kept in axis-angle form.
struct Pose {
  AxisAngle rotation;
  Vec3 translation = Vec3::Zero();
};

/// Expanded form for hot loops; applying a Pose directly would re-run the
/// exponential map per point.
struct RigidTransform {
  Mat3 R = Mat3::Identity();
  Vec3 t = Vec3::Zero();

  Vec3 operator()(const Vec3& p) const { return R * p + t; }
};

inline RigidTransform to_transform(const Pose& p) {
  return {exp_map(p.rotation), p.translation};
}

/// Canonicalizes the rotation via log_map (and validates R on the way).
inline Pose to_pose(const RigidTransform& T) { return {log_map(T.R), T.t}; }

inline RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  return {a.R * b.R, a.R * b.t + a.t};
}

inline Pose compose(const Pose& a, const Pose& b) {
  return to_pose(compose(to_transform(a), to_transform(b)));
}

inline RigidTransform inverse(const RigidTransform& T) {
  return {T.R.transpose(), -(T.R.transpose() * T.t)};
}

inline Pose inverse(const Pose& p) { return to_pose(inverse(to_transform(p))); }

}  // namespace pointpose
