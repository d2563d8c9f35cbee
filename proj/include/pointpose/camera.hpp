#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>

#include "pointpose/sampling.hpp"

namespace pointpose {

struct CameraIntrinsics {
  double fx = 500.0;
  double fy = 500.0;
  double cx = 320.0;
  double cy = 240.0;
  int width = 640;
  int height = 480;
};

/// Depth image plus a per-pixel class mask (0 = background).
struct DepthFrame {
  Eigen::MatrixXd depth;  // height x width, meters, 0 marks invalid
  Eigen::Matrix<std::uint16_t, Eigen::Dynamic, Eigen::Dynamic> mask;
  CameraIntrinsics intrinsics;
};

struct Pixel {
  int u = 0;  // column
  int v = 0;  // row
};

/// Integer pixel under the pinhole model; requires p.z() > 0.
inline Pixel project_to_pixel(const CameraIntrinsics& cam, const Vec3& p) {
  return {static_cast<int>(std::lround(cam.fx * p.x() / p.z() + cam.cx)),
          static_cast<int>(std::lround(cam.fy * p.y() / p.z() + cam.cy))};
}

inline bool in_frame(const CameraIntrinsics& cam, const Pixel& px) {
  return px.u >= 0 && px.u < cam.width && px.v >= 0 && px.v < cam.height;
}

/// Camera-frame points for every valid masked pixel of one class, in
/// row-major scan order. Throws std::invalid_argument when the class is
/// absent from the mask or every masked pixel has invalid depth.
PointCloud backproject(const DepthFrame& frame, std::uint16_t class_id);

}  // namespace pointpose
