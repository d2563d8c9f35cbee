#include "pointpose/camera.hpp"

#include <stdexcept>
#include <string>

namespace pointpose {

PointCloud backproject(const DepthFrame& frame, std::uint16_t class_id) {
  const CameraIntrinsics& cam = frame.intrinsics;
  if (frame.depth.rows() != cam.height || frame.depth.cols() != cam.width ||
      frame.mask.rows() != cam.height || frame.mask.cols() != cam.width) {
    throw std::invalid_argument("backproject: frame buffers do not match intrinsics");
  }

  PointCloud cloud;
  bool class_seen = false;
  for (int v = 0; v < cam.height; ++v) {
    for (int u = 0; u < cam.width; ++u) {
      if (frame.mask(v, u) != class_id) continue;
      class_seen = true;
      const double z = frame.depth(v, u);
      if (z <= 0.0) continue;
      cloud.points.emplace_back((u - cam.cx) * z / cam.fx,
                                (v - cam.cy) * z / cam.fy, z);
    }
  }
  if (!class_seen) {
    throw std::invalid_argument("backproject: class " + std::to_string(class_id) +
                                " not present in mask");
  }
  if (cloud.empty()) {
    throw std::invalid_argument("backproject: class " + std::to_string(class_id) +
                                " has no valid depth");
  }
  return cloud;
}

}  // namespace pointpose
