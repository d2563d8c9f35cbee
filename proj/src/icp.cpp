#include "pointpose/icp.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "pointpose/kdtree.hpp"

namespace pointpose {

Pose best_rigid_transform(std::span<const Vec3> src, std::span<const Vec3> dst) {
  if (src.size() != dst.size()) {
    throw std::invalid_argument("best_rigid_transform: size mismatch");
  }
  if (src.size() < 3) {
    throw std::invalid_argument("best_rigid_transform: need at least 3 pairs");
  }

  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= static_cast<double>(src.size());
  cd /= static_cast<double>(dst.size());

  Mat3 H = Mat3::Zero();
  for (std::size_t i = 0; i < src.size(); ++i) {
    H += (src[i] - cs) * (dst[i] - cd).transpose();
  }

  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3 sigma = svd.singularValues();
  // Rotation is only determined when the pair spread spans at least a plane.
  if (sigma(1) <= 1e-12 * std::max(sigma(0), 1e-300)) {
    throw std::runtime_error("best_rigid_transform: degenerate correspondences");
  }

  Mat3 D = Mat3::Identity();
  D(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0.0 ? -1.0 : 1.0;
  const Mat3 R = svd.matrixV() * D * svd.matrixU().transpose();
  return Pose{log_map(R), cd - R * cs};
}

IcpResult icp_refine(const ObjectModel& model, const PointCloud& observed,
                     const Pose& init, const IcpConfig& cfg) {
  if (cfg.max_iterations < 1 || cfg.initial_radius <= 0.0 ||
      cfg.radius_decay <= 0.0 || cfg.radius_decay > 1.0 ||
      cfg.min_correspondences < 3) {
    throw std::invalid_argument("icp_refine: invalid configuration");
  }

  IcpResult res;
  res.pose = init;

  std::vector<Vec3> mpts;
  if (model.points.size() > cfg.max_model_points) {
    mpts.reserve(cfg.max_model_points);
    for (std::size_t idx :
         farthest_point_sample(model.points, cfg.max_model_points)) {
      mpts.push_back(model.points[idx]);
    }
  } else {
    mpts = model.points;
  }
  if (mpts.size() < static_cast<std::size_t>(cfg.min_correspondences) ||
      observed.size() < static_cast<std::size_t>(cfg.min_correspondences)) {
    res.starved = true;
    return res;
  }

  const KdTree3 tree(observed.points);
  RigidTransform T = to_transform(init);
  std::vector<Vec3> cur(mpts.size());
  std::vector<Vec3> src, dst;

  for (int it = 0; it < cfg.max_iterations; ++it) {
    const double radius = cfg.initial_radius * std::pow(cfg.radius_decay, it);
    for (std::size_t i = 0; i < mpts.size(); ++i) cur[i] = T(mpts[i]);

    src.clear();
    dst.clear();
    double sq = 0.0;
    for (std::size_t i = 0; i < cur.size(); ++i) {
      if (const auto hit = tree.nearest(cur[i], radius)) {
        src.push_back(cur[i]);
        dst.push_back(observed.points[hit->index]);
        sq += hit->distance * hit->distance;
      }
    }
    if (src.size() < static_cast<std::size_t>(cfg.min_correspondences)) {
      res.starved = true;
      res.pose = init;
      return res;
    }
    res.residuals.push_back(std::sqrt(sq / static_cast<double>(src.size())));

    RigidTransform delta;
    try {
      delta = to_transform(best_rigid_transform(src, dst));
    } catch (const std::runtime_error&) {
      res.starved = true;
      res.pose = init;
      return res;
    }
    T = compose(delta, T);
    res.iterations = it + 1;

    double move2 = 0.0;
    for (const Vec3& p : cur) {
      move2 = std::max(move2, (delta(p) - p).squaredNorm());
    }
    if (std::sqrt(move2) < cfg.convergence_eps) break;
  }

  res.pose = to_pose(T);
  return res;
}

}  // namespace pointpose
