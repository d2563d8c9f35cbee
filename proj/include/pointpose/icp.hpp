#pragma once

#include <span>
#include <vector>

#include "pointpose/model.hpp"
#include "pointpose/pose.hpp"
#include "pointpose/sampling.hpp"

namespace pointpose {

struct IcpConfig {
  int max_iterations = 10;
  double initial_radius = 0.01;     // meters; shrinks each iteration
  double radius_decay = 0.9;
  int min_correspondences = 3;
  double convergence_eps = 1e-7;    // max point displacement per update
  std::size_t max_model_points = 1024;  // FPS cap before matching
};

struct IcpResult {
  Pose pose;
  std::vector<double> residuals;  // RMS correspondence distance per iteration
  int iterations = 0;
  bool starved = false;  // correspondences fell below the minimum
};

/// Least-squares rigid alignment (SVD with determinant correction, so the
/// result is always a proper rotation). Throws std::invalid_argument for
/// fewer than 3 pairs, std::runtime_error for rank-deficient configurations.
Pose best_rigid_transform(std::span<const Vec3> src, std::span<const Vec3> dst);

/// Point-to-point ICP from init, matching transformed model points to
/// observed points within a radius that decays every iteration. Starvation
/// (or a degenerate alignment step) abandons refinement: the initial pose
/// comes back with starved set. Deterministic for fixed inputs.
IcpResult icp_refine(const ObjectModel& model, const PointCloud& observed,
                     const Pose& init, const IcpConfig& cfg = {});

}  // namespace pointpose
