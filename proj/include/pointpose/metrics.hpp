#pragma once

#include <map>
#include <optional>
#include <span>
#include <vector>

#include "pointpose/camera.hpp"
#include "pointpose/model.hpp"
#include "pointpose/pose.hpp"

namespace pointpose {

/// Mean distance between corresponding model points under the two poses.
double average_distance(const ObjectModel& model, const Pose& gt, const Pose& est);

/// Symmetric variant: each ground-truth-posed point matches its closest
/// estimated-posed point, which tolerates object symmetries.
double average_distance_symmetric(const ObjectModel& model, const Pose& gt,
                                  const Pose& est);

/// Fraction of errors strictly below tau.
double accuracy_at_threshold(std::span<const double> errors, double tau);

/// Area under the accuracy-vs-threshold curve up to tau_max, scaled to
/// [0, 100]: 100 / (N * tau_max) * sum(max(0, tau_max - min(e, tau_max))).
double auc(std::span<const double> errors, double tau_max = 0.1);

/// 1 - visible/full; full_px of 0 or visible_px > full_px is rejected.
double occlusion_factor(std::size_t visible_px, std::size_t full_px);

/// Distinct integer pixels covered by the posed model inside the frame.
/// Any point behind the camera (z <= 0) is rejected.
std::size_t project_visible_pixel_count(const ObjectModel& model, const Pose& pose,
                                        const CameraIntrinsics& cam);

struct EvalRecord {
  std::size_t class_id = 0;
  Pose gt;
  Pose est;
  double occlusion = 0.0;
};

struct OcclusionBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  std::optional<double> ads_accuracy;  // nullopt when the bin is empty
};

/// Eight occlusion bins of width 0.1 covering [0, 0.8); records at 0.8 or
/// above are dropped. Accuracy uses the symmetric distance against tau.
/// A record whose class has no model throws std::invalid_argument.
std::vector<OcclusionBin> occlusion_binned_report(
    std::span<const EvalRecord> records,
    const std::map<std::size_t, ObjectModel>& models, double tau = 0.01);

}  // namespace pointpose
