#pragma once

#include <span>
#include <vector>

#include "pointpose/so3.hpp"

namespace pointpose {

/// Object surface points in the model frame plus the metric scale used by
/// distance thresholds.
struct ObjectModel {
  std::vector<Vec3> points;
  std::size_t class_id = 0;
  double diameter = 0.0;  // max pairwise distance
};

/// Exact O(m^2) max pairwise distance.
double compute_diameter(std::span<const Vec3> points);

ObjectModel make_model(std::vector<Vec3> points, std::size_t class_id);

}  // namespace pointpose
