#include "pointpose/model.hpp"

#include <cmath>

namespace pointpose {

double compute_diameter(std::span<const Vec3> points) {
  double best = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      best = std::max(best, (points[i] - points[j]).squaredNorm());
    }
  }
  return std::sqrt(best);
}

ObjectModel make_model(std::vector<Vec3> points, std::size_t class_id) {
  ObjectModel m;
  m.points = std::move(points);
  m.class_id = class_id;
  m.diameter = compute_diameter(m.points);
  return m;
}

}  // namespace pointpose
