#include "pointpose/sampling.hpp"

#include <limits>
#include <stdexcept>

#include "pointpose/rng.hpp"

namespace pointpose {

std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points,
                                               std::size_t k,
                                               std::size_t seed_index) {
  const std::size_t n = points.size();
  if (k > n) throw std::invalid_argument("farthest_point_sample: k exceeds point count");
  if (k == 0) return {};
  if (seed_index >= n) {
    throw std::invalid_argument("farthest_point_sample: seed index out of range");
  }

  std::vector<std::size_t> selected;
  selected.reserve(k);
  selected.push_back(seed_index);

  // min_d2[i] tracks the squared distance to the selected set so far.
  std::vector<double> min_d2(n);
  for (std::size_t i = 0; i < n; ++i) {
    min_d2[i] = (points[i] - points[seed_index]).squaredNorm();
  }

  while (selected.size() < k) {
    std::size_t best = 0;
    double best_d2 = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_d2[i] > best_d2) {  // strict: ties keep the lowest index
        best_d2 = min_d2[i];
        best = i;
      }
    }
    selected.push_back(best);
    for (std::size_t i = 0; i < n; ++i) {
      const double d2 = (points[i] - points[best]).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
    }
  }
  return selected;
}

PointCloud resample_to_n(const PointCloud& cloud, std::size_t n,
                         std::mt19937_64& gen) {
  if (cloud.empty() && n > 0) {
    throw std::invalid_argument("resample_to_n: empty cloud");
  }
  PointCloud out;
  out.points.reserve(n);
  if (cloud.size() >= n) {
    for (std::size_t idx : farthest_point_sample(cloud.points, n)) {
      out.points.push_back(cloud.points[idx]);
    }
  } else {
    out.points = cloud.points;
    while (out.points.size() < n) {
      out.points.push_back(cloud.points[uniform_below(gen, cloud.size())]);
    }
  }
  return out;
}

}  // namespace pointpose
