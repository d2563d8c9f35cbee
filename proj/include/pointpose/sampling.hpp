#pragma once

#include <random>
#include <span>
#include <vector>

#include "pointpose/so3.hpp"

namespace pointpose {

struct PointCloud {
  std::vector<Vec3> points;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Greedy farthest point sampling, O(n*k), deterministic. The first pick is
/// seed_index; each next pick maximizes the distance to the selected set,
/// ties resolving to the lowest index. Returns indices into points.
/// Throws std::invalid_argument when k > n or seed_index is out of range.
std::vector<std::size_t> farthest_point_sample(std::span<const Vec3> points,
                                               std::size_t k,
                                               std::size_t seed_index = 0);

/// Exactly n points out of cloud: an FPS subset when the cloud has at least
/// n points, otherwise every point plus uniform-with-replacement duplicates.
PointCloud resample_to_n(const PointCloud& cloud, std::size_t n,
                         std::mt19937_64& gen);

}  // namespace pointpose
