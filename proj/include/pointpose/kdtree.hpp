#pragma once

#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "pointpose/so3.hpp"

namespace pointpose {

/// Static kd-tree over 3D points for exact nearest-neighbor queries.
/// Results match a brute-force scan, including the tie rule: equal distances
/// resolve to the lowest original index.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::span<const Vec3> points);

  struct Hit {
    std::size_t index;  // into the construction order
    double distance;
  };

  /// Closest point with distance <= radius, if any.
  std::optional<Hit> nearest(
      const Vec3& query,
      double radius = std::numeric_limits<double>::infinity()) const;

  std::size_t size() const { return points_.size(); }

 private:
  struct TreeNode {
    int axis = -1;       // -1 marks a leaf
    double split = 0.0;  // coordinate of the first right-side point
    std::size_t begin = 0, end = 0;
    int left = -1, right = -1;
  };

  int build(std::size_t begin, std::size_t end);
  void search(int node, const Vec3& query, double& best_d2,
              std::size_t& best_idx) const;

  std::vector<Vec3> points_;
  std::vector<std::size_t> order_;  // permutation of original indices
  std::vector<TreeNode> nodes_;
  int root_ = -1;
};

}  // namespace pointpose
