#include "pointpose/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace pointpose {

namespace {
constexpr std::size_t kLeafSize = 8;
}

KdTree3::KdTree3(std::span<const Vec3> points)
    : points_(points.begin(), points.end()) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), std::size_t{0});
  if (!points_.empty()) {
    nodes_.reserve(2 * points_.size() / kLeafSize + 2);
    root_ = build(0, points_.size());
  }
}

int KdTree3::build(std::size_t begin, std::size_t end) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  nodes_[id].begin = begin;
  nodes_[id].end = end;
  if (end - begin <= kLeafSize) return id;

  Vec3 lo = points_[order_[begin]];
  Vec3 hi = lo;
  for (std::size_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  const std::size_t mid = begin + (end - begin) / 2;
  // Deterministic layout: ties on the coordinate order by original index.
  std::nth_element(order_.begin() + begin, order_.begin() + mid,
                   order_.begin() + end, [&](std::size_t a, std::size_t b) {
                     const double ca = points_[a][axis], cb = points_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });

  nodes_[id].axis = axis;
  nodes_[id].split = points_[order_[mid]][axis];
  const int left = build(begin, mid);
  const int right = build(mid, end);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

void KdTree3::search(int node, const Vec3& query, double& best_d2,
                     std::size_t& best_idx) const {
  const TreeNode& n = nodes_[node];
  if (n.axis < 0) {
    for (std::size_t i = n.begin; i < n.end; ++i) {
      const std::size_t idx = order_[i];
      const double d2 = (points_[idx] - query).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best_idx)) {
        best_d2 = d2;
        best_idx = idx;
      }
    }
    return;
  }
  const double diff = query[n.axis] - n.split;
  const int near = diff < 0.0 ? n.left : n.right;
  const int far = diff < 0.0 ? n.right : n.left;
  search(near, query, best_d2, best_idx);
  // <= so equal-distance candidates across the plane still get compared.
  if (diff * diff <= best_d2) search(far, query, best_d2, best_idx);
}

std::optional<KdTree3::Hit> KdTree3::nearest(const Vec3& query,
                                             double radius) const {
  if (points_.empty()) return std::nullopt;
  // Starting at radius^2 with a sentinel index makes the boundary inclusive.
  double best_d2 = std::isinf(radius)
                       ? std::numeric_limits<double>::infinity()
                       : radius * radius;
  std::size_t best_idx = std::numeric_limits<std::size_t>::max();
  search(root_, query, best_d2, best_idx);
  if (best_idx == std::numeric_limits<std::size_t>::max()) return std::nullopt;
  return Hit{best_idx, std::sqrt(best_d2)};
}

}  // namespace pointpose
