#include "pointpose/metrics.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

#include "pointpose/kdtree.hpp"

namespace pointpose {

double average_distance(const ObjectModel& model, const Pose& gt, const Pose& est) {
  if (model.points.empty()) throw std::invalid_argument("average_distance: empty model");
  const RigidTransform G = to_transform(gt);
  const RigidTransform E = to_transform(est);
  double sum = 0.0;
  for (const Vec3& p : model.points) sum += (G(p) - E(p)).norm();
  return sum / static_cast<double>(model.points.size());
}

double average_distance_symmetric(const ObjectModel& model, const Pose& gt,
                                  const Pose& est) {
  if (model.points.empty()) {
    throw std::invalid_argument("average_distance_symmetric: empty model");
  }
  const RigidTransform G = to_transform(gt);
  const RigidTransform E = to_transform(est);
  std::vector<Vec3> est_pts;
  est_pts.reserve(model.points.size());
  for (const Vec3& p : model.points) est_pts.push_back(E(p));
  const KdTree3 tree(est_pts);

  double sum = 0.0;
  for (const Vec3& p : model.points) sum += tree.nearest(G(p))->distance;
  return sum / static_cast<double>(model.points.size());
}

double accuracy_at_threshold(std::span<const double> errors, double tau) {
  if (errors.empty()) throw std::invalid_argument("accuracy_at_threshold: no errors");
  std::size_t hits = 0;
  for (double e : errors) {
    if (e < tau) ++hits;  // strict: an error exactly at tau does not count
  }
  return static_cast<double>(hits) / static_cast<double>(errors.size());
}

double auc(std::span<const double> errors, double tau_max) {
  if (errors.empty()) throw std::invalid_argument("auc: no errors");
  if (tau_max <= 0.0) throw std::invalid_argument("auc: tau_max must be positive");
  double sum = 0.0;
  for (double e : errors) sum += std::max(0.0, tau_max - std::min(e, tau_max));
  return 100.0 * sum / (static_cast<double>(errors.size()) * tau_max);
}

double occlusion_factor(std::size_t visible_px, std::size_t full_px) {
  if (full_px == 0) throw std::invalid_argument("occlusion_factor: zero full projection");
  if (visible_px > full_px) {
    throw std::invalid_argument("occlusion_factor: visible exceeds full projection");
  }
  return 1.0 - static_cast<double>(visible_px) / static_cast<double>(full_px);
}

std::size_t project_visible_pixel_count(const ObjectModel& model, const Pose& pose,
                                        const CameraIntrinsics& cam) {
  if (model.points.empty()) {
    throw std::invalid_argument("project_visible_pixel_count: empty model");
  }
  const RigidTransform T = to_transform(pose);
  std::unordered_set<int> pixels;
  for (const Vec3& p : model.points) {
    const Vec3 q = T(p);
    if (q.z() <= 0.0) {
      throw std::invalid_argument("project_visible_pixel_count: point behind camera");
    }
    const Pixel px = project_to_pixel(cam, q);
    if (in_frame(cam, px)) pixels.insert(px.v * cam.width + px.u);
  }
  return pixels.size();
}

std::vector<OcclusionBin> occlusion_binned_report(
    std::span<const EvalRecord> records,
    const std::map<std::size_t, ObjectModel>& models, double tau) {
  std::vector<OcclusionBin> bins(8);
  std::vector<std::size_t> hits(8, 0);
  for (std::size_t b = 0; b < 8; ++b) {
    bins[b].lo = 0.1 * static_cast<double>(b);
    bins[b].hi = 0.1 * static_cast<double>(b + 1);
  }

  for (const EvalRecord& rec : records) {
    if (rec.occlusion >= 0.8) continue;
    const auto it = models.find(rec.class_id);
    if (it == models.end()) {
      throw std::invalid_argument("occlusion_binned_report: no model for class " +
                                  std::to_string(rec.class_id));
    }
    const std::size_t b =
        std::min<std::size_t>(7, static_cast<std::size_t>(rec.occlusion / 0.1));
    const double err = average_distance_symmetric(it->second, rec.gt, rec.est);
    ++bins[b].count;
    if (err < tau) ++hits[b];
  }

  for (std::size_t b = 0; b < 8; ++b) {
    if (bins[b].count > 0) {
      bins[b].ads_accuracy =
          static_cast<double>(hits[b]) / static_cast<double>(bins[b].count);
    }
  }
  return bins;
}

}  // namespace pointpose
