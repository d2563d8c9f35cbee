#include "pointpose/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include "pointpose/metrics.hpp"
#include "pointpose/rng.hpp"

namespace pointpose {

namespace {

Vec3 unit_direction(std::mt19937_64& gen) {
  Vec3 d;
  do {
    d = Vec3(normal(gen), normal(gen), normal(gen));
  } while (d.norm() < 1e-12);
  return d.normalized();
}

std::vector<Vec3> box_surface(const Vec3& dims, std::size_t m,
                              std::mt19937_64& gen) {
  const Vec3 h = dims / 2.0;
  // Face order: +x, -x, +y, -y, +z, -z; picked by surface area.
  const double ax = dims.y() * dims.z();
  const double ay = dims.x() * dims.z();
  const double az = dims.x() * dims.y();
  const std::array<double, 6> areas = {ax, ax, ay, ay, az, az};
  std::array<double, 6> cum{};
  double total = 0.0;
  for (int f = 0; f < 6; ++f) {
    total += areas[f];
    cum[f] = total;
  }
  std::vector<Vec3> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = uniform_unit(gen) * total;
    const int f = static_cast<int>(
        std::lower_bound(cum.begin(), cum.end(), u) - cum.begin());
    const double a = uniform_unit(gen);
    const double b = uniform_unit(gen);
    switch (std::min(f, 5)) {
      case 0:
        pts.emplace_back(h.x(), (a - 0.5) * dims.y(), (b - 0.5) * dims.z());
        break;
      case 1:
        pts.emplace_back(-h.x(), (a - 0.5) * dims.y(), (b - 0.5) * dims.z());
        break;
      case 2:
        pts.emplace_back((a - 0.5) * dims.x(), h.y(), (b - 0.5) * dims.z());
        break;
      case 3:
        pts.emplace_back((a - 0.5) * dims.x(), -h.y(), (b - 0.5) * dims.z());
        break;
      case 4:
        pts.emplace_back((a - 0.5) * dims.x(), (b - 0.5) * dims.y(), h.z());
        break;
      default:
        pts.emplace_back((a - 0.5) * dims.x(), (b - 0.5) * dims.y(), -h.z());
        break;
    }
  }
  return pts;
}

std::vector<Vec3> cylinder_surface(double radius, double height, std::size_t m,
                                   std::mt19937_64& gen) {
  const double side = 2.0 * M_PI * radius * height;
  const double cap = M_PI * radius * radius;
  const double total = side + 2.0 * cap;
  std::vector<Vec3> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const double u = uniform_unit(gen) * total;
    if (u < side) {
      const double phi = 2.0 * M_PI * uniform_unit(gen);
      const double z = (uniform_unit(gen) - 0.5) * height;
      pts.emplace_back(radius * std::cos(phi), radius * std::sin(phi), z);
    } else {
      const double rho = radius * std::sqrt(uniform_unit(gen));
      const double phi = 2.0 * M_PI * uniform_unit(gen);
      const double z = u < side + cap ? height / 2.0 : -height / 2.0;
      pts.emplace_back(rho * std::cos(phi), rho * std::sin(phi), z);
    }
  }
  return pts;
}

// Ellipsoid warped by a few radial Gaussian bumps. Distinct semi-axes kill
// the continuous symmetries; the bumps are strong enough that even the
// ellipsoid's pi flips move the surface well clear of the sampling noise.
std::vector<Vec3> blob_surface(const Vec3& semi_axes, std::size_t m,
                               std::mt19937_64& gen) {
  constexpr int kBumps = 4;
  std::array<Vec3, kBumps> centers;
  std::array<double, kBumps> amp;
  std::array<double, kBumps> width;
  for (int j = 0; j < kBumps; ++j) {
    centers[j] = unit_direction(gen);
    amp[j] = uniform_in(gen, 0.35, 0.6);
    width[j] = uniform_in(gen, 0.5, 0.9);
  }
  std::vector<Vec3> pts;
  pts.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const Vec3 d = unit_direction(gen);
    double s = 1.0;
    for (int j = 0; j < kBumps; ++j) {
      const double dist2 = (d - centers[j]).squaredNorm();
      s += amp[j] * std::exp(-dist2 / (width[j] * width[j]));
    }
    pts.emplace_back(semi_axes.x() * d.x() * s, semi_axes.y() * d.y() * s,
                     semi_axes.z() * d.z() * s);
  }
  return pts;
}

}  // namespace

ObjectModel generate_primitive_model(PrimitiveKind kind, const Vec3& dims,
                                     std::size_t m, std::size_t class_id,
                                     std::mt19937_64& gen) {
  if (m == 0) throw std::invalid_argument("model needs at least one point");
  if (!(dims.x() > 0.0) || !(dims.y() > 0.0) ||
      (kind != PrimitiveKind::Cylinder && !(dims.z() > 0.0)))
    throw std::invalid_argument("primitive dimensions must be positive");
  std::vector<Vec3> pts;
  switch (kind) {
    case PrimitiveKind::Box:
      pts = box_surface(dims, m, gen);
      break;
    case PrimitiveKind::Cylinder:
      pts = cylinder_surface(dims.x(), dims.y(), m, gen);
      break;
    case PrimitiveKind::AsymmetricBlob:
      pts = blob_surface(dims, m, gen);
      break;
  }
  return make_model(std::move(pts), class_id);
}

ObjectModel build_model(const ClassSpec& spec, std::size_t class_id) {
  std::mt19937_64 gen(spec.model_seed);
  return generate_primitive_model(spec.kind, spec.dims, spec.model_points,
                                  class_id, gen);
}

std::vector<ClassSpec> default_classes() {
  return {
      {"blob_a", PrimitiveKind::AsymmetricBlob, Vec3(0.030, 0.050, 0.070), 4096, 101},
      {"blob_b", PrimitiveKind::AsymmetricBlob, Vec3(0.060, 0.045, 0.030), 4096, 102},
      {"blob_c", PrimitiveKind::AsymmetricBlob, Vec3(0.050, 0.035, 0.065), 4096, 103},
      {"blob_d", PrimitiveKind::AsymmetricBlob, Vec3(0.040, 0.065, 0.045), 4096, 104},
  };
}

PointCloud render_partial_view(const ObjectModel& model, const Pose& pose,
                               const CameraIntrinsics& cam, double noise_sigma,
                               std::mt19937_64& gen) {
  if (model.points.empty()) throw std::invalid_argument("empty model");
  if (noise_sigma < 0.0) throw std::invalid_argument("negative noise sigma");
  const RigidTransform T = to_transform(pose);
  std::vector<Vec3> posed(model.points.size());
  // pixel key -> (depth, point index); nearer depth wins, ties keep the
  // earlier index via strict <.
  std::unordered_map<std::int64_t, std::pair<double, std::size_t>> zbuf;
  for (std::size_t i = 0; i < model.points.size(); ++i) {
    const Vec3 q = T(model.points[i]);
    if (!(q.z() > 0.0))
      throw std::invalid_argument("posed model point behind the camera");
    posed[i] = q;
    const Pixel px = project_to_pixel(cam, q);
    if (!in_frame(cam, px)) continue;
    const std::int64_t key =
        static_cast<std::int64_t>(px.v) * cam.width + px.u;
    auto [it, inserted] = zbuf.try_emplace(key, q.z(), i);
    if (!inserted && q.z() < it->second.first) it->second = {q.z(), i};
  }
  std::vector<std::size_t> winners;
  winners.reserve(zbuf.size());
  for (const auto& [key, hit] : zbuf) winners.push_back(hit.second);
  // Hash iteration order is not a contract; point index order is.
  std::sort(winners.begin(), winners.end());
  PointCloud out;
  out.points.reserve(winners.size());
  for (const std::size_t i : winners) {
    Vec3 p = posed[i];
    if (noise_sigma > 0.0)
      p += noise_sigma * Vec3(normal(gen), normal(gen), normal(gen));
    out.points.push_back(p);
  }
  return out;
}

Dataset make_dataset(const std::vector<ClassSpec>& classes,
                     std::size_t n_samples, const PoseRanges& ranges,
                     const CameraIntrinsics& cam, double noise_sigma,
                     std::size_t n_points, std::uint64_t seed) {
  DatasetManifest m;
  m.classes = classes;
  m.intrinsics = cam;
  m.pose_ranges = ranges;
  m.n_samples = n_samples;
  m.n_points = n_points;
  m.noise_sigma = noise_sigma;
  m.seed = seed;
  return make_dataset(m);
}

Dataset make_dataset(const DatasetManifest& recipe) {
  if (recipe.classes.empty()) throw std::invalid_argument("no classes");
  if (recipe.n_points == 0) throw std::invalid_argument("n_points is zero");
  if (recipe.noise_sigma < 0.0)
    throw std::invalid_argument("negative noise sigma");
  const PoseRanges& rg = recipe.pose_ranges;
  if (rg.x_min > rg.x_max || rg.y_min > rg.y_max || rg.z_min > rg.z_max ||
      rg.z_min <= 0.0)
    throw std::invalid_argument("bad pose ranges");

  std::vector<ObjectModel> models;
  models.reserve(recipe.classes.size());
  for (std::size_t k = 0; k < recipe.classes.size(); ++k)
    models.push_back(build_model(recipe.classes[k], k));

  Dataset ds;
  ds.manifest = recipe;
  ds.samples.reserve(recipe.n_samples);
  constexpr int kMaxAttempts = 100;
  for (std::size_t i = 0; i < recipe.n_samples; ++i) {
    std::mt19937_64 gen(recipe.seed + i);
    bool made = false;
    for (int attempt = 0; attempt < kMaxAttempts && !made; ++attempt) {
      const std::size_t k = uniform_below(gen, recipe.classes.size());
      Pose gt;
      gt.rotation = random_rotation(gen);
      gt.translation = Vec3(uniform_in(gen, rg.x_min, rg.x_max),
                            uniform_in(gen, rg.y_min, rg.y_max),
                            uniform_in(gen, rg.z_min, rg.z_max));
      PointCloud view;
      try {
        view = render_partial_view(models[k], gt, recipe.intrinsics,
                                   recipe.noise_sigma, gen);
      } catch (const std::invalid_argument&) {
        continue;  // pose dipped behind the camera, redraw
      }
      if (view.size() < 3) continue;

      // Visible pixels == surviving view points; the denominator counts the
      // full projection with frame clipping ignored, so occlusion folds both
      // self-occlusion and out-of-frame loss into one number.
      const RigidTransform T = to_transform(gt);
      std::unordered_set<std::int64_t> full;
      for (const Vec3& p : models[k].points) {
        const Pixel px = project_to_pixel(recipe.intrinsics, T(p));
        full.insert(static_cast<std::int64_t>(px.v) * 1000000 + px.u);
      }
      const double occ = occlusion_factor(view.size(), full.size());

      const PointCloud seg = resample_to_n(view, recipe.n_points, gen);
      Eigen::Matrix<double, Eigen::Dynamic, 3> coords(
          static_cast<Eigen::Index>(seg.size()), 3);
      for (std::size_t j = 0; j < seg.size(); ++j)
        coords.row(static_cast<Eigen::Index>(j)) = seg.points[j].transpose();
      Sample s;
      s.segment = make_segment(std::move(coords), k, recipe.classes.size());
      s.gt = gt;
      s.occlusion = occ;
      ds.samples.push_back(std::move(s));
      made = true;
    }
    if (!made)
      throw std::runtime_error("sample " + std::to_string(i) +
                               ": no visible view after " +
                               std::to_string(kMaxAttempts) + " draws");
  }
  return ds;
}

}  // namespace pointpose
