#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "pointpose/camera.hpp"
#include "pointpose/model.hpp"
#include "pointpose/net.hpp"
#include "pointpose/pose.hpp"
#include "pointpose/sampling.hpp"

namespace pointpose {

enum class PrimitiveKind { Box, Cylinder, AsymmetricBlob };

/// Uniform surface point cloud of a primitive.
/// dims: box = full edge lengths; cylinder = (radius, height, ignored);
/// blob = ellipsoid semi-axes before the random bump warp.
ObjectModel generate_primitive_model(PrimitiveKind kind, const Vec3& dims,
                                     std::size_t m, std::size_t class_id,
                                     std::mt19937_64& gen);

/// Self-occluded view of the posed model: every point projects to its pixel,
/// the nearest-depth point per pixel survives (z ties keep the lowest point
/// index), points outside the frame are dropped. Survivors come back sorted
/// by model point index, then Gaussian noise (sigma per coordinate) is added.
/// Throws std::invalid_argument if any posed point has z <= 0.
PointCloud render_partial_view(const ObjectModel& model, const Pose& pose,
                               const CameraIntrinsics& cam, double noise_sigma,
                               std::mt19937_64& gen);

/// Recipe for one object class; the seed pins the generated surface.
struct ClassSpec {
  std::string name;
  PrimitiveKind kind = PrimitiveKind::AsymmetricBlob;
  Vec3 dims = Vec3(0.04, 0.05, 0.06);
  std::size_t model_points = 4096;
  std::uint64_t model_seed = 1;
};

ObjectModel build_model(const ClassSpec& spec, std::size_t class_id);

/// Four desk-scale blob classes with distinct proportions. Blobs carry no
/// rotational symmetry, so a single-pose regression target is well defined.
std::vector<ClassSpec> default_classes();

struct PoseRanges {
  double x_min = -0.15, x_max = 0.15;
  double y_min = -0.10, y_max = 0.10;
  double z_min = 0.5, z_max = 1.5;
};

/// Everything needed to regenerate a dataset bit for bit.
struct DatasetManifest {
  std::vector<ClassSpec> classes;
  CameraIntrinsics intrinsics;
  PoseRanges pose_ranges;
  std::size_t n_samples = 0;
  std::size_t n_points = 256;
  double noise_sigma = 0.0;
  std::uint64_t seed = 0;
};

struct Sample {
  PointSegment segment;
  Pose gt;
  double occlusion = 0.0;  // 1 - visible pixels / full projection pixels
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

/// Draws class, rotation (uniform over SO(3)) and translation per sample,
/// renders the view and resamples it to n_points. Sample i is generated from
/// its own engine seeded seed + i, so prefixes agree across dataset sizes.
/// Views with fewer than 3 surviving points are redrawn from the same engine.
Dataset make_dataset(const std::vector<ClassSpec>& classes,
                     std::size_t n_samples, const PoseRanges& ranges,
                     const CameraIntrinsics& cam, double noise_sigma,
                     std::size_t n_points, std::uint64_t seed);

Dataset make_dataset(const DatasetManifest& recipe);

}  // namespace pointpose
