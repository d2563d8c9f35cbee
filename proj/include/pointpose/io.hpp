#pragma once

#include <filesystem>
#include <json.hpp>
#include <optional>

#include "pointpose/autodiff.hpp"
#include "pointpose/net.hpp"
#include "pointpose/sampling.hpp"
#include "pointpose/synth.hpp"

namespace pointpose {

/// ASCII PLY, xyz float properties only. The loader validates the header
/// line by line and reports the offending line on mismatch.
void save_ply(const std::filesystem::path& path, const PointCloud& cloud);
PointCloud load_ply(const std::filesystem::path& path);

/// Binary checkpoint holding every named parameter, the BN running
/// statistics, the net config, and optionally the optimizer state. Tensors
/// are stored as float32 by name; loading restores by name with shape checks
/// and rejects corrupt or truncated files.
void save_checkpoint(const std::filesystem::path& path,
                     const PoseNetParams& params,
                     const ad::AdamState* adam = nullptr);

struct Checkpoint {
  PoseNetParams params;
  std::optional<ad::AdamState> adam;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Dataset directory: manifest.json plus one little-endian binary record per
/// sample (coordinates, class, ground-truth pose, occlusion).
void save_dataset(const std::filesystem::path& dir, const Dataset& ds);
Dataset load_dataset(const std::filesystem::path& dir);

nlohmann::json net_config_to_json(const NetConfig& cfg);
NetConfig net_config_from_json(const nlohmann::json& j);

nlohmann::json class_spec_to_json(const ClassSpec& spec);
ClassSpec class_spec_from_json(const nlohmann::json& j);

nlohmann::json manifest_to_json(const DatasetManifest& m);
DatasetManifest manifest_from_json(const nlohmann::json& j);

}  // namespace pointpose
