#pragma once

#include <random>
#include <span>

#include "pointpose/net.hpp"
#include "pointpose/synth.hpp"

namespace pointpose {

struct TrainOptions {
  std::size_t batch_size = 128;
};

/// Mean combined loss plus pose errors measured on the training-mode forward
/// outputs, averaged over every sample of the epoch.
struct EpochMetrics {
  double mean_loss = 0.0;
  double mean_rotation_error_rad = 0.0;
  double mean_translation_error_m = 0.0;
};

/// One pass over the samples in a fresh shuffled order: batches of
/// batch_size (last one may be short), rotation and translation forward
/// passes, combined loss alpha * mean translation + mean rotation, one Adam
/// step per batch. Deterministic given the engine state.
EpochMetrics train_epoch(std::span<const Sample> samples, PoseNetParams& params,
                         ad::AdamState& adam, const TrainOptions& opt,
                         std::mt19937_64& gen);

}  // namespace pointpose
