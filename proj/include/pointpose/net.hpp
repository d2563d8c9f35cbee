#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "pointpose/autodiff.hpp"
#include "pointpose/pose.hpp"

namespace pointpose {

enum class RotationRepr { AxisAngle, Quaternion };
enum class RotationLoss { Geodesic, L2 };

struct NetConfig {
  // Per-point MLP widths; the default triple stands for the canonical
  // five-layer stack [64, 64, 64, 128, 1024] when layer sharing is on.
  std::vector<std::size_t> point_mlp_widths = {64, 128, 1024};
  std::vector<std::size_t> head_widths = {512, 256};
  RotationRepr rotation_repr = RotationRepr::AxisAngle;
  RotationLoss rotation_loss = RotationLoss::Geodesic;

  /// Leading point layers aliased between the two nets; kSharedAll shares
  /// the whole trunk and heads, leaving only the output layers separate.
  int shared_layers = 0;
  static constexpr int kSharedAll = -1;

  std::size_t n_points = 256;
  std::size_t n_classes = 1;
  double alpha = 10.0;  // translation loss weight in the combined loss
  double width_multiplier = 1.0;

  std::size_t in_channels() const { return 3 + n_classes; }
  std::size_t rotation_out_dim() const {
    return rotation_repr == RotationRepr::Quaternion ? 4 : 3;
  }
  std::vector<std::size_t> effective_point_widths() const;
  std::vector<std::size_t> effective_head_widths() const;
  void validate() const;
};

/// One observed object segment: camera-frame coordinates plus the class
/// one-hot (exactly one entry set).
struct PointSegment {
  Eigen::Matrix<double, Eigen::Dynamic, 3> coords;
  Eigen::VectorXd class_onehot;
  std::size_t class_id = 0;
};

PointSegment make_segment(Eigen::Matrix<double, Eigen::Dynamic, 3> coords,
                          std::size_t class_id, std::size_t n_classes);

struct DenseLayer {
  ad::Tensor W;
  ad::Tensor b;
};

struct LayerBlock {
  DenseLayer lin;
  ad::Tensor gamma;
  ad::Tensor beta;
  std::shared_ptr<ad::BatchNormState> bn;
};

struct BaseNet {
  std::vector<LayerBlock> point_layers;
  std::vector<LayerBlock> head_layers;
  DenseLayer out;  // no normalization or activation after this one
};

/// The two regression networks. Shared blocks hold aliased tensors and a
/// shared BN state, so gradients and running statistics accumulate across
/// both forward passes.
struct PoseNetParams {
  NetConfig cfg;
  BaseNet rot;
  BaseNet trans;
  int shared_point_layers = 0;
  bool shared_heads = false;

  /// Trainable tensors, deduplicated, in a fixed traversal order.
  std::vector<ad::Tensor> parameters() const;
  /// Same order with stable names (shared.point0.W, rot.head1.b, ...).
  std::vector<std::pair<std::string, ad::Tensor>> named_parameters() const;
  std::vector<std::pair<std::string, std::shared_ptr<ad::BatchNormState>>>
  named_bn_states() const;
  void set_mode(ad::BnMode mode);
  std::size_t parameter_count() const;
};

/// He fan-in initialization, zero biases, unit gammas. The RNG draw order is
/// fixed (rotation stack first, then the unshared translation blocks), so one
/// seed pins every weight.
PoseNetParams init_params(const NetConfig& cfg, std::mt19937_64& gen);

/// Same as init_params; spelled out as the entry point for sharing ablations.
PoseNetParams build_shared_variant(const NetConfig& cfg, std::mt19937_64& gen);

/// Rotation input: raw coordinates, each point tagged with the class one-hot.
ad::Tensor make_rotation_input(std::span<const PointSegment> batch,
                               const NetConfig& cfg);

/// Translation input: coordinates centered on the segment centroid (returned
/// per segment); the predicted translation is centroid + residual.
ad::Tensor make_translation_input(std::span<const PointSegment> batch,
                                  const NetConfig& cfg,
                                  std::vector<Vec3>& centroids);

/// Point MLP -> max pool -> head MLP -> output layer on [B, n, channels].
ad::Tensor basenet_forward(const ad::Tensor& input, const BaseNet& net);

/// Eval-mode single-segment inference; rotation comes back canonical.
Pose predict_pose(const PointSegment& segment, PoseNetParams& params);

/// Per-row L2 distance between prediction and constant target: [B,3] -> [B].
ad::Tensor translation_loss_rows(const ad::Tensor& pred,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 3>& target);

/// Per-row geodesic distance between exp(pred) and the target rotation,
/// differentiable through the exponential map: [B,3] -> [B].
ad::Tensor rotation_loss_geodesic_rows(const ad::Tensor& pred,
                                       const std::vector<Mat3>& target);

/// Per-row L2 on axis-angle vectors (targets pre-canonicalized): [B,3] -> [B].
ad::Tensor rotation_loss_l2_rows(const ad::Tensor& pred,
                                 const Eigen::Matrix<double, Eigen::Dynamic, 3>& target);

/// Differentiable conversion for the quaternion head: [B,4] -> [B,3] with the
/// sign flip onto the w >= 0 hemisphere and the clamped arccos.
ad::Tensor quat_rows_to_axis_angle(const ad::Tensor& pred);

/// alpha * mean(translation rows) + mean(rotation rows) -> scalar.
ad::Tensor total_loss(const ad::Tensor& translation_rows,
                      const ad::Tensor& rotation_rows, double alpha);

/// Single-sample conveniences over the row kernels.
ad::Tensor translation_loss(const ad::Tensor& t_pred, const Vec3& t_target);
ad::Tensor rotation_loss(const ad::Tensor& r_pred, const AxisAngle& r_target,
                         RotationLoss kind);

}  // namespace pointpose
