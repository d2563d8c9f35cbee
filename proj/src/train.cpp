#include "pointpose/train.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "pointpose/rng.hpp"
#include "pointpose/so3.hpp"

namespace pointpose {

EpochMetrics train_epoch(std::span<const Sample> samples, PoseNetParams& params,
                         ad::AdamState& adam, const TrainOptions& opt,
                         std::mt19937_64& gen) {
  if (samples.empty()) throw std::invalid_argument("no training samples");
  if (opt.batch_size == 0) throw std::invalid_argument("batch size is zero");

  params.set_mode(ad::BnMode::Train);
  std::vector<ad::Tensor> plist = params.parameters();
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order, gen);

  const bool quat = params.cfg.rotation_repr == RotationRepr::Quaternion;
  const bool geodesic = params.cfg.rotation_loss == RotationLoss::Geodesic;

  double loss_sum = 0.0;
  double rot_err_sum = 0.0;
  double trans_err_sum = 0.0;

  std::vector<PointSegment> batch;
  std::vector<const Sample*> refs;
  for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
    const std::size_t stop = std::min(order.size(), start + opt.batch_size);
    const auto bsz = static_cast<Eigen::Index>(stop - start);
    batch.clear();
    refs.clear();
    for (std::size_t j = start; j < stop; ++j) {
      batch.push_back(samples[order[j]].segment);
      refs.push_back(&samples[order[j]]);
    }

    const ad::Tensor rot_in = make_rotation_input(batch, params.cfg);
    std::vector<Vec3> centroids;
    const ad::Tensor trans_in =
        make_translation_input(batch, params.cfg, centroids);
    const ad::Tensor rot_out = basenet_forward(rot_in, params.rot);
    const ad::Tensor trans_out = basenet_forward(trans_in, params.trans);

    // The translation head regresses the residual left after centering.
    Eigen::Matrix<double, Eigen::Dynamic, 3> t_target(bsz, 3);
    for (Eigen::Index i = 0; i < bsz; ++i)
      t_target.row(i) =
          (refs[static_cast<std::size_t>(i)]->gt.translation - centroids[static_cast<std::size_t>(i)])
              .transpose();

    const ad::Tensor aa_rows =
        quat ? quat_rows_to_axis_angle(rot_out) : rot_out;
    ad::Tensor rot_rows;
    if (geodesic) {
      std::vector<Mat3> targets;
      targets.reserve(refs.size());
      for (const Sample* s : refs) targets.push_back(exp_map(s->gt.rotation));
      rot_rows = rotation_loss_geodesic_rows(aa_rows, targets);
    } else {
      Eigen::Matrix<double, Eigen::Dynamic, 3> r_target(bsz, 3);
      for (Eigen::Index i = 0; i < bsz; ++i)
        r_target.row(i) =
            canonicalize(refs[static_cast<std::size_t>(i)]->gt.rotation)
                .r.transpose();
      rot_rows = rotation_loss_l2_rows(aa_rows, r_target);
    }
    const ad::Tensor t_rows = translation_loss_rows(trans_out, t_target);
    const ad::Tensor loss = total_loss(t_rows, rot_rows, params.cfg.alpha);

    for (ad::Tensor& p : plist) p.zero_grad();
    ad::backward(loss);
    ad::adam_step(plist, adam);

    loss_sum += loss.value() * static_cast<double>(bsz);
    const std::span<const double> aad = aa_rows.data();
    const std::span<const double> td = trans_out.data();
    for (Eigen::Index i = 0; i < bsz; ++i) {
      const Sample& s = *refs[static_cast<std::size_t>(i)];
      const Mat3 pred_r =
          exp_map(AxisAngle(aad[3 * i], aad[3 * i + 1], aad[3 * i + 2]));
      rot_err_sum += geodesic_distance(pred_r, exp_map(s.gt.rotation));
      const Vec3 pred_t = centroids[static_cast<std::size_t>(i)] +
                          Vec3(td[3 * i], td[3 * i + 1], td[3 * i + 2]);
      trans_err_sum += (pred_t - s.gt.translation).norm();
    }
  }

  const auto n = static_cast<double>(samples.size());
  return EpochMetrics{loss_sum / n, rot_err_sum / n, trans_err_sum / n};
}

}  // namespace pointpose
