#include "pointpose/net.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "pointpose/rng.hpp"
#include "pointpose/so3.hpp"

namespace pointpose {

namespace {

constexpr double kAcosClamp = 1e-7;  // matches geodesic_distance

std::size_t scaled(std::size_t w, double m) {
  const auto s = static_cast<std::size_t>(std::llround(static_cast<double>(w) * m));
  return std::max<std::size_t>(1, s);
}

}  // namespace

std::vector<std::size_t> NetConfig::effective_point_widths() const {
  static const std::vector<std::size_t> kCondensed = {64, 128, 1024};
  std::vector<std::size_t> w = point_mlp_widths;
  if (shared_layers > 0 && w == kCondensed) w = {64, 64, 64, 128, 1024};
  for (auto& x : w) x = scaled(x, width_multiplier);
  return w;
}

std::vector<std::size_t> NetConfig::effective_head_widths() const {
  std::vector<std::size_t> w = head_widths;
  for (auto& x : w) x = scaled(x, width_multiplier);
  return w;
}

void NetConfig::validate() const {
  if (point_mlp_widths.empty())
    throw std::invalid_argument("point MLP needs at least one layer");
  for (const std::size_t w : point_mlp_widths)
    if (w == 0) throw std::invalid_argument("zero-width point layer");
  for (const std::size_t w : head_widths)
    if (w == 0) throw std::invalid_argument("zero-width head layer");
  if (n_points == 0) throw std::invalid_argument("n_points must be positive");
  if (n_classes == 0) throw std::invalid_argument("n_classes must be positive");
  if (alpha < 0.0) throw std::invalid_argument("negative loss weight");
  if (!(width_multiplier > 0.0))
    throw std::invalid_argument("width multiplier must be positive");
  if (shared_layers < kSharedAll)
    throw std::invalid_argument("bad shared_layers value");
  if (shared_layers > 0 &&
      static_cast<std::size_t>(shared_layers) > effective_point_widths().size())
    throw std::invalid_argument("shared_layers exceeds the point stack depth");
}

PointSegment make_segment(Eigen::Matrix<double, Eigen::Dynamic, 3> coords,
                          std::size_t class_id, std::size_t n_classes) {
  if (coords.rows() == 0) throw std::invalid_argument("empty segment");
  if (class_id >= n_classes)
    throw std::invalid_argument("class id out of range");
  PointSegment s;
  s.coords = std::move(coords);
  s.class_onehot = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n_classes));
  s.class_onehot[static_cast<Eigen::Index>(class_id)] = 1.0;
  s.class_id = class_id;
  return s;
}

namespace {

ad::Tensor he_weight(std::size_t in, std::size_t out, std::mt19937_64& gen) {
  std::vector<double> w(in * out);
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
  for (double& v : w) v = std_dev * normal(gen);
  return ad::Tensor::from_data({in, out}, std::move(w), true);
}

LayerBlock make_block(std::size_t in, std::size_t out, std::mt19937_64& gen) {
  LayerBlock blk;
  blk.lin.W = he_weight(in, out, gen);
  blk.lin.b = ad::Tensor::zeros({out}, true);
  blk.gamma = ad::Tensor::full({out}, 1.0, true);
  blk.beta = ad::Tensor::zeros({out}, true);
  blk.bn = std::make_shared<ad::BatchNormState>(ad::make_batch_norm_state(out));
  return blk;
}

// Output layers start near zero so early predictions sit at the scale of the
// centered regression targets instead of the unit-variance feature scale.
constexpr double kOutInitScale = 0.01;

DenseLayer make_out_layer(std::size_t in, std::size_t out, std::mt19937_64& gen) {
  DenseLayer l;
  l.W = he_weight(in, out, gen);
  for (double& v : l.W.mutable_data()) v *= kOutInitScale;
  l.b = ad::Tensor::zeros({out}, true);
  return l;
}

struct BlockRef {
  std::string name;
  const LayerBlock* blk;
};

std::vector<BlockRef> enumerate_blocks(const PoseNetParams& p) {
  std::vector<BlockRef> out;
  const auto shared_pt = static_cast<std::size_t>(p.shared_point_layers);
  for (std::size_t i = 0; i < p.rot.point_layers.size(); ++i) {
    const std::string prefix = i < shared_pt ? "shared.point" : "rot.point";
    out.push_back({prefix + std::to_string(i), &p.rot.point_layers[i]});
  }
  for (std::size_t i = 0; i < p.rot.head_layers.size(); ++i) {
    const std::string prefix = p.shared_heads ? "shared.head" : "rot.head";
    out.push_back({prefix + std::to_string(i), &p.rot.head_layers[i]});
  }
  for (std::size_t i = shared_pt; i < p.trans.point_layers.size(); ++i)
    out.push_back({"trans.point" + std::to_string(i), &p.trans.point_layers[i]});
  if (!p.shared_heads)
    for (std::size_t i = 0; i < p.trans.head_layers.size(); ++i)
      out.push_back({"trans.head" + std::to_string(i), &p.trans.head_layers[i]});
  return out;
}

}  // namespace

std::vector<std::pair<std::string, ad::Tensor>> PoseNetParams::named_parameters()
    const {
  std::vector<std::pair<std::string, ad::Tensor>> out;
  for (const BlockRef& ref : enumerate_blocks(*this)) {
    out.emplace_back(ref.name + ".W", ref.blk->lin.W);
    out.emplace_back(ref.name + ".b", ref.blk->lin.b);
    out.emplace_back(ref.name + ".bn.gamma", ref.blk->gamma);
    out.emplace_back(ref.name + ".bn.beta", ref.blk->beta);
  }
  out.emplace_back("rot.out.W", rot.out.W);
  out.emplace_back("rot.out.b", rot.out.b);
  out.emplace_back("trans.out.W", trans.out.W);
  out.emplace_back("trans.out.b", trans.out.b);
  return out;
}

std::vector<ad::Tensor> PoseNetParams::parameters() const {
  std::vector<ad::Tensor> out;
  for (auto& [name, t] : named_parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, std::shared_ptr<ad::BatchNormState>>>
PoseNetParams::named_bn_states() const {
  std::vector<std::pair<std::string, std::shared_ptr<ad::BatchNormState>>> out;
  for (const BlockRef& ref : enumerate_blocks(*this))
    out.emplace_back(ref.name + ".bn", ref.blk->bn);
  return out;
}

void PoseNetParams::set_mode(ad::BnMode mode) {
  for (auto& [name, state] : named_bn_states()) state->mode = mode;
}

std::size_t PoseNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const ad::Tensor& t : parameters()) n += t.size();
  return n;
}

PoseNetParams init_params(const NetConfig& cfg, std::mt19937_64& gen) {
  cfg.validate();
  PoseNetParams p;
  p.cfg = cfg;
  const std::vector<std::size_t> pw = cfg.effective_point_widths();
  const std::vector<std::size_t> hw = cfg.effective_head_widths();
  const bool share_all = cfg.shared_layers == NetConfig::kSharedAll;
  p.shared_point_layers =
      share_all ? static_cast<int>(pw.size()) : cfg.shared_layers;
  p.shared_heads = share_all;

  std::size_t in = cfg.in_channels();
  for (const std::size_t w : pw) {
    p.rot.point_layers.push_back(make_block(in, w, gen));
    in = w;
  }
  const std::size_t feat = in;
  for (const std::size_t w : hw) {
    p.rot.head_layers.push_back(make_block(in, w, gen));
    in = w;
  }
  p.rot.out = make_out_layer(in, cfg.rotation_out_dim(), gen);

  const auto shared_pt = static_cast<std::size_t>(p.shared_point_layers);
  in = cfg.in_channels();
  for (std::size_t i = 0; i < pw.size(); ++i) {
    if (i < shared_pt)
      p.trans.point_layers.push_back(p.rot.point_layers[i]);
    else
      p.trans.point_layers.push_back(make_block(in, pw[i], gen));
    in = pw[i];
  }
  in = feat;
  for (std::size_t i = 0; i < hw.size(); ++i) {
    if (p.shared_heads)
      p.trans.head_layers.push_back(p.rot.head_layers[i]);
    else
      p.trans.head_layers.push_back(make_block(in, hw[i], gen));
    in = hw[i];
  }
  p.trans.out = make_out_layer(in, 3, gen);
  return p;
}

PoseNetParams build_shared_variant(const NetConfig& cfg, std::mt19937_64& gen) {
  return init_params(cfg, gen);
}

namespace {

void validate_segment(const PointSegment& s, const NetConfig& cfg) {
  if (static_cast<std::size_t>(s.coords.rows()) != cfg.n_points)
    throw std::invalid_argument("segment point count does not match the net");
  if (static_cast<std::size_t>(s.class_onehot.size()) != cfg.n_classes)
    throw std::invalid_argument("one-hot length does not match n_classes");
  if (s.class_id >= cfg.n_classes)
    throw std::invalid_argument("class id out of range");
  std::size_t ones = 0;
  for (Eigen::Index i = 0; i < s.class_onehot.size(); ++i) {
    const double v = s.class_onehot[i];
    if (v == 1.0)
      ++ones;
    else if (v != 0.0)
      throw std::invalid_argument("one-hot entries must be 0 or 1");
  }
  if (ones != 1 ||
      s.class_onehot[static_cast<Eigen::Index>(s.class_id)] != 1.0)
    throw std::invalid_argument("one-hot must mark exactly the class id");
}

ad::Tensor build_input(std::span<const PointSegment> batch, const NetConfig& cfg,
                       bool center, std::vector<Vec3>* centroids) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t n = cfg.n_points;
  const std::size_t c = cfg.in_channels();
  std::vector<double> data;
  data.reserve(batch.size() * n * c);
  if (centroids) centroids->clear();
  for (const PointSegment& s : batch) {
    validate_segment(s, cfg);
    Vec3 mu = Vec3::Zero();
    if (center) {
      mu = s.coords.colwise().mean().transpose();
      if (centroids) centroids->push_back(mu);
    }
    for (std::size_t i = 0; i < n; ++i) {
      const auto row = s.coords.row(static_cast<Eigen::Index>(i));
      data.push_back(row[0] - mu[0]);
      data.push_back(row[1] - mu[1]);
      data.push_back(row[2] - mu[2]);
      for (Eigen::Index k = 0; k < s.class_onehot.size(); ++k)
        data.push_back(s.class_onehot[k]);
    }
  }
  return ad::Tensor::from_data({batch.size(), n, c}, std::move(data), false);
}

}  // namespace

ad::Tensor make_rotation_input(std::span<const PointSegment> batch,
                               const NetConfig& cfg) {
  return build_input(batch, cfg, false, nullptr);
}

ad::Tensor make_translation_input(std::span<const PointSegment> batch,
                                  const NetConfig& cfg,
                                  std::vector<Vec3>& centroids) {
  return build_input(batch, cfg, true, &centroids);
}

ad::Tensor basenet_forward(const ad::Tensor& input, const BaseNet& net) {
  ad::Tensor h = input;
  for (const LayerBlock& blk : net.point_layers)
    h = ad::relu(ad::batch_norm(ad::linear(h, blk.lin.W, blk.lin.b), blk.gamma,
                                blk.beta, *blk.bn));
  h = ad::max_over_points(h);
  for (const LayerBlock& blk : net.head_layers)
    h = ad::relu(ad::batch_norm(ad::linear(h, blk.lin.W, blk.lin.b), blk.gamma,
                                blk.beta, *blk.bn));
  return ad::linear(h, net.out.W, net.out.b);
}

Pose predict_pose(const PointSegment& segment, PoseNetParams& params) {
  params.set_mode(ad::BnMode::Eval);
  const std::span<const PointSegment> one(&segment, 1);
  const ad::Tensor rot_in = make_rotation_input(one, params.cfg);
  std::vector<Vec3> centroids;
  const ad::Tensor trans_in =
      make_translation_input(one, params.cfg, centroids);
  const ad::Tensor r = basenet_forward(rot_in, params.rot);
  const ad::Tensor t = basenet_forward(trans_in, params.trans);
  const std::span<const double> rd = r.data();
  AxisAngle aa;
  if (params.cfg.rotation_repr == RotationRepr::Quaternion)
    aa = quat_to_axis_angle(Quaternion{rd[0], rd[1], rd[2], rd[3]});
  else
    aa = AxisAngle(rd[0], rd[1], rd[2]);
  const std::span<const double> td = t.data();
  Pose pose;
  pose.rotation = canonicalize(aa);
  pose.translation = centroids[0] + Vec3(td[0], td[1], td[2]);
  return pose;
}

namespace {

struct RowsView {
  std::size_t batch;
  std::size_t channels;
};

RowsView rows_view(const ad::Tensor& t, std::size_t channels, const char* what) {
  if (t.rank() == 0 || t.shape().back() != channels || t.rank() > 2)
    throw std::invalid_argument(std::string(what) + ": expected rows of " +
                                std::to_string(channels));
  return {t.size() / channels, channels};
}

ad::Tensor l2_distance_rows(const ad::Tensor& pred,
                            const Eigen::Matrix<double, Eigen::Dynamic, 3>& target,
                            const char* what) {
  const RowsView view = rows_view(pred, 3, what);
  if (static_cast<std::size_t>(target.rows()) != view.batch)
    throw std::invalid_argument(std::string(what) + ": target row count");
  std::vector<double> out(view.batch);
  const std::span<const double> pd = pred.data();
  for (std::size_t i = 0; i < view.batch; ++i) {
    const Vec3 d(pd[3 * i] - target(static_cast<Eigen::Index>(i), 0),
                 pd[3 * i + 1] - target(static_cast<Eigen::Index>(i), 1),
                 pd[3 * i + 2] - target(static_cast<Eigen::Index>(i), 2));
    out[i] = d.norm();
  }
  Eigen::Matrix<double, Eigen::Dynamic, 3> tgt = target;
  return ad::custom_op(
      {view.batch}, std::move(out), {pred},
      [tgt](std::span<const double> out_data, std::span<const double> out_grad,
            std::span<ad::Tensor> parents) {
        if (!parents[0].requires_grad()) return;
        const std::span<const double> pd = parents[0].data();
        const std::span<double> pg = parents[0].mutable_grad();
        for (std::size_t i = 0; i < out_data.size(); ++i) {
          const double d = out_data[i];
          if (d < 1e-12) continue;  // subgradient 0 at coincident points
          const double s = out_grad[i] / d;
          for (int k = 0; k < 3; ++k)
            pg[3 * i + k] +=
                s * (pd[3 * i + k] - tgt(static_cast<Eigen::Index>(i), k));
        }
      });
}

// d(exp r)/dr_k as three matrices; series below theta^2 = 1e-8.
std::array<Mat3, 3> exp_map_jacobian(const Vec3& r, const Mat3& R) {
  std::array<Mat3, 3> d;
  const double t2 = r.squaredNorm();
  if (t2 < 1e-8) {
    const Mat3 rx = skew(r);
    for (int k = 0; k < 3; ++k) {
      const Mat3 ek = skew(Vec3::Unit(k));
      d[k] = ek + 0.5 * (ek * rx + rx * ek);
    }
    return d;
  }
  const Mat3 rx = skew(r);
  const Mat3 im_r = Mat3::Identity() - R;
  for (int k = 0; k < 3; ++k)
    d[k] = ((r[k] * rx + skew(r.cross(im_r.col(k)))) / t2) * R;
  return d;
}

}  // namespace

ad::Tensor translation_loss_rows(
    const ad::Tensor& pred,
    const Eigen::Matrix<double, Eigen::Dynamic, 3>& target) {
  return l2_distance_rows(pred, target, "translation_loss");
}

ad::Tensor rotation_loss_l2_rows(
    const ad::Tensor& pred,
    const Eigen::Matrix<double, Eigen::Dynamic, 3>& target) {
  return l2_distance_rows(pred, target, "rotation_loss_l2");
}

ad::Tensor rotation_loss_geodesic_rows(const ad::Tensor& pred,
                                       const std::vector<Mat3>& target) {
  const RowsView view = rows_view(pred, 3, "rotation_loss_geodesic");
  if (target.size() != view.batch)
    throw std::invalid_argument("rotation_loss_geodesic: target row count");
  const std::span<const double> pd = pred.data();
  std::vector<double> out(view.batch);
  for (std::size_t i = 0; i < view.batch; ++i) {
    const Mat3 R = exp_map(AxisAngle(pd[3 * i], pd[3 * i + 1], pd[3 * i + 2]));
    out[i] = geodesic_distance(R, target[i]);
  }
  std::vector<Mat3> tgt = target;
  return ad::custom_op(
      {view.batch}, std::move(out), {pred},
      [tgt](std::span<const double>, std::span<const double> out_grad,
            std::span<ad::Tensor> parents) {
        if (!parents[0].requires_grad()) return;
        const std::span<const double> pd = parents[0].data();
        const std::span<double> pg = parents[0].mutable_grad();
        for (std::size_t i = 0; i < tgt.size(); ++i) {
          const Vec3 r(pd[3 * i], pd[3 * i + 1], pd[3 * i + 2]);
          const Mat3 R = exp_map(AxisAngle(r));
          const double c_raw = (R.cwiseProduct(tgt[i]).sum() - 1.0) / 2.0;
          const double c =
              std::clamp(c_raw, -1.0 + kAcosClamp, 1.0 - kAcosClamp);
          // Straight-through at the clamp: acos'(c) on the clamped value.
          const double dc = -1.0 / std::sqrt(1.0 - c * c);
          const std::array<Mat3, 3> dR = exp_map_jacobian(r, R);
          for (int k = 0; k < 3; ++k)
            pg[3 * i + k] += out_grad[i] * dc * 0.5 *
                             dR[k].cwiseProduct(tgt[i]).sum();
        }
      });
}

ad::Tensor quat_rows_to_axis_angle(const ad::Tensor& pred) {
  const RowsView view = rows_view(pred, 4, "quat_to_axis_angle");
  const std::span<const double> pd = pred.data();
  std::vector<double> out(view.batch * 3);
  for (std::size_t i = 0; i < view.batch; ++i) {
    const double w = pd[4 * i];
    const Vec3 v(pd[4 * i + 1], pd[4 * i + 2], pd[4 * i + 3]);
    const double n = std::sqrt(w * w + v.squaredNorm());
    if (n < 1e-12)
      throw std::invalid_argument("zero quaternion in rotation head output");
    const double sign = w < 0.0 ? -1.0 : 1.0;
    const double vn = v.norm();
    if (vn / n < 1e-8) {
      out[3 * i] = out[3 * i + 1] = out[3 * i + 2] = 0.0;
      continue;
    }
    const double t =
        std::clamp(sign * w / n, -1.0 + kAcosClamp, 1.0 - kAcosClamp);
    const double theta = 2.0 * std::acos(t);
    const Vec3 axis = sign * v / vn;
    for (int k = 0; k < 3; ++k) out[3 * i + k] = theta * axis[k];
  }
  const std::size_t batch = view.batch;
  ad::Shape shape = pred.rank() == 1 ? ad::Shape{3} : ad::Shape{batch, 3};
  return ad::custom_op(
      std::move(shape), std::move(out), {pred},
      [batch](std::span<const double>, std::span<const double> out_grad,
              std::span<ad::Tensor> parents) {
        if (!parents[0].requires_grad()) return;
        const std::span<const double> pd = parents[0].data();
        const std::span<double> pg = parents[0].mutable_grad();
        for (std::size_t i = 0; i < batch; ++i) {
          const double w_raw = pd[4 * i];
          const Vec3 v_raw(pd[4 * i + 1], pd[4 * i + 2], pd[4 * i + 3]);
          const double sign = w_raw < 0.0 ? -1.0 : 1.0;
          const double w = sign * w_raw;
          const Vec3 v = sign * v_raw;
          const double n = std::sqrt(w * w + v.squaredNorm());
          const double vn = v.norm();
          const Vec3 g(out_grad[3 * i], out_grad[3 * i + 1],
                       out_grad[3 * i + 2]);
          if (vn / n < 1e-8) {
            // Small-angle limit: r -> 2 v / n, insensitive to w.
            for (int k = 0; k < 3; ++k)
              pg[4 * i + 1 + k] += sign * (2.0 / n) * g[k];
            continue;
          }
          const double t =
              std::clamp(w / n, -1.0 + kAcosClamp, 1.0 - kAcosClamp);
          const double theta = 2.0 * std::acos(t);
          const Vec3 u = v / vn;
          const double gu = g.dot(u);
          const double dt = gu * (-2.0 / std::sqrt(1.0 - t * t));
          const double n3 = n * n * n;
          pg[4 * i] += sign * dt * (vn * vn / n3);
          for (int k = 0; k < 3; ++k) {
            const double dv = dt * (-w * v[k] / n3) +
                              theta * (g[k] - u[k] * gu) / vn;
            pg[4 * i + 1 + k] += sign * dv;
          }
        }
      });
}

ad::Tensor total_loss(const ad::Tensor& translation_rows,
                      const ad::Tensor& rotation_rows, double alpha) {
  return ad::add(ad::scale(ad::mean_all(translation_rows), alpha),
                 ad::mean_all(rotation_rows));
}

ad::Tensor translation_loss(const ad::Tensor& t_pred, const Vec3& t_target) {
  Eigen::Matrix<double, Eigen::Dynamic, 3> tgt(1, 3);
  tgt.row(0) = t_target.transpose();
  return translation_loss_rows(t_pred, tgt);
}

ad::Tensor rotation_loss(const ad::Tensor& r_pred, const AxisAngle& r_target,
                         RotationLoss kind) {
  ad::Tensor pred = r_pred;
  if (pred.shape().back() == 4) pred = quat_rows_to_axis_angle(pred);
  if (kind == RotationLoss::Geodesic)
    return rotation_loss_geodesic_rows(pred, {exp_map(r_target)});
  Eigen::Matrix<double, Eigen::Dynamic, 3> tgt(1, 3);
  tgt.row(0) = canonicalize(r_target).r.transpose();
  return rotation_loss_l2_rows(pred, tgt);
}

}  // namespace pointpose
