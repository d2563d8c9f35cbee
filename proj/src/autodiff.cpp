#include "pointpose/autodiff.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_set>
#include <utility>

namespace pointpose::ad {

namespace {

using detail::Access;
using detail::Node;

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using MapConstMat = Eigen::Map<const RowMat>;

std::atomic<std::uint64_t> g_next_id{1};

std::size_t shape_size(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

std::shared_ptr<Node> new_node(Shape shape, std::vector<double> data,
                               bool requires_grad) {
  auto n = std::make_shared<Node>();
  n->shape = std::move(shape);
  n->data = std::move(data);
  n->requires_grad = requires_grad;
  n->id = g_next_id.fetch_add(1, std::memory_order_relaxed);
  return n;
}

Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
               std::function<void(Node&)> backprop) {
  bool needs = false;
  for (const Tensor& p : parents) needs = needs || p.requires_grad();
  auto n = new_node(std::move(shape), std::move(data), needs);
  n->parents = std::move(parents);
  if (needs) n->backprop = std::move(backprop);
  return Access::wrap(std::move(n));
}

Tensor checked(const Tensor& t, const char* op) {
  if (!t.defined()) throw std::invalid_argument(std::string(op) + ": undefined tensor");
  return t;
}

}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  std::vector<double> data(shape_size(shape), 0.0);
  return Access::wrap(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  std::vector<double> data(shape_size(shape), value);
  return Access::wrap(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  if (shape_size(shape) != data.size()) {
    throw std::invalid_argument("Tensor::from_data: shape does not match data size");
  }
  return Access::wrap(new_node(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Access::wrap(new_node(Shape{}, {value}, requires_grad));
}

double Tensor::value() const {
  if (!defined() || size() != 1) {
    throw std::invalid_argument("Tensor::value: tensor is not a single element");
  }
  return node_->data[0];
}

BatchNormState make_batch_norm_state(std::size_t channels) {
  BatchNormState s;
  s.running_mean.assign(channels, 0.0);
  s.running_var.assign(channels, 1.0);
  return s;
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
  checked(x, "linear");
  checked(W, "linear");
  checked(b, "linear");
  if (W.rank() != 2) throw std::invalid_argument("linear: W must have rank 2");
  const std::size_t in = W.shape()[0];
  const std::size_t out = W.shape()[1];
  if (b.rank() != 1 || b.shape()[0] != out) {
    throw std::invalid_argument("linear: b must have shape [out]");
  }
  if (x.rank() < 1 || x.shape().back() != in) {
    throw std::invalid_argument("linear: x last dimension must equal W rows");
  }
  const std::size_t M = x.size() / in;

  Shape out_shape = x.shape();
  out_shape.back() = out;
  std::vector<double> y(M * out);
  {
    MapConstMat X(x.data().data(), M, in);
    MapConstMat Wm(W.data().data(), in, out);
    MapMat Y(y.data(), M, out);
    Y.noalias() = X * Wm;
    Y.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(b.data().data(), out);
  }

  auto fn = [M, in, out](Node& self) {
    Tensor& xp = self.parents[0];
    Tensor& Wp = self.parents[1];
    Tensor& bp = self.parents[2];
    MapConstMat G(self.grad.data(), M, out);
    if (xp.requires_grad()) {
      MapConstMat Wm(Wp.data().data(), in, out);
      MapMat dX(xp.mutable_grad().data(), M, in);
      dX.noalias() += G * Wm.transpose();
    }
    if (Wp.requires_grad()) {
      MapConstMat X(xp.data().data(), M, in);
      MapMat dW(Wp.mutable_grad().data(), in, out);
      dW.noalias() += X.transpose() * G;
    }
    if (bp.requires_grad()) {
      // Row-by-row accumulation keeps the summation order independent of
      // buffer alignment, so identically seeded runs stay bitwise equal.
      auto db = bp.mutable_grad();
      for (std::size_t i = 0; i < M; ++i) {
        const double* row = self.grad.data() + i * out;
        for (std::size_t j = 0; j < out; ++j) db[j] += row[j];
      }
    }
  };
  return make_op(std::move(out_shape), std::move(y), {x, W, b}, std::move(fn));
}

Tensor relu(const Tensor& x) {
  checked(x, "relu");
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = xd[i] > 0.0 ? xd[i] : 0.0;

  auto fn = [](Node& self) {
    Tensor& xp = self.parents[0];
    if (!xp.requires_grad()) return;
    const auto xd = xp.data();
    auto g = xp.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (xd[i] > 0.0) g[i] += self.grad[i];
    }
  };
  return make_op(x.shape(), std::move(y), {x}, std::move(fn));
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state) {
  checked(x, "batch_norm");
  checked(gamma, "batch_norm");
  checked(beta, "batch_norm");
  if (x.rank() < 2) throw std::invalid_argument("batch_norm: x must have rank >= 2");
  const std::size_t C = x.shape().back();
  const std::size_t M = x.size() / C;
  if (gamma.rank() != 1 || gamma.shape()[0] != C || beta.rank() != 1 ||
      beta.shape()[0] != C) {
    throw std::invalid_argument("batch_norm: gamma/beta must have shape [channels]");
  }
  if (state.running_mean.size() != C || state.running_var.size() != C) {
    throw std::invalid_argument("batch_norm: state channel count mismatch");
  }

  const auto xd = x.data();
  const auto gd = gamma.data();
  const auto bd = beta.data();
  std::vector<double> mu(C, 0.0);
  std::vector<double> invstd(C, 0.0);

  if (state.mode == BnMode::Train) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t c = 0; c < C; ++c) mu[c] += xd[m * C + c];
    }
    for (std::size_t c = 0; c < C; ++c) mu[c] /= static_cast<double>(M);
    std::vector<double> var(C, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t c = 0; c < C; ++c) {
        const double d = xd[m * C + c] - mu[c];
        var[c] += d * d;
      }
    }
    for (std::size_t c = 0; c < C; ++c) {
      var[c] /= static_cast<double>(M);  // biased, matches the running estimate
      invstd[c] = 1.0 / std::sqrt(var[c] + state.eps);
      state.running_mean[c] =
          state.momentum * state.running_mean[c] + (1.0 - state.momentum) * mu[c];
      state.running_var[c] =
          state.momentum * state.running_var[c] + (1.0 - state.momentum) * var[c];
    }
    state.initialized = true;
  } else {
    if (!state.initialized) {
      throw std::runtime_error("batch_norm: eval mode before any training batch");
    }
    for (std::size_t c = 0; c < C; ++c) {
      mu[c] = state.running_mean[c];
      invstd[c] = 1.0 / std::sqrt(state.running_var[c] + state.eps);
    }
  }

  std::vector<double> y(x.size());
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t c = 0; c < C; ++c) {
      y[m * C + c] = gd[c] * (xd[m * C + c] - mu[c]) * invstd[c] + bd[c];
    }
  }

  const bool train = state.mode == BnMode::Train;
  auto fn = [M, C, train, mu = std::move(mu), invstd = std::move(invstd)](Node& self) {
    Tensor& xp = self.parents[0];
    Tensor& gp = self.parents[1];
    Tensor& bp = self.parents[2];
    const auto xd = xp.data();
    const auto gd = gp.data();
    const auto& G = self.grad;

    std::vector<double> sum_g(C, 0.0), sum_gx(C, 0.0);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t c = 0; c < C; ++c) {
        const double xhat = (xd[m * C + c] - mu[c]) * invstd[c];
        sum_g[c] += G[m * C + c];
        sum_gx[c] += G[m * C + c] * xhat;
      }
    }
    if (gp.requires_grad()) {
      auto dg = gp.mutable_grad();
      for (std::size_t c = 0; c < C; ++c) dg[c] += sum_gx[c];
    }
    if (bp.requires_grad()) {
      auto db = bp.mutable_grad();
      for (std::size_t c = 0; c < C; ++c) db[c] += sum_g[c];
    }
    if (xp.requires_grad()) {
      auto dx = xp.mutable_grad();
      const double invM = 1.0 / static_cast<double>(M);
      for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t c = 0; c < C; ++c) {
          const double xhat = (xd[m * C + c] - mu[c]) * invstd[c];
          const double a = gd[c] * invstd[c];
          // In eval mode the statistics are constants: plain affine backward.
          dx[m * C + c] += train
                               ? a * (G[m * C + c] - sum_g[c] * invM - xhat * sum_gx[c] * invM)
                               : a * G[m * C + c];
        }
      }
    }
  };
  return make_op(x.shape(), std::move(y), {x, gamma, beta}, std::move(fn));
}

Tensor max_over_points(const Tensor& x) {
  checked(x, "max_over_points");
  if (x.rank() != 3) {
    throw std::invalid_argument("max_over_points: expected [batch, points, channels]");
  }
  const std::size_t B = x.shape()[0];
  const std::size_t N = x.shape()[1];
  const std::size_t C = x.shape()[2];
  if (N == 0) throw std::invalid_argument("max_over_points: zero points");

  const auto xd = x.data();
  std::vector<double> y(B * C);
  std::vector<std::uint32_t> arg(B * C, 0);
  for (std::size_t b = 0; b < B; ++b) {
    for (std::size_t c = 0; c < C; ++c) {
      double best = xd[b * N * C + c];
      std::uint32_t best_n = 0;
      for (std::size_t n = 1; n < N; ++n) {
        const double v = xd[(b * N + n) * C + c];
        if (v > best) {  // strict: ties keep the lowest index
          best = v;
          best_n = static_cast<std::uint32_t>(n);
        }
      }
      y[b * C + c] = best;
      arg[b * C + c] = best_n;
    }
  }

  auto fn = [B, N, C, arg = std::move(arg)](Node& self) {
    Tensor& xp = self.parents[0];
    if (!xp.requires_grad()) return;
    auto dx = xp.mutable_grad();
    for (std::size_t b = 0; b < B; ++b) {
      for (std::size_t c = 0; c < C; ++c) {
        dx[(b * N + arg[b * C + c]) * C + c] += self.grad[b * C + c];
      }
    }
  };
  return make_op({B, C}, std::move(y), {x}, std::move(fn));
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  checked(a, "concat_channels");
  checked(b, "concat_channels");
  if (a.rank() != b.rank() || a.rank() < 1) {
    throw std::invalid_argument("concat_channels: rank mismatch");
  }
  for (std::size_t i = 0; i + 1 < a.rank(); ++i) {
    if (a.shape()[i] != b.shape()[i]) {
      throw std::invalid_argument("concat_channels: leading dimensions differ");
    }
  }
  const std::size_t ca = a.shape().back();
  const std::size_t cb = b.shape().back();
  const std::size_t M = a.size() / ca;

  Shape out_shape = a.shape();
  out_shape.back() = ca + cb;
  std::vector<double> y(M * (ca + cb));
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t m = 0; m < M; ++m) {
    std::copy_n(&ad[m * ca], ca, &y[m * (ca + cb)]);
    std::copy_n(&bd[m * cb], cb, &y[m * (ca + cb) + ca]);
  }

  auto fn = [M, ca, cb](Node& self) {
    Tensor& ap = self.parents[0];
    Tensor& bp = self.parents[1];
    if (ap.requires_grad()) {
      auto da = ap.mutable_grad();
      for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t c = 0; c < ca; ++c) da[m * ca + c] += self.grad[m * (ca + cb) + c];
      }
    }
    if (bp.requires_grad()) {
      auto db = bp.mutable_grad();
      for (std::size_t m = 0; m < M; ++m) {
        for (std::size_t c = 0; c < cb; ++c) {
          db[m * cb + c] += self.grad[m * (ca + cb) + ca + c];
        }
      }
    }
  };
  return make_op(std::move(out_shape), std::move(y), {a, b}, std::move(fn));
}

Tensor add(const Tensor& a, const Tensor& b) {
  checked(a, "add");
  checked(b, "add");
  if (a.shape() != b.shape()) throw std::invalid_argument("add: shape mismatch");
  std::vector<double> y(a.size());
  const auto ad = a.data();
  const auto bd = b.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = ad[i] + bd[i];

  auto fn = [](Node& self) {
    for (Tensor& p : self.parents) {
      if (!p.requires_grad()) continue;
      auto g = p.mutable_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  };
  return make_op(a.shape(), std::move(y), {a, b}, std::move(fn));
}

Tensor scale(const Tensor& x, double factor) {
  checked(x, "scale");
  std::vector<double> y(x.size());
  const auto xd = x.data();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = factor * xd[i];

  auto fn = [factor](Node& self) {
    Tensor& xp = self.parents[0];
    if (!xp.requires_grad()) return;
    auto g = xp.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += factor * self.grad[i];
  };
  return make_op(x.shape(), std::move(y), {x}, std::move(fn));
}

Tensor mean_all(const Tensor& x) {
  checked(x, "mean_all");
  if (x.size() == 0) throw std::invalid_argument("mean_all: empty tensor");
  double sum = 0.0;
  for (double v : x.data()) sum += v;
  const double inv = 1.0 / static_cast<double>(x.size());

  auto fn = [inv](Node& self) {
    Tensor& xp = self.parents[0];
    if (!xp.requires_grad()) return;
    auto g = xp.mutable_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += inv * self.grad[0];
  };
  return make_op(Shape{}, {sum * inv}, {x}, std::move(fn));
}

Tensor custom_op(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                 CustomBackward backward_fn) {
  if (shape_size(shape) != data.size()) {
    throw std::invalid_argument("custom_op: shape does not match data size");
  }
  auto fn = [f = std::move(backward_fn)](Node& self) {
    std::span<Tensor> parents(self.parents.data(), self.parents.size());
    f(self.data, self.grad, parents);
  };
  return make_op(std::move(shape), std::move(data), std::move(parents), std::move(fn));
}

void backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw std::invalid_argument("backward: loss must be a single element");
  }
  const auto& root = detail::Access::node(loss);
  if (!root->requires_grad) return;

  // Post-order over the requires_grad subgraph; each node visited once.
  std::vector<Node*> order;
  std::unordered_set<const Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(root.get(), 0);
  seen.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* p = detail::Access::node(node->parents[next]).get();
      ++next;
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // Leaf gradients persist across calls; interior ones are per-pass.
  for (Node* n : order) {
    if (!n->parents.empty()) {
      n->grad.assign(n->data.size(), 0.0);
    } else {
      n->ensure_grad();
    }
  }
  root->grad[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backprop) n->backprop(*n);
  }
}

void adam_step(std::span<Tensor> params, AdamState& state) {
  if (state.m.empty() && state.v.empty()) {
    state.m.resize(params.size());
    state.v.resize(params.size());
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m[i].assign(params[i].size(), 0.0);
      state.v[i].assign(params[i].size(), 0.0);
    }
  }
  if (state.m.size() != params.size() || state.v.size() != params.size()) {
    throw std::invalid_argument("adam_step: moment buffers misaligned with parameters");
  }

  ++state.step;
  const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto data = params[i].mutable_data();
    if (state.m[i].size() != data.size()) {
      throw std::invalid_argument("adam_step: moment buffers misaligned with parameters");
    }
    const auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t j = 0; j < data.size(); ++j) {
      m[j] = state.beta1 * m[j] + (1.0 - state.beta1) * g[j];
      v[j] = state.beta2 * v[j] + (1.0 - state.beta2) * g[j] * g[j];
      data[j] -= state.lr * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + state.eps);
    }
  }
}

std::vector<std::vector<double>> finite_difference_grad(
    const std::function<double()>& f, std::span<Tensor> params, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_difference_grad: h must be positive");
  std::vector<std::vector<double>> out;
  out.reserve(params.size());
  for (Tensor& p : params) {
    auto data = p.mutable_data();
    std::vector<double> g(data.size());
    for (std::size_t j = 0; j < data.size(); ++j) {
      const double orig = data[j];
      data[j] = orig + h;
      const double fp = f();
      data[j] = orig - h;
      const double fm = f();
      data[j] = orig;
      g[j] = (fp - fm) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

}  // namespace pointpose::ad
