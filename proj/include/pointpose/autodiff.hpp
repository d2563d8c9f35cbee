#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace pointpose::ad {

using Shape = std::vector<std::size_t>;

class Tensor;

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until touched
  std::vector<Tensor> parents;
  std::function<void(Node&)> backprop;  // null for leaves
  std::uint64_t id = 0;
  bool requires_grad = false;

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
  }
};

struct Access;

}  // namespace detail

/// Dense double tensor participating in a reverse-mode graph. Copies share
/// the underlying node; row-major layout, last dimension fastest.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t size() const { return node_->data.size(); }
  std::uint64_t id() const { return node_->id; }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> data() const { return node_->data; }
  /// Leaf edits between steps (optimizers, finite differences).
  std::span<double> mutable_data() { return node_->data; }

  /// Allocated (zero) on first query.
  std::span<const double> grad() const {
    node_->ensure_grad();
    return node_->grad;
  }
  std::span<double> mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
  }

  /// Value of a single-element tensor.
  double value() const;

 private:
  std::shared_ptr<detail::Node> node_;
  friend struct detail::Access;
};

namespace detail {
struct Access {
  static const std::shared_ptr<Node>& node(const Tensor& t) { return t.node_; }
  static Tensor wrap(std::shared_ptr<Node> n) {
    Tensor t;
    t.node_ = std::move(n);
    return t;
  }
};
}  // namespace detail

enum class BnMode { Train, Eval };

/// Running statistics owned outside the graph; one instance per BN layer.
struct BatchNormState {
  BnMode mode = BnMode::Train;
  double momentum = 0.9;
  double eps = 1e-5;
  std::vector<double> running_mean;  // starts at 0
  std::vector<double> running_var;   // starts at 1
  bool initialized = false;          // set by the first training batch
};

BatchNormState make_batch_norm_state(std::size_t channels);

/// y = x W + b over the flattened leading dims; x [..., in], W [in, out],
/// b [out]. Shape mismatches throw std::invalid_argument.
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);

/// max(0, x); the subgradient at exactly 0 is taken as 0.
Tensor relu(const Tensor& x);

/// Normalizes the last axis over all leading dims. Train mode uses batch
/// statistics (biased variance) and updates the running estimates; eval mode
/// uses the running estimates and throws std::runtime_error until some
/// training batch has initialized them.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state);

/// [B, N, C] -> [B, C]; ties resolve to the lowest point index, which also
/// receives the full gradient.
Tensor max_over_points(const Tensor& x);

/// Concatenate along the last axis; leading dims must match.
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);  // identical shapes
Tensor scale(const Tensor& x, double factor);
Tensor mean_all(const Tensor& x);  // -> scalar

/// Escape hatch for domain ops defined in other modules: forward data plus a
/// backward that accumulates into parent gradients.
using CustomBackward = std::function<void(
    std::span<const double> out_data, std::span<const double> out_grad,
    std::span<Tensor> parents)>;
Tensor custom_op(Shape shape, std::vector<double> data,
                 std::vector<Tensor> parents, CustomBackward backward_fn);

/// Reverse pass from a scalar loss. Leaf gradients accumulate across calls;
/// intermediate gradients are per-call. Non-scalar loss throws.
void backward(const Tensor& loss);

struct AdamState {
  double lr = 0.0008;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step = 0;
  // Aligned with the parameter list passed to adam_step.
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update, in place. Allocates the moment buffers on
/// first use; a missing gradient counts as zero.
void adam_step(std::span<Tensor> params, AdamState& state);

/// Central differences of f with respect to every parameter entry, one
/// vector per parameter. f is re-evaluated with entries nudged by +-h.
std::vector<std::vector<double>> finite_difference_grad(
    const std::function<double()>& f, std::span<Tensor> params, double h);

}  // namespace pointpose::ad
