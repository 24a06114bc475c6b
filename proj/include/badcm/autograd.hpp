#pragma once

// Minimal reverse-mode automatic differentiation over dense double tensors.
// Tensors are row-major; image batches use NCHW layout.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <vector>

namespace badcm::ag {

using Shape = std::vector<int>;

std::size_t numel_of(const Shape& shape);

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  /// Allocates (zeroed) gradient storage on first use.
  std::vector<double>& grad_buffer();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Shape shape, std::vector<double> values);
  static Var constant(Shape shape, double fill = 0.0);
  static Var parameter(Shape shape, std::vector<double> values);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const { return node_->shape; }
  int dim(std::size_t i) const { return node_->shape.at(i); }
  std::size_t numel() const { return node_->value.size(); }
  bool requires_grad() const { return node_->requires_grad; }

  std::span<const double> value() const { return node_->value; }
  std::span<double> mutable_value() { return node_->value; }
  /// Gradient accumulated by the last backward(); empty span when none.
  std::span<const double> grad() const { return node_->grad; }
  void zero_grad() { node_->grad.clear(); }

  double item() const;
  /// Copy of the value with no graph history.
  Var detach() const;
  /// Backpropagates from this scalar. Gradients accumulate into leaves.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

/// Builds an op result. `backward` receives the result node whose grad is filled.
Var make_op(Shape shape, std::vector<double> value, std::vector<Var> parents,
            std::function<void(Node&)> backward);

// Elementwise (identical shapes).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var square(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var tanh(const Var& a);
Var sigmoid(const Var& a);
Var log(const Var& a);
/// Gradient passes only where lo < a < hi.
Var clamp(const Var& a, double lo, double hi);

// Reductions to shape {1}.
Var sum(const Var& a);
Var mean(const Var& a);

// Weighted sum of scalars: sum_i w_i * s_i.
Var weighted_sum(std::span<const Var> scalars, std::span<const double> weights);

// Image ops, NCHW.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
Var upsample2x(const Var& x);
Var concat_channels(const Var& a, const Var& b);

// Matrix ops.
/// x[N,in] * weight[out,in]^T + bias[out]; bias may be undefined.
Var linear(const Var& x, const Var& weight, const Var& bias);
/// a[N,D] * b[M,D]^T -> [N,M].
Var matmul_nt(const Var& a, const Var& b);
Var l2_normalize_rows(const Var& a, double eps = 1e-12);
/// Row-wise cosine similarity of a[N,D] and b[N,D] -> [N].
Var cosine_rows(const Var& a, const Var& b, double eps = 1e-12);

// Losses.
/// mean(softplus(z) - t*z) with constant targets t of the same shape as z.
Var bce_with_logits(const Var& logits, std::span<const double> targets);
/// Same with a single target value broadcast over every logit.
Var bce_with_logits(const Var& logits, double target);
/// mean_i(logsumexp_j z_ij - z_ii) for square logits[N,N].
Var cross_entropy_diagonal(const Var& logits);
/// mean over rows with at least one positive of logsumexp_j z_ij - logsumexp_{j positive} z_ij.
Var cross_entropy_positives(const Var& logits, std::span<const std::uint8_t> positive);

}  // namespace badcm::ag
