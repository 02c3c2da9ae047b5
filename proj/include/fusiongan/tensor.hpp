#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "fusiongan/errors.hpp"

namespace fgan {

class Rng;

// NCHW dimensions. All four counts are positive for a valid tensor.
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) *
           static_cast<std::size_t>(h) * static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;
  std::string str() const;
};

namespace detail {

struct TensorImpl;

// One recorded primitive. `backward` reads the output's grad and accumulates
// into the grads of `inputs`; it is released after the first backward pass.
struct Node {
  std::string op;
  std::vector<std::shared_ptr<TensorImpl>> inputs;
  std::function<void(const TensorImpl& out)> backward;
  bool consumed = false;
};

struct TensorImpl {
  Shape shape;
  std::vector<float> data;
  std::vector<float> grad;  // empty until a gradient reaches this tensor
  bool requires_grad = false;
  std::shared_ptr<Node> grad_fn;

  std::vector<float>& grad_buffer() {
    if (grad.empty()) grad.assign(data.size(), 0.0f);
    return grad;
  }
};

}  // namespace detail

// Dense float32 NCHW tensor with optional reverse-mode gradient tracking.
// Copies are shallow handles onto the same storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, float value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<float> values, bool requires_grad = false);
  static Tensor randn(Shape shape, Rng& rng, float stddev = 1.0f, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t numel() const { return shape().numel(); }

  std::span<const float> data() const;
  // Direct write access; intended for leaves (parameters, fixtures).
  std::span<float> mutable_data();

  float at(int n, int c, int h, int w) const;
  float item() const;

  bool requires_grad() const;
  void set_requires_grad(bool on);
  bool has_grad() const;
  std::span<const float> grad() const;
  std::span<float> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  const std::string& op_name() const;

  // New leaf holding a copy of the values, disconnected from any graph.
  Tensor detach() const;
  Tensor clone() const { return detach(); }

  bool all_finite() const;

  const std::shared_ptr<detail::TensorImpl>& impl() const { return impl_; }
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}

 private:
  void require_defined() const;
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Throws DataError naming `what` when any value is NaN or Inf.
void check_finite(const Tensor& t, const std::string& what);

// Gradient recording is on by default; a NoGradGuard disables it for the
// current thread until it goes out of scope.
bool grad_enabled();
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Topologically ordered view of the graph reachable from a root: every node's
// inputs appear before it.
struct Graph {
  std::vector<std::shared_ptr<detail::TensorImpl>> nodes;
};
Graph build_graph(const Tensor& root);

// Reverse-mode sweep from a 1x1x1x1 loss. Each node is visited once; the graph
// is consumed, so a second call on the same loss is an error.
void backward(const Tensor& loss);

// ---------------------------------------------------------------------------
// Primitive operations. Each records a node when gradients are enabled and any
// input requires grad.

// Cross-correlation. weight is (C_out, C_in, kH, kW); bias is (1, C_out, 1, 1)
// or undefined.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad);

// Adjoint of conv2d w.r.t. its input. weight is (C_in, C_out, kH, kW), i.e. the
// same array a conv2d mapping C_out -> C_in would use.
Tensor transposed_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                         int pad);

// Plain nested-loop forward convolution, no graph. Kept as the reference the
// im2col/GEMM path is checked against.
Tensor conv2d_reference(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int pad);

Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, float slope);
Tensor elu(const Tensor& x, float alpha = 1.0f);
// Saturates at the floats nearest to -1 and 1, never reaching them.
Tensor tanh_act(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// log(1 + exp(x)) in overflow-safe form.
Tensor softplus(const Tensor& x);
Tensor abs_act(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float factor);
Tensor neg(const Tensor& x);
Tensor concat_channels(const Tensor& a, const Tensor& b);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
// (N, C, H, W) -> (N, 1, H, W)
Tensor sum_channels(const Tensor& x);
// Non-overlapping k x k average pooling; H and W must be divisible by k.
Tensor avg_pool(const Tensor& x, int k);

// Inverted dropout: keeps each element with probability 1 - rate and scales the
// survivors by 1 / (1 - rate). The mask is drawn from `rng`.
Tensor dropout(const Tensor& x, float rate, Rng& rng);

// W / sigma with sigma = u^T mat(W) v, mat(W) being (C_out) x (C_in*kH*kW).
// u and v are treated as constants; the gradient flows through sigma.
Tensor divide_by_sigma(const Tensor& weight, std::span<const float> u, std::span<const float> v,
                       float sigma_floor = 1e-12f);

}  // namespace fgan
