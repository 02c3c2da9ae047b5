#include "fusiongan/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

#include "fusiongan/rng.hpp"

namespace fgan {

namespace {
thread_local bool g_grad_enabled = true;
}

std::string Shape::str() const {
  return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" +
         std::to_string(w);
}

namespace {
void validate_shape(const Shape& s) {
  if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0) {
    throw DimensionError("tensor dims must be positive, got " + s.str());
  }
}
}  // namespace

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(shape, 0.0f, requires_grad); }

Tensor Tensor::full(Shape shape, float value, bool requires_grad) {
  validate_shape(shape);
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data.assign(shape.numel(), value);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(Shape shape, std::vector<float> values, bool requires_grad) {
  validate_shape(shape);
  if (values.size() != shape.numel()) {
    throw DimensionError("tensor " + shape.str() + " needs " + std::to_string(shape.numel()) +
                         " values, got " + std::to_string(values.size()));
  }
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(values);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::randn(Shape shape, Rng& rng, float stddev, bool requires_grad) {
  validate_shape(shape);
  std::vector<float> v(shape.numel());
  for (auto& x : v) x = static_cast<float>(rng.normal() * stddev);
  return from(shape, std::move(v), requires_grad);
}

void Tensor::require_defined() const {
  if (!impl_) throw GraphError("operation on an undefined tensor");
}

const Shape& Tensor::shape() const {
  require_defined();
  return impl_->shape;
}

std::span<const float> Tensor::data() const {
  require_defined();
  return impl_->data;
}

std::span<float> Tensor::mutable_data() {
  require_defined();
  return impl_->data;
}

float Tensor::at(int n, int c, int h, int w) const {
  const Shape& s = shape();
  return impl_->data[((static_cast<std::size_t>(n) * s.c + c) * s.h + h) * s.w + w];
}

float Tensor::item() const {
  if (numel() != 1) throw DimensionError("item() on non-scalar tensor " + shape().str());
  return impl_->data[0];
}

bool Tensor::requires_grad() const { return impl_ && impl_->requires_grad; }

void Tensor::set_requires_grad(bool on) {
  require_defined();
  impl_->requires_grad = on;
}

bool Tensor::has_grad() const { return impl_ && !impl_->grad.empty(); }

std::span<const float> Tensor::grad() const {
  require_defined();
  return impl_->grad;
}

std::span<float> Tensor::mutable_grad() {
  require_defined();
  return impl_->grad_buffer();
}

void Tensor::zero_grad() {
  require_defined();
  impl_->grad.clear();
}

bool Tensor::is_leaf() const { return impl_ && impl_->grad_fn == nullptr; }

const std::string& Tensor::op_name() const {
  static const std::string leaf;
  require_defined();
  return impl_->grad_fn ? impl_->grad_fn->op : leaf;
}

Tensor Tensor::detach() const {
  require_defined();
  return from(impl_->shape, impl_->data, false);
}

bool Tensor::all_finite() const {
  require_defined();
  return std::all_of(impl_->data.begin(), impl_->data.end(),
                     [](float v) { return std::isfinite(v); });
}

void check_finite(const Tensor& t, const std::string& what) {
  if (!t.all_finite()) throw DataError(what + " contains NaN or Inf");
}

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Graph build_graph(const Tensor& root) {
  Graph graph;
  if (!root.defined()) return graph;
  std::unordered_set<const detail::TensorImpl*> seen;
  // Iterative post-order DFS so deep networks cannot overflow the stack.
  struct Frame {
    std::shared_ptr<detail::TensorImpl> impl;
    std::size_t next_input;
  };
  std::vector<Frame> stack;
  stack.push_back({root.impl(), 0});
  seen.insert(root.impl().get());
  while (!stack.empty()) {
    Frame& top = stack.back();
    const auto& fn = top.impl->grad_fn;
    if (fn && top.next_input < fn->inputs.size()) {
      auto child = fn->inputs[top.next_input++];
      if (child && child->requires_grad && seen.insert(child.get()).second) {
        stack.push_back({std::move(child), 0});
      }
      continue;
    }
    graph.nodes.push_back(std::move(top.impl));
    stack.pop_back();
  }
  return graph;
}

void backward(const Tensor& loss) {
  if (!loss.defined()) throw GraphError("backward on an undefined tensor");
  if (loss.shape() != Shape{1, 1, 1, 1}) {
    throw DimensionError("backward needs a 1x1x1x1 loss, got " + loss.shape().str());
  }
  if (!loss.requires_grad()) {
    throw GraphError("backward on a detached graph: loss does not require grad");
  }
  const auto& root_fn = loss.impl()->grad_fn;
  if (root_fn && root_fn->consumed) {
    throw GraphError("backward called twice on the same graph without rebuilding it");
  }

  Graph graph = build_graph(loss);
  loss.impl()->grad_buffer()[0] += 1.0f;
  for (auto it = graph.nodes.rbegin(); it != graph.nodes.rend(); ++it) {
    detail::TensorImpl& impl = **it;
    if (!impl.grad_fn) continue;
    if (impl.grad_fn->consumed) {
      throw GraphError("graph segment '" + impl.grad_fn->op + "' was already consumed");
    }
    if (!impl.grad.empty() && impl.grad_fn->backward) impl.grad_fn->backward(impl);
    impl.grad_fn->consumed = true;
    impl.grad_fn->backward = nullptr;
  }
}

}  // namespace fgan
