#pragma once

// Internal helpers shared by the op implementations.

#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "fusiongan/tensor.hpp"

namespace fgan::detail {

inline bool any_requires_grad(std::initializer_list<const Tensor*> inputs) {
  if (!grad_enabled()) return false;
  for (const Tensor* t : inputs) {
    if (t && t->defined() && t->requires_grad()) return true;
  }
  return false;
}

// Wraps freshly computed values in a tensor, recording a node when any of the
// inputs is tracked.
inline Tensor make_result(Shape shape, std::vector<float> data, std::string op,
                          std::initializer_list<const Tensor*> inputs,
                          std::function<void(const TensorImpl&)> bw) {
  auto impl = std::make_shared<TensorImpl>();
  impl->shape = shape;
  impl->data = std::move(data);
  if (any_requires_grad(inputs)) {
    impl->requires_grad = true;
    auto node = std::make_shared<Node>();
    node->op = std::move(op);
    for (const Tensor* t : inputs) {
      if (t && t->defined()) node->inputs.push_back(t->impl());
    }
    node->backward = std::move(bw);
    impl->grad_fn = std::move(node);
  }
  return Tensor(std::move(impl));
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

// Row-major single-precision GEMM: C = alpha * op(A) * op(B) + beta * C.
void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc);

}  // namespace fgan::detail
