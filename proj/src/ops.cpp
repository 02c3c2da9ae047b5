#include <algorithm>
#include <cmath>
#include <numeric>

#include "fusiongan/rng.hpp"
#include "fusiongan/tensor.hpp"
#include "op_support.hpp"

namespace fgan {

using detail::make_result;
using detail::TensorImpl;

namespace {

constexpr float kTanhBound = 1.0f - 0x1.0p-24f;

// f computes the value; df(x, y) the local derivative given input and output.
template <class F, class DF>
Tensor unary(const Tensor& x, const char* op, F f, DF df) {
  std::span<const float> in = x.data();
  std::vector<float> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = f(in[i]);
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), op, {&x}, [xi, df](const TensorImpl& o) {
    auto& g = xi->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * df(xi->data[i], o.data[i]);
  });
}

}  // namespace

Tensor relu(const Tensor& x) {
  // Subgradient at exactly 0 is 0.
  return unary(
      x, "relu", [](float v) { return v > 0.0f ? v : 0.0f; },
      [](float v, float) { return v > 0.0f ? 1.0f : 0.0f; });
}

Tensor leaky_relu(const Tensor& x, float slope) {
  return unary(
      x, "leaky_relu", [slope](float v) { return v > 0.0f ? v : slope * v; },
      [slope](float v, float) { return v > 0.0f ? 1.0f : slope; });
}

Tensor elu(const Tensor& x, float alpha) {
  return unary(
      x, "elu", [alpha](float v) { return v > 0.0f ? v : alpha * std::expm1(v); },
      [alpha](float v, float y) { return v > 0.0f ? 1.0f : y + alpha; });
}

Tensor tanh_act(const Tensor& x) {
  return unary(
      x, "tanh", [](float v) { return std::clamp(std::tanh(v), -kTanhBound, kTanhBound); },
      [](float, float y) { return 1.0f - y * y; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x, "sigmoid",
      [](float v) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      },
      [](float, float y) { return y * (1.0f - y); });
}

Tensor softplus(const Tensor& x) {
  return unary(
      x, "softplus",
      [](float v) { return std::max(v, 0.0f) + std::log1p(std::exp(-std::fabs(v))); },
      [](float v, float) {
        if (v >= 0.0f) return 1.0f / (1.0f + std::exp(-v));
        const float e = std::exp(v);
        return e / (1.0f + e);
      });
}

Tensor abs_act(const Tensor& x) {
  return unary(
      x, "abs", [](float v) { return std::fabs(v); },
      [](float v, float) { return v > 0.0f ? 1.0f : (v < 0.0f ? -1.0f : 0.0f); });
}

Tensor scale(const Tensor& x, float factor) {
  return unary(
      x, "scale", [factor](float v) { return v * factor; }, [factor](float, float) { return factor; });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0f); }

Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::span<const float> av = a.data();
  std::span<const float> bv = b.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(a.shape(), std::move(out), "add", {&a, &b}, [ai, bi](const TensorImpl& o) {
    for (auto* t : {ai.get(), bi.get()}) {
      if (!t->requires_grad) continue;
      auto& g = t->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::span<const float> av = a.data();
  std::span<const float> bv = b.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(a.shape(), std::move(out), "sub", {&a, &b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= o.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::span<const float> av = a.data();
  std::span<const float> bv = b.data();
  std::vector<float> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(a.shape(), std::move(out), "mul", {&a, &b}, [ai, bi](const TensorImpl& o) {
    if (ai->requires_grad) {
      auto& g = ai->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * bi->data[i];
    }
    if (bi->requires_grad) {
      auto& g = bi->grad_buffer();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * ai->data[i];
    }
  });
}

Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw DimensionError("concat_channels: N/H/W mismatch " + sa.str() + " vs " + sb.str());
  }
  const Shape so{sa.n, sa.c + sb.c, sa.h, sa.w};
  const std::size_t block_a = static_cast<std::size_t>(sa.c) * sa.plane();
  const std::size_t block_b = static_cast<std::size_t>(sb.c) * sb.plane();
  std::vector<float> out(so.numel());
  std::span<const float> av = a.data();
  std::span<const float> bv = b.data();
  for (int n = 0; n < sa.n; ++n) {
    std::copy_n(av.begin() + n * block_a, block_a, out.begin() + n * (block_a + block_b));
    std::copy_n(bv.begin() + n * block_b, block_b, out.begin() + n * (block_a + block_b) + block_a);
  }
  auto ai = a.impl();
  auto bi = b.impl();
  return make_result(so, std::move(out), "concat_channels", {&a, &b},
                     [ai, bi, block_a, block_b, n_batch = sa.n](const TensorImpl& o) {
                       for (int n = 0; n < n_batch; ++n) {
                         const float* src = o.grad.data() + n * (block_a + block_b);
                         if (ai->requires_grad) {
                           float* g = ai->grad_buffer().data() + n * block_a;
                           for (std::size_t i = 0; i < block_a; ++i) g[i] += src[i];
                         }
                         if (bi->requires_grad) {
                           float* g = bi->grad_buffer().data() + n * block_b;
                           for (std::size_t i = 0; i < block_b; ++i) g[i] += src[block_a + i];
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  std::span<const float> v = x.data();
  const float total = static_cast<float>(std::accumulate(v.begin(), v.end(), 0.0));
  auto xi = x.impl();
  return make_result(Shape{1, 1, 1, 1}, {total}, "sum", {&x}, [xi](const TensorImpl& o) {
    auto& g = xi->grad_buffer();
    for (auto& gi : g) gi += o.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  std::span<const float> v = x.data();
  const float inv = 1.0f / static_cast<float>(v.size());
  const float total =
      static_cast<float>(std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()));
  auto xi = x.impl();
  return make_result(Shape{1, 1, 1, 1}, {total}, "mean", {&x}, [xi, inv](const TensorImpl& o) {
    auto& g = xi->grad_buffer();
    const float d = o.grad[0] * inv;
    for (auto& gi : g) gi += d;
  });
}

Tensor sum_channels(const Tensor& x) {
  const Shape& s = x.shape();
  const Shape so{s.n, 1, s.h, s.w};
  const std::size_t plane = s.plane();
  std::vector<float> out(so.numel(), 0.0f);
  std::span<const float> v = x.data();
  for (int n = 0; n < s.n; ++n) {
    for (int c = 0; c < s.c; ++c) {
      const float* src = v.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
      float* dst = out.data() + n * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
    }
  }
  auto xi = x.impl();
  return make_result(so, std::move(out), "sum_channels", {&x}, [xi, s, plane](const TensorImpl& o) {
    auto& g = xi->grad_buffer();
    for (int n = 0; n < s.n; ++n) {
      for (int c = 0; c < s.c; ++c) {
        float* dst = g.data() + (static_cast<std::size_t>(n) * s.c + c) * plane;
        const float* src = o.grad.data() + n * plane;
        for (std::size_t i = 0; i < plane; ++i) dst[i] += src[i];
      }
    }
  });
}

Tensor avg_pool(const Tensor& x, int k) {
  const Shape& s = x.shape();
  if (k <= 0 || s.h % k != 0 || s.w % k != 0) {
    throw ConfigError("avg_pool: window " + std::to_string(k) + " does not tile " + s.str());
  }
  const Shape so{s.n, s.c, s.h / k, s.w / k};
  const float inv = 1.0f / static_cast<float>(k * k);
  std::vector<float> out(so.numel(), 0.0f);
  std::span<const float> v = x.data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    for (int i = 0; i < s.h; ++i) {
      for (int j = 0; j < s.w; ++j) {
        out[(static_cast<std::size_t>(nc) * so.h + i / k) * so.w + j / k] +=
            v[(static_cast<std::size_t>(nc) * s.h + i) * s.w + j] * inv;
      }
    }
  }
  auto xi = x.impl();
  return make_result(so, std::move(out), "avg_pool", {&x}, [xi, s, so, k, inv](const TensorImpl& o) {
    auto& g = xi->grad_buffer();
    for (int nc = 0; nc < s.n * s.c; ++nc) {
      for (int i = 0; i < s.h; ++i) {
        for (int j = 0; j < s.w; ++j) {
          g[(static_cast<std::size_t>(nc) * s.h + i) * s.w + j] +=
              o.grad[(static_cast<std::size_t>(nc) * so.h + i / k) * so.w + j / k] * inv;
        }
      }
    }
  });
}

Tensor dropout(const Tensor& x, float rate, Rng& rng) {
  if (rate < 0.0f || rate >= 1.0f) {
    throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
  }
  if (rate == 0.0f) return x;
  const float keep_scale = 1.0f / (1.0f - rate);
  std::vector<float> mask(x.numel());
  for (auto& m : mask) m = rng.uniform() >= rate ? keep_scale : 0.0f;
  std::span<const float> v = x.data();
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = v[i] * mask[i];
  auto xi = x.impl();
  return make_result(x.shape(), std::move(out), "dropout", {&x},
                     [xi, mask = std::move(mask)](const TensorImpl& o) {
                       auto& g = xi->grad_buffer();
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += o.grad[i] * mask[i];
                     });
}

Tensor divide_by_sigma(const Tensor& weight, std::span<const float> u, std::span<const float> v,
                       float sigma_floor) {
  const Shape& s = weight.shape();
  const int rows = s.n;
  const int cols = s.c * s.h * s.w;
  if (static_cast<int>(u.size()) != rows || static_cast<int>(v.size()) != cols) {
    throw DimensionError("divide_by_sigma: u/v lengths " + std::to_string(u.size()) + "/" +
                         std::to_string(v.size()) + " do not match weight " + s.str());
  }
  std::span<const float> w = weight.data();
  float sigma = 0.0f;
  for (int r = 0; r < rows; ++r) {
    float row = 0.0f;
    for (int c = 0; c < cols; ++c) row += w[static_cast<std::size_t>(r) * cols + c] * v[c];
    sigma += u[r] * row;
  }
  const bool clamped = !(sigma > sigma_floor);
  if (clamped) sigma = sigma_floor;
  std::vector<float> out(w.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w[i] / sigma;
  auto wi = weight.impl();
  std::vector<float> uu(u.begin(), u.end());
  std::vector<float> vv(v.begin(), v.end());
  return make_result(
      s, std::move(out), "divide_by_sigma", {&weight},
      [wi, uu = std::move(uu), vv = std::move(vv), sigma, rows, cols, clamped](const TensorImpl& o) {
        // d(W/s)/dW applied to G: G/s - (<G, W>/s^2) u v^T. A clamped sigma is a
        // constant, so only the first term survives.
        auto& g = wi->grad_buffer();
        float inner = 0.0f;
        for (std::size_t i = 0; i < g.size(); ++i) inner += o.grad[i] * wi->data[i];
        const float coef = clamped ? 0.0f : inner / (sigma * sigma);
        for (int r = 0; r < rows; ++r) {
          for (int c = 0; c < cols; ++c) {
            const std::size_t i = static_cast<std::size_t>(r) * cols + c;
            g[i] += o.grad[i] / sigma - coef * uu[r] * vv[c];
          }
        }
      });
}

}  // namespace fgan
