#include <cblas.h>

#include <mutex>

#include "fusiongan/tensor.hpp"
#include "op_support.hpp"

namespace fgan {

using detail::make_result;
using detail::TensorImpl;

namespace detail {

void sgemm(bool trans_a, bool trans_b, int m, int n, int k, float alpha, const float* a, int lda,
           const float* b, int ldb, float beta, float* c, int ldc) {
  // A fixed single-threaded BLAS keeps reduction order, and hence results,
  // bitwise reproducible.
  static std::once_flag once;
  std::call_once(once, [] { openblas_set_num_threads(1); });
  cblas_sgemm(CblasRowMajor, trans_a ? CblasTrans : CblasNoTrans, trans_b ? CblasTrans : CblasNoTrans,
              m, n, k, alpha, a, lda, b, ldb, beta, c, ldc);
}

}  // namespace detail

namespace {

struct ConvGeometry {
  int channels;  // channels of the "image" side being unfolded
  int height;
  int width;
  int kernel_h;
  int kernel_w;
  int stride;
  int pad;
  int out_h;
  int out_w;

  int rows() const { return channels * kernel_h * kernel_w; }
  int cols() const { return out_h * out_w; }
};

int conv_out_extent(int in, int k, int stride, int pad, const char* op, const Shape& in_shape,
                    const Shape& w_shape) {
  const int span = in + 2 * pad - k;
  if (stride <= 0 || pad < 0) {
    throw ConfigError(std::string(op) + ": stride must be positive and pad non-negative");
  }
  if (span < 0 || span % stride != 0) {
    throw ConfigError(std::string(op) + ": output size (" + std::to_string(in) + " + 2*" +
                      std::to_string(pad) + " - " + std::to_string(k) + ")/" +
                      std::to_string(stride) + " + 1 is not a positive integer for input " +
                      in_shape.str() + " and weight " + w_shape.str());
  }
  return span / stride + 1;
}

void im2col(const float* img, const ConvGeometry& g, float* col) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        float* dst = col + static_cast<std::size_t>((c * g.kernel_h + ki) * g.kernel_w + kj) * cols;
        for (int oi = 0; oi < g.out_h; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          float* row = dst + oi * g.out_w;
          if (ii < 0 || ii >= g.height) {
            std::fill_n(row, g.out_w, 0.0f);
            continue;
          }
          const float* src = img + (static_cast<std::size_t>(c) * g.height + ii) * g.width;
          for (int oj = 0; oj < g.out_w; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            row[oj] = (jj >= 0 && jj < g.width) ? src[jj] : 0.0f;
          }
        }
      }
    }
  }
}

// Scatter-add of columns back onto the image (adjoint of im2col).
void col2im(const float* col, const ConvGeometry& g, float* img) {
  const int cols = g.cols();
  for (int c = 0; c < g.channels; ++c) {
    for (int ki = 0; ki < g.kernel_h; ++ki) {
      for (int kj = 0; kj < g.kernel_w; ++kj) {
        const float* src =
            col + static_cast<std::size_t>((c * g.kernel_h + ki) * g.kernel_w + kj) * cols;
        for (int oi = 0; oi < g.out_h; ++oi) {
          const int ii = oi * g.stride - g.pad + ki;
          if (ii < 0 || ii >= g.height) continue;
          float* dst = img + (static_cast<std::size_t>(c) * g.height + ii) * g.width;
          const float* row = src + oi * g.out_w;
          for (int oj = 0; oj < g.out_w; ++oj) {
            const int jj = oj * g.stride - g.pad + kj;
            if (jj >= 0 && jj < g.width) dst[jj] += row[oj];
          }
        }
      }
    }
  }
}

void check_bias(const Tensor& bias, int channels, const char* op) {
  if (!bias.defined()) return;
  if (bias.shape() != Shape{1, channels, 1, 1}) {
    throw DimensionError(std::string(op) + ": bias " + bias.shape().str() + " does not match " +
                         std::to_string(channels) + " output channels");
  }
}

void add_bias(std::vector<float>& out, const Shape& so, const Tensor& bias) {
  if (!bias.defined()) return;
  std::span<const float> b = bias.data();
  const std::size_t plane = so.plane();
  for (int n = 0; n < so.n; ++n) {
    for (int c = 0; c < so.c; ++c) {
      float* dst = out.data() + (static_cast<std::size_t>(n) * so.c + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) dst[i] += b[c];
    }
  }
}

void accumulate_bias_grad(TensorImpl* bias, const std::vector<float>& grad_out, const Shape& so) {
  if (!bias || !bias->requires_grad) return;
  auto& gb = bias->grad_buffer();
  const std::size_t plane = so.plane();
  for (int n = 0; n < so.n; ++n) {
    for (int c = 0; c < so.c; ++c) {
      const float* src = grad_out.data() + (static_cast<std::size_t>(n) * so.c + c) * plane;
      float acc = 0.0f;
      for (std::size_t i = 0; i < plane; ++i) acc += src[i];
      gb[c] += acc;
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride, int pad) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (si.c != sw.c) {
    throw DimensionError("conv2d: input " + si.str() + " has " + std::to_string(si.c) +
                         " channels but weight " + sw.str() + " expects " + std::to_string(sw.c));
  }
  check_bias(bias, sw.n, "conv2d");
  const int oh = conv_out_extent(si.h, sw.h, stride, pad, "conv2d", si, sw);
  const int ow = conv_out_extent(si.w, sw.w, stride, pad, "conv2d", si, sw);
  const ConvGeometry g{si.c, si.h, si.w, sw.h, sw.w, stride, pad, oh, ow};
  const Shape so{si.n, sw.n, oh, ow};

  std::vector<float> out(so.numel());
  std::vector<float> col(static_cast<std::size_t>(g.rows()) * g.cols());
  std::span<const float> x = input.data();
  std::span<const float> w = weight.data();
  const std::size_t in_block = static_cast<std::size_t>(si.c) * si.plane();
  const std::size_t out_block = static_cast<std::size_t>(so.c) * so.plane();
  for (int n = 0; n < si.n; ++n) {
    im2col(x.data() + n * in_block, g, col.data());
    detail::sgemm(false, false, sw.n, g.cols(), g.rows(), 1.0f, w.data(), g.rows(), col.data(),
                  g.cols(), 0.0f, out.data() + n * out_block, g.cols());
  }
  add_bias(out, so, bias);

  auto xi = input.impl();
  auto wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result(
      so, std::move(out), "conv2d", {&input, &weight, &bias},
      [xi, wi, bi, g, si, so, in_block, out_block](const TensorImpl& o) {
        std::vector<float> col(static_cast<std::size_t>(g.rows()) * g.cols());
        const int c_out = so.c;
        for (int n = 0; n < si.n; ++n) {
          const float* go = o.grad.data() + n * out_block;
          if (wi->requires_grad) {
            im2col(xi->data.data() + n * in_block, g, col.data());
            // dW += G_n * col^T
            detail::sgemm(false, true, c_out, g.rows(), g.cols(), 1.0f, go, g.cols(), col.data(),
                          g.cols(), 1.0f, wi->grad_buffer().data(), g.rows());
          }
          if (xi->requires_grad) {
            // dcol = W^T * G_n, then fold back onto the input.
            detail::sgemm(true, false, g.rows(), g.cols(), c_out, 1.0f, wi->data.data(), g.rows(),
                          go, g.cols(), 0.0f, col.data(), g.cols());
            col2im(col.data(), g, xi->grad_buffer().data() + n * in_block);
          }
        }
        accumulate_bias_grad(bi.get(), o.grad, so);
      });
}

Tensor transposed_conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                         int pad) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (si.c != sw.n) {
    throw DimensionError("transposed_conv2d: input " + si.str() + " has " + std::to_string(si.c) +
                         " channels but weight " + sw.str() + " expects " + std::to_string(sw.n));
  }
  if (stride <= 0 || pad < 0) {
    throw ConfigError("transposed_conv2d: stride must be positive and pad non-negative");
  }
  check_bias(bias, sw.c, "transposed_conv2d");
  const int oh = (si.h - 1) * stride - 2 * pad + sw.h;
  const int ow = (si.w - 1) * stride - 2 * pad + sw.w;
  if (oh <= 0 || ow <= 0) {
    throw ConfigError("transposed_conv2d: non-positive output size for input " + si.str() +
                      " and weight " + sw.str());
  }
  // Geometry of the equivalent forward conv mapping the output back to the input.
  const ConvGeometry g{sw.c, oh, ow, sw.h, sw.w, stride, pad, si.h, si.w};
  const Shape so{si.n, sw.c, oh, ow};

  std::vector<float> out(so.numel(), 0.0f);
  std::vector<float> col(static_cast<std::size_t>(g.rows()) * g.cols());
  std::span<const float> x = input.data();
  std::span<const float> w = weight.data();
  const std::size_t in_block = static_cast<std::size_t>(si.c) * si.plane();
  const std::size_t out_block = static_cast<std::size_t>(so.c) * so.plane();
  for (int n = 0; n < si.n; ++n) {
    // col = W^T * X_n, W viewed as (C_in) x (C_out*k*k)
    detail::sgemm(true, false, g.rows(), g.cols(), si.c, 1.0f, w.data(), g.rows(),
                  x.data() + n * in_block, g.cols(), 0.0f, col.data(), g.cols());
    col2im(col.data(), g, out.data() + n * out_block);
  }
  add_bias(out, so, bias);

  auto xi = input.impl();
  auto wi = weight.impl();
  auto bi = bias.defined() ? bias.impl() : nullptr;
  return make_result(
      so, std::move(out), "transposed_conv2d", {&input, &weight, &bias},
      [xi, wi, bi, g, si, so, in_block, out_block](const TensorImpl& o) {
        std::vector<float> col(static_cast<std::size_t>(g.rows()) * g.cols());
        for (int n = 0; n < si.n; ++n) {
          im2col(o.grad.data() + n * out_block, g, col.data());
          if (xi->requires_grad) {
            // dX_n = W * col
            detail::sgemm(false, false, si.c, g.cols(), g.rows(), 1.0f, wi->data.data(), g.rows(),
                          col.data(), g.cols(), 1.0f, xi->grad_buffer().data() + n * in_block,
                          g.cols());
          }
          if (wi->requires_grad) {
            // dW += X_n * col^T
            detail::sgemm(false, true, si.c, g.rows(), g.cols(), 1.0f,
                          xi->data.data() + n * in_block, g.cols(), col.data(), g.cols(), 1.0f,
                          wi->grad_buffer().data(), g.rows());
          }
        }
        accumulate_bias_grad(bi.get(), o.grad, so);
      });
}

Tensor conv2d_reference(const Tensor& input, const Tensor& weight, const Tensor& bias, int stride,
                        int pad) {
  const Shape& si = input.shape();
  const Shape& sw = weight.shape();
  if (si.c != sw.c) {
    throw DimensionError("conv2d_reference: input " + si.str() + " vs weight " + sw.str());
  }
  check_bias(bias, sw.n, "conv2d_reference");
  const int oh = conv_out_extent(si.h, sw.h, stride, pad, "conv2d_reference", si, sw);
  const int ow = conv_out_extent(si.w, sw.w, stride, pad, "conv2d_reference", si, sw);
  const Shape so{si.n, sw.n, oh, ow};
  std::vector<float> out(so.numel(), 0.0f);
  for (int n = 0; n < si.n; ++n) {
    for (int co = 0; co < sw.n; ++co) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          float acc = bias.defined() ? bias.data()[co] : 0.0f;
          for (int ci = 0; ci < si.c; ++ci) {
            for (int ki = 0; ki < sw.h; ++ki) {
              const int ii = i * stride - pad + ki;
              if (ii < 0 || ii >= si.h) continue;
              for (int kj = 0; kj < sw.w; ++kj) {
                const int jj = j * stride - pad + kj;
                if (jj < 0 || jj >= si.w) continue;
                acc += input.at(n, ci, ii, jj) * weight.at(co, ci, ki, kj);
              }
            }
          }
          out[((static_cast<std::size_t>(n) * sw.n + co) * oh + i) * ow + j] = acc;
        }
      }
    }
  }
  return Tensor::from(so, std::move(out));
}

}  // namespace fgan
