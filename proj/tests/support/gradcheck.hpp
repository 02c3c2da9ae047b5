#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fusiongan/rng.hpp"
#include "fusiongan/tensor.hpp"

namespace fgan::testing {

using OpFn = std::function<Tensor(const std::vector<Tensor>&)>;

// Norm-wise relative difference ||a - b|| / max(||a||, ||b||).
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double denom = std::sqrt(std::max(na, nb));
  return denom < 1e-12 ? std::sqrt(diff) : std::sqrt(diff) / denom;
}

inline double dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

inline Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true, float stddev = 1.0f) {
  return Tensor::randn(shape, rng, stddev, requires_grad);
}

// Moves every value at least `gap` away from zero so kinked activations are
// differentiated away from their kinks.
inline Tensor away_from_zero(Tensor t, float gap) {
  for (float& v : t.mutable_data()) {
    if (std::fabs(v) < gap) v = v < 0.0f ? v - gap : v + gap;
  }
  return t;
}

struct GradCheckResult {
  double max_rel_error = 0.0;
  int worst_input = -1;
};

// Compares the analytic gradient of <f(inputs), R> (R a fixed random probe)
// with central differences of step `eps` for every input that requires grad.
inline GradCheckResult grad_check(const OpFn& f, const std::vector<Tensor>& inputs, Rng& rng,
                                  double eps) {
  for (const auto& in : inputs) in.impl()->grad.clear();
  const Tensor out = f(inputs);
  const Tensor probe = Tensor::randn(out.shape(), rng);
  backward(sum(mul(out, probe)));

  GradCheckResult res;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    const Tensor& in = inputs[k];
    if (!in.requires_grad()) continue;
    std::vector<double> analytic(in.numel(), 0.0);
    if (in.has_grad()) {
      auto g = in.grad();
      std::copy(g.begin(), g.end(), analytic.begin());
    }
    std::vector<double> numeric(in.numel());
    NoGradGuard guard;
    auto data = in.impl()->data.data();
    for (std::size_t i = 0; i < in.numel(); ++i) {
      const float saved = data[i];
      data[i] = static_cast<float>(saved + eps);
      const double plus = dot(f(inputs).data(), probe.data());
      data[i] = static_cast<float>(saved - eps);
      const double minus = dot(f(inputs).data(), probe.data());
      data[i] = saved;
      numeric[i] = (plus - minus) / (2.0 * eps);
    }
    const double err = relative_error(analytic, numeric);
    if (err > res.max_rel_error || res.worst_input < 0) {
      res.max_rel_error = std::max(res.max_rel_error, err);
      res.worst_input = static_cast<int>(k);
    }
  }
  return res;
}

// <conv(a), b> against <a, conv^T(b)> for one random geometry.
inline double conv_adjoint_error(Rng& rng, int c_in, int c_out, int size, int kernel, int stride,
                                 int pad) {
  const Tensor a = Tensor::randn({2, c_in, size, size}, rng);
  const Tensor w = Tensor::randn({c_out, c_in, kernel, kernel}, rng);
  const Tensor ca = conv2d(a, w, Tensor(), stride, pad);
  const Tensor b = Tensor::randn(ca.shape(), rng);
  const Tensor tb = transposed_conv2d(b, w, Tensor(), stride, pad);
  if (tb.shape() != a.shape()) return 1.0;
  const double lhs = dot(ca.data(), b.data());
  const double rhs = dot(a.data(), tb.data());
  return std::fabs(lhs - rhs) / std::max({std::fabs(lhs), std::fabs(rhs), 1e-12});
}

}  // namespace fgan::testing

namespace fgan::testing {

// Top singular value of the (rows) x (rest) matricization by plain power
// iteration in double precision.
inline double top_singular_value(const Tensor& w, int iters = 1000, bool rows_first = true) {
  const Shape& s = w.shape();
  const int rows = rows_first ? s.n : s.c;
  const int cols = static_cast<int>(w.numel()) / rows;
  std::vector<double> m(w.numel());
  if (rows_first) {
    std::copy(w.data().begin(), w.data().end(), m.begin());
  } else {
    const int k = s.h * s.w;
    for (int a = 0; a < s.n; ++a) {
      for (int b = 0; b < s.c; ++b) {
        for (int q = 0; q < k; ++q) {
          m[(static_cast<std::size_t>(b) * s.n + a) * k + q] = w.data()[(static_cast<std::size_t>(a) * s.c + b) * k + q];
        }
      }
    }
  }
  std::vector<double> v(cols, 1.0 / std::sqrt(static_cast<double>(cols)));
  std::vector<double> u(rows);
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += m[static_cast<std::size_t>(i) * cols + j] * v[j];
      u[i] = acc;
    }
    double nu = 0.0;
    for (double e : u) nu += e * e;
    nu = std::sqrt(nu);
    if (nu == 0.0) return 0.0;
    for (double& e : u) e /= nu;
    std::fill(v.begin(), v.end(), 0.0);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < cols; ++j) v[j] += m[static_cast<std::size_t>(i) * cols + j] * u[i];
    }
    double nv = 0.0;
    for (double e : v) nv += e * e;
    sigma = std::sqrt(nv);
    for (double& e : v) e /= sigma;
  }
  return sigma;
}

}  // namespace fgan::testing
