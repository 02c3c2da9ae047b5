#include "fusiongan/layers.hpp"

#include <cmath>

#include "op_support.hpp"

namespace fgan {

std::string to_string(Activation a) {
  switch (a) {
    case Activation::None: return "none";
    case Activation::Relu: return "relu";
    case Activation::LeakyRelu: return "leaky_relu";
    case Activation::Tanh: return "tanh";
  }
  return "?";
}

void ConvBlockSpec::validate() const {
  if (in_channels <= 0 || out_channels <= 0) {
    throw ConfigError("conv block channels must be positive (in=" + std::to_string(in_channels) +
                      ", out=" + std::to_string(out_channels) + ")");
  }
  if (kernel <= 0 || stride <= 0 || pad < 0) {
    throw ConfigError("conv block kernel/stride must be positive and pad non-negative");
  }
  if (dropout_rate < 0.0f || dropout_rate >= 1.0f) {
    throw ConfigError("dropout rate must lie in [0, 1)");
  }
}

Shape ConvBlockSpec::weight_shape() const {
  // Transposed blocks store weight as (C_in, C_out, k, k).
  return transposed ? Shape{in_channels, out_channels, kernel, kernel}
                    : Shape{out_channels, in_channels, kernel, kernel};
}

ConvParams init_weights(const ConvBlockSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  ConvParams p;
  p.weight = Tensor::randn(spec.weight_shape(), rng, kInitStddev, true);
  p.bias = Tensor::zeros(Shape{1, spec.out_channels, 1, 1}, true);
  return p;
}

namespace {

struct MatrixView {
  std::span<const float> w;
  int rows;
  int cols;
};

MatrixView matricize(const Tensor& weight) {
  const Shape& s = weight.shape();
  return {weight.data(), s.n, s.c * s.h * s.w};
}

// dst = normalize(src); returns the pre-normalization norm. Leaves dst
// untouched if the norm vanishes.
float normalize_into(const std::vector<double>& src, std::vector<float>& dst) {
  double norm2 = 0.0;
  for (double x : src) norm2 += x * x;
  const double norm = std::sqrt(norm2);
  if (norm < kSigmaEpsilon) return 0.0f;
  dst.resize(src.size());
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<float>(src[i] / norm);
  return static_cast<float>(norm);
}

void update_v(const MatrixView& m, const std::vector<float>& u, std::vector<float>& v) {
  std::vector<double> wtu(m.cols, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const float* row = m.w.data() + static_cast<std::size_t>(r) * m.cols;
    for (int c = 0; c < m.cols; ++c) wtu[c] += static_cast<double>(row[c]) * u[r];
  }
  if (normalize_into(wtu, v) == 0.0f && v.empty()) v.assign(m.cols, 0.0f);
}

std::vector<double> mat_vec(const MatrixView& m, const std::vector<float>& v) {
  std::vector<double> wv(m.rows, 0.0);
  for (int r = 0; r < m.rows; ++r) {
    const float* row = m.w.data() + static_cast<std::size_t>(r) * m.cols;
    double acc = 0.0;
    for (int c = 0; c < m.cols; ++c) acc += static_cast<double>(row[c]) * v[c];
    wv[r] = acc;
  }
  return wv;
}

void refresh_sigma(const MatrixView& m, SpectralState& s) {
  const std::vector<double> wv = mat_vec(m, s.v);
  double sigma = 0.0;
  for (int r = 0; r < m.rows; ++r) sigma += s.u[r] * wv[r];
  s.degenerate = !(sigma > kSigmaEpsilon);
  s.sigma_estimate = s.degenerate ? kSigmaEpsilon : static_cast<float>(sigma);
}

// Converges u (and v) to the top singular pair by power iteration on the
// smaller Gram matrix, W W^T or W^T W.
void warm_start(const MatrixView& m, SpectralState& s) {
  const bool by_rows = m.rows <= m.cols;
  const int n = by_rows ? m.rows : m.cols;
  std::vector<float> gram(static_cast<std::size_t>(n) * n);
  if (by_rows) {
    detail::sgemm(false, true, n, n, m.cols, 1.0f, m.w.data(), m.cols, m.w.data(), m.cols, 0.0f,
                  gram.data(), n);
  } else {
    detail::sgemm(true, false, n, n, m.rows, 1.0f, m.w.data(), m.cols, m.w.data(), m.cols, 0.0f,
                  gram.data(), n);
  }
  std::vector<double> x(n);
  if (by_rows) {
    for (int i = 0; i < n; ++i) x[i] = s.u[i];
  } else {
    for (int i = 0; i < n; ++i) x[i] = s.v.empty() ? 1.0 : s.v[i];
  }
  std::vector<double> gx(n);
  for (int it = 0; it < kWarmStartMaxIters; ++it) {
    double lambda = 0.0;
    double norm2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const float* row = gram.data() + static_cast<std::size_t>(i) * n;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) acc += static_cast<double>(row[j]) * x[j];
      gx[i] = acc;
      lambda += acc * x[i];
      norm2 += acc * acc;
    }
    const double norm = std::sqrt(norm2);
    if (norm < kSigmaEpsilon) return;
    double residual2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double r = gx[i] - lambda * x[i];
      residual2 += r * r;
      x[i] = gx[i] / norm;
    }
    if (std::sqrt(residual2) <= kWarmStartTolerance * lambda) break;
  }
  if (by_rows) {
    normalize_into(x, s.u);
    update_v(m, s.u, s.v);
  } else {
    std::vector<float> v(x.begin(), x.end());
    normalize_into(mat_vec(m, v), s.u);
    update_v(m, s.u, s.v);
  }
}

}  // namespace

SpectralState init_spectral_state(const Tensor& weight, std::uint64_t seed, int iters_per_step) {
  const MatrixView m = matricize(weight);
  SpectralState s;
  s.power_iters_per_step = iters_per_step;
  Rng rng(seed);
  std::vector<double> u0(m.rows);
  for (auto& x : u0) x = rng.normal();
  if (normalize_into(u0, s.u) == 0.0f) s.u.assign(m.rows, 1.0f / std::sqrt(float(m.rows)));
  update_v(m, s.u, s.v);
  refresh_sigma(m, s);
  return s;
}

void power_iterate(const Tensor& weight, SpectralState& state) {
  const MatrixView m = matricize(weight);
  if (!state.initialized()) state = init_spectral_state(weight, 0, state.power_iters_per_step);
  if (static_cast<int>(state.u.size()) != m.rows) {
    throw DimensionError("spectral state u has length " + std::to_string(state.u.size()) +
                         " but weight " + weight.shape().str() + " has " + std::to_string(m.rows) +
                         " rows");
  }
  if (!state.warm) {
    warm_start(m, state);
    state.warm = true;
  }
  for (int it = 0; it < state.power_iters_per_step; ++it) {
    update_v(m, state.u, state.v);
    normalize_into(mat_vec(m, state.v), state.u);
  }
  refresh_sigma(m, state);
}

Tensor spectral_weight(const Tensor& weight, const SpectralState& state) {
  return divide_by_sigma(weight, state.u, state.v, kSigmaEpsilon);
}

Tensor spectral_normalize(const Tensor& weight, SpectralState& state) {
  power_iterate(weight, state);
  return spectral_weight(weight, state);
}

Tensor conv_block_forward(const ConvBlockSpec& spec, const ConvParams& params,
                          const SpectralState& state, const Tensor& input, bool training,
                          Rng* dropout_rng) {
  const int in_c = input.shape().c;
  if (in_c != spec.in_channels) {
    throw DimensionError("conv block expects " + std::to_string(spec.in_channels) +
                         " input channels, got " + input.shape().str());
  }
  const Tensor w = spec.use_sn ? spectral_weight(params.weight, state) : params.weight;
  Tensor h = spec.transposed ? transposed_conv2d(input, w, params.bias, spec.stride, spec.pad)
                             : conv2d(input, w, params.bias, spec.stride, spec.pad);
  switch (spec.activation) {
    case Activation::None: break;
    case Activation::Relu: h = relu(h); break;
    case Activation::LeakyRelu: h = leaky_relu(h, spec.leaky_slope); break;
    case Activation::Tanh: h = tanh_act(h); break;
  }
  if (training && spec.dropout_rate > 0.0f && dropout_rng != nullptr) {
    h = dropout(h, spec.dropout_rate, *dropout_rng);
  }
  return h;
}

Tensor fusion_combine(const Tensor& trunk, const Tensor& branch, int layer_index) {
  if (trunk.shape() != branch.shape()) {
    throw ArchitectureError("fusion at layer " + std::to_string(layer_index) + ": trunk " +
                            trunk.shape().str() + " and branch " + branch.shape().str() +
                            " differ");
  }
  return add(trunk, branch);
}

ConvLayer::ConvLayer(std::string name, ConvBlockSpec spec, std::uint64_t seed)
    : name_(std::move(name)), spec_(spec), params_(init_weights(spec, seed)) {
  // The SN matrix is always (first weight dim) x (rest); for transposed
  // blocks that is C_in x (C_out*k*k).
  if (spec_.use_sn) spectral_ = init_spectral_state(params_.weight, derive_seed(seed, 1));
}

Tensor ConvLayer::forward(const Tensor& input, bool training, Rng* dropout_rng) const {
  return conv_block_forward(spec_, params_, spectral_, input, training, dropout_rng);
}

void ConvLayer::update_spectral() {
  if (spec_.use_sn) power_iterate(params_.weight, spectral_);
}

Tensor ConvLayer::effective_weight() const {
  NoGradGuard guard;
  return spec_.use_sn ? spectral_weight(params_.weight, spectral_).detach()
                      : params_.weight.detach();
}

void collect_parameters(const std::vector<ConvLayer>& layers, std::vector<NamedTensor>& out) {
  for (const auto& l : layers) {
    out.push_back({l.name() + ".weight", l.params().weight});
    out.push_back({l.name() + ".bias", l.params().bias});
  }
}

}  // namespace fgan
