#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusiongan/rng.hpp"
#include "fusiongan/tensor.hpp"

namespace fgan {

enum class Activation { None, Relu, LeakyRelu, Tanh };

std::string to_string(Activation a);

// One convolution block: conv (or transposed conv) -> optional SN -> activation
// -> optional dropout. Kernel 4 / stride 2 / pad 1 halves (or doubles) the
// spatial extent.
struct ConvBlockSpec {
  int in_channels = 1;
  int out_channels = 1;
  int kernel = 4;
  int stride = 2;
  int pad = 1;
  Activation activation = Activation::Relu;
  float leaky_slope = 0.2f;
  bool use_sn = true;
  float dropout_rate = 0.0f;
  bool transposed = false;

  void validate() const;
  Shape weight_shape() const;
};

struct ConvParams {
  Tensor weight;
  Tensor bias;  // (1, C_out, 1, 1)
};

// Power-iteration state of one spectrally normalized weight. u has length
// C_out (rows of the matricized weight), v length C_in*kH*kW.
struct SpectralState {
  std::vector<float> u;
  std::vector<float> v;
  float sigma_estimate = 1.0f;
  int power_iters_per_step = 1;
  bool degenerate = false;  // set when sigma had to be clamped
  bool warm = false;        // u has been converged once by warm_start

  bool initialized() const { return !u.empty(); }
};

inline constexpr float kSigmaEpsilon = 1e-12f;
inline constexpr float kInitStddev = 0.02f;
inline constexpr int kWarmStartMaxIters = 3000;
inline constexpr double kWarmStartTolerance = 1e-7;

// Weights ~ N(0, 0.02^2), bias 0. Both are tracked leaves.
ConvParams init_weights(const ConvBlockSpec& spec, std::uint64_t seed);

// Seeds u with a random unit vector; v and sigma follow from one half-step.
SpectralState init_spectral_state(const Tensor& weight, std::uint64_t seed, int iters_per_step = 1);

// Runs `state.power_iters_per_step` power iterations on mat(W), updating u, v and
// sigma_estimate = u^T W v. The first call on a fresh state first converges u
// to the top singular vector. A zero matrix clamps sigma to kSigmaEpsilon and
// flags the state as degenerate.
void power_iterate(const Tensor& weight, SpectralState& state);

// W / sigma computed from the current u, v (no state update). Differentiable.
Tensor spectral_weight(const Tensor& weight, const SpectralState& state);

// power_iterate followed by spectral_weight.
Tensor spectral_normalize(const Tensor& weight, SpectralState& state);

// Applies the block. Dropout only runs when `training` is set and a dropout
// stream is supplied.
Tensor conv_block_forward(const ConvBlockSpec& spec, const ConvParams& params,
                          const SpectralState& state, const Tensor& input, bool training,
                          Rng* dropout_rng);

// Element-wise sum of two post-activation feature maps.
Tensor fusion_combine(const Tensor& trunk, const Tensor& branch, int layer_index = -1);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// A named block owning its parameters and spectral state.
class ConvLayer {
 public:
  ConvLayer(std::string name, ConvBlockSpec spec, std::uint64_t seed);

  Tensor forward(const Tensor& input, bool training, Rng* dropout_rng) const;
  // One optimizer step's worth of power iteration.
  void update_spectral();

  const std::string& name() const { return name_; }
  const ConvBlockSpec& spec() const { return spec_; }
  ConvParams& params() { return params_; }
  const ConvParams& params() const { return params_; }
  SpectralState& spectral() { return spectral_; }
  const SpectralState& spectral() const { return spectral_; }
  // The weight the convolution actually applies.
  Tensor effective_weight() const;

 private:
  std::string name_;
  ConvBlockSpec spec_;
  ConvParams params_;
  SpectralState spectral_;
};

void collect_parameters(const std::vector<ConvLayer>& layers, std::vector<NamedTensor>& out);

}  // namespace fgan
