#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fusiongan/layers.hpp"
#include "fusiongan/taskgen.hpp"

namespace fgan {

// Resolved U-Net description. Encoder block i halves the resolution and
// outputs encoder_channels[i]; decoder block i doubles it and mirrors the
// encoder, the last block mapping to output_channels followed by Tanh.
struct UNetSpec {
  int input_channels = 3;
  int output_channels = 3;
  int image_size = 64;
  std::vector<int> encoder_channels{64, 128, 256, 512, 512, 512};
  int dropout_blocks = 3;  // leading decoder blocks that use dropout
  float dropout_rate = 0.5f;
  bool skip_connections = true;
  bool use_sn = true;

  // 256x256, depth-8 layout (CSR64 ... CSR512 x5).
  static UNetSpec full_scale(int input_channels, int output_channels);

  int depth() const { return static_cast<int>(encoder_channels.size()); }
  // Input width of every decoder block, after skip concatenation, ending with
  // the final output conv. For the full-scale network this is
  // {512, 1024, 1024, 1024, 1024, 512, 256, 128}.
  std::vector<int> decoder_input_channels() const;
  std::vector<int> decoder_output_channels() const;
  void validate() const;
};

// Declarative layer table of a network: one row per conv block, in
// application order. Serializable as text for reports and checkpoints.
struct LayerRow {
  std::string name;
  ConvBlockSpec spec;
};

struct NetworkGraph {
  std::vector<LayerRow> rows;
  std::string to_text() const;
};

class UNetGenerator {
 public:
  UNetGenerator(UNetSpec spec, std::uint64_t seed);

  // `rng` feeds dropout and is only consulted when `training` is set.
  Tensor forward(const Tensor& x, bool training, Rng& rng) const;

  const UNetSpec& spec() const { return spec_; }
  NetworkGraph graph() const;
  std::vector<ConvLayer>& layers() { return layers_; }
  const std::vector<ConvLayer>& layers() const { return layers_; }
  std::vector<NamedTensor> parameters() const;
  void update_spectral();

 private:
  UNetSpec spec_;
  std::vector<ConvLayer> layers_;  // encoder blocks, then decoder blocks
};

UNetGenerator build_unet(const UNetSpec& spec, std::uint64_t seed);

// G(x). With training == false dropout is off and the result is a pure
// function of the parameters and x.
Tensor generate(const UNetGenerator& net, const Tensor& x, bool training, Rng& rng);

// Random jitter: nearest upsampling to floor(H * 286 / 256) then a crop back to
// H x H at one random offset shared by x and y (labels and depth follow).
SamplePair jitter_augment(const SamplePair& pair, Rng& rng);
// Deterministic core of jitter_augment for a given offset.
SamplePair jitter_crop(const SamplePair& pair, int offset_row, int offset_col);
int jitter_upsampled_size(int side);

}  // namespace fgan
