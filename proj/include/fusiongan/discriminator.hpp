#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fusiongan/generator.hpp"
#include "fusiongan/layers.hpp"

namespace fgan {

enum class DiscriminatorKind { Concat4, Fusion4, ConcatDeep, FusionDeep, Projection };

std::string to_string(DiscriminatorKind kind);
DiscriminatorKind parse_discriminator_kind(std::string_view name);
const std::vector<DiscriminatorKind>& all_discriminator_kinds();
bool is_fusion(DiscriminatorKind kind);

// Per-stage layout shared by both branches of a fusion network. Stride-2
// stages use 4x4 kernels, stride-1 stages 3x3 kernels, both padded to keep
// the "same" arithmetic. The head is a 3x3 stride-1 conv to one channel.
struct FusionNetSpec {
  std::vector<int> branch_channels;
  std::vector<int> strides;
  std::vector<bool> fuse_mask;  // one flag per stage

  static FusionNetSpec shallow();
  static FusionNetSpec deep();
  int stage_count() const { return static_cast<int>(branch_channels.size()); }
  void validate() const;
};

struct DiscriminatorOptions {
  bool use_sn = true;
  std::vector<bool> fuse_mask;  // empty -> fuse at every stage
};

// Pre-sigmoid patch logits (N x 1 x h x w) plus the named intermediate
// feature maps Grad-CAM can target.
struct DiscriminatorOutput {
  Tensor logits;
  std::vector<NamedTensor> features;

  const Tensor& feature(const std::string& name) const;
};

class Discriminator {
 public:
  Discriminator(DiscriminatorKind kind, int in_channels_x, int in_channels_y, std::uint64_t seed,
                DiscriminatorOptions options = {});

  DiscriminatorOutput forward(const Tensor& x, const Tensor& y) const;

  DiscriminatorKind kind() const { return kind_; }
  int in_channels_x() const { return in_x_; }
  int in_channels_y() const { return in_y_; }
  bool use_sn() const { return options_.use_sn; }
  const FusionNetSpec& stages() const { return stages_; }
  NetworkGraph graph() const;
  // Names of the feature maps reported by forward().
  std::vector<std::string> feature_names() const;
  std::vector<ConvLayer*> layers();
  std::vector<const ConvLayer*> layers() const;
  std::vector<NamedTensor> parameters() const;
  void update_spectral();
  // Spatial size of the logit map for a square input side.
  int logit_size(int input_side) const;

 private:
  DiscriminatorKind kind_;
  int in_x_;
  int in_y_;
  DiscriminatorOptions options_;
  FusionNetSpec stages_;
  std::vector<ConvLayer> trunk_;   // concat stream, fusion y-branch, or projection feature stream
  std::vector<ConvLayer> branch_;  // fusion x-branch
  std::vector<ConvLayer> embed_;   // projection embedding of x (one 1x1 layer)
  std::vector<ConvLayer> head_;    // one layer
};

Discriminator build_discriminator(DiscriminatorKind kind, int in_channels_x, int in_channels_y,
                                  std::uint64_t seed, DiscriminatorOptions options = {});

Tensor discriminate(const Discriminator& net, const Tensor& x, const Tensor& y);

}  // namespace fgan
