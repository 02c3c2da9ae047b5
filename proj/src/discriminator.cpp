#include "fusiongan/discriminator.hpp"

namespace fgan {

std::string to_string(DiscriminatorKind kind) {
  switch (kind) {
    case DiscriminatorKind::Concat4: return "Concat4";
    case DiscriminatorKind::Fusion4: return "Fusion4";
    case DiscriminatorKind::ConcatDeep: return "ConcatDeep";
    case DiscriminatorKind::FusionDeep: return "FusionDeep";
    case DiscriminatorKind::Projection: return "Projection";
  }
  throw ArchitectureError("unknown discriminator kind");
}

const std::vector<DiscriminatorKind>& all_discriminator_kinds() {
  static const std::vector<DiscriminatorKind> kinds{
      DiscriminatorKind::Concat4, DiscriminatorKind::Fusion4, DiscriminatorKind::ConcatDeep,
      DiscriminatorKind::FusionDeep, DiscriminatorKind::Projection};
  return kinds;
}

DiscriminatorKind parse_discriminator_kind(std::string_view name) {
  std::string allowed;
  for (auto k : all_discriminator_kinds()) {
    if (name == to_string(k)) return k;
    allowed += (allowed.empty() ? "" : ", ") + to_string(k);
  }
  throw ConfigError("unknown discriminator kind '" + std::string(name) + "' (allowed: " + allowed +
                    ")");
}

bool is_fusion(DiscriminatorKind kind) {
  return kind == DiscriminatorKind::Fusion4 || kind == DiscriminatorKind::FusionDeep;
}

FusionNetSpec FusionNetSpec::shallow() {
  FusionNetSpec s;
  s.branch_channels = {64, 128, 256, 512};
  s.strides = {2, 2, 2, 1};
  s.fuse_mask.assign(4, true);
  return s;
}

FusionNetSpec FusionNetSpec::deep() {
  FusionNetSpec s;
  s.branch_channels = {64, 64, 128, 128, 256, 256, 256, 512, 512};
  s.strides = {2, 1, 2, 1, 2, 1, 1, 1, 1};
  s.fuse_mask.assign(9, true);
  return s;
}

void FusionNetSpec::validate() const {
  if (branch_channels.empty()) throw ArchitectureError("discriminator needs at least one stage");
  if (strides.size() != branch_channels.size() || fuse_mask.size() != branch_channels.size()) {
    throw ArchitectureError("stage lists disagree in length: " +
                            std::to_string(branch_channels.size()) + " channels, " +
                            std::to_string(strides.size()) + " strides, " +
                            std::to_string(fuse_mask.size()) + " fuse flags");
  }
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] != 1 && strides[i] != 2) {
      throw ArchitectureError("stage " + std::to_string(i + 1) + " stride must be 1 or 2");
    }
    if (branch_channels[i] <= 0) {
      throw ArchitectureError("stage " + std::to_string(i + 1) + " channels must be positive");
    }
  }
}

const Tensor& DiscriminatorOutput::feature(const std::string& name) const {
  for (const auto& f : features) {
    if (f.name == name) return f.tensor;
  }
  std::string names;
  for (const auto& f : features) names += (names.empty() ? "" : ", ") + f.name;
  throw ConfigError("no feature layer '" + name + "' (available: " + names + ")");
}

namespace {

ConvBlockSpec stage_block(int in, int out, int stride, Activation act, bool sn) {
  ConvBlockSpec b;
  b.in_channels = in;
  b.out_channels = out;
  b.stride = stride;
  b.kernel = stride == 2 ? 4 : 3;
  b.pad = 1;
  b.activation = act;
  b.leaky_slope = 0.2f;
  b.use_sn = sn;
  return b;
}

std::vector<ConvLayer> build_stream(const std::string& prefix, int in_channels,
                                    const FusionNetSpec& stages, Activation act, bool sn,
                                    std::uint64_t seed) {
  std::vector<ConvLayer> out;
  int in = in_channels;
  for (int i = 0; i < stages.stage_count(); ++i) {
    const int c = stages.branch_channels[i];
    out.emplace_back(prefix + "stage" + std::to_string(i + 1),
                     stage_block(in, c, stages.strides[i], act, sn),
                     derive_seed(seed, static_cast<std::uint64_t>(i)));
    in = c;
  }
  return out;
}

}  // namespace

Discriminator::Discriminator(DiscriminatorKind kind, int in_channels_x, int in_channels_y,
                             std::uint64_t seed, DiscriminatorOptions options)
    : kind_(kind), in_x_(in_channels_x), in_y_(in_channels_y), options_(std::move(options)) {
  if (in_x_ <= 0 || in_y_ <= 0) {
    throw ArchitectureError("discriminator channel counts must be positive, got x=" +
                            std::to_string(in_x_) + " y=" + std::to_string(in_y_));
  }
  const bool deep = kind_ == DiscriminatorKind::ConcatDeep || kind_ == DiscriminatorKind::FusionDeep;
  stages_ = deep ? FusionNetSpec::deep() : FusionNetSpec::shallow();
  if (!options_.fuse_mask.empty()) {
    if (!is_fusion(kind_)) throw ArchitectureError("fuse_mask only applies to fusion discriminators");
    stages_.fuse_mask = options_.fuse_mask;
  }
  if (!is_fusion(kind_)) stages_.fuse_mask.assign(stages_.branch_channels.size(), false);
  stages_.validate();

  const bool sn = options_.use_sn;
  switch (kind_) {
    case DiscriminatorKind::Concat4:
    case DiscriminatorKind::ConcatDeep:
      trunk_ = build_stream("", in_x_ + in_y_, stages_, Activation::LeakyRelu, sn,
                            derive_seed(seed, 0));
      break;
    case DiscriminatorKind::Fusion4:
    case DiscriminatorKind::FusionDeep:
      trunk_ = build_stream("", in_y_, stages_, Activation::Relu, sn, derive_seed(seed, 0));
      branch_ = build_stream("cond.", in_x_, stages_, Activation::Relu, sn, derive_seed(seed, 1));
      break;
    case DiscriminatorKind::Projection: {
      trunk_ = build_stream("", in_y_, stages_, Activation::LeakyRelu, sn, derive_seed(seed, 0));
      ConvBlockSpec e;
      e.in_channels = in_x_;
      e.out_channels = stages_.branch_channels.back();
      e.kernel = 1;
      e.stride = 1;
      e.pad = 0;
      e.activation = Activation::None;
      e.use_sn = sn;
      embed_.emplace_back("embed", e, derive_seed(seed, 2));
      break;
    }
  }
  ConvBlockSpec h = stage_block(stages_.branch_channels.back(), 1, 1, Activation::None, sn);
  head_.emplace_back("head", h, derive_seed(seed, 3));
}

DiscriminatorOutput Discriminator::forward(const Tensor& x, const Tensor& y) const {
  const Shape& sx = x.shape();
  const Shape& sy = y.shape();
  if (sx.n != sy.n || sx.h != sy.h || sx.w != sy.w) {
    throw DimensionError("discriminator inputs misaligned: x " + sx.str() + " vs y " + sy.str());
  }
  if (sx.c != in_x_ || sy.c != in_y_) {
    throw DimensionError("discriminator expects x with " + std::to_string(in_x_) +
                         " channels and y with " + std::to_string(in_y_) + ", got x " + sx.str() +
                         " and y " + sy.str());
  }
  DiscriminatorOutput out;
  Tensor h;
  switch (kind_) {
    case DiscriminatorKind::Concat4:
    case DiscriminatorKind::ConcatDeep:
      h = concat_channels(x, y);
      for (const auto& l : trunk_) {
        h = l.forward(h, false, nullptr);
        out.features.push_back({l.name(), h});
      }
      break;
    case DiscriminatorKind::Fusion4:
    case DiscriminatorKind::FusionDeep: {
      h = y;
      Tensor b = x;
      for (int i = 0; i < stages_.stage_count(); ++i) {
        b = branch_[i].forward(b, false, nullptr);
        out.features.push_back({branch_[i].name(), b});
        h = trunk_[i].forward(h, false, nullptr);
        if (stages_.fuse_mask[i]) h = fusion_combine(h, b, i + 1);
        out.features.push_back({trunk_[i].name(), h});
      }
      break;
    }
    case DiscriminatorKind::Projection:
      h = y;
      for (const auto& l : trunk_) {
        h = l.forward(h, false, nullptr);
        out.features.push_back({l.name(), h});
      }
      break;
  }
  Tensor logits = head_[0].forward(h, false, nullptr);
  if (kind_ == DiscriminatorKind::Projection) {
    const int factor = sx.h / h.shape().h;
    if (factor * h.shape().h != sx.h || factor * h.shape().w != sx.w) {
      throw DimensionError("projection cannot stride-match x " + sx.str() + " to features " +
                           h.shape().str());
    }
    const Tensor e = embed_[0].forward(factor > 1 ? avg_pool(x, factor) : x, false, nullptr);
    out.features.push_back({embed_[0].name(), e});
    logits = add(logits, sum_channels(mul(e, h)));
  }
  out.logits = logits;
  return out;
}

NetworkGraph Discriminator::graph() const {
  NetworkGraph g;
  for (const ConvLayer* l : layers()) g.rows.push_back({l->name(), l->spec()});
  return g;
}

std::vector<std::string> Discriminator::feature_names() const {
  std::vector<std::string> names;
  for (int i = 0; i < stages_.stage_count(); ++i) {
    if (!branch_.empty()) names.push_back(branch_[i].name());
    names.push_back(trunk_[i].name());
  }
  for (const auto& e : embed_) names.push_back(e.name());
  return names;
}

std::vector<ConvLayer*> Discriminator::layers() {
  std::vector<ConvLayer*> out;
  for (auto* group : {&trunk_, &branch_, &embed_, &head_}) {
    for (auto& l : *group) out.push_back(&l);
  }
  return out;
}

std::vector<const ConvLayer*> Discriminator::layers() const {
  std::vector<const ConvLayer*> out;
  for (const auto* group : {&trunk_, &branch_, &embed_, &head_}) {
    for (const auto& l : *group) out.push_back(&l);
  }
  return out;
}

std::vector<NamedTensor> Discriminator::parameters() const {
  std::vector<NamedTensor> out;
  for (const auto* group : {&trunk_, &branch_, &embed_, &head_}) collect_parameters(*group, out);
  return out;
}

void Discriminator::update_spectral() {
  for (ConvLayer* l : layers()) l->update_spectral();
}

int Discriminator::logit_size(int input_side) const {
  int s = input_side;
  for (int stride : stages_.strides) {
    if (stride == 2) s /= 2;
  }
  return s;
}

Discriminator build_discriminator(DiscriminatorKind kind, int in_channels_x, int in_channels_y,
                                  std::uint64_t seed, DiscriminatorOptions options) {
  return Discriminator(kind, in_channels_x, in_channels_y, seed, std::move(options));
}

Tensor discriminate(const Discriminator& net, const Tensor& x, const Tensor& y) {
  return net.forward(x, y).logits;
}

}  // namespace fgan
