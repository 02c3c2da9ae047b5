#include "fusiongan/generator.hpp"

#include <sstream>

namespace fgan {

UNetSpec UNetSpec::full_scale(int input_channels, int output_channels) {
  UNetSpec s;
  s.input_channels = input_channels;
  s.output_channels = output_channels;
  s.image_size = 256;
  s.encoder_channels = {64, 128, 256, 512, 512, 512, 512, 512};
  return s;
}

std::vector<int> UNetSpec::decoder_output_channels() const {
  std::vector<int> out;
  const int d = depth();
  for (int i = 0; i + 1 < d; ++i) out.push_back(encoder_channels[d - 2 - i]);
  out.push_back(output_channels);
  return out;
}

std::vector<int> UNetSpec::decoder_input_channels() const {
  std::vector<int> in;
  const int d = depth();
  const std::vector<int> outs = decoder_output_channels();
  in.push_back(encoder_channels[d - 1]);
  for (int i = 1; i < d; ++i) {
    in.push_back(outs[i - 1] + (skip_connections ? encoder_channels[d - 1 - i] : 0));
  }
  return in;
}

void UNetSpec::validate() const {
  if (encoder_channels.empty()) throw ConfigError("U-Net needs at least one encoder block");
  if (input_channels <= 0 || output_channels <= 0) {
    throw ConfigError("U-Net input/output channels must be positive");
  }
  for (int c : encoder_channels) {
    if (c <= 0) throw ConfigError("U-Net encoder channels must be positive");
  }
  const int d = depth();
  if (d > 20) throw ConfigError("U-Net depth is unreasonably large");
  const int factor = 1 << d;
  if (image_size <= 0 || image_size % factor != 0) {
    throw ConfigError("image side " + std::to_string(image_size) + " must be divisible by 2^" +
                      std::to_string(d) + " = " + std::to_string(factor) + " for a depth-" +
                      std::to_string(d) + " U-Net");
  }
  if (dropout_blocks < 0 || dropout_blocks > d - 1) {
    throw ConfigError("dropout_blocks must lie in [0, depth - 1]");
  }
}

std::string NetworkGraph::to_text() const {
  std::ostringstream os;
  for (const auto& row : rows) {
    const auto& s = row.spec;
    os << row.name << " " << (s.transposed ? "tconv" : "conv") << " in=" << s.in_channels
       << " out=" << s.out_channels << " k=" << s.kernel << " s=" << s.stride << " p=" << s.pad
       << " act=" << to_string(s.activation) << " sn=" << (s.use_sn ? 1 : 0)
       << " dropout=" << s.dropout_rate << "\n";
  }
  return os.str();
}

UNetGenerator::UNetGenerator(UNetSpec spec, std::uint64_t seed) : spec_(std::move(spec)) {
  spec_.validate();
  const int d = spec_.depth();
  std::uint64_t index = 0;
  for (int i = 0; i < d; ++i) {
    ConvBlockSpec b;
    b.in_channels = i == 0 ? spec_.input_channels : spec_.encoder_channels[i - 1];
    b.out_channels = spec_.encoder_channels[i];
    b.activation = Activation::LeakyRelu;
    b.leaky_slope = 0.2f;
    b.use_sn = spec_.use_sn;
    layers_.emplace_back("enc" + std::to_string(i + 1), b, derive_seed(seed, index++));
  }
  const std::vector<int> ins = spec_.decoder_input_channels();
  const std::vector<int> outs = spec_.decoder_output_channels();
  for (int i = 0; i < d; ++i) {
    ConvBlockSpec b;
    b.transposed = true;
    b.in_channels = ins[i];
    b.out_channels = outs[i];
    b.use_sn = spec_.use_sn;
    const bool last = i == d - 1;
    b.activation = last ? Activation::Tanh : Activation::Relu;
    b.dropout_rate = (!last && i < spec_.dropout_blocks) ? spec_.dropout_rate : 0.0f;
    layers_.emplace_back(last ? std::string("out") : "dec" + std::to_string(i + 1), b,
                         derive_seed(seed, index++));
  }
}

Tensor UNetGenerator::forward(const Tensor& x, bool training, Rng& rng) const {
  const Shape& s = x.shape();
  if (s.c != spec_.input_channels || s.h != spec_.image_size || s.w != spec_.image_size) {
    throw DimensionError("generator expects Nx" + std::to_string(spec_.input_channels) + "x" +
                         std::to_string(spec_.image_size) + "x" + std::to_string(spec_.image_size) +
                         " input, got " + s.str());
  }
  const int d = spec_.depth();
  std::vector<Tensor> skips;
  skips.reserve(d);
  Tensor h = x;
  for (int i = 0; i < d; ++i) {
    h = layers_[i].forward(h, training, &rng);
    skips.push_back(h);
  }
  for (int i = 0; i < d; ++i) {
    if (i > 0 && spec_.skip_connections) h = concat_channels(h, skips[d - 1 - i]);
    h = layers_[d + i].forward(h, training, &rng);
  }
  return h;
}

NetworkGraph UNetGenerator::graph() const {
  NetworkGraph g;
  for (const auto& l : layers_) g.rows.push_back({l.name(), l.spec()});
  return g;
}

std::vector<NamedTensor> UNetGenerator::parameters() const {
  std::vector<NamedTensor> out;
  collect_parameters(layers_, out);
  return out;
}

void UNetGenerator::update_spectral() {
  for (auto& l : layers_) l.update_spectral();
}

UNetGenerator build_unet(const UNetSpec& spec, std::uint64_t seed) { return UNetGenerator(spec, seed); }

Tensor generate(const UNetGenerator& net, const Tensor& x, bool training, Rng& rng) {
  return net.forward(x, training, rng);
}

int jitter_upsampled_size(int side) { return side * 286 / 256; }

namespace {

template <class T>
std::vector<T> crop_plane(const T* src, int side, int up, int oi, int oj) {
  std::vector<T> out(static_cast<std::size_t>(side) * side);
  for (int i = 0; i < side; ++i) {
    const int si = (i + oi) * side / up;
    for (int j = 0; j < side; ++j) {
      const int sj = (j + oj) * side / up;
      out[static_cast<std::size_t>(i) * side + j] = src[static_cast<std::size_t>(si) * side + sj];
    }
  }
  return out;
}

Tensor crop_tensor(const Tensor& t, int up, int oi, int oj) {
  const Shape& s = t.shape();
  if (s.h != s.w) throw DimensionError("jitter expects square images, got " + s.str());
  const std::size_t plane = s.plane();
  std::vector<float> out(t.numel());
  std::span<const float> v = t.data();
  for (int nc = 0; nc < s.n * s.c; ++nc) {
    auto p = crop_plane(v.data() + nc * plane, s.h, up, oi, oj);
    std::copy(p.begin(), p.end(), out.begin() + nc * plane);
  }
  return Tensor::from(s, std::move(out));
}

}  // namespace

SamplePair jitter_crop(const SamplePair& pair, int offset_row, int offset_col) {
  const int side = pair.x.shape().h;
  const int up = jitter_upsampled_size(side);
  if (offset_row < 0 || offset_col < 0 || offset_row > up - side || offset_col > up - side) {
    throw ConfigError("jitter offset outside [0, " + std::to_string(up - side) + "]");
  }
  SamplePair out = pair;
  out.x = crop_tensor(pair.x, up, offset_row, offset_col);
  out.y = crop_tensor(pair.y, up, offset_row, offset_col);
  if (!pair.labels.labels.empty()) {
    out.labels.labels = crop_plane(pair.labels.labels.data(), side, up, offset_row, offset_col);
  }
  if (!pair.depth.empty()) {
    out.depth = crop_plane(pair.depth.data(), side, up, offset_row, offset_col);
  }
  return out;
}

SamplePair jitter_augment(const SamplePair& pair, Rng& rng) {
  const int side = pair.x.shape().h;
  const int slack = jitter_upsampled_size(side) - side;
  const int oi = rng.uniform_int(0, slack);
  const int oj = rng.uniform_int(0, slack);
  return jitter_crop(pair, oi, oj);
}

}  // namespace fgan
