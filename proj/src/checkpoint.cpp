#include "fusiongan/checkpoint.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include "fusiongan/io.hpp"

namespace fgan {

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors) {
    if (t.name == name) return t.tensor;
  }
  throw CheckpointError("checkpoint has no record '" + name + "'");
}

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt) {
  os.write("FGAN", 4);
  le::put_u32(os, kCheckpointVersion);
  le::put_string(os, ckpt.config_text);
  le::put_u64(os, static_cast<std::uint64_t>(ckpt.iteration));
  le::put_u64(os, static_cast<std::uint64_t>(ckpt.d_steps));
  le::put_u64(os, static_cast<std::uint64_t>(ckpt.g_steps));
  le::put_u64(os, static_cast<std::uint64_t>(ckpt.g_adam_t));
  le::put_u64(os, static_cast<std::uint64_t>(ckpt.d_adam_t));
  le::put_string(os, ckpt.rng_state);
  le::put_u32(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    le::put_string(os, t.name);
    const Shape& s = t.tensor.shape();
    for (int d : {s.n, s.c, s.h, s.w}) le::put_u32(os, static_cast<std::uint32_t>(d));
    le::put_f32_array(os, t.tensor.data());
  }
  if (!os) throw IoError("failed writing checkpoint stream");
}

Checkpoint read_checkpoint(std::istream& is) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::string(magic, 4) != "FGAN") throw CheckpointError("not an FGAN checkpoint");
  const std::uint32_t version = le::get_u32(is);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint format version " + std::to_string(version) +
                          " is not supported (expected " + std::to_string(kCheckpointVersion) +
                          ")");
  }
  Checkpoint c;
  c.config_text = le::get_string(is);
  c.iteration = static_cast<std::int64_t>(le::get_u64(is));
  c.d_steps = static_cast<std::int64_t>(le::get_u64(is));
  c.g_steps = static_cast<std::int64_t>(le::get_u64(is));
  c.g_adam_t = static_cast<std::int64_t>(le::get_u64(is));
  c.d_adam_t = static_cast<std::int64_t>(le::get_u64(is));
  c.rng_state = le::get_string(is);
  const std::uint32_t count = le::get_u32(is);
  for (std::uint32_t k = 0; k < count; ++k) {
    NamedTensor t;
    t.name = le::get_string(is);
    Shape s;
    s.n = static_cast<int>(le::get_u32(is));
    s.c = static_cast<int>(le::get_u32(is));
    s.h = static_cast<int>(le::get_u32(is));
    s.w = static_cast<int>(le::get_u32(is));
    if (s.n <= 0 || s.c <= 0 || s.h <= 0 || s.w <= 0 || s.numel() > (std::size_t{1} << 31)) {
      throw CheckpointError("record '" + t.name + "' has invalid shape " + s.str());
    }
    std::vector<float> v(s.numel());
    le::get_f32_array(is, v);
    t.tensor = Tensor::from(s, std::move(v));
    c.tensors.push_back(std::move(t));
  }
  if (!is) throw CheckpointError("truncated checkpoint");
  return c;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write checkpoint " + tmp.string());
    write_checkpoint(os, ckpt);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read checkpoint " + path.string());
  try {
    return read_checkpoint(is);
  } catch (const IoError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

namespace {

Tensor vector_tensor(const std::vector<float>& v) {
  return Tensor::from({1, 1, 1, static_cast<int>(v.size())}, v);
}

void add_layer_records(const std::string& prefix, const ConvLayer& l,
                       std::vector<NamedTensor>& out) {
  out.push_back({prefix + l.name() + ".weight", l.params().weight.detach()});
  out.push_back({prefix + l.name() + ".bias", l.params().bias.detach()});
  const SpectralState& s = l.spectral();
  if (l.spec().use_sn && s.initialized()) {
    out.push_back({prefix + l.name() + ".sn_u", vector_tensor(s.u)});
    out.push_back({prefix + l.name() + ".sn_v", vector_tensor(s.v)});
    out.push_back({prefix + l.name() + ".sn_meta",
                   Tensor::from({1, 1, 1, 3}, {s.sigma_estimate, s.degenerate ? 1.0f : 0.0f,
                                                 s.warm ? 1.0f : 0.0f})});
  }
}

void add_moments(const std::string& prefix, const std::vector<NamedTensor>& params,
                 const OptimizerState& opt, std::vector<NamedTensor>& out) {
  if (opt.m.empty()) return;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Shape& s = params[i].tensor.shape();
    out.push_back({prefix + "adam_m." + params[i].name, Tensor::from(s, opt.m[i])});
    out.push_back({prefix + "adam_v." + params[i].name, Tensor::from(s, opt.v[i])});
  }
}

class RecordIndex {
 public:
  explicit RecordIndex(const Checkpoint& c) {
    for (const auto& t : c.tensors) map_[t.name] = &t.tensor;
  }
  const Tensor* find(const std::string& name) const {
    auto it = map_.find(name);
    return it == map_.end() ? nullptr : it->second;
  }
  const Tensor& get(const std::string& name) const {
    const Tensor* t = find(name);
    if (!t) throw CheckpointError("checkpoint has no record '" + name + "'");
    return *t;
  }

 private:
  std::map<std::string, const Tensor*> map_;
};

void copy_into(Tensor& dst, const Tensor& src, const std::string& name) {
  if (dst.shape() != src.shape()) {
    throw CheckpointError("record '" + name + "' has shape " + src.shape().str() +
                          " but the network expects " + dst.shape().str());
  }
  auto s = src.data();
  std::copy(s.begin(), s.end(), dst.mutable_data().begin());
}

std::vector<float> as_vector(const Tensor& t) { return {t.data().begin(), t.data().end()}; }

void restore_layer(const std::string& prefix, ConvLayer& l, const RecordIndex& idx) {
  copy_into(l.params().weight, idx.get(prefix + l.name() + ".weight"), prefix + l.name() + ".weight");
  copy_into(l.params().bias, idx.get(prefix + l.name() + ".bias"), prefix + l.name() + ".bias");
  if (!l.spec().use_sn) return;
  SpectralState& s = l.spectral();
  const Tensor& u = idx.get(prefix + l.name() + ".sn_u");
  const Tensor& v = idx.get(prefix + l.name() + ".sn_v");
  if (u.numel() != s.u.size() || v.numel() != s.v.size()) {
    throw CheckpointError("spectral state of '" + prefix + l.name() + "' does not fit the network");
  }
  s.u = as_vector(u);
  s.v = as_vector(v);
  const Tensor& meta = idx.get(prefix + l.name() + ".sn_meta");
  if (meta.numel() != 3) {
    throw CheckpointError("malformed spectral record of '" + prefix + l.name() + "'");
  }
  s.sigma_estimate = meta.data()[0];
  s.degenerate = meta.data()[1] != 0.0f;
  s.warm = meta.data()[2] != 0.0f;
}

void restore_moments(const std::string& prefix, const std::vector<NamedTensor>& params,
                     OptimizerState& opt, std::int64_t t, const RecordIndex& idx) {
  opt = OptimizerState{};
  opt.t = t;
  if (params.empty() || !idx.find(prefix + "adam_m." + params[0].name)) return;
  for (const auto& p : params) {
    const Tensor& m = idx.get(prefix + "adam_m." + p.name);
    const Tensor& v = idx.get(prefix + "adam_v." + p.name);
    if (m.shape() != p.tensor.shape() || v.shape() != p.tensor.shape()) {
      throw CheckpointError("optimizer moments for '" + p.name + "' do not fit the network");
    }
    opt.m.push_back(as_vector(m));
    opt.v.push_back(as_vector(v));
  }
}

}  // namespace

Checkpoint capture_checkpoint(const Trainer& trainer, const RunConfig& cfg) {
  Checkpoint c;
  c.config_text = to_text(cfg);
  c.iteration = trainer.iteration();
  c.d_steps = trainer.d_steps();
  c.g_steps = trainer.g_steps();
  c.g_adam_t = trainer.g_optimizer().t;
  c.d_adam_t = trainer.d_optimizer().t;
  c.rng_state = trainer.rng().state();
  for (const auto& l : trainer.generator().layers()) add_layer_records("G.", l, c.tensors);
  for (const ConvLayer* l : trainer.discriminator().layers()) add_layer_records("D.", *l, c.tensors);
  add_moments("G.", trainer.generator().parameters(), trainer.g_optimizer(), c.tensors);
  add_moments("D.", trainer.discriminator().parameters(), trainer.d_optimizer(), c.tensors);
  return c;
}

void restore_generator(UNetGenerator& gen, const Checkpoint& ckpt) {
  const RecordIndex idx(ckpt);
  for (auto& l : gen.layers()) restore_layer("G.", l, idx);
}

void restore_discriminator(Discriminator& disc, const Checkpoint& ckpt) {
  const RecordIndex idx(ckpt);
  for (ConvLayer* l : disc.layers()) restore_layer("D.", *l, idx);
}

void restore_checkpoint(Trainer& trainer, const Checkpoint& ckpt) {
  const RecordIndex idx(ckpt);
  for (auto& l : trainer.generator().layers()) restore_layer("G.", l, idx);
  for (ConvLayer* l : trainer.discriminator().layers()) restore_layer("D.", *l, idx);
  restore_moments("G.", trainer.generator().parameters(), trainer.g_optimizer(), ckpt.g_adam_t, idx);
  restore_moments("D.", trainer.discriminator().parameters(), trainer.d_optimizer(), ckpt.d_adam_t,
                  idx);
  trainer.rng().set_state(ckpt.rng_state);
  trainer.set_counters(ckpt.iteration, ckpt.d_steps, ckpt.g_steps);
}

}  // namespace fgan
