#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "fusiongan/config.hpp"

namespace fgan {

// Binary training snapshot: "FGAN", u32 version, config text, counters, RNG
// state, then named tensor records (u32 name length, name bytes, four u32
// dims, little-endian float32 payload). Records cover network parameters,
// spectral u / v vectors and Adam moments.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  std::string config_text;
  std::int64_t iteration = 0;
  std::int64_t d_steps = 0;
  std::int64_t g_steps = 0;
  std::int64_t g_adam_t = 0;
  std::int64_t d_adam_t = 0;
  std::string rng_state;
  std::vector<NamedTensor> tensors;

  const Tensor& tensor(const std::string& name) const;
  RunConfig config() const { return parse_config(config_text); }
};

void write_checkpoint(std::ostream& os, const Checkpoint& ckpt);
Checkpoint read_checkpoint(std::istream& is);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

Checkpoint capture_checkpoint(const Trainer& trainer, const RunConfig& cfg);
// Restores every piece of trainer state; shapes must match exactly.
void restore_checkpoint(Trainer& trainer, const Checkpoint& ckpt);

// Networks only, for evaluation and Grad-CAM.
void restore_generator(UNetGenerator& gen, const Checkpoint& ckpt);
void restore_discriminator(Discriminator& disc, const Checkpoint& ckpt);

}  // namespace fgan
