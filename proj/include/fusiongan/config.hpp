#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fusiongan/objective.hpp"

namespace fgan {

// Complete description of one training run. Serialized as `key = value`
// lines; unknown keys are rejected.
struct RunConfig {
  TrainConfig train;
  Task task = Task::Segmentation;
  DiscriminatorKind discriminator = DiscriminatorKind::Fusion4;
  bool use_sn = true;            // discriminator
  std::vector<bool> fuse_mask;   // empty -> every stage
  bool generator_sn = true;
  std::vector<int> encoder_channels{64, 128, 256, 512, 512, 512};
  int dropout_blocks = 3;
  double dropout_rate = 0.5;
  SceneSpec scene;               // image_size, class_count, shape ranges, noise, data_seed
  int train_samples = 512;
  int eval_samples = 64;
  std::string data_root;         // empty -> generate the data in memory

  void validate() const;
  UNetSpec generator_spec() const;
  DiscriminatorOptions discriminator_options() const;
};

// Every accepted key, in canonical order.
const std::vector<std::string>& config_keys();

// Applies one key = value assignment; unknown keys raise ConfigError naming the
// key and the allowed set.
void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value);

// Parses `key = value` lines with `#` comments onto `base`.
RunConfig parse_config(std::string_view text, RunConfig base = {});
RunConfig load_config(const std::filesystem::path& path, RunConfig base = {});

// Canonical text: every key once, in config_keys() order.
std::string to_text(const RunConfig& cfg);

// Keys that fix the network shapes; resuming with different values is refused.
std::vector<std::string> architecture_mismatches(const RunConfig& a, const RunConfig& b);

// Held-out ids start here when the data is generated in memory.
inline constexpr std::int64_t kEvalIdOffset = 1000000;

// Builds the train / eval sets: generated from the scene spec, or read from
// `<data_root>/<task>/{train,eval}`.
TrainSetup make_setup(const RunConfig& cfg);

// Single (x, y) pair by id from the configured data source.
SamplePair load_sample(const RunConfig& cfg, std::int64_t id, bool eval_split);

}  // namespace fgan
