#include "fusiongan/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

namespace fgan {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view text) {
  T v{};
  const auto* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) {
    throw ConfigError("invalid value '" + std::string(text) + "' for key '" + std::string(key) +
                      "'");
  }
  return v;
}

bool parse_bool(std::string_view key, std::string_view text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw ConfigError("invalid boolean '" + std::string(text) + "' for key '" + std::string(key) + "'");
}

std::vector<std::string> split_list(std::string_view text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream is{std::string(text)};
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, ptr);
}

std::string fmt_bool(bool v) { return v ? "true" : "false"; }

struct Entry {
  const char* key;
  bool architecture;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FGAN_INT(name, field)                                                              \
  Entry {                                                                                  \
    name, false, [](RunConfig& c, std::string_view v) {                                    \
      c.field = parse_number<std::remove_reference_t<decltype(c.field)>>(name, v);         \
    },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.field); }                         \
  }

#define FGAN_ARCH_INT(name, field)                                                         \
  Entry {                                                                                  \
    name, true, [](RunConfig& c, std::string_view v) {                                     \
      c.field = parse_number<std::remove_reference_t<decltype(c.field)>>(name, v);         \
    },                                                                                     \
        [](const RunConfig& c) { return std::to_string(c.field); }                         \
  }

#define FGAN_REAL(name, field)                                                             \
  Entry {                                                                                  \
    name, false, [](RunConfig& c, std::string_view v) {                                    \
      c.field = static_cast<std::remove_reference_t<decltype(c.field)>>(                   \
          parse_number<double>(name, v));                                                  \
    },                                                                                     \
        [](const RunConfig& c) { return fmt_double(c.field); }                             \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table{
      {"task", true, [](RunConfig& c, std::string_view v) { c.task = parse_task(v); },
       [](const RunConfig& c) { return to_string(c.task); }},
      {"discriminator", true,
       [](RunConfig& c, std::string_view v) { c.discriminator = parse_discriminator_kind(v); },
       [](const RunConfig& c) { return to_string(c.discriminator); }},
      {"use_sn", true, [](RunConfig& c, std::string_view v) { c.use_sn = parse_bool("use_sn", v); },
       [](const RunConfig& c) { return fmt_bool(c.use_sn); }},
      {"fuse_mask", true,
       [](RunConfig& c, std::string_view v) {
         c.fuse_mask.clear();
         for (const auto& item : split_list(v)) c.fuse_mask.push_back(parse_bool("fuse_mask", item));
       },
       [](const RunConfig& c) {
         std::string s;
         for (bool b : c.fuse_mask) s += (s.empty() ? "" : ",") + std::string(b ? "1" : "0");
         return s;
       }},
      {"generator_sn", true,
       [](RunConfig& c, std::string_view v) { c.generator_sn = parse_bool("generator_sn", v); },
       [](const RunConfig& c) { return fmt_bool(c.generator_sn); }},
      {"encoder_channels", true,
       [](RunConfig& c, std::string_view v) {
         c.encoder_channels.clear();
         for (const auto& item : split_list(v)) {
           c.encoder_channels.push_back(parse_number<int>("encoder_channels", item));
         }
       },
       [](const RunConfig& c) {
         std::string s;
         for (int ch : c.encoder_channels) s += (s.empty() ? "" : ",") + std::to_string(ch);
         return s;
       }},
      FGAN_ARCH_INT("dropout_blocks", dropout_blocks),
      FGAN_REAL("dropout_rate", dropout_rate),
      FGAN_ARCH_INT("image_size", scene.image_size),
      FGAN_ARCH_INT("class_count", scene.class_count),
      FGAN_REAL("lambda_l1", train.lambda_l1),
      FGAN_REAL("lr", train.lr),
      FGAN_REAL("beta1", train.beta1),
      FGAN_REAL("beta2", train.beta2),
      FGAN_REAL("adam_eps", train.adam_eps),
      FGAN_INT("d_steps_per_g", train.d_steps_per_g),
      FGAN_INT("total_iters", train.total_iters),
      FGAN_INT("batch_size", train.batch_size),
      FGAN_INT("seed", train.seed),
      FGAN_INT("eval_every", train.eval_every),
      FGAN_INT("checkpoint_every", train.checkpoint_every),
      {"generator_loss", false,
       [](RunConfig& c, std::string_view v) { c.train.generator_loss = parse_generator_loss(v); },
       [](const RunConfig& c) { return to_string(c.train.generator_loss); }},
      {"jitter", false, [](RunConfig& c, std::string_view v) { c.train.jitter = parse_bool("jitter", v); },
       [](const RunConfig& c) { return fmt_bool(c.train.jitter); }},
      FGAN_INT("min_shapes", scene.min_shapes),
      FGAN_INT("max_shapes", scene.max_shapes),
      FGAN_INT("min_shape_size", scene.min_shape_size),
      FGAN_INT("max_shape_size", scene.max_shape_size),
      FGAN_REAL("noise_std", scene.noise_std),
      FGAN_INT("data_seed", scene.seed),
      FGAN_INT("train_samples", train_samples),
      FGAN_INT("eval_samples", eval_samples),
      {"data_root", false, [](RunConfig& c, std::string_view v) { c.data_root = std::string(v); },
       [](const RunConfig& c) { return c.data_root; }},
  };
  return table;
}

#undef FGAN_INT
#undef FGAN_ARCH_INT
#undef FGAN_REAL

}  // namespace

const std::vector<std::string>& config_keys() {
  static const std::vector<std::string> keys = [] {
    std::vector<std::string> k;
    for (const auto& e : entries()) k.emplace_back(e.key);
    return k;
  }();
  return keys;
}

void apply_config_value(RunConfig& cfg, std::string_view key, std::string_view value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(cfg, value);
      return;
    }
  }
  std::string allowed;
  for (const auto& k : config_keys()) allowed += (allowed.empty() ? "" : ", ") + k;
  throw ConfigError("unknown config key '" + std::string(key) + "' (allowed: " + allowed + ")");
}

RunConfig parse_config(std::string_view text, RunConfig base) {
  std::istringstream is{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected 'key = value', got '" + t +
                        "'");
    }
    try {
      apply_config_value(base, trim(std::string_view(t).substr(0, eq)),
                         trim(std::string_view(t).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return base;
}

RunConfig load_config(const std::filesystem::path& path, RunConfig base) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const RunConfig& cfg) {
  std::string s;
  for (const auto& e : entries()) s += std::string(e.key) + " = " + e.get(cfg) + "\n";
  return s;
}

std::vector<std::string> architecture_mismatches(const RunConfig& a, const RunConfig& b) {
  std::vector<std::string> out;
  for (const auto& e : entries()) {
    if (e.architecture && e.get(a) != e.get(b)) {
      out.push_back(std::string(e.key) + ": " + e.get(a) + " vs " + e.get(b));
    }
  }
  return out;
}

void RunConfig::validate() const {
  train.validate();
  scene.validate();
  generator_spec().validate();
  if (train_samples < 1) throw ConfigError("train_samples must be at least 1");
  if (eval_samples < 1) throw ConfigError("eval_samples must be at least 1");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("dropout_rate must lie in [0, 1)");
  if (!fuse_mask.empty() && !is_fusion(discriminator)) {
    throw ConfigError("fuse_mask is only valid for fusion discriminators");
  }
}

UNetSpec RunConfig::generator_spec() const {
  UNetSpec s;
  s.input_channels = input_channels(task);
  s.output_channels = output_channels(task, scene.class_count);
  s.image_size = scene.image_size;
  s.encoder_channels = encoder_channels;
  s.dropout_blocks = dropout_blocks;
  s.dropout_rate = static_cast<float>(dropout_rate);
  s.use_sn = generator_sn;
  return s;
}

DiscriminatorOptions RunConfig::discriminator_options() const {
  DiscriminatorOptions o;
  o.use_sn = use_sn;
  o.fuse_mask = fuse_mask;
  return o;
}

TrainSetup make_setup(const RunConfig& cfg) {
  cfg.validate();
  TrainSetup s;
  s.config = cfg.train;
  s.task = cfg.task;
  s.class_count = cfg.scene.class_count;
  s.generator = cfg.generator_spec();
  s.discriminator = cfg.discriminator;
  s.discriminator_options = cfg.discriminator_options();
  if (cfg.data_root.empty()) {
    s.train_data = generate_dataset(cfg.scene, cfg.train_samples, cfg.task, 0);
    s.eval_data = generate_dataset(cfg.scene, cfg.eval_samples, cfg.task, kEvalIdOffset);
  } else {
    const DepthCodec codec{cfg.scene.depth_min, cfg.scene.depth_max};
    s.train_data = read_dataset(cfg.data_root, cfg.task, "train", cfg.scene.class_count, codec);
    s.eval_data = read_dataset(cfg.data_root, cfg.task, "eval", cfg.scene.class_count, codec);
    if (static_cast<int>(s.train_data.size()) > cfg.train_samples) s.train_data.resize(cfg.train_samples);
    if (static_cast<int>(s.eval_data.size()) > cfg.eval_samples) s.eval_data.resize(cfg.eval_samples);
  }
  return s;
}

SamplePair load_sample(const RunConfig& cfg, std::int64_t id, bool eval_split) {
  if (id < 0) throw ConfigError("sample id must be non-negative");
  if (cfg.data_root.empty()) {
    cfg.scene.validate();
    return generate_sample(cfg.scene, cfg.task, eval_split ? kEvalIdOffset + id : id);
  }
  const DepthCodec codec{cfg.scene.depth_min, cfg.scene.depth_max};
  auto data = read_dataset(cfg.data_root, cfg.task, eval_split ? "eval" : "train",
                           cfg.scene.class_count, codec);
  if (id >= static_cast<std::int64_t>(data.size())) {
    throw DataError("sample " + std::to_string(id) + " not in split of " +
                    std::to_string(data.size()) + " samples under " + cfg.data_root);
  }
  return std::move(data[static_cast<std::size_t>(id)]);
}

}  // namespace fgan
