#include "fusiongan/objective.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace fgan {

std::string to_string(GeneratorLoss form) {
  return form == GeneratorLoss::NonSaturating ? "nonsaturating" : "minimax";
}

GeneratorLoss parse_generator_loss(std::string_view name) {
  if (name == "nonsaturating") return GeneratorLoss::NonSaturating;
  if (name == "minimax") return GeneratorLoss::Minimax;
  throw ConfigError("unknown generator loss '" + std::string(name) +
                    "' (allowed: nonsaturating, minimax)");
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("beta1 must lie in [0, 1)");
  if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("beta2 must lie in [0, 1)");
  if (!(adam_eps > 0.0)) throw ConfigError("adam_eps must be positive");
  if (lambda_l1 < 0.0) throw ConfigError("lambda_l1 must be non-negative");
  if (d_steps_per_g < 1) throw ConfigError("d_steps_per_g must be at least 1");
  if (total_iters < 0) throw ConfigError("total_iters must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (eval_every < 1) throw ConfigError("eval_every must be at least 1");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
}

namespace {

void require_finite_logits(const Tensor& logits, const char* which) {
  if (!logits.all_finite()) {
    throw DivergenceError(std::string("non-finite ") + which + " logits");
  }
}

}  // namespace

Tensor d_loss(const Tensor& logits_real, const Tensor& logits_fake) {
  require_finite_logits(logits_real, "real");
  require_finite_logits(logits_fake, "fake");
  return add(mean(softplus(neg(logits_real))), mean(softplus(logits_fake)));
}

Tensor g_loss(const Tensor& logits_fake, const Tensor& y_fake, const Tensor& y_real,
              double lambda_l1, GeneratorLoss form) {
  require_finite_logits(logits_fake, "fake");
  if (y_fake.shape() != y_real.shape()) {
    throw DimensionError("g_loss target mismatch: y_fake " + y_fake.shape().str() + " vs y_real " +
                         y_real.shape().str());
  }
  Tensor adv = form == GeneratorLoss::NonSaturating ? mean(softplus(neg(logits_fake)))
                                                    : neg(mean(softplus(logits_fake)));
  if (lambda_l1 == 0.0) return adv;
  return add(adv, scale(mean(abs_act(sub(y_real, y_fake))), static_cast<float>(lambda_l1)));
}

void adam_step(std::vector<Tensor>& params, const std::vector<std::span<const float>>& grads,
               OptimizerState& state, const TrainConfig& cfg) {
  if (grads.size() != params.size()) {
    throw DimensionError("adam_step got " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.size()) + " parameters");
  }
  if (state.m.empty()) {
    for (const auto& p : params) {
      state.m.emplace_back(p.numel(), 0.0f);
      state.v.emplace_back(p.numel(), 0.0f);
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("optimizer state tracks " + std::to_string(state.m.size()) +
                         " parameters, got " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].numel() ||
        (!grads[i].empty() && grads[i].size() != params[i].numel())) {
      throw DimensionError("adam_step shape mismatch at parameter " + std::to_string(i) + " " +
                           params[i].shape().str());
    }
  }
  state.t += 1;
  const double b1 = cfg.beta1;
  const double b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  for (std::size_t i = 0; i < params.size(); ++i) {
    std::span<float> p = params[i].mutable_data();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      const double g = grads[i].empty() ? 0.0 : grads[i][k];
      const double mk = b1 * m[k] + (1.0 - b1) * g;
      const double vk = b2 * v[k] + (1.0 - b2) * g * g;
      m[k] = static_cast<float>(mk);
      v[k] = static_cast<float>(vk);
      const double mhat = mk / c1;
      const double vhat = vk / c2;
      p[k] -= static_cast<float>(cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps));
    }
  }
}

void adam_step(std::vector<Tensor>& params, OptimizerState& state, const TrainConfig& cfg) {
  std::vector<std::span<const float>> grads;
  grads.reserve(params.size());
  for (const auto& p : params) {
    grads.push_back(p.has_grad() ? p.grad() : std::span<const float>{});
  }
  adam_step(params, grads, state, cfg);
}

std::pair<Tensor, Tensor> stack_batch(const std::vector<const SamplePair*>& samples) {
  if (samples.empty()) throw DataError("cannot stack an empty batch");
  const Shape sx = samples[0]->x.shape();
  const Shape sy = samples[0]->y.shape();
  const int n = static_cast<int>(samples.size());
  std::vector<float> xs;
  std::vector<float> ys;
  xs.reserve(sx.numel() * n);
  ys.reserve(sy.numel() * n);
  for (const SamplePair* s : samples) {
    if (s->x.shape() != sx || s->y.shape() != sy) {
      throw DimensionError("batch samples disagree in shape: " + s->x.shape().str() + " vs " +
                           sx.str());
    }
    auto dx = s->x.data();
    auto dy = s->y.data();
    xs.insert(xs.end(), dx.begin(), dx.end());
    ys.insert(ys.end(), dy.begin(), dy.end());
  }
  return {Tensor::from({n, sx.c, sx.h, sx.w}, std::move(xs)),
          Tensor::from({n, sy.c, sy.h, sy.w}, std::move(ys))};
}

Metrics evaluate_generator(const UNetGenerator& gen, const std::vector<SamplePair>& data,
                           int batch_size) {
  if (data.empty()) throw DataError("evaluation set is empty");
  NoGradGuard guard;
  Rng unused(0);
  const Task task = data[0].task;
  const int classes = std::max(data[0].class_count, 2);
  ConfusionMatrix cm(classes);
  std::vector<float> pred_depth;
  std::vector<float> gt_depth;
  double l1 = 0.0;
  std::size_t l1_count = 0;
  const DepthCodec codec;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<const SamplePair*> chunk;
    for (std::size_t i = start; i < std::min(data.size(), start + batch_size); ++i) {
      chunk.push_back(&data[i]);
    }
    auto [x, y] = stack_batch(chunk);
    const Tensor fake = gen.forward(x, false, unused);
    switch (task) {
      case Task::Segmentation: {
        const auto labels = labels_from_logits(fake, classes);
        for (std::size_t k = 0; k < chunk.size(); ++k) cm.add(labels[k], chunk[k]->labels);
        break;
      }
      case Task::MaskToImage: {
        const auto labels = labels_from_texture(fake, classes);
        for (std::size_t k = 0; k < chunk.size(); ++k) cm.add(labels[k], chunk[k]->labels);
        auto f = fake.data();
        auto t = y.data();
        for (std::size_t k = 0; k < f.size(); ++k) l1 += std::fabs(f[k] - t[k]);
        l1_count += f.size();
        break;
      }
      case Task::Depth:
        for (std::size_t k = 0; k < chunk.size(); ++k) {
          if (chunk[k]->depth.empty()) throw DataError("depth sample without raw depth");
          const auto d = decode_depth(fake, static_cast<int>(k), codec);
          pred_depth.insert(pred_depth.end(), d.begin(), d.end());
          gt_depth.insert(gt_depth.end(), chunk[k]->depth.begin(), chunk[k]->depth.end());
        }
        break;
    }
  }
  if (task == Task::Depth) {
    const DepthMetrics dm = depth_metrics(pred_depth, gt_depth);
    return {{"rel", dm.rel}, {"rms", dm.rms}, {"log10", dm.log10}};
  }
  Metrics out{{"mean_iou", cm.mean_iou()}, {"pixel_acc", cm.pixel_accuracy()}};
  if (task == Task::MaskToImage) out.push_back({"l1", l1 / static_cast<double>(l1_count)});
  return out;
}

// ---------------------------------------------------------------------------

namespace {

std::string format_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& key) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw DataError("bad value for '" + key + "': '" + text + "'");
}

}  // namespace

std::string LogRecord::to_line() const {
  std::string s = "iter=" + std::to_string(iter) + " d_loss=" + format_g9(d_loss) +
                  " g_loss=" + format_g9(g_loss);
  for (const auto& [k, v] : metrics) s += " " + k + "=" + format_g9(v);
  return s;
}

LogRecord LogRecord::parse_line(const std::string& line) {
  LogRecord r;
  std::istringstream is(line);
  std::string tok;
  bool have_iter = false;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos) throw DataError("malformed log token '" + tok + "'");
    const std::string key = tok.substr(0, eq);
    const std::string val = tok.substr(eq + 1);
    if (key == "iter") {
      r.iter = std::stoll(val);
      have_iter = true;
    } else if (key == "d_loss") {
      r.d_loss = parse_double(val, key);
    } else if (key == "g_loss") {
      r.g_loss = parse_double(val, key);
    } else {
      r.metrics.emplace_back(key, parse_double(val, key));
    }
  }
  if (!have_iter) throw DataError("log line without iter: '" + line + "'");
  return r;
}

double LogRecord::metric(const std::string& name) const {
  for (const auto& [k, v] : metrics) {
    if (k == name) return v;
  }
  throw DataError("log record has no metric '" + name + "'");
}

const LogRecord& TrainReport::last() const {
  if (records.empty()) throw DataError("report has no records");
  return records.back();
}

std::string TrainReport::summary_text() const {
  std::ostringstream os;
  os << "# summary\n";
  os << "iterations=" << iterations << "\n";
  os << "d_steps=" << d_steps << "\n";
  os << "g_steps=" << g_steps << "\n";
  os << "status=" << (diverged ? "diverged" : "ok") << "\n";
  if (diverged) os << "divergence=" << divergence_message << "\n";
  if (!records.empty()) {
    os << "final_d_loss=" << format_g9(records.back().d_loss) << "\n";
    os << "final_g_loss=" << format_g9(records.back().g_loss) << "\n";
    for (const auto& [k, v] : records.back().metrics) os << "final_" << k << "=" << format_g9(v) << "\n";
  }
  return os.str();
}

std::string TrainReport::to_text() const {
  std::string s;
  for (const auto& r : records) s += r.to_line() + "\n";
  return s + summary_text();
}

TrainReport TrainReport::parse(const std::string& text) {
  TrainReport rep;
  std::istringstream is(text);
  std::string line;
  bool in_summary = false;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    if (line == "# summary") {
      in_summary = true;
      rep.complete = true;
      continue;
    }
    if (!in_summary) {
      rep.records.push_back(LogRecord::parse_line(line));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string key = line.substr(0, eq);
    const std::string val = line.substr(eq + 1);
    if (key == "iterations") rep.iterations = std::stoll(val);
    else if (key == "d_steps") rep.d_steps = std::stoll(val);
    else if (key == "g_steps") rep.g_steps = std::stoll(val);
    else if (key == "status") rep.diverged = val == "diverged";
    else if (key == "divergence") rep.divergence_message = val;
  }
  return rep;
}

// ---------------------------------------------------------------------------

Trainer::Trainer(TrainSetup setup)
    : setup_(std::move(setup)),
      gen_(setup_.generator, derive_seed(setup_.config.seed, 1)),
      disc_(setup_.discriminator, setup_.generator.input_channels,
            setup_.generator.output_channels, derive_seed(setup_.config.seed, 2),
            setup_.discriminator_options),
      rng_(derive_seed(setup_.config.seed, 3)) {
  setup_.config.validate();
  if (setup_.train_data.empty()) throw DataError("training set is empty");
  if (setup_.eval_data.empty()) throw DataError("evaluation set is empty");
  const Shape& sx = setup_.train_data[0].x.shape();
  const Shape& sy = setup_.train_data[0].y.shape();
  if (sx.c != setup_.generator.input_channels || sy.c != setup_.generator.output_channels ||
      sx.h != setup_.generator.image_size) {
    throw DimensionError("data x " + sx.str() + " / y " + sy.str() +
                         " does not fit the generator (" +
                         std::to_string(setup_.generator.input_channels) + " -> " +
                         std::to_string(setup_.generator.output_channels) + " channels at " +
                         std::to_string(setup_.generator.image_size) + "px)");
  }
}

std::vector<Tensor> Trainer::generator_parameters() const {
  std::vector<Tensor> out;
  for (auto& p : gen_.parameters()) out.push_back(p.tensor);
  return out;
}

std::vector<Tensor> Trainer::discriminator_parameters() const {
  std::vector<Tensor> out;
  for (auto& p : disc_.parameters()) out.push_back(p.tensor);
  return out;
}

void Trainer::set_counters(std::int64_t iteration, std::int64_t d_steps, std::int64_t g_steps) {
  iteration_ = iteration;
  d_steps_ = d_steps;
  g_steps_ = g_steps;
}

std::pair<Tensor, Tensor> Trainer::draw_batch() {
  const auto& data = setup_.train_data;
  std::vector<SamplePair> jittered;
  std::vector<const SamplePair*> picks;
  jittered.reserve(setup_.config.batch_size);
  for (int k = 0; k < setup_.config.batch_size; ++k) {
    const SamplePair& s = data[rng_.below(data.size())];
    if (setup_.config.jitter) {
      jittered.push_back(jitter_augment(s, rng_));
      picks.push_back(&jittered.back());
    } else {
      picks.push_back(&s);
    }
  }
  return stack_batch(picks);
}

void Trainer::discriminator_step() {
  auto [x, y] = draw_batch();
  Tensor fake;
  {
    NoGradGuard guard;
    fake = gen_.forward(x, true, rng_).detach();
  }
  disc_.update_spectral();
  std::vector<Tensor> params = discriminator_parameters();
  for (auto& p : params) p.zero_grad();
  const Tensor loss = d_loss(discriminate(disc_, x, y), discriminate(disc_, x, fake));
  last_d_loss_ = loss.item();
  if (!std::isfinite(last_d_loss_)) throw DivergenceError("non-finite d_loss");
  backward(loss);
  adam_step(params, d_opt_, setup_.config);
  ++d_steps_;
}

void Trainer::generator_step() {
  auto [x, y] = draw_batch();
  gen_.update_spectral();
  std::vector<Tensor> params = generator_parameters();
  for (auto& p : params) p.zero_grad();
  const Tensor fake = gen_.forward(x, true, rng_);
  const Tensor loss = g_loss(discriminate(disc_, x, fake), fake, y, setup_.config.lambda_l1,
                             setup_.config.generator_loss);
  last_g_loss_ = loss.item();
  if (!std::isfinite(last_g_loss_)) throw DivergenceError("non-finite g_loss");
  backward(loss);
  adam_step(params, g_opt_, setup_.config);
  ++g_steps_;
}

void Trainer::step() {
  for (int k = 0; k < setup_.config.d_steps_per_g; ++k) discriminator_step();
  generator_step();
  ++iteration_;
}

LogRecord Trainer::record() const {
  LogRecord r;
  r.iter = iteration_;
  const auto& eval = setup_.eval_data;
  std::vector<const SamplePair*> probe;
  for (std::size_t i = 0; i < std::min<std::size_t>(eval.size(), setup_.config.batch_size); ++i) {
    probe.push_back(&eval[i]);
  }
  {
    NoGradGuard guard;
    Rng unused(0);
    auto [x, y] = stack_batch(probe);
    const Tensor fake = gen_.forward(x, false, unused);
    const Tensor logits_fake = discriminate(disc_, x, fake);
    r.d_loss = d_loss(discriminate(disc_, x, y), logits_fake).item();
    r.g_loss = g_loss(logits_fake, fake, y, setup_.config.lambda_l1, setup_.config.generator_loss)
                   .item();
  }
  r.metrics = evaluate_generator(gen_, eval, setup_.config.batch_size);
  return r;
}

TrainReport Trainer::run(const TrainCallbacks& callbacks) {
  TrainReport rep;
  const TrainConfig& cfg = setup_.config;
  auto emit = [&](LogRecord r) {
    if (!std::isfinite(r.d_loss) || !std::isfinite(r.g_loss)) {
      throw DivergenceError("non-finite probe loss at iteration " + std::to_string(r.iter));
    }
    if (callbacks.on_log) callbacks.on_log(r);
    rep.records.push_back(std::move(r));
  };
  try {
    if (iteration_ == 0) emit(record());
    while (iteration_ < cfg.total_iters) {
      step();
      const bool last = iteration_ == cfg.total_iters;
      if (iteration_ % cfg.eval_every == 0 || last) emit(record());
      if (cfg.checkpoint_every > 0 && iteration_ % cfg.checkpoint_every == 0 &&
          callbacks.on_checkpoint) {
        callbacks.on_checkpoint(*this);
      }
    }
  } catch (const DivergenceError& e) {
    rep.diverged = true;
    rep.divergence_message = std::string(e.what()) + " at iteration " + std::to_string(iteration_);
  }
  rep.iterations = iteration_;
  rep.d_steps = d_steps_;
  rep.g_steps = g_steps_;
  return rep;
}

TrainReport train(TrainSetup setup, const TrainCallbacks& callbacks) {
  Trainer t(std::move(setup));
  return t.run(callbacks);
}

}  // namespace fgan
