#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "fusiongan/discriminator.hpp"
#include "fusiongan/generator.hpp"
#include "fusiongan/rng.hpp"
#include "fusiongan/taskgen.hpp"

namespace fgan {

enum class GeneratorLoss { NonSaturating, Minimax };

std::string to_string(GeneratorLoss form);
GeneratorLoss parse_generator_loss(std::string_view name);

struct TrainConfig {
  double lambda_l1 = 100.0;
  double lr = 0.0002;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double adam_eps = 1e-8;
  int d_steps_per_g = 2;
  std::int64_t total_iters = 1000;  // generator updates
  int batch_size = 4;
  std::uint64_t seed = 0;
  std::int64_t eval_every = 100;
  std::int64_t checkpoint_every = 0;  // 0 disables periodic checkpoints
  GeneratorLoss generator_loss = GeneratorLoss::NonSaturating;
  bool jitter = true;

  void validate() const;
};

// mean(softplus(-real)) + mean(softplus(fake)), i.e. the binary cross-entropy
// of the real/fake classifier in log-sum-exp form. Non-finite logits raise DivergenceError.
Tensor d_loss(const Tensor& logits_real, const Tensor& logits_fake);

// Adversarial term plus lambda * mean|y_real - y_fake|. The non-saturating
// adversarial term is mean(softplus(-fake)); the minimax one is
// mean(-softplus(fake)) = mean(log(1 - sigmoid(fake))).
Tensor g_loss(const Tensor& logits_fake, const Tensor& y_fake, const Tensor& y_real,
              double lambda_l1, GeneratorLoss form = GeneratorLoss::NonSaturating);

struct OptimizerState {
  std::vector<std::vector<float>> m;
  std::vector<std::vector<float>> v;
  std::int64_t t = 0;
};

// Bias-corrected Adam over explicit gradient arrays.
void adam_step(std::vector<Tensor>& params, const std::vector<std::span<const float>>& grads,
               OptimizerState& state, const TrainConfig& cfg);
// Same, reading each parameter's accumulated gradient (missing grads count as
// zero).
void adam_step(std::vector<Tensor>& params, OptimizerState& state, const TrainConfig& cfg);

// Stacks samples into batch tensors (N x C x H x W).
std::pair<Tensor, Tensor> stack_batch(const std::vector<const SamplePair*>& samples);

using Metrics = std::vector<std::pair<std::string, double>>;

// Evaluation of a generator on a held-out set with dropout off. Segmentation
// reports mean_iou / pixel_acc; depth reports rel / rms / log10; mask-to-image
// reports the texture-inverse proxy mean_iou / pixel_acc plus l1.
Metrics evaluate_generator(const UNetGenerator& gen, const std::vector<SamplePair>& data,
                           int batch_size);

struct LogRecord {
  std::int64_t iter = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  Metrics metrics;

  std::string to_line() const;
  static LogRecord parse_line(const std::string& line);
  double metric(const std::string& name) const;
};

struct TrainReport {
  std::vector<LogRecord> records;
  std::int64_t iterations = 0;
  std::int64_t d_steps = 0;
  std::int64_t g_steps = 0;
  bool diverged = false;
  std::string divergence_message;
  bool complete = false;  // a summary block was present when parsed

  const LogRecord& last() const;
  std::string summary_text() const;
  std::string to_text() const;
  static TrainReport parse(const std::string& text);
};

// Everything a run needs besides the hyperparameters.
struct TrainSetup {
  TrainConfig config;
  Task task = Task::Segmentation;
  int class_count = 5;
  UNetSpec generator;
  DiscriminatorKind discriminator = DiscriminatorKind::Fusion4;
  DiscriminatorOptions discriminator_options;
  std::vector<SamplePair> train_data;
  std::vector<SamplePair> eval_data;
};

struct TrainCallbacks {
  std::function<void(const LogRecord&)> on_log;
  std::function<void(const class Trainer&)> on_checkpoint;
};

class Trainer {
 public:
  explicit Trainer(TrainSetup setup);

  // d_steps_per_g discriminator updates followed by one generator update.
  void step();
  // Losses on a fixed probe batch (first eval samples, no jitter, dropout off)
  // plus the evaluation metrics.
  LogRecord record() const;
  // Trains until config.total_iters generator updates have been made. A
  // divergence ends the run early and is reported, not thrown.
  TrainReport run(const TrainCallbacks& callbacks = {});

  const TrainSetup& setup() const { return setup_; }
  const TrainConfig& config() const { return setup_.config; }
  UNetGenerator& generator() { return gen_; }
  const UNetGenerator& generator() const { return gen_; }
  Discriminator& discriminator() { return disc_; }
  const Discriminator& discriminator() const { return disc_; }
  OptimizerState& g_optimizer() { return g_opt_; }
  const OptimizerState& g_optimizer() const { return g_opt_; }
  OptimizerState& d_optimizer() { return d_opt_; }
  const OptimizerState& d_optimizer() const { return d_opt_; }
  Rng& rng() { return rng_; }
  const Rng& rng() const { return rng_; }
  std::int64_t iteration() const { return iteration_; }
  std::int64_t d_steps() const { return d_steps_; }
  std::int64_t g_steps() const { return g_steps_; }
  void set_counters(std::int64_t iteration, std::int64_t d_steps, std::int64_t g_steps);
  std::vector<Tensor> generator_parameters() const;
  std::vector<Tensor> discriminator_parameters() const;

  // Last training losses (from the most recent D and G steps).
  double last_d_loss() const { return last_d_loss_; }
  double last_g_loss() const { return last_g_loss_; }

  void discriminator_step();
  void generator_step();

 private:
  std::pair<Tensor, Tensor> draw_batch();

  TrainSetup setup_;
  UNetGenerator gen_;
  Discriminator disc_;
  OptimizerState g_opt_;
  OptimizerState d_opt_;
  Rng rng_;
  std::int64_t iteration_ = 0;
  std::int64_t d_steps_ = 0;
  std::int64_t g_steps_ = 0;
  double last_d_loss_ = 0.0;
  double last_g_loss_ = 0.0;
};

TrainReport train(TrainSetup setup, const TrainCallbacks& callbacks = {});

}  // namespace fgan
