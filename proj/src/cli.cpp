#include "fusiongan/cli.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "fusiongan/ablation.hpp"
#include "fusiongan/analysis.hpp"
#include "fusiongan/checkpoint.hpp"
#include "fusiongan/config.hpp"
#include "fusiongan/io.hpp"

namespace fgan {

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string config;
  std::vector<std::string> overrides;  // key=value
};

std::string fmt(double v, const char* spec = "%.6g") {
  char buf[64];
  std::snprintf(buf, sizeof(buf), spec, v);
  return buf;
}

std::string join(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + o + "'");
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t"));
      s.erase(s.find_last_not_of(" \t") + 1);
      return s;
    };
    apply_config_value(cfg, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

RunConfig resolve_config(const Globals& g, bool required) {
  RunConfig cfg;
  if (!g.config.empty()) cfg = load_config(g.config);
  else if (required) throw ConfigError("--config is required");
  apply_overrides(cfg, g.overrides);
  if (g.seed) cfg.train.seed = *g.seed;
  return cfg;
}

struct LoadedNetworks {
  RunConfig config;
  UNetGenerator gen;
  Discriminator disc;
};

LoadedNetworks load_networks(const std::string& path, const Globals& g) {
  const Checkpoint ckpt = load_checkpoint(path);
  RunConfig cfg = ckpt.config();
  apply_overrides(cfg, g.overrides);
  LoadedNetworks n{cfg, UNetGenerator(cfg.generator_spec(), 0),
                   Discriminator(cfg.discriminator, input_channels(cfg.task),
                                 output_channels(cfg.task, cfg.scene.class_count), 0,
                                 cfg.discriminator_options())};
  restore_generator(n.gen, ckpt);
  restore_discriminator(n.disc, ckpt);
  return n;
}

// ---------------------------------------------------------------------------

int cmd_train(const Globals& g, const std::string& resume, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = resolve_config(g, true);
  RunOptions opts;
  opts.out_dir = g.out.empty() ? std::filesystem::path("runs/train") : std::filesystem::path(g.out);
  if (!resume.empty()) opts.resume = resume;
  opts.echo = &out;
  const TrainReport rep = run_training(cfg, opts);
  out << rep.summary_text();
  if (rep.diverged) {
    err << "error: diverged: " << rep.divergence_message << "\n";
    return kExitPartial;
  }
  return kExitOk;
}

int cmd_ablate(const Globals& g, std::string matrix_path, bool table_only, std::ostream& out,
               std::ostream& err) {
  if (matrix_path.empty()) matrix_path = g.config;
  if (matrix_path.empty()) throw ConfigError("ablate needs a matrix file (positional or --config)");
  ExperimentMatrix m = ExperimentMatrix::load(matrix_path);
  apply_overrides(m.base, g.overrides);
  const std::filesystem::path dir = g.out.empty() ? "runs/ablate" : g.out;
  const AblationOutcome res = run_ablation(m, dir, table_only, table_only ? nullptr : &out);
  out << res.table;
  int missing = 0;
  for (const auto& r : res.results) missing += r.missing ? 1 : 0;
  if (res.diverged > 0 || missing > 0) {
    err << "error: diverged: " << res.diverged << " of " << res.results.size()
        << " cells diverged, " << missing << " missing\n";
    return kExitPartial;
  }
  return kExitOk;
}

int cmd_analyze(const Globals& g, const std::string& kind, int trials, const std::string& activation,
                double alpha, int max_trials, const std::string& checkpoint, int samples,
                int splits, std::ostream& out, std::ostream& err) {
  const std::uint64_t seed = g.seed.value_or(1);
  if (trials < 1) throw ConfigError("--trials must be positive");
  if (kind == "inequality") {
    const SweepReport rep = sweep_fusion_inequality(trials, seed);
    out << "analysis: fusion inequality, relu, random gaussian instances\n";
    out << "trials: " << rep.trials << "\n";
    out << "violations: " << rep.violations << "\n";
    out << "min_margin: " << fmt(rep.min_margin) << "\n";
    std::int64_t violations = rep.violations;
    if (!checkpoint.empty()) {
      const LoadedNetworks n = load_networks(checkpoint, g);
      Rng rng(derive_seed(seed, 99));
      LayerCheckReport total;
      total.min_margin = 0.0;
      for (int s = 0; s < samples; ++s) {
        const SamplePair p = load_sample(n.config, s, true);
        const LayerCheckReport r = check_concat_layer_on_pair(n.disc, p.x, p.y, splits, rng);
        total.instances += r.instances;
        total.elements += r.elements;
        total.violations += r.violations;
        total.min_margin = s == 0 ? r.min_margin : std::min(total.min_margin, r.min_margin);
      }
      out << "checkpoint: " << checkpoint << " (" << to_string(n.config.discriminator)
          << ", first layer, " << samples << " samples, " << splits + 1 << " bias splits)\n";
      out << "checkpoint_instances: " << total.instances << "\n";
      out << "checkpoint_elements: " << total.elements << "\n";
      out << "checkpoint_violations: " << total.violations << "\n";
      out << "checkpoint_min_margin: " << fmt(total.min_margin) << "\n";
      violations += total.violations;
    }
    if (violations > 0) {
      err << "error: violation: fusion inequality failed " << violations << " times\n";
      return kExitError;
    }
    return kExitOk;
  }
  if (kind == "lemma1") {
    std::vector<ActivationFn> acts;
    if (activation == "all") {
      acts = {ActivationFn::leaky_relu(0.01), ActivationFn::leaky_relu(0.2), ActivationFn::elu()};
    } else {
      acts = {parse_activation(activation, alpha > 0.0 ? alpha : (activation == "elu" ? 1.0 : 0.2))};
    }
    int violations = 0;
    out << "analysis: lemma 1, sign-agreeing instances\n";
    for (const auto& act : acts) {
      const SweepReport rep = sweep_lemma1(act, trials, seed);
      out << "activation: " << act.name() << " trials: " << rep.trials
          << " applicable: " << rep.applicable << " violations: " << rep.violations
          << " min_margin: " << fmt(rep.min_margin) << "\n";
      violations += rep.violations;
    }
    if (violations > 0) {
      err << "error: violation: lemma 1 failed " << violations << " times\n";
      return kExitError;
    }
    return kExitOk;
  }
  if (kind == "counterexample") {
    if (alpha <= 0.0) alpha = 0.2;
    Rng rng(seed);
    const auto inst = find_leaky_counterexample(alpha, rng, max_trials);
    if (!inst) {
      err << "error: not-found: no counterexample in " << max_trials << " trials at alpha "
          << fmt(alpha) << "\n";
      return kExitError;
    }
    out << "analysis: leaky relu counterexample, alpha " << fmt(alpha) << "\n";
    out << "Ux+c: " << join(inst->branch_x()) << "\n";
    out << "Vy+d: " << join(inst->branch_y()) << "\n";
    out << "fused: " << join(inst->fused_signal()) << "\n";
    out << "concat: " << join(inst->concat_signal()) << "\n";
    const double f = inst->fused_signal()[0];
    const double c = inst->concat_signal()[0];
    out << "|fused| = " << fmt(std::fabs(f)) << " > |concat| = " << fmt(std::fabs(c)) << "\n";
    return kExitOk;
  }
  throw ConfigError("unknown analysis '" + kind + "' (allowed: inequality, lemma1, counterexample)");
}

int cmd_gradcam(const Globals& g, const std::string& checkpoint, std::int64_t sample,
                std::string layer, const std::string& target_name, int count, std::ostream& out) {
  if (count < 1) throw ConfigError("--count must be positive");
  const LoadedNetworks n = load_networks(checkpoint, g);
  if (layer.empty()) layer = "stage" + std::to_string(n.disc.stages().stage_count());
  const CamTarget target = parse_cam_target(target_name);
  const std::filesystem::path out_path = g.out.empty() ? "gradcam.pgm" : g.out;
  double mass_sum = 0.0;
  for (int k = 0; k < count; ++k) {
    const SamplePair p = load_sample(n.config, sample + k, true);
    Tensor y = p.y;
    if (target == CamTarget::FakeScore) {
      NoGradGuard guard;
      Rng unused(0);
      y = n.gen.forward(p.x, false, unused);
    }
    const CamMap cam = grad_cam(n.disc, p.x, y, layer, target);
    const double mass = foreground_mass_fraction(cam, foreground_mask(p, n.config.scene.background_depth()));
    if (k == 0) {
      write_cam_pgm(out_path, cam);
      out << "heatmap: " << out_path.string() << " (" << cam.width << "x" << cam.height << ")\n";
      out << "layer: " << layer << "\n";
      out << "target: " << to_string(target) << "\n";
    }
    out << "sample " << (sample + k) << " foreground_mass: " << fmt(mass) << "\n";
    mass_sum += mass;
  }
  out << "mean_foreground_mass: " << fmt(mass_sum / count) << " over " << count << " samples\n";
  return kExitOk;
}

int cmd_gendata(const Globals& g, int n, const std::string& task_name, const std::string& split,
                std::ostream& out) {
  RunConfig cfg = resolve_config(g, false);
  if (g.seed) cfg.scene.seed = *g.seed;
  if (!task_name.empty()) cfg.task = parse_task(task_name);
  if (n <= 0) throw ConfigError("--n must be positive, got " + std::to_string(n));
  if (split != "train" && split != "eval") throw ConfigError("--split must be train or eval");
  if (g.out.empty()) throw ConfigError("gendata needs --out <dataset root>");
  const auto pairs =
      generate_dataset(cfg.scene, n, cfg.task, split == "eval" ? kEvalIdOffset : 0);
  write_dataset(g.out, split, pairs, cfg.scene.seed);
  out << "wrote " << n << " " << to_string(cfg.task) << " samples to "
      << (std::filesystem::path(g.out) / to_string(cfg.task) / split).string() << "\n";
  return kExitOk;
}

int cmd_eval(const Globals& g, const std::string& checkpoint, int samples,
             const std::string& predictions, std::ostream& out) {
  const LoadedNetworks n = load_networks(checkpoint, g);
  RunConfig cfg = n.config;
  if (samples > 0) cfg.eval_samples = samples;
  std::vector<SamplePair> data;
  for (int k = 0; k < cfg.eval_samples; ++k) data.push_back(load_sample(cfg, k, true));
  const Metrics m = evaluate_generator(n.gen, data, cfg.train.batch_size);
  out << "checkpoint: " << checkpoint << "\n";
  out << "samples: " << data.size() << "\n";
  for (const auto& [k, v] : m) out << k << ": " << fmt(v, "%.9g") << "\n";
  if (!predictions.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(predictions, ec);
    if (ec) throw IoError("cannot create " + predictions + ": " + ec.message());
    NoGradGuard no_grad;
    Rng unused(0);
    for (const auto& p : data) {
      const auto path = std::filesystem::path(predictions) / (std::to_string(p.id) + "_pred.ften");
      write_ften(path, n.gen.forward(p.x, false, unused));
    }
    out << "predictions: " << data.size() << " tensors in " << predictions << "\n";
  }
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Conditional GAN engine with fusion discriminators", "fusiongan"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Master seed");
  app.add_option("--out", g.out, "Output directory or file");
  app.add_option("--config", g.config, "key = value configuration file");
  app.add_option("--set", g.overrides, "Override a config key (key=value)")->take_all();

  auto* train = app.add_subcommand("train", "Train one configuration");
  std::string resume;
  train->add_option("--resume", resume, "Continue from a checkpoint");

  auto* ablate = app.add_subcommand("ablate", "Train an experiment matrix and tabulate results");
  std::string matrix;
  bool table_only = false;
  ablate->add_option("matrix", matrix, "Experiment matrix file");
  ablate->add_flag("--table-only", table_only, "Rebuild the table from existing logs");

  auto* analyze = app.add_subcommand("analyze", "Numerical checks of the fusion claims");
  std::string kind;
  int trials = 10000;
  std::string activation = "all";
  double alpha = 0.0;
  int max_trials = 1000;
  std::string analyze_ckpt;
  int samples = 100;
  int splits = 10;
  analyze->add_option("kind", kind, "inequality | lemma1 | counterexample")->required();
  analyze->add_option("--trials", trials, "Random instances");
  analyze->add_option("--activation", activation, "all | leaky_relu | elu");
  analyze->add_option("--alpha", alpha, "Leaky slope / ELU scale (default 0.2 / 1.0)");
  analyze->add_option("--max-trials", max_trials, "Counterexample search budget");
  analyze->add_option("--checkpoint", analyze_ckpt, "Concatenation checkpoint to decompose");
  analyze->add_option("--samples", samples, "Dataset samples for the checkpoint check");
  analyze->add_option("--splits", splits, "Extra random bias splits per instance");

  auto* gradcam = app.add_subcommand("gradcam", "Grad-CAM heatmap of a discriminator");
  std::string cam_ckpt;
  std::int64_t sample = 0;
  std::string layer;
  std::string target = "real";
  int count = 1;
  gradcam->add_option("--checkpoint", cam_ckpt, "Checkpoint")->required();
  gradcam->add_option("--sample", sample, "Held-out sample id");
  gradcam->add_option("--layer", layer, "Feature layer name");
  gradcam->add_option("--target", target, "real | fake");
  gradcam->add_option("--count", count, "Consecutive samples to average the mass over");

  auto* gendata = app.add_subcommand("gendata", "Write a synthetic dataset");
  int n = 0;
  std::string task;
  std::string split = "train";
  gendata->add_option("--n", n, "Number of samples")->required();
  gendata->add_option("--task", task, "mask2image | segmentation | depth");
  gendata->add_option("--split", split, "train | eval");

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint's generator");
  std::string eval_ckpt;
  int eval_samples = 0;
  eval->add_option("--checkpoint", eval_ckpt, "Checkpoint")->required();
  eval->add_option("--samples", eval_samples, "Held-out samples (default from config)");
  std::string eval_predictions;
  eval->add_option("--predictions", eval_predictions, "Directory for <id>_pred.ften generator outputs");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    err << "error: usage: " << msg << "\n";
    return kExitUsage;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    if (*train) return cmd_train(g, resume, out, err);
    if (*ablate) return cmd_ablate(g, matrix, table_only, out, err);
    if (*analyze) {
      return cmd_analyze(g, kind, trials, activation, alpha, max_trials, analyze_ckpt, samples,
                         splits, out, err);
    }
    if (*gradcam) return cmd_gradcam(g, cam_ckpt, sample, layer, target, count, out);
    if (*gendata) return cmd_gendata(g, n, task, split, out);
    if (*eval) return cmd_eval(g, eval_ckpt, eval_samples, eval_predictions, out);
  } catch (const Error& e) {
    std::string msg = e.what();
    for (auto& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    err << "error: " << e.code() << ": " << msg << "\n";
    return kExitError;
  } catch (const std::exception& e) {
    err << "error: internal: " << e.what() << "\n";
    return kExitError;
  }
  return kExitUsage;
}

}  // namespace fgan
