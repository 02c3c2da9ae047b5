// Acceptance gate: one PASS / FAIL / UNVERIFIED line per criterion.
//
//   fusiongan_acceptance [--work-dir DIR] [--seg-ablation DIR --seg-matrix FILE]
//                        [--depth-ablation DIR --depth-matrix FILE]
//
// The ablation criteria read logs written by `fusiongan ablate`; without them
// they are reported UNVERIFIED, and logs from runs smaller than the stated
// protocol are reported UNVERIFIED with the observed trend. Exit status is 1
// when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "fusiongan/ablation.hpp"
#include "fusiongan/analysis.hpp"
#include "fusiongan/checkpoint.hpp"
#include "fusiongan/cli.hpp"
#include "fusiongan/io.hpp"
#include "gradcheck.hpp"
#include "op_cases.hpp"

namespace fs = std::filesystem;
using namespace fgan;
using namespace fgan::testing;

namespace {

enum class Verdict { Pass, Fail, Unverified };

struct Outcome {
  Verdict verdict = Verdict::Pass;
  std::string detail;
};

Outcome pass_if(bool ok, std::string detail) {
  return {ok ? Verdict::Pass : Verdict::Fail, std::move(detail)};
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), f, v);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

struct CliResult {
  int code = 0;
  std::string out;
  std::string err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fusiongan");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream o;
  std::ostringstream e;
  CliResult r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), o, e);
  r.out = o.str();
  r.err = e.str();
  return r;
}

std::optional<long long> field(const std::string& text, const std::string& key) {
  const auto pos = text.find(key + ": ");
  if (pos == std::string::npos) return std::nullopt;
  return std::stoll(text.substr(pos + key.size() + 2));
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Options {
  fs::path work = fs::temp_directory_path() / "fusiongan_acceptance";
  std::optional<fs::path> seg_dir;
  std::optional<fs::path> seg_matrix;
  std::optional<fs::path> depth_dir;
  std::optional<fs::path> depth_matrix;
};

// Short Concat4 / Fusion4 training runs shared by several criteria.
class Fixtures {
 public:
  explicit Fixtures(fs::path root) : root_(std::move(root)) {}

  fs::path checkpoint(DiscriminatorKind kind) {
    const std::string id = to_string(kind);
    auto it = ckpts_.find(id);
    if (it != ckpts_.end()) return it->second;
    RunConfig cfg = tiny_config(kind);
    cfg.train.total_iters = 20;
    cfg.train.eval_every = 10;
    const fs::path dir = root_ / ("fixture_" + id);
    fs::remove_all(dir);
    run_training(cfg, {dir, std::nullopt, nullptr});
    const fs::path p = dir / "ckpt_20.fgan";
    ckpts_[id] = p;
    return p;
  }

 private:
  fs::path root_;
  std::map<std::string, fs::path> ckpts_;
};

Outcome criterion_inequality(Fixtures& fx) {
  const fs::path ckpt = fx.checkpoint(DiscriminatorKind::Concat4);
  const auto t0 = std::chrono::steady_clock::now();
  const CliResult r = cli({"analyze", "inequality", "--trials", "10000", "--checkpoint",
                           ckpt.string(), "--samples", "100"});
  const double secs = seconds_since(t0);
  const auto random_v = field(r.out, "violations");
  const auto ckpt_v = field(r.out, "checkpoint_violations");
  const auto elements = field(r.out, "checkpoint_elements");
  const bool ok = r.code == 0 && random_v == 0 && ckpt_v == 0 && elements.value_or(0) > 0 && secs < 60.0;
  return pass_if(ok, "random violations " + std::to_string(random_v.value_or(-1)) +
                         " / 10000, trained Concat4 layer-1 violations " +
                         std::to_string(ckpt_v.value_or(-1)) + " over " +
                         std::to_string(elements.value_or(0)) + " elements on 100 samples, " +
                         fmt("%.1f", secs) + " s");
}

Outcome criterion_lemma1() {
  const auto t0 = std::chrono::steady_clock::now();
  std::string detail;
  bool ok = true;
  for (const ActivationFn act : {ActivationFn::leaky_relu(0.01), ActivationFn::leaky_relu(0.2),
                                 ActivationFn::elu()}) {
    const SweepReport r = sweep_lemma1(act, 10000, 1);
    ok = ok && r.violations == 0 && r.applicable > 0;
    detail += act.name() + " " + std::to_string(r.violations) + "/" + std::to_string(r.applicable) +
              " applicable; ";
  }
  const double secs = seconds_since(t0);
  ok = ok && secs < 60.0;
  return pass_if(ok, detail + fmt("%.1f", secs) + " s");
}

Outcome criterion_counterexample() {
  const auto hand = FusionInstance::from_preactivations({1.0}, {-2.0}, ActivationFn::leaky_relu(0.2));
  const bool hand_ok = is_leaky_counterexample(hand) && std::fabs(hand.fused_signal()[0] - 0.6) < 1e-12 &&
                       std::fabs(std::fabs(hand.concat_signal()[0]) - 0.2) < 1e-12;
  Rng rng(1);
  const auto found = find_leaky_counterexample(0.2, rng, 1000);
  int seeds_ok = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    Rng r(derive_seed(1234, s));
    seeds_ok += find_leaky_counterexample(0.2, r, 1000).has_value();
  }
  const bool ok = hand_ok && found.has_value() && seeds_ok >= 99;
  std::string detail = "hand fixture fused 0.6 vs |concat| 0.2 " + std::string(hand_ok ? "ok" : "WRONG");
  if (found) {
    detail += ", search: |fused| " + fmt("%.4f", std::fabs(found->fused_signal()[0])) + " > |concat| " +
              fmt("%.4f", std::fabs(found->concat_signal()[0]));
  }
  detail += ", found on " + std::to_string(seeds_ok) + "/100 seeds";
  return pass_if(ok, detail);
}

Outcome criterion_autodiff() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0.0;
  std::string worst_op;
  int checked = 0;
  for (const auto& c : all_op_cases()) {
    Rng rng(derive_seed(17, std::hash<std::string>{}(c.name)));
    for (int trial = 0; trial < kGradCheckInstances; ++trial) {
      OpInstance inst = c.make(rng);
      const double e = grad_check(inst.fn, inst.inputs, rng, inst.eps).max_rel_error;
      ++checked;
      if (e > worst) {
        worst = e;
        worst_op = c.name;
      }
    }
  }
  Rng rng(5);
  double adj = 0.0;
  const int geometries[][6] = {{3, 4, 8, 4, 2, 1}, {2, 5, 7, 3, 1, 1}, {4, 3, 9, 3, 2, 1},
                               {1, 1, 6, 4, 2, 1}, {6, 2, 5, 1, 1, 0}, {64, 32, 16, 4, 2, 1}};
  for (const auto& g : geometries) adj = std::max(adj, conv_adjoint_error(rng, g[0], g[1], g[2], g[3], g[4], g[5]));
  const double secs = seconds_since(t0);
  const bool ok = worst < kGradCheckTolerance && adj < 1e-5 && secs < 120.0;
  return pass_if(ok, std::to_string(all_op_cases().size()) + " ops x " +
                         std::to_string(kGradCheckInstances) + " instances, worst rel error " +
                         fmt("%.2e", worst) + " (" + worst_op + "), adjoint error " + fmt("%.2e", adj) +
                         ", " + fmt("%.1f", secs) + " s");
}

Outcome criterion_spectral() {
  const int shapes[][3] = {{64, 6, 4},  {128, 64, 4}, {256, 128, 4}, {512, 256, 3},
                           {1, 512, 3}, {64, 3, 4},   {512, 1024, 4}};
  double worst = 0.0;
  for (const auto& sh : shapes) {
    ConvBlockSpec b;
    b.out_channels = sh[0];
    b.in_channels = sh[1];
    b.kernel = sh[2];
    b.stride = sh[2] == 4 ? 2 : 1;
    ConvLayer layer("probe", b, 7);
    for (int k = 0; k < 20; ++k) layer.update_spectral();
    worst = std::max(worst, std::fabs(top_singular_value(layer.effective_weight()) - 1.0));
  }
  Rng rng(3);
  const Tensor w = Tensor::randn({128, 64, 4, 4}, rng, 0.02f);
  Tensor w10 = w.detach();
  for (float& v : w10.mutable_data()) v *= 10.0f;
  SpectralState a = init_spectral_state(w, 5);
  SpectralState b = init_spectral_state(w10, 5);
  Tensor na;
  Tensor nb;
  for (int k = 0; k < 20; ++k) {
    na = spectral_normalize(w, a);
    nb = spectral_normalize(w10, b);
  }
  double scale_err = 0.0;
  for (std::size_t i = 0; i < na.numel(); ++i) {
    scale_err = std::max(scale_err, static_cast<double>(std::fabs(na.data()[i] - nb.data()[i])));
  }
  return pass_if(worst <= 1e-3 && scale_err <= 1e-5,
                 "max |sigma - 1| " + fmt("%.2e", worst) + " over 7 conv shapes, normalize(10W) vs normalize(W) " +
                     fmt("%.2e", scale_err));
}

Outcome criterion_losses() {
  const Tensor zeros = Tensor::zeros({4, 1, 8, 8});
  Rng rng(1);
  const Tensor y = Tensor::randn({4, 3, 8, 8}, rng);
  const double d = d_loss(zeros, zeros).item();
  const double g = g_loss(zeros, y, y, 0.0).item();
  const double ln2 = std::log(2.0);
  return pass_if(std::fabs(d - 2.0 * ln2) <= 1e-6 && std::fabs(g - ln2) <= 1e-6,
                 "d_loss " + fmt("%.9f", d) + " (2 ln 2 = " + fmt("%.9f", 2.0 * ln2) + "), g_loss " +
                     fmt("%.9f", g) + " (ln 2 = " + fmt("%.9f", ln2) + ")");
}

struct GroupStats {
  std::optional<double> median;
  int diverged = 0;
  int finished = 0;
};

GroupStats group_stats(const std::vector<CellResult>& results, const std::string& group,
                       const std::string& metric) {
  GroupStats s;
  s.median = group_median(results, group, metric);
  for (const auto& r : results) {
    if (r.cell.group() != group) continue;
    s.diverged += r.diverged;
    s.finished += !r.diverged && !r.missing;
  }
  return s;
}

struct AblationLogs {
  std::vector<CellResult> results;
  RunConfig base;
  int seeds_per_group = 0;

  // The stated protocol: 64x64 images, 20k iterations, batch 4, 3 seeds per group.
  bool full_scale() const {
    return base.scene.image_size == 64 && base.train.total_iters >= 20000 &&
           base.train.batch_size == 4 && seeds_per_group >= 3;
  }
  std::string scale_text() const {
    return std::to_string(base.scene.image_size) + " px, " + std::to_string(base.train.total_iters) +
           " iterations, batch " + std::to_string(base.train.batch_size) + ", " +
           std::to_string(seeds_per_group) + " seeds";
  }
};

std::optional<AblationLogs> load_ablation(const std::optional<fs::path>& dir,
                                          const std::optional<fs::path>& matrix) {
  if (!dir || !matrix) return std::nullopt;
  const ExperimentMatrix m = ExperimentMatrix::load(*matrix);
  AblationLogs out;
  out.base = m.base;
  std::map<std::string, int> per_group;
  for (const auto& c : m.cells) {
    out.results.push_back(read_cell_result(*dir / c.id(), c));
    ++per_group[c.group()];
  }
  out.seeds_per_group = per_group.empty() ? 0 : per_group.begin()->second;
  for (const auto& [g, n] : per_group) out.seeds_per_group = std::min(out.seeds_per_group, n);
  return out;
}

// Below the stated protocol the trend is reported but cannot settle the criterion.
Outcome scaled_verdict(bool ok, const AblationLogs& logs, const std::string& detail) {
  if (logs.full_scale()) return pass_if(ok, detail);
  return {Verdict::Unverified, "reduced scale (" + logs.scale_text() + "), trend " +
                                   (ok ? "holds" : "does not hold") + ": " + detail};
}

std::string opt_str(std::optional<double> v) { return v ? fmt("%.4f", *v) : "n/a"; }

Outcome criterion_ablation(const Options& opt) {
  const auto seg = load_ablation(opt.seg_dir, opt.seg_matrix);
  if (!seg) {
    return {Verdict::Unverified,
            "needs segmentation ablation logs (--seg-ablation DIR --seg-matrix FILE); "
            "full scale is 20k iterations x 9 cells"};
  }
  const auto fusion = group_stats(seg->results, "Fusion4+SN", "mean_iou");
  const auto concat = group_stats(seg->results, "Concat4+SN", "mean_iou");
  const auto base = untrained_median(seg->results, "mean_iou");
  bool ok = fusion.median && concat.median && base && *fusion.median >= *concat.median &&
            *fusion.median >= *base + 0.1 && *concat.median >= *base + 0.1;
  bool full = seg->full_scale();
  std::string detail = "seg IoU Fusion4+SN " + opt_str(fusion.median) + " vs Concat4+SN " +
                       opt_str(concat.median) + ", untrained " + opt_str(base);
  const auto depth = load_ablation(opt.depth_dir, opt.depth_matrix);
  if (depth) {
    const auto f = group_stats(depth->results, "Fusion4+SN", "rel");
    const auto c = group_stats(depth->results, "Concat4+SN", "rel");
    ok = ok && f.median && c.median && *f.median <= *c.median;
    full = full && depth->full_scale();
    detail += "; depth rel Fusion4+SN " + opt_str(f.median) + " vs Concat4+SN " + opt_str(c.median);
  } else {
    detail += "; depth logs not supplied";
    full = false;
  }
  if (full) return pass_if(ok, detail);
  return scaled_verdict(ok, depth && !depth->full_scale() ? *depth : *seg, detail);
}

Outcome criterion_sn_trend(const Options& opt) {
  const auto seg = load_ablation(opt.seg_dir, opt.seg_matrix);
  if (!seg) return {Verdict::Unverified, "needs segmentation ablation logs with Concat4 sn / nosn cells"};
  const auto sn = group_stats(seg->results, "Concat4+SN", "mean_iou");
  const auto plain = group_stats(seg->results, "Concat4", "mean_iou");
  const bool ok = plain.diverged > 0 || (sn.median && plain.median && *sn.median >= *plain.median);
  return scaled_verdict(ok, *seg,
                        "Concat4+SN " + opt_str(sn.median) + " vs Concat4 " + opt_str(plain.median) +
                            ", without-SN diverged " + std::to_string(plain.diverged) + "/" +
                            std::to_string(plain.diverged + plain.finished));
}

Outcome criterion_determinism(const fs::path& work) {
  RunConfig cfg = tiny_config(DiscriminatorKind::Fusion4);
  cfg.train.total_iters = 8;
  cfg.train.eval_every = 2;
  cfg.train.checkpoint_every = 4;
  const fs::path a = work / "det_a";
  const fs::path b = work / "det_b";
  const fs::path c = work / "det_resume";
  for (const auto& d : {a, b, c}) fs::remove_all(d);
  run_training(cfg, {a, std::nullopt, nullptr});
  run_training(cfg, {b, std::nullopt, nullptr});
  const bool repeat = slurp(a / "log.txt") == slurp(b / "log.txt");
  fs::create_directories(c);
  fs::copy_file(a / "ckpt_4.fgan", c / "ckpt_4.fgan");
  {
    std::ofstream log(c / "log.txt");
    for (const auto& r : TrainReport::parse(slurp(a / "log.txt")).records) {
      if (r.iter <= 4) log << r.to_line() << "\n";
    }
  }
  run_training(cfg, {c, c / "ckpt_4.fgan", nullptr});
  const bool resume = slurp(a / "log.txt") == slurp(c / "log.txt");
  return pass_if(repeat && resume, std::string("repeat run log ") + (repeat ? "identical" : "DIFFERS") +
                                       ", resume from iter 4 log " + (resume ? "identical" : "DIFFERS") +
                                       " (9 significant digits)");
}

Outcome criterion_metrics() {
  Rng rng(10);
  int iou_bad = 0;
  int acc_bad = 0;
  double depth_err = 0.0;
  for (int t = 0; t < 100; ++t) {
    const int h = 1 + static_cast<int>(rng.below(12));
    const int w = 1 + static_cast<int>(rng.below(12));
    const int k = 2 + static_cast<int>(rng.below(5));
    LabelMap a{h, w, std::vector<int>(static_cast<std::size_t>(h) * w)};
    LabelMap b = a;
    for (int& v : a.labels) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    for (int& v : b.labels) v = static_cast<int>(rng.below(static_cast<std::uint64_t>(k)));
    double total = 0.0;
    int present = 0;
    int same = 0;
    for (int c = 0; c < k; ++c) {
      int inter = 0;
      int uni = 0;
      for (std::size_t p = 0; p < a.size(); ++p) {
        inter += a.labels[p] == c && b.labels[p] == c;
        uni += a.labels[p] == c || b.labels[p] == c;
      }
      if (uni > 0) {
        total += static_cast<double>(inter) / uni;
        ++present;
      }
    }
    for (std::size_t p = 0; p < a.size(); ++p) same += a.labels[p] == b.labels[p];
    iou_bad += mean_iou(a, b, k) != total / present;
    acc_bad += pixel_accuracy(a, b) != static_cast<double>(same) / a.size();

    std::vector<float> pred(a.size());
    std::vector<float> gt(a.size());
    for (std::size_t p = 0; p < a.size(); ++p) {
      pred[p] = static_cast<float>(rng.uniform(0.2, 12.0));
      gt[p] = static_cast<float>(rng.uniform(0.5, 10.0));
    }
    double rel = 0.0, sq = 0.0, lg = 0.0;
    for (std::size_t p = 0; p < a.size(); ++p) {
      const double q = pred[p];
      const double g = gt[p];
      rel += std::fabs(q - g) / g;
      sq += (q - g) * (q - g);
      lg += std::fabs(std::log10(q) - std::log10(g));
    }
    const double n = static_cast<double>(a.size());
    const DepthMetrics m = depth_metrics(pred, gt);
    depth_err = std::max({depth_err, std::fabs(m.rel - rel / n), std::fabs(m.rms - std::sqrt(sq / n)),
                          std::fabs(m.log10 - lg / n)});
  }
  return pass_if(iou_bad == 0 && acc_bad == 0 && depth_err <= 1e-6,
                 "100 random maps: IoU mismatches " + std::to_string(iou_bad) + ", accuracy mismatches " +
                     std::to_string(acc_bad) + ", depth max error " + fmt("%.2e", depth_err));
}

Outcome criterion_gradcam(Fixtures& fx, const fs::path& work) {
  std::string detail;
  bool ok = true;
  for (auto kind : {DiscriminatorKind::Fusion4, DiscriminatorKind::Concat4}) {
    const fs::path ckpt = fx.checkpoint(kind);
    const fs::path pgm = work / ("cam_" + to_string(kind) + ".pgm");
    const CliResult r = cli({"--out", pgm.string(), "gradcam", "--checkpoint", ckpt.string(), "--count", "50"});
    if (r.code != 0) {
      ok = false;
      detail += to_string(kind) + " failed: " + r.err;
      continue;
    }
    const PnmImage img = read_pnm(pgm);
    const bool valid = img.channels == 1 && img.width == 32 && img.height == 32 && img.maxval == 255;
    std::uint16_t top = 0;
    for (auto s : img.samples) top = std::max(top, s);
    ok = ok && valid && (top == 255 || top == 0);
    const auto pos = r.out.find("mean_foreground_mass: ");
    const std::string mass = pos == std::string::npos ? "?" : r.out.substr(pos + 22, r.out.find(' ', pos + 22) - pos - 22);
    detail += to_string(kind) + " mean foreground mass " + mass + " (50 samples, PGM " +
              std::to_string(img.width) + "x" + std::to_string(img.height) + (valid ? " valid" : " INVALID") + "); ";
  }
  return pass_if(ok, detail + "reported, not thresholded");
}

const char* verdict_text(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "PASS";
    case Verdict::Fail: return "FAIL";
    case Verdict::Unverified: return "UNVERIFIED";
  }
  return "?";
}

}  // namespace

int main(int argc, char** argv) {
  Options opt;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    auto next = [&]() -> fs::path {
      if (i + 1 >= argc) {
        std::cerr << "error: usage: " << a << " needs a value\n";
        std::exit(2);
      }
      return argv[++i];
    };
    if (a == "--work-dir") opt.work = next();
    else if (a == "--seg-ablation") opt.seg_dir = next();
    else if (a == "--seg-matrix") opt.seg_matrix = next();
    else if (a == "--depth-ablation") opt.depth_dir = next();
    else if (a == "--depth-matrix") opt.depth_matrix = next();
    else {
      std::cerr << "error: usage: unknown argument " << a << "\n";
      return 2;
    }
  }
  fs::create_directories(opt.work);
  Fixtures fx(opt.work);

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "fusion inequality", [&] { return criterion_inequality(fx); }},
      {2, "lemma 1 for leaky relu and elu", [] { return criterion_lemma1(); }},
      {3, "leaky relu counterexample", [] { return criterion_counterexample(); }},
      {4, "autodiff against finite differences", [] { return criterion_autodiff(); }},
      {5, "spectral normalization", [] { return criterion_spectral(); }},
      {6, "loss calibration", [] { return criterion_losses(); }},
      {7, "directional ablation", [&] { return criterion_ablation(opt); }},
      {8, "spectral normalization stabilization trend", [&] { return criterion_sn_trend(opt); }},
      {9, "determinism and resume", [&] { return criterion_determinism(opt.work); }},
      {10, "metric oracles", [] { return criterion_metrics(); }},
      {11, "grad-cam contract", [&] { return criterion_gradcam(fx, opt.work); }},
  };
  int failures = 0;
  for (const auto& c : criteria) {
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {Verdict::Fail, std::string("exception: ") + e.what()};
    }
    failures += o.verdict == Verdict::Fail;
    std::cout << verdict_text(o.verdict) << " [" << c.id << "] " << c.name << ": " << o.detail << "\n"
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
