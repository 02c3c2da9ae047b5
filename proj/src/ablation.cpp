#include "fusiongan/ablation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fusiongan/checkpoint.hpp"

namespace fgan {

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, std::int64_t iter) {
  return dir / ("ckpt_" + std::to_string(iter) + ".fgan");
}

}  // namespace

std::string curves_csv(const TrainReport& report) {
  std::string s = "iter,metric,value\n";
  for (const auto& r : report.records) {
    const std::string it = std::to_string(r.iter);
    s += it + ",d_loss," + g9(r.d_loss) + "\n";
    s += it + ",g_loss," + g9(r.g_loss) + "\n";
    for (const auto& [k, v] : r.metrics) s += it + "," + k + "," + g9(v) + "\n";
  }
  return s;
}

TrainReport run_training(const RunConfig& cfg, const RunOptions& options) {
  std::error_code ec;
  std::filesystem::create_directories(options.out_dir, ec);
  if (ec) throw IoError("cannot create output directory " + options.out_dir.string() + ": " + ec.message());

  Trainer trainer(make_setup(cfg));
  std::vector<LogRecord> kept;
  const auto log_path = options.out_dir / "log.txt";
  if (options.resume) {
    const Checkpoint ckpt = load_checkpoint(*options.resume);
    const auto diffs = architecture_mismatches(ckpt.config(), cfg);
    if (!diffs.empty()) {
      std::string msg;
      for (const auto& d : diffs) msg += (msg.empty() ? "" : "; ") + d;
      throw CheckpointError("checkpoint " + options.resume->string() +
                            " was written for a different architecture (" + msg + ")");
    }
    restore_checkpoint(trainer, ckpt);
    if (std::filesystem::exists(log_path)) {
      for (const auto& r : TrainReport::parse(read_text(log_path)).records) {
        if (r.iter <= ckpt.iteration) kept.push_back(r);
      }
    }
  }

  std::ofstream log(log_path, std::ios::trunc);
  if (!log) throw IoError("cannot write " + log_path.string());
  for (const auto& r : kept) log << r.to_line() << "\n";
  log.flush();

  std::int64_t last_saved = -1;
  TrainCallbacks cb;
  cb.on_log = [&](const LogRecord& r) {
    const std::string line = r.to_line();
    log << line << "\n";
    log.flush();
    if (options.echo) *options.echo << line << "\n" << std::flush;
  };
  cb.on_checkpoint = [&](const Trainer& t) {
    save_checkpoint(checkpoint_path(options.out_dir, t.iteration()), capture_checkpoint(t, cfg));
    last_saved = t.iteration();
  };
  TrainReport rep = trainer.run(cb);
  if (!rep.diverged && last_saved != trainer.iteration()) {
    save_checkpoint(checkpoint_path(options.out_dir, trainer.iteration()),
                    capture_checkpoint(trainer, cfg));
  }
  rep.records.insert(rep.records.begin(), kept.begin(), kept.end());
  log << rep.summary_text();
  log.flush();
  if (!log) throw IoError("failed writing " + log_path.string());
  write_text(options.out_dir / "curves.csv", curves_csv(rep));
  return rep;
}

// ---------------------------------------------------------------------------

std::string AblationCell::id() const {
  return to_string(kind) + (use_sn ? "_sn" : "_nosn") + "_s" + std::to_string(seed);
}

std::string AblationCell::group() const { return to_string(kind) + (use_sn ? "+SN" : ""); }

ExperimentMatrix ExperimentMatrix::parse(std::string_view text) {
  ExperimentMatrix m;
  std::string config_lines;
  std::istringstream is{std::string(text)};
  std::string line;
  std::set<std::string> ids;
  while (std::getline(is, line)) {
    std::string body = line.substr(0, line.find('#'));
    const auto eq = body.find('=');
    std::string key = eq == std::string::npos ? "" : body.substr(0, eq);
    key.erase(0, key.find_first_not_of(" \t"));
    key.erase(key.find_last_not_of(" \t\r") + 1);
    if (key != "cell") {
      config_lines += line + "\n";
      continue;
    }
    std::istringstream cs(body.substr(eq + 1));
    std::string kind, sn;
    std::uint64_t seed = 0;
    if (!(cs >> kind >> sn >> seed)) {
      throw ConfigError("cell line must read 'cell = <Kind> <sn|nosn> <seed>': '" + line + "'");
    }
    std::string extra;
    if (cs >> extra) throw ConfigError("trailing text in cell line: '" + line + "'");
    if (sn != "sn" && sn != "nosn") throw ConfigError("cell SN flag must be sn or nosn, got '" + sn + "'");
    AblationCell c{parse_discriminator_kind(kind), sn == "sn", seed};
    if (!ids.insert(c.id()).second) throw ConfigError("duplicate ablation cell " + c.id());
    m.cells.push_back(c);
  }
  m.base = parse_config(config_lines);
  if (m.cells.empty()) throw ConfigError("experiment matrix has no cells");
  return m;
}

ExperimentMatrix ExperimentMatrix::load(const std::filesystem::path& path) {
  return parse(read_text(path));
}

RunConfig ExperimentMatrix::cell_config(const AblationCell& cell) const {
  RunConfig c = base;
  c.discriminator = cell.kind;
  c.use_sn = cell.use_sn;
  c.train.seed = cell.seed;
  if (!is_fusion(cell.kind)) c.fuse_mask.clear();
  return c;
}

std::vector<std::string> table_metrics(Task task) {
  if (task == Task::Depth) return {"rel", "rms", "log10"};
  return {"mean_iou", "pixel_acc"};
}

bool higher_is_better(const std::string& metric) {
  return metric == "mean_iou" || metric == "pixel_acc";
}

CellResult read_cell_result(const std::filesystem::path& cell_dir, const AblationCell& cell) {
  CellResult r;
  r.cell = cell;
  const auto log_path = cell_dir / "log.txt";
  if (!std::filesystem::exists(log_path)) {
    r.missing = true;
    return r;
  }
  const TrainReport rep = TrainReport::parse(read_text(log_path));
  r.diverged = rep.diverged;
  if (rep.records.empty()) {
    r.missing = !rep.diverged;
    return r;
  }
  r.initial = rep.records.front().metrics;
  if (!rep.complete) {
    r.missing = true;
    r.incomplete = true;
    return r;
  }
  if (!rep.diverged) r.final = rep.records.back().metrics;
  return r;
}

namespace {

std::optional<double> find_metric(const Metrics& m, const std::string& name) {
  for (const auto& [k, v] : m) {
    if (k == name) return v;
  }
  return std::nullopt;
}

std::optional<double> median_of(std::vector<double> v) {
  if (v.empty()) return std::nullopt;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

std::optional<double> group_median(const std::vector<CellResult>& results, const std::string& group,
                                   const std::string& metric) {
  std::vector<double> vals;
  for (const auto& r : results) {
    if (r.cell.group() != group || r.missing || r.diverged) continue;
    if (auto v = find_metric(r.final, metric)) vals.push_back(*v);
  }
  return median_of(vals);
}

std::optional<double> untrained_median(const std::vector<CellResult>& results,
                                       const std::string& metric) {
  std::vector<double> vals;
  for (const auto& r : results) {
    if (auto v = find_metric(r.initial, metric)) vals.push_back(*v);
  }
  return median_of(vals);
}

std::string format_table(Task task, const std::vector<CellResult>& results) {
  const auto metrics = table_metrics(task);
  std::ostringstream os;
  auto cell_text = [](std::optional<double> v) {
    if (!v) return std::string("-");
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *v);
    return std::string(buf);
  };
  os << std::left << std::setw(26) << "cell" << std::setw(12) << "kind" << std::setw(5) << "sn"
     << std::setw(8) << "seed";
  for (const auto& m : metrics) os << std::setw(12) << m;
  os << "status\n";
  std::vector<std::string> groups;
  for (const auto& r : results) {
    if (std::find(groups.begin(), groups.end(), r.cell.group()) == groups.end()) {
      groups.push_back(r.cell.group());
    }
    os << std::setw(26) << r.cell.id() << std::setw(12) << to_string(r.cell.kind) << std::setw(5)
       << (r.cell.use_sn ? "yes" : "no") << std::setw(8) << r.cell.seed;
    for (const auto& m : metrics) {
      const bool show = !r.diverged && !r.missing;
      os << std::setw(12) << (show ? cell_text(find_metric(r.final, m)) : std::string("-"));
    }
    os << (r.incomplete ? "INCOMPLETE" : r.missing ? "MISSING" : r.diverged ? "DIVERGED" : "ok")
       << "\n";
  }
  for (const auto& g : groups) {
    os << std::setw(51) << ("median " + g);
    bool any = false;
    for (const auto& m : metrics) {
      const auto v = group_median(results, g, m);
      any = any || v.has_value();
      os << std::setw(12) << cell_text(v);
    }
    os << (any ? "median" : "DIVERGED") << "\n";
  }
  os << std::setw(51) << "median untrained generator";
  for (const auto& m : metrics) os << std::setw(12) << cell_text(untrained_median(results, m));
  os << "iter 0\n";
  return os.str();
}

AblationOutcome run_ablation(const ExperimentMatrix& matrix, const std::filesystem::path& out_dir,
                             bool table_only, std::ostream* progress) {
  AblationOutcome out;
  for (const auto& cell : matrix.cells) {
    const auto dir = out_dir / cell.id();
    if (!table_only) {
      if (progress) *progress << "cell " << cell.id() << "\n" << std::flush;
      RunOptions opts;
      opts.out_dir = dir;
      opts.echo = progress;
      run_training(matrix.cell_config(cell), opts);
    }
    out.results.push_back(read_cell_result(dir, cell));
    if (out.results.back().diverged) ++out.diverged;
  }
  out.table = format_table(matrix.base.task, out.results);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  write_text(out_dir / "table.txt", out.table);
  return out;
}

}  // namespace fgan
