#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fusiongan/config.hpp"

namespace fgan {

// Result of training one configuration into `out_dir`: log.txt (one record
// line per evaluation plus a summary block), curves.csv and ckpt_<iter>.fgan
// files. With `resume`, training continues from the checkpoint and the log
// keeps the records up to the checkpoint iteration.
struct RunOptions {
  std::filesystem::path out_dir;
  std::optional<std::filesystem::path> resume;
  std::ostream* echo = nullptr;  // receives each log line as it is written
};

TrainReport run_training(const RunConfig& cfg, const RunOptions& options);

// `iter,metric,value` rows for every logged quantity, losses included.
std::string curves_csv(const TrainReport& report);

struct AblationCell {
  DiscriminatorKind kind = DiscriminatorKind::Fusion4;
  bool use_sn = true;
  std::uint64_t seed = 0;

  std::string id() const;     // e.g. Fusion4_sn_s1
  std::string group() const;  // e.g. Fusion4+SN
};

// Shared run configuration plus `cell = <Kind> <sn|nosn> <seed>` lines.
struct ExperimentMatrix {
  RunConfig base;
  std::vector<AblationCell> cells;

  static ExperimentMatrix parse(std::string_view text);
  static ExperimentMatrix load(const std::filesystem::path& path);
  RunConfig cell_config(const AblationCell& cell) const;
};

struct CellResult {
  AblationCell cell;
  bool missing = false;     // no finished log (absent or incomplete)
  bool incomplete = false;  // log present but without its summary block
  bool diverged = false;
  Metrics initial;  // iteration-0 evaluation (untrained generator)
  Metrics final;
};

std::vector<std::string> table_metrics(Task task);
// Whether larger values of `metric` are better.
bool higher_is_better(const std::string& metric);

CellResult read_cell_result(const std::filesystem::path& cell_dir, const AblationCell& cell);

// Aligned text table: one row per cell, one median row per (kind, sn) group,
// plus the untrained-generator median. Diverged cells read DIVERGED.
std::string format_table(Task task, const std::vector<CellResult>& results);

// Median over non-diverged cells of a group; nullopt when none finished.
std::optional<double> group_median(const std::vector<CellResult>& results, const std::string& group,
                                   const std::string& metric);
std::optional<double> untrained_median(const std::vector<CellResult>& results,
                                       const std::string& metric);

struct AblationOutcome {
  std::vector<CellResult> results;
  std::string table;
  int diverged = 0;
};

// Trains every cell into <out_dir>/<cell id>/ (skipped with table_only) and
// writes <out_dir>/table.txt.
AblationOutcome run_ablation(const ExperimentMatrix& matrix, const std::filesystem::path& out_dir,
                             bool table_only, std::ostream* progress);

}  // namespace fgan
