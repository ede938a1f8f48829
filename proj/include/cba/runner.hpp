#pragma once

#include "cba/metrics.hpp"

#include <optional>

namespace cba {

struct StreamSpec {
  StreamMode mode = StreamMode::Disjoint;
  int tasks = 5;
  int blurry_k = 10;          // used in Blurry mode
  int epochs_per_task = 1;
  int batch_size = 10;
  double test_fraction = 0.4;
  std::string dataset = "synthetic";  // or a dataset file path
  std::vector<int> task_order;        // empty = natural order

  // synthetic benchmark knobs (calibrated so ER visibly forgets)
  int synth_classes = 10;
  int synth_dim = 16;
  int synth_per_class = 500;
  double synth_separation = 6.0;
  double synth_spread = 1.5;
};

struct RunConfig {
  MethodConfig method;
  StreamSpec stream;
  std::vector<int> backbone_widths = {64};
  int cba_hidden = 256;
  int buffer_capacity = 500;
  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  int eval_interval = 5;
  std::string out_dir = "results";
  bool diagnostics = false;
  int workers = 0;  // 0 = hardware concurrency

  // Fault-injection hook for crash-isolation tests: poisons the loss with
  // NaN at (seed, step).
  std::optional<std::pair<std::uint64_t, long>> inject_nan;
};

struct SeedResult {
  std::uint64_t seed = 0;
  bool failed = false;
  std::string error;
  AccuracyMatrix matrix;
  std::vector<TracePoint> trace;
  std::vector<DiagRecord> diags;
  double acc = 0.0, fm = 0.0, auc_raw = 0.0, auc_norm = 0.0;
};

struct RunResult {
  std::vector<SeedResult> per_seed;
  double mean_acc = 0.0, std_acc = 0.0;
  double mean_fm = 0.0, std_fm = 0.0;
  double mean_auc_raw = 0.0, std_auc_raw = 0.0;
  double mean_auc_norm = 0.0, std_auc_norm = 0.0;
  int failed_seeds = 0;
};

// Seed derivation (documented counter scheme, see rng.hpp): per master seed s
// the sub-streams are derive_seed(s, k) with k = 0 init, 1 stream shuffling,
// 2 buffer RNG, 3 blurry redistribution, 4 dataset sampling.
TaskStream build_stream(const RunConfig& cfg, std::uint64_t seed);

SeedResult run_seed(const RunConfig& cfg, std::uint64_t seed);

// Runs every configured seed (in parallel worker slots) and aggregates.
// A failing seed is recorded and the others continue.
RunResult run_experiment(const RunConfig& cfg);

// summary.csv, matrix_<seed>.csv, trace_<seed>.csv, diag_<seed>.csv (when
// diagnostics are on), config.echo; failed seeds leave failed_<seed>.txt.
void emit_results(const RunResult& result, const RunConfig& cfg);

std::string config_echo(const RunConfig& cfg);

}  // namespace cba
