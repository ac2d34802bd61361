// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "groklab/stats.hpp"
#include "groklab/trainer.hpp"

namespace groklab {

/// Cartesian experiment grid: every task x optimizer x softmax x seed
/// combination becomes one independent run.
struct GridConfig {
  std::vector<TaskKind> tasks = {TaskKind::kModAdd};
  std::vector<std::string> optimizers = {"adamw", "muon"};
  std::vector<SoftmaxVariant> softmaxes = {SoftmaxVariant::kSoftmax};
  std::vector<std::uint64_t> seeds = {0, 1, 2, 3, 4};
  RunConfig base;  // per-run overrides (model dims, epochs, batch, modulus)
  std::string output_dir = ".";
  int parallel_workers = 1;

  void validate() const;
};

/// `task-optimizer-softmax-seed`.
std::string run_id(const std::string& task, const std::string& optimizer,
                   const std::string& softmax, std::uint64_t seed);
std::string run_id(const RunResult& result);

/// One runs.csv row. Schema:
/// task,optimizer,softmax,seed,grokked,grok_epoch,final_train_acc,
/// final_val_acc,epochs_run,wall_time_s
/// grok_epoch is empty for runs that did not grok.
struct RunRecord {
  std::string task;
  std::string optimizer;
  std::string softmax;
  std::uint64_t seed = 0;
  bool grokked = false;
  std::optional<int> grok_epoch;
  double final_train_acc = 0.0;
  double final_val_acc = 0.0;
  int epochs_run = 0;
  double wall_time_s = 0.0;
};

RunRecord to_record(const RunResult& result);

void write_runs_csv(const std::string& path, const std::vector<RunRecord>& records);
std::vector<RunRecord> read_runs_csv(const std::string& path);

/// Inserts or replaces the row with the same run id, keeping the file sorted
/// by (task, optimizer, softmax, seed).
void upsert_run_record(const std::string& path, const RunRecord& record);

/// Expands the grid in sorted order (task, optimizer, softmax, seed).
std::vector<RunConfig> expand_grid(const GridConfig& grid);

struct GridOutcome {
  std::vector<RunRecord> records;  // sorted by condition then seed
  int completed = 0;
  int faulted = 0;
};

/// Runs the whole grid on parallel_workers threads (each run is sequential
/// and self-contained), writes metrics_<runid>.csv per run plus runs.csv in
/// deterministic order, and returns the records. Existing metrics files are
/// backed up to .bak before being overwritten.
GridOutcome run_grid(const GridConfig& grid, std::ostream* progress);

/// Post-hoc analysis of a runs.csv: summary.csv, boxplot.csv, boxplot.svg,
/// a Muon-vs-AdamW Welch t-test (or pooled with `pooled`), and the
/// delayed-generalization shape check over the per-run metrics files.
struct AnalyzeOptions {
  std::string runs_csv = "runs.csv";
  std::string output_dir = ".";
  bool pooled = false;
};

struct AnalyzeReport {
  std::vector<GroupSummary> summary;
  std::optional<TTestResult> t_test;  // AdamW vs Muon over grok epochs
  std::string t_test_note;            // reason when absent
  int shape_checked = 0;              // grokked runs with metrics available
  int shape_ok = 0;                   // ... that show the delayed-generalization shape
  int shape_missing = 0;              // grokked runs without a metrics file
};

AnalyzeReport analyze_runs(const AnalyzeOptions& options, std::ostream& out);

/// True when the history contains an epoch with train_acc >= 0.99 and
/// val_acc < 0.5 strictly before the grok epoch.
bool has_delayed_generalization_shape(const std::vector<EpochMetrics>& history, int grok_epoch);

/// Flat `key = value` config file for grids; '#' starts a comment. Keys
/// mirror the CLI flag names (tasks, optimizers, softmaxes, seeds, modulus,
/// max_epochs, batch_size, d_model, n_layers, n_heads, d_ffn, dropout,
/// adamw_lr, muon_lr, weight_decay, workers, out, ...).
GridConfig load_grid_config(const std::string& path);
void apply_grid_key(GridConfig& grid, const std::string& key, const std::string& value);

}  // namespace groklab
