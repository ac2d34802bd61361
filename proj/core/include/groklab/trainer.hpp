// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "groklab/datasets.hpp"
#include "groklab/model.hpp"
#include "groklab/optim.hpp"

namespace groklab {

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

struct RunResult {
  std::string task;
  std::string optimizer;
  std::string softmax;
  std::uint64_t seed = 0;
  std::vector<EpochMetrics> history;
  std::optional<int> grok_epoch;
  bool grokked = false;
  bool numeric_fault = false;
  std::string fault_message;
  double wall_time_seconds = 0.0;

  int epochs_run() const { return static_cast<int>(history.size()); }
  double final_train_acc() const { return history.empty() ? 0.0 : history.back().train_acc; }
  double final_val_acc() const { return history.empty() ? 0.0 : history.back().val_acc; }
};

struct RunConfig {
  TaskSpec task = TaskSpec::make(TaskKind::kModAdd);
  std::string optimizer = "adamw";
  SoftmaxVariant softmax = SoftmaxVariant::kSoftmax;
  std::uint64_t seed = 0;

  ModelConfig model;  // vocab_size/seq_len are filled from the task
  AdamWConfig adamw;
  MuonConfig muon;

  int batch_size = 512;
  int max_epochs = 500;
  int patience_after_grok = 10;
  double val_threshold = 0.95;
  double train_threshold = 0.99;
  int train_stability_window = 1;
  double grad_clip = 0.0;  // global L2 clip; 0 disables

  void validate() const;
};

/// First epoch e with val_acc(e) >= val_threshold after some window of
/// stability_window consecutive epochs ending at e' <= e had
/// train_acc >= train_threshold; nullopt when no such epoch exists.
std::optional<int> detect_grok(const std::vector<EpochMetrics>& history,
                               double val_threshold = 0.95, double train_threshold = 0.99,
                               int stability_window = 1);

/// A dataset pre-encoded into flat token rows for fast batching.
struct EncodedSet {
  std::vector<int> tokens;   // n * seq_len
  std::vector<int> answers;  // n
  int seq_len = 0;
  int count() const { return static_cast<int>(answers.size()); }

  static EncodedSet from(const std::vector<Example>& examples, int seq_len);
};

/// Eval-mode loss and accuracy over a dataset; deterministic, no dropout.
/// Argmax ties break toward the lowest class index.
std::pair<double, double> evaluate(const EncodedSet& data, const ParamSet& params,
                                   const ModelConfig& config, int batch_size = 1024);

/// One pass of seeded-shuffled minibatches: forward (train mode), mean
/// variant loss, backward, optimizer step. Returns mean loss and accuracy
/// over the epoch's own predictions. Throws NumericError on a non-finite
/// loss.
std::pair<double, double> train_epoch(const EncodedSet& train, ParamSet& params,
                                      const ModelConfig& config, Optimizer& optimizer,
                                      int batch_size, double grad_clip, Rng& shuffle_rng,
                                      Rng& dropout_rng);

/// Full experiment: generate -> split -> init -> epoch loop with per-epoch
/// evaluation, early-stopping patience_after_grok epochs after grokking.
/// A numeric fault flags the result and preserves the partial history.
RunResult run_experiment(const RunConfig& config);

/// metrics_<runid>.csv payload: header epoch,train_loss,train_acc,val_loss,
/// val_acc; floats with 6 significant digits.
void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history);
std::vector<EpochMetrics> read_metrics_csv(const std::string& path);

}  // namespace groklab
