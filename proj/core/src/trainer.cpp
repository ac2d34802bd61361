// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

namespace groklab {

void RunConfig::validate() const {
  task.validate();
  if (optimizer != "adamw" && optimizer != "muon") {
    throw ConfigError("unknown optimizer '" + optimizer + "'; expected adamw or muon");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 0) throw ConfigError("max_epochs must be >= 0");
  if (patience_after_grok < 0) throw ConfigError("patience_after_grok must be >= 0");
  if (train_stability_window < 1) throw ConfigError("train_stability_window must be >= 1");
  adamw.validate();
  muon.validate();
}

std::optional<int> detect_grok(const std::vector<EpochMetrics>& history, double val_threshold,
                               double train_threshold, int stability_window) {
  int run_length = 0;
  bool train_stable_seen = false;
  for (const EpochMetrics& m : history) {
    run_length = (m.train_acc >= train_threshold) ? run_length + 1 : 0;
    if (run_length >= stability_window) train_stable_seen = true;
    if (train_stable_seen && m.val_acc >= val_threshold) return m.epoch;
  }
  return std::nullopt;
}

EncodedSet EncodedSet::from(const std::vector<Example>& examples, int seq_len) {
  EncodedSet set;
  set.seq_len = seq_len;
  set.tokens.reserve(examples.size() * static_cast<std::size_t>(seq_len));
  set.answers.reserve(examples.size());
  for (const Example& e : examples) {
    if (static_cast<int>(e.input_tokens.size()) != seq_len) {
      throw ShapeError("EncodedSet: example length " + std::to_string(e.input_tokens.size()) +
                       " != seq_len " + std::to_string(seq_len));
    }
    set.tokens.insert(set.tokens.end(), e.input_tokens.begin(), e.input_tokens.end());
    set.answers.push_back(e.answer);
  }
  return set;
}

namespace {

struct BatchStats {
  double loss_sum = 0.0;
  int correct = 0;
  int count = 0;
};

void score_batch(const Tensor& logits, std::span<const int> answers, BatchStats& stats) {
  const int batch = logits.dim(0), vocab = logits.dim(1);
  const auto lv = logits.values();
  for (int b = 0; b < batch; ++b) {
    const std::span<const double> row(lv.data() + static_cast<std::size_t>(b) * vocab,
                                      static_cast<std::size_t>(vocab));
    if (argmax_row(row) == answers[static_cast<std::size_t>(b)]) ++stats.correct;
  }
  stats.count += batch;
}

void clip_gradients(ParamSet& params, double max_norm) {
  double total = 0.0;
  for (auto& e : params.entries) {
    if (!e.tensor.has_grad()) continue;
    for (double g : e.tensor.grad()) total += g * g;
  }
  total = std::sqrt(total);
  if (total <= max_norm || total == 0.0) return;
  const double s = max_norm / total;
  for (auto& e : params.entries) {
    if (!e.tensor.has_grad()) continue;
    for (double& g : e.tensor.grad_data()) g *= s;
  }
}

}  // namespace

std::pair<double, double> evaluate(const EncodedSet& data, const ParamSet& params,
                                   const ModelConfig& config, int batch_size) {
  if (data.count() == 0) throw ContractError("evaluate: empty dataset");
  BatchStats stats;
  const int n = data.count();
  const int seq = data.seq_len;
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    const std::span<const int> tokens(data.tokens.data() + static_cast<std::size_t>(start) * seq,
                                      static_cast<std::size_t>(count) * seq);
    const Tensor logits = model_forward(tokens, count, params, config, /*train_mode=*/false, nullptr);
    const auto lv = logits.values();
    for (int b = 0; b < count; ++b) {
      const std::span<const double> row(lv.data() + static_cast<std::size_t>(b) * config.vocab_size,
                                        static_cast<std::size_t>(config.vocab_size));
      stats.loss_sum +=
          variant_loss(row, data.answers[static_cast<std::size_t>(start + b)], config.softmax_variant)
              .loss;
    }
    score_batch(logits, std::span<const int>(data.answers.data() + start, static_cast<std::size_t>(count)),
                stats);
  }
  return {stats.loss_sum / n, static_cast<double>(stats.correct) / n};
}

std::pair<double, double> train_epoch(const EncodedSet& train, ParamSet& params,
                                      const ModelConfig& config, Optimizer& optimizer,
                                      int batch_size, double grad_clip, Rng& shuffle_rng,
                                      Rng& dropout_rng) {
  if (train.count() == 0) throw ContractError("train_epoch: empty training set");
  const int n = train.count();
  const int seq = train.seq_len;

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  shuffle_rng.shuffle(order);

  BatchStats stats;
  std::vector<int> tokens;
  std::vector<int> answers;
  for (int start = 0; start < n; start += batch_size) {
    const int count = std::min(batch_size, n - start);
    tokens.assign(static_cast<std::size_t>(count) * seq, 0);
    answers.assign(static_cast<std::size_t>(count), 0);
    for (int b = 0; b < count; ++b) {
      const int src = order[static_cast<std::size_t>(start + b)];
      std::copy(train.tokens.begin() + static_cast<std::size_t>(src) * seq,
                train.tokens.begin() + static_cast<std::size_t>(src + 1) * seq,
                tokens.begin() + static_cast<std::size_t>(b) * seq);
      answers[static_cast<std::size_t>(b)] = train.answers[static_cast<std::size_t>(src)];
    }

    Tape tape;
    double batch_loss = 0.0;
    {
      Tape::Scope scope(tape);
      Tensor logits = model_forward(tokens, count, params, config, /*train_mode=*/true, &dropout_rng);
      Tensor loss = batch_variant_loss(logits, answers, config.softmax_variant);
      batch_loss = loss.item();
      if (!std::isfinite(batch_loss)) {
        throw NumericError("non-finite training loss (" + std::to_string(batch_loss) + ")");
      }
      tape.backward(loss);
      score_batch(logits, answers, stats);
    }
    if (grad_clip > 0.0) clip_gradients(params, grad_clip);
    optimizer.step(params);
    params.zero_grads();
    stats.loss_sum += batch_loss * count;
  }
  return {stats.loss_sum / n, static_cast<double>(stats.correct) / n};
}

RunResult run_experiment(const RunConfig& config_in) {
  RunConfig config = config_in;
  config.validate();

  RunResult result;
  result.task = std::string(to_string(config.task.kind));
  result.optimizer = config.optimizer;
  result.softmax = std::string(to_string(config.softmax));
  result.seed = config.seed;

  const auto t_start = std::chrono::steady_clock::now();

  config.model.vocab_size = vocab_size(config.task);
  config.model.seq_len = sequence_length(config.task);
  config.model.softmax_variant = config.softmax;
  config.model.validate();

  Rng master(config.seed);
  Rng split_rng = master.fork(1);
  Rng init_rng = master.fork(2);
  Rng dropout_rng = master.fork(3);

  const std::vector<Example> examples = generate(config.task);
  auto [train_examples, val_examples] = split(examples, config.task.train_fraction,
                                              split_rng.next_u64());
  const EncodedSet train_set = EncodedSet::from(train_examples, config.model.seq_len);
  const EncodedSet val_set = EncodedSet::from(val_examples, config.model.seq_len);

  ParamSet params = ParamSet::init(config.model, init_rng.next_u64());
  std::unique_ptr<Optimizer> optimizer = make_optimizer(config.optimizer, config.adamw, config.muon);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng = master.fork(1000 + static_cast<std::uint64_t>(epoch));
    EpochMetrics metrics;
    metrics.epoch = epoch;
    try {
      std::tie(metrics.train_loss, metrics.train_acc) =
          train_epoch(train_set, params, config.model, *optimizer, config.batch_size,
                      config.grad_clip, shuffle_rng, dropout_rng);
    } catch (const NumericError& err) {
      result.numeric_fault = true;
      result.fault_message = err.what();
      break;
    }
    std::tie(metrics.val_loss, metrics.val_acc) = evaluate(val_set, params, config.model);
    result.history.push_back(metrics);

    result.grok_epoch = detect_grok(result.history, config.val_threshold, config.train_threshold,
                                    config.train_stability_window);
    if (result.grok_epoch && epoch >= *result.grok_epoch + config.patience_after_grok) break;
  }

  result.grok_epoch = detect_grok(result.history, config.val_threshold, config.train_threshold,
                                  config.train_stability_window);
  result.grokked = result.grok_epoch.has_value();
  result.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  return result;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& history) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_metrics_csv: cannot open " + path);
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  char buf[160];
  for (const EpochMetrics& m : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.6g,%.6g,%.6g,%.6g\n", m.epoch, m.train_loss, m.train_acc,
                  m.val_loss, m.val_acc);
    out << buf;
  }
}

std::vector<EpochMetrics> read_metrics_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_metrics_csv: cannot open " + path);
  std::vector<EpochMetrics> history;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 || line.empty()) continue;  // header
    EpochMetrics m;
    if (std::sscanf(line.c_str(), "%d,%lf,%lf,%lf,%lf", &m.epoch, &m.train_loss, &m.train_acc,
                    &m.val_loss, &m.val_acc) != 5) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed metrics row");
    }
    history.push_back(m);
  }
  return history;
}

}  // namespace groklab
