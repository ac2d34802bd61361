// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "groklab/trainer.hpp"

using namespace groklab;

namespace {

// toy configuration that trains in well under a second per epoch
RunConfig toy_config() {
  RunConfig cfg;
  cfg.task = TaskSpec::make(TaskKind::kModAdd, 7);
  cfg.model.d_model = 32;
  cfg.model.n_heads = 2;
  cfg.model.n_layers = 1;
  cfg.model.d_ffn = 64;
  cfg.model.dropout_rate = 0.0;
  cfg.batch_size = 64;
  cfg.max_epochs = 5;
  return cfg;
}

std::vector<EpochMetrics> history_from(const std::vector<std::pair<double, double>>& points) {
  std::vector<EpochMetrics> h;
  int epoch = 0;
  for (const auto& [train, val] : points) {
    h.push_back({++epoch, 0.0, train, 0.0, val});
  }
  return h;
}

}  // namespace

TEST_CASE("detect_grok worked examples") {
  SUBCASE("train stabilizes first, val follows") {
    std::vector<EpochMetrics> h;
    for (int e = 1; e <= 50; ++e) {
      h.push_back({e, 0, e >= 10 ? 1.0 : 0.5, 0, e >= 40 ? 0.96 : 0.2});
    }
    CHECK(detect_grok(h) == 40);
  }
  SUBCASE("early val spike before train stability does not count") {
    // val >= 0.95 from epoch 5, train reaches 0.99 only at epoch 8
    std::vector<EpochMetrics> h;
    for (int e = 1; e <= 10; ++e) {
      h.push_back({e, 0, e >= 8 ? 0.995 : 0.9, 0, e >= 5 ? 0.97 : 0.1});
    }
    CHECK(detect_grok(h) == 8);
  }
  SUBCASE("no grok when val never reaches the threshold") {
    const auto h = history_from({{1.0, 0.5}, {1.0, 0.9}, {1.0, 0.94}});
    CHECK_FALSE(detect_grok(h).has_value());
  }
  SUBCASE("raising the val threshold never yields an earlier epoch") {
    std::vector<EpochMetrics> h;
    for (int e = 1; e <= 100; ++e) {
      h.push_back({e, 0, e >= 5 ? 1.0 : 0.0, 0, std::min(1.0, e / 80.0)});
    }
    std::optional<int> prev;
    for (double threshold : {0.5, 0.7, 0.9, 0.95, 0.99}) {
      const auto got = detect_grok(h, threshold);
      if (prev && got) CHECK(*got >= *prev);
      if (got) prev = got;
    }
  }
  SUBCASE("stability window requires consecutive stable epochs") {
    // train dips back below threshold; a window of 3 pushes stability later
    const auto h = history_from(
        {{1.0, 0.1}, {0.5, 0.1}, {1.0, 0.1}, {1.0, 0.1}, {1.0, 0.96}, {1.0, 0.97}});
    CHECK(detect_grok(h, 0.95, 0.99, 1) == 5);
    CHECK(detect_grok(h, 0.95, 0.99, 3) == 5);
    const auto h2 = history_from({{1.0, 0.96}, {1.0, 0.96}, {1.0, 0.96}});
    CHECK(detect_grok(h2, 0.95, 0.99, 3) == 3);
  }
}

TEST_CASE("memorization precedes generalization in detect_grok outputs") {
  std::vector<EpochMetrics> h;
  for (int e = 1; e <= 60; ++e) {
    h.push_back({e, 0, e >= 12 ? 0.995 : 0.3, 0, e >= 31 ? 0.99 : 0.01});
  }
  const auto grok = detect_grok(h);
  REQUIRE(grok.has_value());
  int first_stable = 0;
  for (const auto& m : h) {
    if (m.train_acc >= 0.99) {
      first_stable = m.epoch;
      break;
    }
  }
  CHECK(first_stable <= *grok);
}

TEST_CASE("evaluate basics") {
  RunConfig cfg = toy_config();
  cfg.model.vocab_size = vocab_size(cfg.task);
  cfg.model.seq_len = sequence_length(cfg.task);
  const ParamSet params = ParamSet::init(cfg.model, 3);
  const auto examples = generate(cfg.task);
  const EncodedSet all = EncodedSet::from(examples, cfg.model.seq_len);

  SUBCASE("untrained accuracy is near chance") {
    const auto [loss, acc] = evaluate(all, params, cfg.model);
    CHECK(std::abs(acc - 1.0 / 7.0) < 0.15);
    CHECK(std::isfinite(loss));
  }
  SUBCASE("evaluate twice gives identical results") {
    const auto [l1, a1] = evaluate(all, params, cfg.model);
    const auto [l2, a2] = evaluate(all, params, cfg.model);
    CHECK(l1 == l2);
    CHECK(a1 == a2);
  }
  SUBCASE("single correctly-predicted example scores 1.0") {
    // find an example the untrained model happens to get right; if none in
    // the first pass, use the argmax class as the answer of a synthetic one
    const Tensor logits = model_forward(all.tokens, all.count(), params, cfg.model, false, nullptr);
    const int first_pred = argmax_row(
        std::span<const double>(logits.values().data(), static_cast<std::size_t>(cfg.model.vocab_size)));
    EncodedSet one;
    one.seq_len = all.seq_len;
    one.tokens.assign(all.tokens.begin(), all.tokens.begin() + all.seq_len);
    one.answers = {first_pred};
    const auto [loss, acc] = evaluate(one, params, cfg.model);
    CHECK(acc == doctest::Approx(1.0));
  }
}

TEST_CASE("train_epoch contract") {
  RunConfig cfg = toy_config();
  cfg.model.vocab_size = vocab_size(cfg.task);
  cfg.model.seq_len = sequence_length(cfg.task);

  const auto examples = generate(cfg.task);
  const EncodedSet train = EncodedSet::from(examples, cfg.model.seq_len);

  SUBCASE("batch_size >= n takes exactly one optimizer step per epoch") {
    ParamSet params = ParamSet::init(cfg.model, 3);
    AdamW opt;
    Rng shuffle(1), dropout(2);
    train_epoch(train, params, cfg.model, opt, /*batch_size=*/10000, 0.0, shuffle, dropout);
    CHECK(opt.steps_taken() == 1);
    train_epoch(train, params, cfg.model, opt, /*batch_size=*/10000, 0.0, shuffle, dropout);
    CHECK(opt.steps_taken() == 2);
  }
  SUBCASE("loss decreases over the first five epochs") {
    ParamSet params = ParamSet::init(cfg.model, 3);
    AdamW opt;
    Rng dropout(2);
    std::vector<double> losses;
    for (int e = 1; e <= 5; ++e) {
      Rng shuffle(static_cast<std::uint64_t>(e));
      losses.push_back(
          train_epoch(train, params, cfg.model, opt, 64, 0.0, shuffle, dropout).first);
    }
    CHECK(losses.back() < losses.front());
  }
}

TEST_CASE("run_experiment determinism and degenerate budget") {
  RunConfig cfg = toy_config();
  SUBCASE("max_epochs 0 gives an empty history and no grok") {
    cfg.max_epochs = 0;
    const RunResult r = run_experiment(cfg);
    CHECK(r.history.empty());
    CHECK_FALSE(r.grokked);
  }
  SUBCASE("identical config and seed reproduce the history exactly") {
    cfg.max_epochs = 3;
    const RunResult a = run_experiment(cfg);
    const RunResult b = run_experiment(cfg);
    REQUIRE(a.history.size() == b.history.size());
    for (std::size_t i = 0; i < a.history.size(); ++i) {
      CHECK(a.history[i].train_loss == b.history[i].train_loss);
      CHECK(a.history[i].val_loss == b.history[i].val_loss);
      CHECK(a.history[i].train_acc == b.history[i].train_acc);
      CHECK(a.history[i].val_acc == b.history[i].val_acc);
    }
  }
  SUBCASE("history epochs are contiguous from 1 and bounded by max_epochs") {
    cfg.max_epochs = 4;
    const RunResult r = run_experiment(cfg);
    CHECK(r.epochs_run() <= 4);
    for (int i = 0; i < r.epochs_run(); ++i) CHECK(r.history[static_cast<std::size_t>(i)].epoch == i + 1);
  }
}

TEST_CASE("metrics csv round trip uses 6 significant digits") {
  const std::vector<EpochMetrics> history = {
      {1, 1.23456789, 0.111111111, 2.3456789, 0.0123456789},
      {2, 0.000123456789, 1.0, 0.5, 0.98765432}};
  const std::string path = "/tmp/groklab_test_metrics.csv";
  write_metrics_csv(path, history);

  std::ifstream in(path);
  std::string header, row1;
  std::getline(in, header);
  std::getline(in, row1);
  CHECK(header == "epoch,train_loss,train_acc,val_loss,val_acc");
  CHECK(row1 == "1,1.23457,0.111111,2.34568,0.0123457");

  const auto loaded = read_metrics_csv(path);
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].epoch == 1);
  CHECK(loaded[0].train_loss == doctest::Approx(1.23457));
  CHECK(loaded[1].train_acc == doctest::Approx(1.0));
  std::filesystem::remove(path);
}

TEST_CASE("malformed metrics csv reports the line number") {
  const std::string path = "/tmp/groklab_test_bad_metrics.csv";
  {
    std::ofstream out(path);
    out << "epoch,train_loss,train_acc,val_loss,val_acc\n1,0.5,0.5,0.5,0.5\nnot,a,row\n";
  }
  CHECK_THROWS_WITH_AS(read_metrics_csv(path), doctest::Contains(":3"), ParseError);
  std::filesystem::remove(path);
}
