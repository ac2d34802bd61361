// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0
//
// groklab CLI: single runs, experiment grids, post-hoc analysis, self-tests.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "groklab/runner.hpp"

namespace fs = std::filesystem;
using namespace groklab;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::string default_out_dir() {
  const char* env = std::getenv("GROKLAB_OUT");
  return env != nullptr && *env != '\0' ? env : ".";
}

// Options shared by `run` and `grid`, applied through the same key=value
// path as the config file so both sources stay in sync.
struct OverrideCollector {
  std::map<std::string, std::string> values;

  void add(CLI::App* cmd, const std::string& key, const std::string& description) {
    cmd->add_option_function<std::string>(
           "--" + key, [this, key](const std::string& v) { values[key] = v; }, description)
        ->group("Run overrides");
  }
};

void add_override_options(CLI::App* cmd, OverrideCollector& overrides) {
  overrides.add(cmd, "modulus", "Task modulus (default 97)");
  overrides.add(cmd, "train_fraction", "Override the task's train split fraction");
  overrides.add(cmd, "max_epochs", "Epoch budget per run (default 500)");
  overrides.add(cmd, "batch_size", "Minibatch size (default 512)");
  overrides.add(cmd, "patience_after_grok", "Extra epochs after grokking (default 10)");
  overrides.add(cmd, "d_model", "Model width (default 128)");
  overrides.add(cmd, "n_layers", "Transformer blocks (default 2)");
  overrides.add(cmd, "n_heads", "Attention heads (default 4)");
  overrides.add(cmd, "d_ffn", "FFN width (default 512)");
  overrides.add(cmd, "dropout", "Dropout rate (default 0.1)");
  overrides.add(cmd, "rope_base", "Rotary base (default 10000)");
  overrides.add(cmd, "rmsnorm_eps", "RMSNorm epsilon (default 1e-5)");
  overrides.add(cmd, "adamw_lr", "AdamW learning rate (default 1e-3)");
  overrides.add(cmd, "adamw_eps", "AdamW epsilon (default 1e-8)");
  overrides.add(cmd, "muon_lr", "Muon learning rate (default 0.01)");
  overrides.add(cmd, "muon_momentum", "Muon momentum (default 0.95)");
  overrides.add(cmd, "ns_iterations", "Newton-Schulz iterations (default 5)");
  overrides.add(cmd, "fallback_lr", "Muon fallback AdamW learning rate");
  overrides.add(cmd, "weight_decay", "Decoupled weight decay for both optimizers");
  overrides.add(cmd, "grad_clip", "Global gradient-norm clip (0 = off)");
  overrides.add(cmd, "val_threshold", "Grokking validation threshold (default 0.95)");
  overrides.add(cmd, "train_threshold", "Training stability threshold (default 0.99)");
  overrides.add(cmd, "train_stability_window", "Consecutive stable epochs required (default 1)");
}

void apply_overrides(GridConfig& grid, const OverrideCollector& overrides) {
  for (const auto& [key, value] : overrides.values) apply_grid_key(grid, key, value);
}

int cmd_run(const std::string& task, const std::string& optimizer, const std::string& softmax,
            std::uint64_t seed, const std::string& out_dir, const OverrideCollector& overrides) {
  GridConfig grid;  // reuse the override plumbing for a single run
  apply_overrides(grid, overrides);

  RunConfig config = grid.base;
  config.task = TaskSpec::make(parse_task_kind(task), grid.base.task.modulus);
  if (overrides.values.count("train_fraction")) {
    config.task.train_fraction = std::stod(overrides.values.at("train_fraction"));
  }
  config.optimizer = optimizer;
  config.softmax = parse_softmax_variant(softmax);
  config.seed = seed;

  const RunResult result = run_experiment(config);

  fs::create_directories(out_dir);
  const fs::path metrics_path = fs::path(out_dir) / ("metrics_" + run_id(result) + ".csv");
  if (fs::exists(metrics_path)) {
    fs::copy_file(metrics_path, fs::path(metrics_path).concat(".bak"),
                  fs::copy_options::overwrite_existing);
  }
  write_metrics_csv(metrics_path.string(), result.history);
  upsert_run_record((fs::path(out_dir) / "runs.csv").string(), to_record(result));

  if (result.numeric_fault) {
    std::cout << run_id(result) << ": numeric fault after " << result.epochs_run()
              << " epochs: " << result.fault_message << "\n";
    return kExitFailure;
  }
  if (result.grokked) {
    std::cout << run_id(result) << ": grokked at epoch " << *result.grok_epoch << " ("
              << result.epochs_run() << " epochs run)\n";
  } else {
    std::cout << run_id(result) << ": no grok within " << result.epochs_run() << " epochs\n";
  }
  return kExitOk;
}

int cmd_grid(GridConfig grid) {
  const GridOutcome outcome = run_grid(grid, &std::cout);
  std::cout << outcome.completed << " runs completed, " << outcome.faulted << " faulted; results in "
            << (fs::path(grid.output_dir) / "runs.csv").string() << "\n";
  return outcome.completed >= 1 ? kExitOk : kExitFailure;
}

int cmd_analyze(const AnalyzeOptions& options) {
  analyze_runs(options, std::cout);
  return kExitOk;
}

// ---- selftest ------------------------------------------------------------------

bool report(const std::string& name, bool ok, std::string detail = "") {
  std::cout << (ok ? "[ok]   " : "[FAIL] ") << name;
  if (!detail.empty()) std::cout << " (" << detail << ")";
  std::cout << "\n";
  return ok;
}

// independent simplex projection: bisection on the KKT threshold
std::vector<double> simplex_project_bisect(std::span<const double> z) {
  double lo = z[0] - 1.0, hi = z[0];
  for (double v : z) {
    lo = std::min(lo, v - 1.0);
    hi = std::max(hi, v);
  }
  const auto mass = [&](double tau) {
    double total = 0.0;
    for (double v : z) total += std::max(v - tau, 0.0);
    return total;
  };
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (mass(mid) > 1.0 ? lo : hi) = mid;
  }
  const double tau = 0.5 * (lo + hi);
  std::vector<double> p(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) p[i] = std::max(z[i] - tau, 0.0);
  return p;
}

double spectral_norm(std::span<const double> m, int rows, int cols, Rng& rng) {
  std::vector<double> v(static_cast<std::size_t>(cols));
  for (double& x : v) x = rng.normal();
  std::vector<double> u(static_cast<std::size_t>(rows));
  double norm = 0.0;
  for (int it = 0; it < 200; ++it) {
    for (int i = 0; i < rows; ++i) {
      double acc = 0.0;
      for (int j = 0; j < cols; ++j) acc += m[static_cast<std::size_t>(i) * cols + j] * v[static_cast<std::size_t>(j)];
      u[static_cast<std::size_t>(i)] = acc;
    }
    double un = 0.0;
    for (double x : u) un += x * x;
    un = std::sqrt(un);
    if (un == 0.0) return 0.0;
    for (double& x : u) x /= un;
    for (int j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (int i = 0; i < rows; ++i) acc += m[static_cast<std::size_t>(i) * cols + j] * u[static_cast<std::size_t>(i)];
      v[static_cast<std::size_t>(j)] = acc;
    }
    norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (double& x : v) x /= norm;
  }
  return norm;
}

int cmd_selftest() {
  bool all_ok = true;
  Rng rng(2024);

  {  // gradient checks on the building blocks
    Tensor x = Tensor::zeros({3, 4});
    for (double& v : x.mutable_values()) v = rng.normal();
    double err = grad_check([](const Tensor& t) { return sum(mul(t, t)); }, x);
    all_ok &= report("grad: sum(x*x)", err < 1e-8, "max rel err " + std::to_string(err));

    err = grad_check([](const Tensor& t) { return sum(silu(t)); }, x);
    all_ok &= report("grad: silu", err < 1e-6);

    Tensor gain = Tensor::full({4}, 1.0);
    err = grad_check([&](const Tensor& t) { return sum(rmsnorm(t, gain, 1e-5)); }, x);
    all_ok &= report("grad: rmsnorm", err < 1e-6);

    Tensor w = Tensor::zeros({4, 2});
    for (double& v : w.mutable_values()) v = rng.normal();
    err = grad_check([&](const Tensor& t) { return sum(matmul(t, w)); }, x);
    all_ok &= report("grad: matmul", err < 1e-8);

    Tensor qkv = Tensor::zeros({4, 4});
    for (double& v : qkv.mutable_values()) v = rng.normal();
    err = grad_check(
        [](const Tensor& t) { return sum(causal_attention(t, t, t, /*batch=*/1, /*seq=*/4, /*heads=*/2)); },
        qkv);
    all_ok &= report("grad: causal attention", err < 1e-6);

    for (SoftmaxVariant variant : {SoftmaxVariant::kSoftmax, SoftmaxVariant::kStablemax,
                                   SoftmaxVariant::kSparsemax}) {
      Tensor logits = Tensor::zeros({2, 5});
      for (double& v : logits.mutable_values()) v = 2.0 * rng.normal();
      err = grad_check(
          [variant](const Tensor& t) { return batch_variant_loss(t, {1, 3}, variant); }, logits);
      all_ok &= report(std::string("grad: ") + std::string(to_string(variant)) + " loss", err < 1e-5);
    }
  }

  {  // sparsemax against the independent projection oracle
    bool ok = true;
    double worst = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
      const int n = 2 + static_cast<int>(rng.next_below(60));
      std::vector<double> z(static_cast<std::size_t>(n));
      for (double& v : z) v = 4.0 * rng.normal();
      const SparsemaxResult got = sparsemax(z);
      const std::vector<double> want = simplex_project_bisect(z);
      for (int i = 0; i < n; ++i) {
        worst = std::max(worst, std::abs(got.probs[static_cast<std::size_t>(i)] -
                                         want[static_cast<std::size_t>(i)]));
      }
      double mass = 0.0;
      for (double v : z) mass += std::max(v - got.tau, 0.0);
      ok &= std::abs(mass - 1.0) < 1e-9;
    }
    ok &= worst < 1e-6;
    all_ok &= report("sparsemax vs bisection projection oracle", ok,
                     "max coord diff " + std::to_string(worst));
  }

  {  // Newton-Schulz: cubic converges, quintic respects the spectral cap
    const int n = 24;
    std::vector<double> m(static_cast<std::size_t>(n) * n);
    for (double& v : m) v = rng.normal();
    const std::vector<double> cubic =
        newton_schulz_orthogonalize(m, n, n, {1.5, -0.5, 0.0}, 30);
    // O^T O should be close to the identity
    double max_dev = 0.0;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        double acc = 0.0;
        for (int l = 0; l < n; ++l)
          acc += cubic[static_cast<std::size_t>(l) * n + i] * cubic[static_cast<std::size_t>(l) * n + j];
        max_dev = std::max(max_dev, std::abs(acc - (i == j ? 1.0 : 0.0)));
      }
    }
    all_ok &= report("newton-schulz cubic orthogonality", max_dev < 1e-4,
                     "max |O^T O - I| = " + std::to_string(max_dev));

    const std::vector<double> quintic =
        newton_schulz_orthogonalize(m, n, n, {3.4445, -4.7750, 2.0315}, 5);
    const double sn = spectral_norm(quintic, n, n, rng);
    all_ok &= report("newton-schulz quintic spectral cap", sn <= 1.3,
                     "spectral norm " + std::to_string(sn));
  }

  {  // statistics oracles
    const std::vector<double> a = {1, 2, 3}, b = {2, 3, 4};
    const TTestResult t = welch_t_test(a, b);
    bool ok = std::abs(t.t_statistic + 1.224745) < 1e-5 && std::abs(t.degrees_of_freedom - 4.0) < 1e-9 &&
              std::abs(t.p_value - 0.287864) < 1e-3;
    ok &= std::abs(t_survival(0.0, 7.0) - 0.5) < 1e-12;
    ok &= std::abs(t_survival(1.0, 1.0) - 0.25) < 1e-9;
    ok &= std::abs(t_survival(2.776, 4.0) - 0.025) < 1e-3;
    all_ok &= report("welch t-test and t-distribution tails", ok);
  }

  {  // dataset exactness
    bool ok = generate(TaskSpec::make(TaskKind::kModAdd)).size() == 9409;
    ok &= generate(TaskSpec::make(TaskKind::kParity)).size() == 1024;
    const TaskSpec div = TaskSpec::make(TaskKind::kModDiv);
    const auto rows = enumerate_rows(div);
    ok &= rows.size() == 9312;
    for (const Row& r : rows) ok &= (r.answer * r.b) % 97 == r.a;
    all_ok &= report("dataset row counts and mod_div inverses", ok);
  }

  std::cout << (all_ok ? "selftest passed\n" : "selftest FAILED\n");
  return all_ok ? kExitOk : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"groklab: optimizer-vs-grokking experiments on algorithmic tasks"};
  app.require_subcommand(1);

  const std::vector<std::string> task_names = {"gcd", "mod_add", "mod_div", "mod_exp", "mod_mul", "parity"};
  const std::vector<std::string> optimizer_names = {"adamw", "muon"};
  const std::vector<std::string> softmax_names = {"softmax", "stablemax", "sparsemax"};

  // run
  auto* run_cmd = app.add_subcommand("run", "Execute one training run");
  std::string task = "mod_add", optimizer = "adamw", softmax = "softmax";
  std::uint64_t seed = 0;
  std::string out_dir = default_out_dir();
  run_cmd->add_option("--task", task, "Task to train on")->check(CLI::IsMember(task_names));
  run_cmd->add_option("--optimizer", optimizer, "Optimizer")->check(CLI::IsMember(optimizer_names));
  run_cmd->add_option("--softmax", softmax, "Output softmax variant")
      ->check(CLI::IsMember(softmax_names));
  run_cmd->add_option("--seed", seed, "Random seed");
  run_cmd->add_option("--out", out_dir, "Output directory (env GROKLAB_OUT)");
  OverrideCollector run_overrides;
  add_override_options(run_cmd, run_overrides);

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "Execute a task x optimizer x softmax x seed grid");
  std::string grid_tasks, grid_optimizers, grid_softmaxes, grid_seeds, grid_config_path;
  std::string grid_out = default_out_dir();
  int grid_workers = 0;
  grid_cmd->add_option("--config", grid_config_path, "Flat key = value config file")
      ->check(CLI::ExistingFile);
  grid_cmd->add_option("--tasks", grid_tasks, "Comma list of tasks");
  grid_cmd->add_option("--optimizers", grid_optimizers, "Comma list of optimizers");
  grid_cmd->add_option("--softmaxes", grid_softmaxes, "Comma list of softmax variants");
  grid_cmd->add_option("--seeds", grid_seeds, "Comma list of seeds");
  grid_cmd->add_option("--workers", grid_workers, "Parallel worker threads");
  grid_cmd->add_option("--out", grid_out, "Output directory (env GROKLAB_OUT)");
  OverrideCollector grid_overrides;
  add_override_options(grid_cmd, grid_overrides);

  // analyze
  auto* analyze_cmd = app.add_subcommand("analyze", "Summaries, boxplots and the optimizer t-test");
  AnalyzeOptions analyze_options;
  analyze_options.output_dir = default_out_dir();
  analyze_cmd->add_option("--runs", analyze_options.runs_csv, "Path to runs.csv");
  analyze_cmd->add_option("--out", analyze_options.output_dir, "Output directory for CSV/SVG");
  analyze_cmd->add_flag("--pooled", analyze_options.pooled,
                        "Use the pooled-variance Student's t-test instead of Welch's");

  // selftest
  app.add_subcommand("selftest", "Run gradient checks and oracle suites");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    app.exit(e);  // prints help or the parse failure
    return e.get_name() == "CallForHelp" ? kExitOk : kExitUsage;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(task, optimizer, softmax, seed, out_dir, run_overrides);
    if (grid_cmd->parsed()) {
      GridConfig grid;
      if (!grid_config_path.empty()) grid = load_grid_config(grid_config_path);
      if (!grid_tasks.empty()) apply_grid_key(grid, "tasks", grid_tasks);
      if (!grid_optimizers.empty()) apply_grid_key(grid, "optimizers", grid_optimizers);
      if (!grid_softmaxes.empty()) apply_grid_key(grid, "softmaxes", grid_softmaxes);
      if (!grid_seeds.empty()) apply_grid_key(grid, "seeds", grid_seeds);
      if (grid_workers > 0) grid.parallel_workers = grid_workers;
      if (grid_cmd->count("--out") > 0 || grid.output_dir == ".") grid.output_dir = grid_out;
      apply_overrides(grid, grid_overrides);
      return cmd_grid(std::move(grid));
    }
    if (analyze_cmd->parsed()) return cmd_analyze(analyze_options);
    return cmd_selftest();
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}
