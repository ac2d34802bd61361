// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

namespace groklab {

namespace fs = std::filesystem;

void GridConfig::validate() const {
  if (tasks.empty() || optimizers.empty() || softmaxes.empty() || seeds.empty()) {
    throw ConfigError("grid: tasks, optimizers, softmaxes and seeds must be nonempty");
  }
  for (const std::string& opt : optimizers) {
    if (opt != "adamw" && opt != "muon") throw ConfigError("grid: unknown optimizer '" + opt + "'");
  }
  std::vector<std::uint64_t> sorted = seeds;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    throw ConfigError("grid: seeds must be distinct");
  }
  if (parallel_workers < 1) throw ConfigError("grid: parallel_workers must be >= 1");
}

std::string run_id(const std::string& task, const std::string& optimizer,
                   const std::string& softmax, std::uint64_t seed) {
  return task + "-" + optimizer + "-" + softmax + "-" + std::to_string(seed);
}

std::string run_id(const RunResult& result) {
  return run_id(result.task, result.optimizer, result.softmax, result.seed);
}

RunRecord to_record(const RunResult& result) {
  RunRecord r;
  r.task = result.task;
  r.optimizer = result.optimizer;
  r.softmax = result.softmax;
  r.seed = result.seed;
  r.grokked = result.grokked;
  r.grok_epoch = result.grok_epoch;
  r.final_train_acc = result.final_train_acc();
  r.final_val_acc = result.final_val_acc();
  r.epochs_run = result.epochs_run();
  r.wall_time_s = result.wall_time_seconds;
  return r;
}

namespace {

constexpr const char* kRunsHeader =
    "task,optimizer,softmax,seed,grokked,grok_epoch,final_train_acc,final_val_acc,epochs_run,"
    "wall_time_s";

bool record_order(const RunRecord& a, const RunRecord& b) {
  if (a.task != b.task) return a.task < b.task;
  if (a.optimizer != b.optimizer) return a.optimizer < b.optimizer;
  if (a.softmax != b.softmax) return a.softmax < b.softmax;
  return a.seed < b.seed;
}

std::vector<std::string> split_fields(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.push_back("");
  return fields;
}

}  // namespace

void write_runs_csv(const std::string& path, const std::vector<RunRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ConfigError("write_runs_csv: cannot open " + path);
  out << kRunsHeader << "\n";
  char buf[256];
  for (const RunRecord& r : records) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%s,%llu,%d,%s,%.6g,%.6g,%d,%.6g\n", r.task.c_str(),
                  r.optimizer.c_str(), r.softmax.c_str(),
                  static_cast<unsigned long long>(r.seed), r.grokked ? 1 : 0,
                  r.grok_epoch ? std::to_string(*r.grok_epoch).c_str() : "",
                  r.final_train_acc, r.final_val_acc, r.epochs_run, r.wall_time_s);
    out << buf;
  }
}

std::vector<RunRecord> read_runs_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("read_runs_csv: cannot open " + path);
  std::vector<RunRecord> records;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (line_no == 1) {
      if (line != kRunsHeader) {
        throw ParseError(path + ":1: unexpected header (expected '" + std::string(kRunsHeader) +
                         "')");
      }
      continue;
    }
    const std::vector<std::string> f = split_fields(line);
    if (f.size() != 10) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 10 fields, got " +
                       std::to_string(f.size()));
    }
    try {
      RunRecord r;
      r.task = f[0];
      r.optimizer = f[1];
      r.softmax = f[2];
      r.seed = std::stoull(f[3]);
      r.grokked = std::stoi(f[4]) != 0;
      if (!f[5].empty()) r.grok_epoch = std::stoi(f[5]);
      r.final_train_acc = std::stod(f[6]);
      r.final_val_acc = std::stod(f[7]);
      r.epochs_run = std::stoi(f[8]);
      r.wall_time_s = std::stod(f[9]);
      records.push_back(std::move(r));
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": malformed run row");
    }
  }
  return records;
}

void upsert_run_record(const std::string& path, const RunRecord& record) {
  std::vector<RunRecord> records;
  if (fs::exists(path)) records = read_runs_csv(path);
  const std::string id = run_id(record.task, record.optimizer, record.softmax, record.seed);
  std::erase_if(records, [&](const RunRecord& r) {
    return run_id(r.task, r.optimizer, r.softmax, r.seed) == id;
  });
  records.push_back(record);
  std::sort(records.begin(), records.end(), record_order);
  write_runs_csv(path, records);
}

std::vector<RunConfig> expand_grid(const GridConfig& grid) {
  grid.validate();
  std::vector<RunConfig> runs;
  for (TaskKind task : grid.tasks) {
    for (const std::string& optimizer : grid.optimizers) {
      for (SoftmaxVariant softmax : grid.softmaxes) {
        for (std::uint64_t seed : grid.seeds) {
          RunConfig run = grid.base;
          run.task = TaskSpec::make(task, grid.base.task.modulus);
          run.optimizer = optimizer;
          run.softmax = softmax;
          run.seed = seed;
          runs.push_back(std::move(run));
        }
      }
    }
  }
  std::sort(runs.begin(), runs.end(), [](const RunConfig& a, const RunConfig& b) {
    const auto key = [](const RunConfig& r) {
      return std::tuple(std::string(to_string(r.task.kind)), r.optimizer,
                        std::string(to_string(r.softmax)), r.seed);
    };
    return key(a) < key(b);
  });
  return runs;
}

namespace {

void backup_existing(const fs::path& path) {
  if (fs::exists(path)) {
    fs::copy_file(path, fs::path(path).concat(".bak"), fs::copy_options::overwrite_existing);
  }
}

}  // namespace

GridOutcome run_grid(const GridConfig& grid, std::ostream* progress) {
  grid.validate();
  const std::vector<RunConfig> runs = expand_grid(grid);
  fs::create_directories(grid.output_dir);

  std::vector<RunResult> results(runs.size());
  std::atomic<std::size_t> next{0};
  std::mutex log_mutex;

  const auto worker = [&]() {
    while (true) {
      const std::size_t i = next.fetch_add(1);
      if (i >= runs.size()) return;
      results[i] = run_experiment(runs[i]);
      if (progress != nullptr) {
        std::lock_guard<std::mutex> lock(log_mutex);
        const RunResult& r = results[i];
        *progress << run_id(r) << ": "
                  << (r.numeric_fault ? "numeric fault"
                      : r.grokked     ? "grokked at epoch " + std::to_string(*r.grok_epoch)
                                      : "no grok")
                  << " (" << r.epochs_run() << " epochs, "
                  << static_cast<int>(r.wall_time_seconds) << " s)\n";
      }
    }
  };

  const int n_workers = std::min<int>(grid.parallel_workers, static_cast<int>(runs.size()));
  if (n_workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<std::size_t>(n_workers));
    for (int w = 0; w < n_workers; ++w) threads.emplace_back(worker);
    for (std::thread& t : threads) t.join();
  }

  GridOutcome outcome;
  for (const RunResult& result : results) {
    const fs::path metrics_path = fs::path(grid.output_dir) / ("metrics_" + run_id(result) + ".csv");
    backup_existing(metrics_path);
    write_metrics_csv(metrics_path.string(), result.history);
    outcome.records.push_back(to_record(result));
    if (result.numeric_fault) {
      ++outcome.faulted;
    } else {
      ++outcome.completed;
    }
  }
  std::sort(outcome.records.begin(), outcome.records.end(), record_order);

  const fs::path runs_path = fs::path(grid.output_dir) / "runs.csv";
  backup_existing(runs_path);
  write_runs_csv(runs_path.string(), outcome.records);
  return outcome;
}

bool has_delayed_generalization_shape(const std::vector<EpochMetrics>& history, int grok_epoch) {
  for (const EpochMetrics& m : history) {
    if (m.epoch >= grok_epoch) break;
    if (m.train_acc >= 0.99 && m.val_acc < 0.5) return true;
  }
  return false;
}

AnalyzeReport analyze_runs(const AnalyzeOptions& options, std::ostream& out) {
  const std::vector<RunRecord> records = read_runs_csv(options.runs_csv);
  fs::create_directories(options.output_dir);

  AnalyzeReport report;

  // group by optimizer, keeping a stable adamw/muon ordering
  std::map<std::string, GroupSample> groups;
  for (const RunRecord& r : records) {
    GroupSample& g = groups[r.optimizer];
    g.group = r.optimizer;
    ++g.total_runs;
    if (r.grokked && r.grok_epoch) g.epochs.push_back(static_cast<double>(*r.grok_epoch));
  }
  std::vector<GroupSample> samples;
  samples.reserve(groups.size());
  for (auto& [name, g] : groups) samples.push_back(std::move(g));

  report.summary = summarize(samples);
  write_summary_csv((fs::path(options.output_dir) / "summary.csv").string(), report.summary);

  std::vector<BoxStats> boxes;
  for (const GroupSample& g : samples) {
    if (g.epochs.empty()) {
      out << "warning: group '" << g.group << "' has no grokked runs; omitted from boxplot\n";
      continue;
    }
    boxes.push_back(box_stats(g.group, g.epochs));
  }
  write_boxplot_csv((fs::path(options.output_dir) / "boxplot.csv").string(), boxes);
  write_boxplot_svg((fs::path(options.output_dir) / "boxplot.svg").string(), boxes);

  out << "group        n  grok_rate  mean_epoch  median_epoch  min  max\n";
  char buf[256];
  for (const GroupSummary& s : report.summary) {
    std::snprintf(buf, sizeof(buf), "%-10s %3d  %9.3g  %10.6g  %12.6g  %3.6g  %3.6g\n",
                  s.group.c_str(), s.n, s.grok_rate, s.mean_epoch, s.median_epoch, s.min_epoch,
                  s.max_epoch);
    out << buf;
  }

  // Welch (or pooled) t-test between the two optimizers over grok epochs
  const GroupSample* adamw = nullptr;
  const GroupSample* muon = nullptr;
  for (const GroupSample& g : samples) {
    if (g.group == "adamw") adamw = &g;
    if (g.group == "muon") muon = &g;
  }
  if (adamw == nullptr || muon == nullptr) {
    report.t_test_note = "t-test skipped: need both adamw and muon runs";
  } else if (adamw->epochs.size() < 2 || muon->epochs.size() < 2) {
    report.t_test_note = "t-test skipped: need >= 2 grokked runs per optimizer";
  } else {
    try {
      report.t_test = options.pooled ? pooled_t_test(adamw->epochs, muon->epochs)
                                     : welch_t_test(adamw->epochs, muon->epochs);
    } catch (const AnalysisError& err) {
      report.t_test_note = std::string("t-test skipped: ") + err.what();
    }
  }

  if (report.t_test) {
    const TTestResult& t = *report.t_test;
    std::snprintf(buf, sizeof(buf),
                  "\nMean grokking epoch (AdamW): %.2f\nMean grokking epoch (Muon): %.2f\n"
                  "%s t-test: t = %.4f, df = %.2f, p = %.4g\n",
                  t.mean_a, t.mean_b, options.pooled ? "Pooled" : "Welch", t.t_statistic,
                  t.degrees_of_freedom, t.p_value);
    out << buf;
  } else {
    out << "\n" << report.t_test_note << "\n";
  }

  // delayed-generalization shape check over per-run histories
  const fs::path runs_dir = fs::path(options.runs_csv).parent_path();
  for (const RunRecord& r : records) {
    if (!r.grokked || !r.grok_epoch) continue;
    const fs::path metrics_path =
        runs_dir / ("metrics_" + run_id(r.task, r.optimizer, r.softmax, r.seed) + ".csv");
    if (!fs::exists(metrics_path)) {
      ++report.shape_missing;
      continue;
    }
    ++report.shape_checked;
    if (has_delayed_generalization_shape(read_metrics_csv(metrics_path.string()), *r.grok_epoch)) {
      ++report.shape_ok;
    }
  }
  out << "delayed-generalization shape: " << report.shape_ok << "/" << report.shape_checked
      << " grokked runs show train_acc >= 0.99 with val_acc < 0.5 before the grok epoch";
  if (report.shape_missing > 0) out << " (" << report.shape_missing << " without metrics files)";
  out << "\n";
  return report;
}

// ---- grid config file ---------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> items;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, ',')) {
    item = trim(item);
    if (!item.empty()) items.push_back(item);
  }
  return items;
}

}  // namespace

void apply_grid_key(GridConfig& grid, const std::string& key, const std::string& value) {
  if (key == "tasks") {
    grid.tasks.clear();
    for (const std::string& name : split_list(value)) grid.tasks.push_back(parse_task_kind(name));
  } else if (key == "optimizers") {
    grid.optimizers = split_list(value);
  } else if (key == "softmaxes") {
    grid.softmaxes.clear();
    for (const std::string& name : split_list(value)) {
      grid.softmaxes.push_back(parse_softmax_variant(name));
    }
  } else if (key == "seeds") {
    grid.seeds.clear();
    for (const std::string& s : split_list(value)) grid.seeds.push_back(std::stoull(s));
  } else if (key == "modulus") {
    grid.base.task.modulus = std::stoi(value);
  } else if (key == "train_fraction") {
    grid.base.task.train_fraction = std::stod(value);
  } else if (key == "max_epochs") {
    grid.base.max_epochs = std::stoi(value);
  } else if (key == "batch_size") {
    grid.base.batch_size = std::stoi(value);
  } else if (key == "patience_after_grok") {
    grid.base.patience_after_grok = std::stoi(value);
  } else if (key == "d_model") {
    grid.base.model.d_model = std::stoi(value);
  } else if (key == "n_layers") {
    grid.base.model.n_layers = std::stoi(value);
  } else if (key == "n_heads") {
    grid.base.model.n_heads = std::stoi(value);
  } else if (key == "d_ffn") {
    grid.base.model.d_ffn = std::stoi(value);
  } else if (key == "dropout") {
    grid.base.model.dropout_rate = std::stod(value);
  } else if (key == "rope_base") {
    grid.base.model.rope_base = std::stod(value);
  } else if (key == "rmsnorm_eps") {
    grid.base.model.rmsnorm_eps = std::stod(value);
  } else if (key == "adamw_lr") {
    grid.base.adamw.lr = std::stod(value);
  } else if (key == "adamw_eps") {
    grid.base.adamw.eps = std::stod(value);
  } else if (key == "muon_lr") {
    grid.base.muon.lr = std::stod(value);
  } else if (key == "muon_momentum") {
    grid.base.muon.momentum = std::stod(value);
  } else if (key == "ns_iterations") {
    grid.base.muon.ns_iterations = std::stoi(value);
  } else if (key == "fallback_lr") {
    grid.base.muon.fallback.lr = std::stod(value);
  } else if (key == "weight_decay") {
    const double wd = std::stod(value);
    grid.base.adamw.weight_decay = wd;
    grid.base.muon.weight_decay = wd;
    grid.base.muon.fallback.weight_decay = wd;
  } else if (key == "grad_clip") {
    grid.base.grad_clip = std::stod(value);
  } else if (key == "val_threshold") {
    grid.base.val_threshold = std::stod(value);
  } else if (key == "train_threshold") {
    grid.base.train_threshold = std::stod(value);
  } else if (key == "train_stability_window") {
    grid.base.train_stability_window = std::stoi(value);
  } else if (key == "workers") {
    grid.parallel_workers = std::stoi(value);
  } else if (key == "out") {
    grid.output_dir = value;
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

GridConfig load_grid_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("config: cannot open " + path);
  GridConfig grid;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_grid_key(grid, key, value);
    } catch (const ConfigError& err) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + err.what());
    } catch (const std::exception& err) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": bad value for '" + key + "'");
    }
  }
  return grid;
}

}  // namespace groklab
