// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/datasets.hpp"

#include <fstream>
#include <numeric>

#include "groklab/rng.hpp"

namespace groklab {

std::string_view to_string(TaskKind kind) {
  switch (kind) {
    case TaskKind::kGcd: return "gcd";
    case TaskKind::kModAdd: return "mod_add";
    case TaskKind::kModDiv: return "mod_div";
    case TaskKind::kModExp: return "mod_exp";
    case TaskKind::kModMul: return "mod_mul";
    case TaskKind::kParity: return "parity";
  }
  return "mod_add";
}

TaskKind parse_task_kind(std::string_view name) {
  for (TaskKind kind : all_task_kinds()) {
    if (name == to_string(kind)) return kind;
  }
  throw ConfigError("unknown task '" + std::string(name) +
                    "'; expected gcd, mod_add, mod_div, mod_exp, mod_mul or parity");
}

const std::vector<TaskKind>& all_task_kinds() {
  static const std::vector<TaskKind> kinds = {TaskKind::kGcd,    TaskKind::kModAdd,
                                              TaskKind::kModDiv, TaskKind::kModExp,
                                              TaskKind::kModMul, TaskKind::kParity};
  return kinds;
}

double default_train_fraction(TaskKind kind) {
  switch (kind) {
    case TaskKind::kGcd: return 0.5;
    case TaskKind::kModAdd: return 0.8;
    case TaskKind::kModDiv: return 0.8;
    case TaskKind::kModExp: return 0.7;
    case TaskKind::kModMul: return 0.5;
    case TaskKind::kParity: return 0.5;
  }
  return 0.5;
}

TaskSpec TaskSpec::make(TaskKind kind, int modulus) {
  TaskSpec spec;
  spec.kind = kind;
  spec.modulus = modulus;
  spec.train_fraction = default_train_fraction(kind);
  return spec;
}

namespace {

bool is_prime(int n) {
  if (n < 2) return false;
  for (int d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

}  // namespace

void TaskSpec::validate() const {
  if (train_fraction <= 0.0 || train_fraction >= 1.0) {
    throw ConfigError("train_fraction must be in (0, 1), got " + std::to_string(train_fraction));
  }
  if (kind == TaskKind::kParity) return;
  if (modulus < 2) throw ConfigError("modulus must be >= 2, got " + std::to_string(modulus));
  if ((kind == TaskKind::kModDiv || kind == TaskKind::kModExp) && !is_prime(modulus)) {
    throw ConfigError("modulus must be prime for " + std::string(to_string(kind)) + ", got " +
                      std::to_string(modulus));
  }
}

int mod_pow(int base, int exponent, int modulus) {
  long long result = 1;  // 0^0 == 1 by convention
  long long b = base % modulus;
  int e = exponent;
  while (e > 0) {
    if (e & 1) result = result * b % modulus;
    b = b * b % modulus;
    e >>= 1;
  }
  return static_cast<int>(result);
}

int mod_inverse(int value, int modulus) {
  if (value % modulus == 0) throw ConfigError("mod_inverse: value has no inverse");
  // extended Euclid
  int r0 = modulus, r1 = value % modulus;
  long long t0 = 0, t1 = 1;
  while (r1 != 0) {
    const int q = r0 / r1;
    const int r2 = r0 - q * r1;
    const long long t2 = t0 - static_cast<long long>(q) * t1;
    r0 = r1;
    r1 = r2;
    t0 = t1;
    t1 = t2;
  }
  long long inv = t0 % modulus;
  if (inv < 0) inv += modulus;
  return static_cast<int>(inv);
}

std::vector<Row> enumerate_rows(const TaskSpec& task) {
  task.validate();
  std::vector<Row> rows;
  const int p = task.modulus;
  switch (task.kind) {
    case TaskKind::kModAdd:
      rows.reserve(static_cast<std::size_t>(p) * p);
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) rows.push_back({a, b, (a + b) % p});
      break;
    case TaskKind::kModMul:
      rows.reserve(static_cast<std::size_t>(p) * p);
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) rows.push_back({a, b, a * b % p});
      break;
    case TaskKind::kModDiv:
      rows.reserve(static_cast<std::size_t>(p) * (p - 1));
      for (int a = 0; a < p; ++a)
        for (int b = 1; b < p; ++b) rows.push_back({a, b, a * mod_inverse(b, p) % p});
      break;
    case TaskKind::kModExp:
      rows.reserve(static_cast<std::size_t>(p) * p);
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) rows.push_back({a, b, mod_pow(a, b, p)});
      break;
    case TaskKind::kGcd:
      rows.reserve(static_cast<std::size_t>(p) * p);
      for (int a = 0; a < p; ++a)
        for (int b = 0; b < p; ++b) rows.push_back({a, b, std::gcd(a, b)});
      break;
    case TaskKind::kParity:
      rows.reserve(1024);
      for (int bits = 0; bits < 1024; ++bits) {
        int parity = 0;
        for (int i = 0; i < 10; ++i) parity ^= (bits >> i) & 1;
        rows.push_back({bits, 0, parity});
      }
      break;
  }
  return rows;
}

std::vector<int> encode(const Row& row, const TaskSpec& task) {
  if (task.kind == TaskKind::kParity) {
    std::vector<int> tokens(11);
    for (int i = 0; i < 10; ++i) tokens[static_cast<std::size_t>(i)] = (row.a >> (9 - i)) & 1;
    tokens[10] = 2;  // EQ
    return tokens;
  }
  const int p = task.modulus;
  return {row.a, p, row.b, p + 1};  // a OP b EQ
}

int vocab_size(const TaskSpec& task) {
  return task.kind == TaskKind::kParity ? 3 : task.modulus + 2;
}

int sequence_length(const TaskSpec& task) { return task.kind == TaskKind::kParity ? 11 : 4; }

std::vector<Example> generate(const TaskSpec& task) {
  const std::vector<Row> rows = enumerate_rows(task);
  std::vector<Example> examples;
  examples.reserve(rows.size());
  for (const Row& row : rows) {
    examples.push_back({encode(row, task), row.answer});
  }
  return examples;
}

std::pair<std::vector<Example>, std::vector<Example>> split(const std::vector<Example>& examples,
                                                            double train_fraction,
                                                            std::uint64_t seed) {
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(order);

  const std::size_t n_train =
      static_cast<std::size_t>(static_cast<double>(examples.size()) * train_fraction);
  std::vector<Example> train, val;
  train.reserve(n_train);
  val.reserve(examples.size() - n_train);
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : val).push_back(examples[order[i]]);
  }
  return {std::move(train), std::move(val)};
}

void dump_csv(const std::string& path, const TaskSpec& task) {
  std::ofstream out(path);
  if (!out) throw ConfigError("dump_csv: cannot open " + path);
  const std::vector<Row> rows = enumerate_rows(task);
  if (task.kind == TaskKind::kParity) {
    out << "bits,answer\n";
    for (const Row& row : rows) {
      for (int i = 9; i >= 0; --i) out << ((row.a >> i) & 1);
      out << "," << row.answer << "\n";
    }
  } else {
    out << "a,b,op,answer\n";
    for (const Row& row : rows) {
      out << row.a << "," << row.b << "," << to_string(task.kind) << "," << row.answer << "\n";
    }
  }
}

}  // namespace groklab
