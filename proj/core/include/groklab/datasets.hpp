// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "groklab/errors.hpp"

namespace groklab {

enum class TaskKind { kGcd, kModAdd, kModDiv, kModExp, kModMul, kParity };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view name);
const std::vector<TaskKind>& all_task_kinds();

/// Training fraction per task: gcd 0.5, add 0.8, div 0.8, exp 0.7, mul 0.5,
/// parity 0.5.
double default_train_fraction(TaskKind kind);

struct TaskSpec {
  TaskKind kind = TaskKind::kModAdd;
  int modulus = 97;  // ignored by parity
  double train_fraction = 0.8;

  static TaskSpec make(TaskKind kind, int modulus = 97);
  void validate() const;
};

/// One (a, b) -> answer grid row before token encoding. Parity stores the
/// 10-bit value in `a` with b = 0.
struct Row {
  int a = 0;
  int b = 0;
  int answer = 0;
};

struct Example {
  std::vector<int> input_tokens;
  int answer = 0;
};

/// Exhaustive, lexicographically ordered enumeration of the task grid.
/// mod_div skips b = 0 (division by zero has no ground truth).
std::vector<Row> enumerate_rows(const TaskSpec& task);

/// Token layout: mod tasks [a, OP, b, EQ] with OP = p, EQ = p + 1; parity
/// [b0..b9, EQ] with EQ = 2, b0 the most significant bit.
std::vector<int> encode(const Row& row, const TaskSpec& task);

int vocab_size(const TaskSpec& task);
int sequence_length(const TaskSpec& task);

/// enumerate_rows + encode.
std::vector<Example> generate(const TaskSpec& task);

/// Seeded uniform permutation; first floor(n * fraction) rows to train.
std::pair<std::vector<Example>, std::vector<Example>> split(const std::vector<Example>& examples,
                                                            double train_fraction,
                                                            std::uint64_t seed);

/// Optional inspection dump: header "a,b,op,answer" (or "bits,answer" for
/// parity), one row per example.
void dump_csv(const std::string& path, const TaskSpec& task);

// modular helpers (prime modulus for inverse)
int mod_pow(int base, int exponent, int modulus);
int mod_inverse(int value, int modulus);

}  // namespace groklab
