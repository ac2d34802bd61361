// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include <doctest.h>

#include "groklab/datasets.hpp"

using namespace groklab;

TEST_CASE("row counts match the task grid") {
  CHECK(generate(TaskSpec::make(TaskKind::kGcd)).size() == 9409);
  CHECK(generate(TaskSpec::make(TaskKind::kModAdd)).size() == 9409);
  CHECK(generate(TaskSpec::make(TaskKind::kModMul)).size() == 9409);
  CHECK(generate(TaskSpec::make(TaskKind::kModExp)).size() == 9409);
  CHECK(generate(TaskSpec::make(TaskKind::kParity)).size() == 1024);
  // division skips b = 0: 97 * 96 rows
  CHECK(generate(TaskSpec::make(TaskKind::kModDiv)).size() == 9312);
}

TEST_CASE("default split fractions") {
  CHECK(default_train_fraction(TaskKind::kGcd) == 0.5);
  CHECK(default_train_fraction(TaskKind::kModAdd) == 0.8);
  CHECK(default_train_fraction(TaskKind::kModDiv) == 0.8);
  CHECK(default_train_fraction(TaskKind::kModExp) == 0.7);
  CHECK(default_train_fraction(TaskKind::kModMul) == 0.5);
  CHECK(default_train_fraction(TaskKind::kParity) == 0.5);
}

TEST_CASE("every mod_div row satisfies (c*b) mod p == a") {
  const auto rows = enumerate_rows(TaskSpec::make(TaskKind::kModDiv));
  for (const Row& r : rows) {
    CHECK(r.b != 0);
    CHECK((r.answer * r.b) % 97 == r.a);
  }
}

TEST_CASE("mod_exp uses 0^0 = 1 and Fermat-consistent powers") {
  CHECK(mod_pow(0, 0, 97) == 1);
  CHECK(mod_pow(5, 96, 97) == 1);  // Fermat's little theorem
  CHECK(mod_pow(2, 10, 97) == 1024 % 97);
}

TEST_CASE("gcd task conventions") {
  const auto rows = enumerate_rows(TaskSpec::make(TaskKind::kGcd));
  CHECK(rows[0].a == 0);
  CHECK(rows[0].b == 0);
  CHECK(rows[0].answer == 0);  // gcd(0,0) := 0
  for (const Row& r : rows) CHECK(r.answer < 97);
}

TEST_CASE("mod_mul grid is symmetric") {
  const auto rows = enumerate_rows(TaskSpec::make(TaskKind::kModMul));
  std::set<std::tuple<int, int, int>> seen;
  for (const Row& r : rows) seen.insert({r.a, r.b, r.answer});
  for (const Row& r : rows) CHECK(seen.count({r.b, r.a, r.answer}) == 1);
}

TEST_CASE("token encoding") {
  SUBCASE("mod task layout [a, OP, b, EQ]") {
    const TaskSpec task = TaskSpec::make(TaskKind::kModAdd);
    const std::vector<int> tokens = encode({3, 5, 8}, task);
    CHECK(tokens == std::vector<int>{3, 97, 5, 98});
    CHECK(vocab_size(task) == 99);
    CHECK(sequence_length(task) == 4);
  }
  SUBCASE("parity layout [b0..b9, EQ] with msb first") {
    const TaskSpec task = TaskSpec::make(TaskKind::kParity);
    const std::vector<int> tokens = encode({0b1000000001, 0, 0}, task);
    CHECK(tokens.size() == 11);
    CHECK(tokens[0] == 1);
    CHECK(tokens[9] == 1);
    CHECK(tokens[10] == 2);
    CHECK(vocab_size(task) == 3);
    CHECK(sequence_length(task) == 11);
  }
  SUBCASE("parity of all zeros is 0, single bit is 1") {
    const auto rows = enumerate_rows(TaskSpec::make(TaskKind::kParity));
    CHECK(rows[0].answer == 0);
    CHECK(rows[1].answer == 1);
    CHECK(rows[3].answer == 0);  // 0b11
  }
  SUBCASE("answers fit below the vocab") {
    for (TaskKind kind : all_task_kinds()) {
      const TaskSpec task = TaskSpec::make(kind);
      for (const Example& e : generate(task)) {
        CHECK(e.answer >= 0);
        CHECK(e.answer < vocab_size(task));
        for (int t : e.input_tokens) CHECK(t < vocab_size(task));
      }
    }
  }
}

TEST_CASE("split arithmetic, determinism and exhaustiveness") {
  const auto examples = generate(TaskSpec::make(TaskKind::kParity));
  SUBCASE("fraction 0.5 on 1024 rows gives 512/512") {
    const auto [train, val] = split(examples, 0.5, 0);
    CHECK(train.size() == 512);
    CHECK(val.size() == 512);
  }
  SUBCASE("fraction 0.8 on 9409 rows gives 7527/1882") {
    const auto big = generate(TaskSpec::make(TaskKind::kModAdd));
    const auto [train, val] = split(big, 0.8, 1);
    CHECK(train.size() == 7527);
    CHECK(val.size() == 1882);
  }
  SUBCASE("same seed reproduces, different seed permutes differently") {
    const auto [t1, v1] = split(examples, 0.5, 42);
    const auto [t2, v2] = split(examples, 0.5, 42);
    const auto [t3, v3] = split(examples, 0.5, 43);
    REQUIRE(t1.size() == t2.size());
    bool same = true;
    for (std::size_t i = 0; i < t1.size(); ++i) same &= t1[i].input_tokens == t2[i].input_tokens;
    CHECK(same);
    bool differs = false;
    for (std::size_t i = 0; i < 10; ++i) differs |= t1[i].input_tokens != t3[i].input_tokens;
    CHECK(differs);
  }
  SUBCASE("train and val are disjoint and exhaustive for any seed") {
    for (std::uint64_t seed : {0ULL, 7ULL, 123456789ULL}) {
      const auto [train, val] = split(examples, 0.5, seed);
      std::set<std::vector<int>> all;
      for (const Example& e : train) all.insert(e.input_tokens);
      for (const Example& e : val) all.insert(e.input_tokens);
      CHECK(all.size() == examples.size());  // disjoint (keys unique) and exhaustive
    }
  }
}

TEST_CASE("task validation") {
  CHECK_THROWS_AS(TaskSpec::make(TaskKind::kModDiv, 15).validate(), ConfigError);  // not prime
  TaskSpec bad = TaskSpec::make(TaskKind::kModAdd);
  bad.train_fraction = 1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(parse_task_kind("unknown"), ConfigError);
  CHECK(parse_task_kind("mod_exp") == TaskKind::kModExp);
}

TEST_CASE("csv dump shape") {
  const std::string path = "/tmp/groklab_test_dump.csv";
  dump_csv(path, TaskSpec::make(TaskKind::kModAdd, 5));
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "a,b,op,answer");
  int lines = 0;
  std::string line;
  while (std::getline(in, line)) ++lines;
  CHECK(lines == 25);
}
