// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace groklab {

/// Mismatched tensor/matrix dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value (bad rate, odd head dim, unknown task, ...).
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Out-of-range token, class index or row index.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Non-finite input where finite values are required, or a numeric fault
/// (NaN/Inf) detected during training.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// API contract violation (non-scalar loss, inconsistent optimizer state).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Statistical analysis cannot proceed (insufficient data).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file; message carries the 1-based line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace groklab
