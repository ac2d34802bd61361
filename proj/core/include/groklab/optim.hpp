// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groklab/model.hpp"

namespace groklab {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.1;

  void validate() const;
};

struct MuonConfig {
  double lr = 0.01;
  double momentum = 0.95;
  int ns_iterations = 5;
  // quintic polynomial a*X + b*(XX^T)X + c*(XX^T)^2 X; the exactly-convergent
  // cubic (1.5, -0.5, 0) is available for tight tests
  std::array<double, 3> ns_coefficients = {3.4445, -4.7750, 2.0315};
  double weight_decay = 0.1;
  bool nesterov = true;
  AdamWConfig fallback;  // non-matrix parameters and the embedding table

  void validate() const;
};

/// sqrt(max(1, rows/cols)): scales updates of tall matrices so the
/// per-output-unit update magnitude is shape-consistent.
double shape_scale(int rows, int cols);

/// Newton-Schulz iteration approximating the SVD sign factor U.V^T of m:
/// X = m/|m|_F, then ns_iterations of X <- aX + b(XX^T)X + c(XX^T)^2 X,
/// run on the transpose when rows > cols. An all-zero matrix is returned
/// unchanged.
std::vector<double> newton_schulz_orthogonalize(std::span<const double> m, int rows, int cols,
                                                const std::array<double, 3>& coefficients,
                                                int iterations);

/// Single-tensor AdamW rule with decoupled weight decay applied to the
/// pre-update parameter value:
///   m <- b1 m + (1-b1) g;  v <- b2 v + (1-b2) g^2
///   theta <- theta - lr * mhat/(sqrt(vhat) + eps) - lr * wd * theta
/// step is 1-based for bias correction.
void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, long step, const AdamWConfig& config);

class Optimizer {
 public:
  virtual ~Optimizer() = default;
  /// Applies one update from the gradients currently stored on the
  /// parameters. Parameters without a gradient buffer are skipped.
  virtual void step(ParamSet& params) = 0;
  virtual std::string_view name() const = 0;
  long steps_taken() const { return steps_; }

 protected:
  long steps_ = 0;
};

class AdamW final : public Optimizer {
 public:
  explicit AdamW(AdamWConfig config = {});
  void step(ParamSet& params) override;
  std::string_view name() const override { return "adamw"; }

 private:
  AdamWConfig config_;
  struct Slot {
    std::vector<double> m, v;
  };
  std::vector<Slot> slots_;
};

/// Momentum + Newton-Schulz orthogonalization + shape-matched scaling for 2-D
/// weights; the embedding table and RMSNorm gains fall back to AdamW.
class Muon final : public Optimizer {
 public:
  explicit Muon(MuonConfig config = {});
  void step(ParamSet& params) override;
  std::string_view name() const override { return "muon"; }

  /// True for parameters updated with the orthogonalized rule.
  static bool uses_orthogonalized_rule(const std::string& name, const Tensor& t);

 private:
  MuonConfig config_;
  struct Slot {
    std::vector<double> momentum;  // orthogonalized rule
    std::vector<double> m, v;      // fallback
  };
  std::vector<Slot> slots_;
};

std::unique_ptr<Optimizer> make_optimizer(std::string_view name, const AdamWConfig& adamw,
                                          const MuonConfig& muon);

}  // namespace groklab
