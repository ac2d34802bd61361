// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groklab/tensor.hpp"

namespace groklab {

enum class SoftmaxVariant { kSoftmax, kStablemax, kSparsemax };

std::string_view to_string(SoftmaxVariant v);
SoftmaxVariant parse_softmax_variant(std::string_view name);

/// Standard exponential normalization with max-subtraction.
/// Output is strictly positive and sums to 1. Non-finite input throws
/// NumericError.
std::vector<double> softmax(std::span<const double> z);

/// Piecewise stabilizing map used by stablemax:
/// s(z) = z + 1 for z >= 0, 1/(1 - z) for z < 0. Strictly positive,
/// continuous and increasing.
double stablemax_s(double z);

/// s(z_i) / sum_j s(z_j).
std::vector<double> stablemax(std::span<const double> z);

struct SparsemaxResult {
  std::vector<double> probs;  // Euclidean projection of z onto the simplex
  double tau = 0.0;           // threshold with sum_i max(z_i - tau, 0) = 1
  std::vector<int> support;   // indices with probs > 0, ascending
};

/// Projection of z onto the probability simplex via sorting and cumulative
/// sums; probs_i = max(z_i - tau, 0).
SparsemaxResult sparsemax(std::span<const double> z);

/// Exact Jacobian-vector product of the projection: on-support entries get
/// upstream_i - mean(upstream over support), off-support entries get 0.
std::vector<double> sparsemax_backward(const SparsemaxResult& result,
                                       std::span<const double> upstream);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;  // d(loss)/d(logits)
};

/// Per-example training loss for one logit vector.
///  - softmax:   negative log-likelihood, computed in log space
///  - stablemax: -(ln s(z_t) - ln sum_j s(z_j)), logs taken per branch
///  - sparsemax: sparsemax loss -z_t + 1/2 sum_{j in S}(z_j^2 - tau^2) + 1/2,
///    whose gradient is sparsemax(z) - onehot(target)
LossGrad variant_loss(std::span<const double> logits, int target, SoftmaxVariant variant);

/// Mean variant loss over a batch of logits [batch x vocab], recorded on the
/// active tape so backward reaches the logits.
Tensor batch_variant_loss(const Tensor& logits, const std::vector<int>& targets,
                          SoftmaxVariant variant);

}  // namespace groklab
