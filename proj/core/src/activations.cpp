// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/activations.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace groklab {

std::string_view to_string(SoftmaxVariant v) {
  switch (v) {
    case SoftmaxVariant::kSoftmax: return "softmax";
    case SoftmaxVariant::kStablemax: return "stablemax";
    case SoftmaxVariant::kSparsemax: return "sparsemax";
  }
  return "softmax";
}

SoftmaxVariant parse_softmax_variant(std::string_view name) {
  if (name == "softmax") return SoftmaxVariant::kSoftmax;
  if (name == "stablemax") return SoftmaxVariant::kStablemax;
  if (name == "sparsemax") return SoftmaxVariant::kSparsemax;
  throw ConfigError("unknown softmax variant '" + std::string(name) +
                    "'; expected softmax, stablemax or sparsemax");
}

namespace {

void check_finite(std::span<const double> z, const char* op) {
  for (double v : z) {
    if (!std::isfinite(v)) throw NumericError(std::string(op) + ": non-finite input");
  }
}

}  // namespace

std::vector<double> softmax(std::span<const double> z) {
  check_finite(z, "softmax");
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - m);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double stablemax_s(double z) { return z >= 0.0 ? z + 1.0 : 1.0 / (1.0 - z); }

std::vector<double> stablemax(std::span<const double> z) {
  check_finite(z, "stablemax");
  std::vector<double> out(z.size());
  double total = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = stablemax_s(z[i]);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

SparsemaxResult sparsemax(std::span<const double> z) {
  check_finite(z, "sparsemax");
  const int n = static_cast<int>(z.size());
  std::vector<double> sorted(z.begin(), z.end());
  std::stable_sort(sorted.begin(), sorted.end(), std::greater<double>());

  // largest k with 1 + k * z_(k) > cumulative sum of the k largest entries
  double cum = 0.0, cum_at_k = 0.0;
  int k = 0;
  for (int j = 0; j < n; ++j) {
    cum += sorted[static_cast<std::size_t>(j)];
    if (1.0 + (j + 1) * sorted[static_cast<std::size_t>(j)] > cum) {
      k = j + 1;
      cum_at_k = cum;
    }
  }

  SparsemaxResult result;
  result.tau = (cum_at_k - 1.0) / k;
  result.probs.resize(z.size());
  for (int i = 0; i < n; ++i) {
    const double p = z[static_cast<std::size_t>(i)] - result.tau;
    if (p > 0.0) {
      result.probs[static_cast<std::size_t>(i)] = p;
      result.support.push_back(i);
    }
  }
  return result;
}

std::vector<double> sparsemax_backward(const SparsemaxResult& result,
                                       std::span<const double> upstream) {
  if (result.support.empty()) throw ContractError("sparsemax_backward: empty support");
  if (upstream.size() != result.probs.size()) {
    throw ShapeError("sparsemax_backward: upstream size mismatch");
  }
  double mean_up = 0.0;
  for (int i : result.support) mean_up += upstream[static_cast<std::size_t>(i)];
  mean_up /= static_cast<double>(result.support.size());

  std::vector<double> grad(upstream.size(), 0.0);
  for (int i : result.support) {
    grad[static_cast<std::size_t>(i)] = upstream[static_cast<std::size_t>(i)] - mean_up;
  }
  return grad;
}

namespace {

LossGrad softmax_loss(std::span<const double> z, int target) {
  const double m = *std::max_element(z.begin(), z.end());
  double total = 0.0;
  for (double v : z) total += std::exp(v - m);
  const double log_z = m + std::log(total);

  LossGrad out;
  out.loss = log_z - z[static_cast<std::size_t>(target)];
  out.grad.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.grad[i] = std::exp(z[i] - log_z);
  }
  out.grad[static_cast<std::size_t>(target)] -= 1.0;
  return out;
}

// ln s(z) evaluated per branch, avoiding overflow the variant exists to prevent
double log_stablemax_s(double z) { return z >= 0.0 ? std::log1p(z) : -std::log1p(-z); }

// d s(z)/dz: 1 for z >= 0, s(z)^2 for z < 0 (continuous at 0)
double stablemax_s_prime(double z) {
  if (z >= 0.0) return 1.0;
  const double s = 1.0 / (1.0 - z);
  return s * s;
}

LossGrad stablemax_loss(std::span<const double> z, int target) {
  double total = 0.0;
  for (double v : z) total += stablemax_s(v);

  LossGrad out;
  out.loss = std::log(total) - log_stablemax_s(z[static_cast<std::size_t>(target)]);
  out.grad.resize(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    out.grad[i] = stablemax_s_prime(z[i]) / total;
  }
  const std::size_t t = static_cast<std::size_t>(target);
  out.grad[t] -= stablemax_s_prime(z[t]) / stablemax_s(z[t]);
  return out;
}

LossGrad sparsemax_loss(std::span<const double> z, int target) {
  const SparsemaxResult r = sparsemax(z);

  LossGrad out;
  double acc = 0.5;
  for (int j : r.support) {
    const double zj = z[static_cast<std::size_t>(j)];
    acc += 0.5 * (zj * zj - r.tau * r.tau);
  }
  out.loss = acc - z[static_cast<std::size_t>(target)];
  out.grad = r.probs;
  out.grad[static_cast<std::size_t>(target)] -= 1.0;
  return out;
}

}  // namespace

LossGrad variant_loss(std::span<const double> logits, int target, SoftmaxVariant variant) {
  if (target < 0 || static_cast<std::size_t>(target) >= logits.size()) {
    throw IndexError("variant_loss: target " + std::to_string(target) + " out of range [0, " +
                     std::to_string(logits.size()) + ")");
  }
  check_finite(logits, "variant_loss");
  switch (variant) {
    case SoftmaxVariant::kSoftmax: return softmax_loss(logits, target);
    case SoftmaxVariant::kStablemax: return stablemax_loss(logits, target);
    case SoftmaxVariant::kSparsemax: return sparsemax_loss(logits, target);
  }
  throw ConfigError("variant_loss: unknown variant");
}

Tensor batch_variant_loss(const Tensor& logits, const std::vector<int>& targets,
                          SoftmaxVariant variant) {
  if (logits.rank() != 2 || static_cast<std::size_t>(logits.dim(0)) != targets.size()) {
    throw ShapeError("batch_variant_loss: expected logits [batch x vocab] with one target per row");
  }
  const int batch = logits.dim(0), vocab = logits.dim(1);
  const auto lv = logits.values();

  auto grads = std::make_shared<std::vector<double>>(static_cast<std::size_t>(batch) * vocab);
  double total = 0.0;
  for (int b = 0; b < batch; ++b) {
    const std::span<const double> row(lv.data() + static_cast<std::size_t>(b) * vocab,
                                      static_cast<std::size_t>(vocab));
    LossGrad lg = variant_loss(row, targets[static_cast<std::size_t>(b)], variant);
    total += lg.loss;
    std::copy(lg.grad.begin(), lg.grad.end(), grads->begin() + static_cast<std::size_t>(b) * vocab);
  }
  Tensor out = Tensor::scalar(total / batch);

  if (detail::tape_should_record({&logits})) {
    Tensor lc = logits, oc = out;
    const double inv_b = 1.0 / batch;
    detail::tape_record(out, [lc, oc, grads, inv_b]() mutable {
      const double g = oc.grad()[0] * inv_b;
      auto dl = lc.grad_data();
      for (std::size_t i = 0; i < dl.size(); ++i) dl[i] += g * (*grads)[i];
    });
  }
  return out;
}

}  // namespace groklab
