// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "groklab/activations.hpp"
#include "groklab/tensor.hpp"

namespace groklab {

/// Transformer hyperparameters. The softmax variant applies to the output
/// loss only; attention weights always use standard softmax.
struct ModelConfig {
  int vocab_size = 0;
  int seq_len = 0;
  int d_model = 128;
  int n_heads = 4;
  int n_layers = 2;
  int d_ffn = 512;
  double dropout_rate = 0.1;
  double rope_base = 10000.0;
  double rmsnorm_eps = 1e-5;
  SoftmaxVariant softmax_variant = SoftmaxVariant::kSoftmax;

  int head_dim() const { return d_model / n_heads; }
  void validate() const;
};

/// Named trainable parameters in a fixed order. No bias terms anywhere.
struct ParamSet {
  struct Entry {
    std::string name;
    Tensor tensor;
  };
  std::vector<Entry> entries;

  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t parameter_count() const;

  void zero_grads();
  void drop_grads();

  /// Matrix weights ~ Normal(0, 0.02^2) clamped at +/-2 sigma, RMSNorm gains
  /// 1.0, embedding rows ~ Normal(0, variance 1/sqrt(d_model)). Deterministic
  /// per seed.
  static ParamSet init(const ModelConfig& config, std::uint64_t seed);

  /// Flat binary checkpoint: "GRKP0001" magic, then per tensor a
  /// (u32 name length, name bytes, u32 rank, u32 dims, little-endian f64
  /// values) record. See README for the exact layout.
  void save(const std::string& path) const;
  static ParamSet load(const std::string& path);
};

/// Full forward pass: embed -> n_layers x (attention block, FFN block) ->
/// final RMSNorm -> output head, returning logits at the last sequence
/// position only, shape [batch x vocab]. Pre-norm residual blocks, causal
/// attention, RoPE on q/k, SiLU FFN, dropout on each residual branch in
/// train mode. dropout_rng may be null when train_mode is false or
/// dropout_rate is 0.
Tensor model_forward(std::span<const int> tokens, int batch, const ParamSet& params,
                     const ModelConfig& config, bool train_mode, Rng* dropout_rng);

/// Argmax with ties broken toward the lowest class index.
int argmax_row(std::span<const double> row);

}  // namespace groklab
