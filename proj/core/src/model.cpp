// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

namespace groklab {

void ModelConfig::validate() const {
  if (vocab_size <= 0) throw ConfigError("vocab_size must be positive");
  if (seq_len <= 0) throw ConfigError("seq_len must be positive");
  if (n_layers < 1) throw ConfigError("n_layers must be >= 1");
  if (d_model % n_heads != 0) {
    throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                      std::to_string(n_heads));
  }
  if (head_dim() % 2 != 0) {
    throw ConfigError("head dimension must be even for rotary pairs, got " +
                      std::to_string(head_dim()));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("dropout_rate must be in [0, 1)");
  }
}

Tensor& ParamSet::at(std::string_view name) {
  for (Entry& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamSet::at(std::string_view name) const {
  for (const Entry& e : entries) {
    if (e.name == name) return e.tensor;
  }
  throw ContractError("no parameter named '" + std::string(name) + "'");
}

bool ParamSet::contains(std::string_view name) const {
  for (const Entry& e : entries) {
    if (e.name == name) return true;
  }
  return false;
}

std::size_t ParamSet::parameter_count() const {
  std::size_t n = 0;
  for (const Entry& e : entries) n += static_cast<std::size_t>(e.tensor.size());
  return n;
}

void ParamSet::zero_grads() {
  for (Entry& e : entries) e.tensor.zero_grad();
}

void ParamSet::drop_grads() {
  for (Entry& e : entries) e.tensor.drop_grad();
}

namespace {

Tensor init_matrix(int rows, int cols, double stddev, Rng& rng) {
  Tensor t = Tensor::zeros({rows, cols});
  auto v = t.mutable_values();
  for (int i = 0; i < t.size(); ++i) v[i] = rng.truncated_normal(stddev, 2.0);
  t.set_requires_grad(true);
  return t;
}

Tensor init_gain(int d) {
  Tensor t = Tensor::full({d}, 1.0);
  t.set_requires_grad(true);
  return t;
}

}  // namespace

ParamSet ParamSet::init(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ParamSet params;
  Rng rng(seed);
  const double w_std = 0.02;
  // "variance 1/sqrt(d_model)" initialization for the embedding table
  const double e_std = std::pow(static_cast<double>(config.d_model), -0.25);

  {
    Tensor e = Tensor::zeros({config.vocab_size, config.d_model});
    auto v = e.mutable_values();
    for (int i = 0; i < e.size(); ++i) v[i] = rng.normal(0.0, e_std);
    e.set_requires_grad(true);
    params.entries.push_back({"embed", e});
  }
  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";
    params.entries.push_back({prefix + "attn_norm.gain", init_gain(config.d_model)});
    params.entries.push_back(
        {prefix + "attn.wq", init_matrix(config.d_model, config.d_model, w_std, rng)});
    params.entries.push_back(
        {prefix + "attn.wk", init_matrix(config.d_model, config.d_model, w_std, rng)});
    params.entries.push_back(
        {prefix + "attn.wv", init_matrix(config.d_model, config.d_model, w_std, rng)});
    params.entries.push_back(
        {prefix + "attn.wo", init_matrix(config.d_model, config.d_model, w_std, rng)});
    params.entries.push_back({prefix + "ffn_norm.gain", init_gain(config.d_model)});
    params.entries.push_back(
        {prefix + "ffn.w1", init_matrix(config.d_model, config.d_ffn, w_std, rng)});
    params.entries.push_back(
        {prefix + "ffn.w2", init_matrix(config.d_ffn, config.d_model, w_std, rng)});
  }
  params.entries.push_back({"final_norm.gain", init_gain(config.d_model)});
  params.entries.push_back(
      {"head.w_out", init_matrix(config.d_model, config.vocab_size, w_std, rng)});
  return params;
}

// ---- checkpoint io ----------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'G', 'R', 'K', 'P', '0', '0', '0', '1'};

void write_u32(std::ofstream& out, std::uint32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::uint32_t read_u32(std::ifstream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return v;
}

void write_f64_le(std::ofstream& out, std::span<const double> values) {
  static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
  } else {
    for (double v : values) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      unsigned char buf[8];
      for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xFF);
      out.write(reinterpret_cast<const char*>(buf), 8);
    }
  }
}

}  // namespace

void ParamSet::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ConfigError("checkpoint save: cannot open " + path);
  out.write(kMagic, sizeof(kMagic));
  for (const Entry& e : entries) {
    write_u32(out, static_cast<std::uint32_t>(e.name.size()));
    out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
    write_u32(out, static_cast<std::uint32_t>(e.tensor.rank()));
    for (int d : e.tensor.shape()) write_u32(out, static_cast<std::uint32_t>(d));
    write_f64_le(out, e.tensor.values());
  }
  if (!out) throw ConfigError("checkpoint save: write failed for " + path);
}

ParamSet ParamSet::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("checkpoint load: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0) {
    throw ParseError("checkpoint load: bad magic in " + path);
  }
  ParamSet params;
  while (true) {
    const std::uint32_t name_len = read_u32(in);
    if (!in) break;  // clean EOF between records
    std::string name(name_len, '\0');
    in.read(name.data(), name_len);
    const std::uint32_t rank = read_u32(in);
    std::vector<int> shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
      shape[i] = static_cast<int>(read_u32(in));
      count *= static_cast<std::size_t>(shape[i]);
    }
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (!in) throw ParseError("checkpoint load: truncated record '" + name + "' in " + path);
    if constexpr (std::endian::native == std::endian::big) {
      for (double& v : values) {
        unsigned char b[8];
        std::memcpy(b, &v, 8);
        std::swap(b[0], b[7]);
        std::swap(b[1], b[6]);
        std::swap(b[2], b[5]);
        std::swap(b[3], b[4]);
        std::memcpy(&v, b, 8);
      }
    }
    Tensor t = Tensor::from_values(std::move(shape), std::move(values));
    t.set_requires_grad(true);
    params.entries.push_back({std::move(name), t});
  }
  return params;
}

// ---- forward ----------------------------------------------------------------

int argmax_row(std::span<const double> row) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(row.size()); ++i) {
    if (row[static_cast<std::size_t>(i)] > row[static_cast<std::size_t>(best)]) best = i;
  }
  return best;
}

Tensor model_forward(std::span<const int> tokens, int batch, const ParamSet& params,
                     const ModelConfig& config, bool train_mode, Rng* dropout_rng) {
  config.validate();
  const int seq = config.seq_len;
  if (static_cast<int>(tokens.size()) != batch * seq) {
    throw ShapeError("model_forward: expected " + std::to_string(batch * seq) + " tokens, got " +
                     std::to_string(tokens.size()));
  }
  for (int t : tokens) {
    if (t < 0 || t >= config.vocab_size) {
      throw IndexError("model_forward: token " + std::to_string(t) + " out of range [0, " +
                       std::to_string(config.vocab_size) + ")");
    }
  }
  const bool use_dropout = train_mode && config.dropout_rate > 0.0;
  if (use_dropout && dropout_rng == nullptr) {
    throw ContractError("model_forward: train mode with dropout needs an rng");
  }

  std::vector<int> token_rows(tokens.begin(), tokens.end());
  Tensor x = gather_rows(params.at("embed"), token_rows);

  for (int l = 0; l < config.n_layers; ++l) {
    const std::string prefix = "layers." + std::to_string(l) + ".";

    Tensor h = rmsnorm(x, params.at(prefix + "attn_norm.gain"), config.rmsnorm_eps);
    Tensor q = rope_rotate(matmul(h, params.at(prefix + "attn.wq")), batch, seq, config.n_heads,
                           config.rope_base);
    Tensor k = rope_rotate(matmul(h, params.at(prefix + "attn.wk")), batch, seq, config.n_heads,
                           config.rope_base);
    Tensor v = matmul(h, params.at(prefix + "attn.wv"));
    Tensor attn = causal_attention(q, k, v, batch, seq, config.n_heads);
    Tensor o = matmul(attn, params.at(prefix + "attn.wo"));
    if (use_dropout) o = mul(o, dropout_mask(o.shape(), config.dropout_rate, *dropout_rng));
    x = add(x, o);

    Tensor h2 = rmsnorm(x, params.at(prefix + "ffn_norm.gain"), config.rmsnorm_eps);
    Tensor f = matmul(silu(matmul(h2, params.at(prefix + "ffn.w1"))), params.at(prefix + "ffn.w2"));
    if (use_dropout) f = mul(f, dropout_mask(f.shape(), config.dropout_rate, *dropout_rng));
    x = add(x, f);
  }

  x = rmsnorm(x, params.at("final_norm.gain"), config.rmsnorm_eps);

  std::vector<int> last_rows(static_cast<std::size_t>(batch));
  for (int b = 0; b < batch; ++b) last_rows[static_cast<std::size_t>(b)] = b * seq + seq - 1;
  Tensor last = gather_rows(x, last_rows);

  return matmul(last, params.at("head.w_out"));
}

}  // namespace groklab
