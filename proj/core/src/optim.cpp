// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/optim.hpp"

#include <cmath>
#include <cstring>

#include "gemm.hpp"

namespace groklab {

void AdamWConfig::validate() const {
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw ConfigError("adamw betas must be in [0, 1)");
  }
  if (lr <= 0.0 || eps <= 0.0) throw ConfigError("adamw lr and eps must be positive");
  if (weight_decay < 0.0) throw ConfigError("adamw weight_decay must be >= 0");
}

void MuonConfig::validate() const {
  if (ns_iterations < 1) throw ConfigError("muon ns_iterations must be >= 1");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("muon momentum must be in [0, 1)");
  if (lr <= 0.0) throw ConfigError("muon lr must be positive");
  if (weight_decay < 0.0) throw ConfigError("muon weight_decay must be >= 0");
  fallback.validate();
}

double shape_scale(int rows, int cols) {
  return std::sqrt(std::max(1.0, static_cast<double>(rows) / static_cast<double>(cols)));
}

std::vector<double> newton_schulz_orthogonalize(std::span<const double> m, int rows, int cols,
                                                const std::array<double, 3>& coefficients,
                                                int iterations) {
  if (static_cast<std::size_t>(rows) * cols != m.size()) {
    throw ShapeError("newton_schulz: buffer size does not match rows*cols");
  }
  double fro = 0.0;
  for (double v : m) fro += v * v;
  if (fro == 0.0) return std::vector<double>(m.begin(), m.end());  // documented special case
  fro = std::sqrt(fro);

  // work on the wide orientation so the gram matrix is [r x r] with r <= c
  const bool flip = rows > cols;
  const int r = flip ? cols : rows;
  const int c = flip ? rows : cols;

  std::vector<double> x(static_cast<std::size_t>(r) * c);
  if (flip) {
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < cols; ++j)
        x[static_cast<std::size_t>(j) * c + i] = m[static_cast<std::size_t>(i) * cols + j] / fro;
  } else {
    for (std::size_t i = 0; i < m.size(); ++i) x[i] = m[i] / fro;
  }

  const double a = coefficients[0], b = coefficients[1], cq = coefficients[2];
  std::vector<double> gram(static_cast<std::size_t>(r) * r);
  std::vector<double> gram2(static_cast<std::size_t>(r) * r);
  std::vector<double> poly(static_cast<std::size_t>(r) * r);
  std::vector<double> next(static_cast<std::size_t>(r) * c);
  for (int it = 0; it < iterations; ++it) {
    // gram = X X^T
    std::memset(gram.data(), 0, sizeof(double) * gram.size());
    detail::gemm_nt_acc(x.data(), x.data(), gram.data(), r, c, r);
    // poly = b*gram + cq*gram*gram
    detail::gemm_nn(gram.data(), gram.data(), gram2.data(), r, r, r);
    for (std::size_t i = 0; i < poly.size(); ++i) poly[i] = b * gram[i] + cq * gram2[i];
    // X <- a*X + poly*X
    detail::gemm_nn(poly.data(), x.data(), next.data(), r, r, c);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = a * x[i] + next[i];
  }

  if (!flip) return x;
  std::vector<double> out(static_cast<std::size_t>(rows) * cols);
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j)
      out[static_cast<std::size_t>(i) * cols + j] = x[static_cast<std::size_t>(j) * c + i];
  return out;
}

void adamw_update(std::span<double> theta, std::span<const double> grad, std::span<double> m,
                  std::span<double> v, long step, const AdamWConfig& config) {
  if (theta.size() != grad.size() || theta.size() != m.size() || theta.size() != v.size()) {
    throw ContractError("adamw_update: buffer sizes differ");
  }
  const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  const double decay = config.lr * config.weight_decay;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * grad[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * grad[i] * grad[i];
    const double mhat = m[i] / bc1;
    const double vhat = v[i] / bc2;
    theta[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps) + decay * theta[i];
  }
}

// ---- AdamW ------------------------------------------------------------------

AdamW::AdamW(AdamWConfig config) : config_(config) { config_.validate(); }

void AdamW::step(ParamSet& params) {
  if (slots_.empty()) slots_.resize(params.entries.size());
  if (slots_.size() != params.entries.size()) {
    throw ContractError("adamw: optimizer state does not match parameter set");
  }
  ++steps_;
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    Tensor& t = params.entries[i].tensor;
    if (!t.has_grad()) continue;
    Slot& slot = slots_[i];
    if (slot.m.empty()) {
      slot.m.assign(static_cast<std::size_t>(t.size()), 0.0);
      slot.v.assign(static_cast<std::size_t>(t.size()), 0.0);
    }
    if (slot.m.size() != static_cast<std::size_t>(t.size())) {
      throw ContractError("adamw: state shape mismatch for " + params.entries[i].name);
    }
    adamw_update(t.mutable_values(), t.grad(), slot.m, slot.v, steps_, config_);
  }
}

// ---- Muon ---------------------------------------------------------------------

Muon::Muon(MuonConfig config) : config_(config) { config_.validate(); }

bool Muon::uses_orthogonalized_rule(const std::string& name, const Tensor& t) {
  return t.rank() == 2 && name != "embed";
}

void Muon::step(ParamSet& params) {
  if (slots_.empty()) slots_.resize(params.entries.size());
  if (slots_.size() != params.entries.size()) {
    throw ContractError("muon: optimizer state does not match parameter set");
  }
  ++steps_;
  for (std::size_t i = 0; i < params.entries.size(); ++i) {
    Tensor& t = params.entries[i].tensor;
    if (!t.has_grad()) continue;
    Slot& slot = slots_[i];
    const std::size_t n = static_cast<std::size_t>(t.size());

    if (uses_orthogonalized_rule(params.entries[i].name, t)) {
      if (slot.momentum.empty()) slot.momentum.assign(n, 0.0);
      if (slot.momentum.size() != n) {
        throw ContractError("muon: state shape mismatch for " + params.entries[i].name);
      }
      const auto g = t.grad();
      std::vector<double> effective(n);
      for (std::size_t j = 0; j < n; ++j) {
        slot.momentum[j] = config_.momentum * slot.momentum[j] + g[j];
        effective[j] = config_.nesterov ? g[j] + config_.momentum * slot.momentum[j]
                                        : slot.momentum[j];
      }
      const int rows = t.dim(0), cols = t.dim(1);
      const std::vector<double> ortho = newton_schulz_orthogonalize(
          effective, rows, cols, config_.ns_coefficients, config_.ns_iterations);
      const double step_scale = config_.lr * shape_scale(rows, cols);
      const double decay = config_.lr * config_.weight_decay;
      auto theta = t.mutable_values();
      for (std::size_t j = 0; j < n; ++j) {
        theta[j] -= step_scale * ortho[j] + decay * theta[j];
      }
    } else {
      if (slot.m.empty()) {
        slot.m.assign(n, 0.0);
        slot.v.assign(n, 0.0);
      }
      if (slot.m.size() != n) {
        throw ContractError("muon: fallback state shape mismatch for " + params.entries[i].name);
      }
      adamw_update(t.mutable_values(), t.grad(), slot.m, slot.v, steps_, config_.fallback);
    }
  }
}

std::unique_ptr<Optimizer> make_optimizer(std::string_view name, const AdamWConfig& adamw,
                                          const MuonConfig& muon) {
  if (name == "adamw") return std::make_unique<AdamW>(adamw);
  if (name == "muon") return std::make_unique<Muon>(muon);
  throw ConfigError("unknown optimizer '" + std::string(name) + "'; expected adamw or muon");
}

}  // namespace groklab
