// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#include "groklab/tensor.hpp"

#include <cmath>
#include <cstring>
#include <string>
#include <utility>

#include "gemm.hpp"

namespace groklab {

namespace {

thread_local Tape* g_active_tape = nullptr;

std::string shape_str(const std::vector<int>& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  out += "]";
  return out;
}

std::size_t shape_count(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimensions must be positive, got " + shape_str(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(std::vector<int> shape) {
  auto d = std::make_shared<detail::TensorData>();
  const std::size_t n = shape_count(shape);
  d->shape = std::move(shape);
  d->values.assign(n, 0.0);
  return Tensor(std::move(d));
}

Tensor Tensor::full(std::vector<int> shape, double value) {
  Tensor t = zeros(std::move(shape));
  for (double& v : t.d_->values) v = value;
  return t;
}

Tensor Tensor::from_values(std::vector<int> shape, std::vector<double> values) {
  const std::size_t n = shape_count(shape);
  if (n != values.size()) {
    throw ShapeError("value count " + std::to_string(values.size()) +
                     " does not match shape " + shape_str(shape));
  }
  auto d = std::make_shared<detail::TensorData>();
  d->shape = std::move(shape);
  d->values = std::move(values);
  return Tensor(std::move(d));
}

Tensor Tensor::scalar(double value) { return from_values({1}, {value}); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item() requires a single-element tensor, got " + shape_str(shape()));
  return d_->values[0];
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient buffer");
  return d_->grad;
}

std::span<double> Tensor::grad_data() {
  if (d_->grad.empty()) d_->grad.assign(d_->values.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::memset(d_->grad.data(), 0, sizeof(double) * d_->grad.size());
}

// ---- Tape -----------------------------------------------------------------

Tape::Scope::Scope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
Tape::Scope::~Scope() { g_active_tape = previous_; }

Tape* Tape::active() noexcept { return g_active_tape; }

void Tape::backward(const Tensor& loss) {
  if (!loss.defined() || loss.size() != 1) {
    throw ContractError("backward() requires a scalar loss");
  }
  Tensor seed = loss;
  seed.grad_data()[0] += 1.0;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
    if (it->output.has_grad()) it->pull();
  }
}

// Shared recording logic for ops. An input participates in the backward pass
// if it requires grad or was produced on the currently active tape.
struct OpRecorder {
  static bool tracked(const Tensor& t) {
    return t.d_->requires_grad || (g_active_tape != nullptr && t.d_->producer == g_active_tape);
  }

  static bool should_record(std::initializer_list<const Tensor*> inputs) {
    if (g_active_tape == nullptr) return false;
    for (const Tensor* t : inputs) {
      if (tracked(*t)) return true;
    }
    return false;
  }

  static void record(Tensor& output, std::function<void()> pull) {
    output.d_->producer = g_active_tape;
    g_active_tape->nodes_.push_back({output, std::move(pull)});
  }
};

namespace {

bool needs_grad(const Tensor& t) { return OpRecorder::tracked(t); }

}  // namespace

namespace detail {

bool tape_tracked(const Tensor& t) { return OpRecorder::tracked(t); }

bool tape_should_record(std::initializer_list<const Tensor*> inputs) {
  return OpRecorder::should_record(inputs);
}

void tape_record(Tensor& output, std::function<void()> pull) {
  OpRecorder::record(output, std::move(pull));
}

}  // namespace detail

// ---- elementwise ops ------------------------------------------------------

static void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
}

Tensor add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.values(), bv = b.values();
  auto ov = out.mutable_values();
  for (int i = 0; i < out.size(); ++i) ov[i] = av[i] + bv[i];
  if (OpRecorder::should_record({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    const bool ga = needs_grad(a), gb = needs_grad(b);
    OpRecorder::record(out, [ac, bc, oc, ga, gb]() mutable {
      const auto g = oc.grad();
      if (ga) {
        auto da = ac.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (gb) {
        auto db = bc.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i];
      }
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.values(), bv = b.values();
  auto ov = out.mutable_values();
  for (int i = 0; i < out.size(); ++i) ov[i] = av[i] - bv[i];
  if (OpRecorder::should_record({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    const bool ga = needs_grad(a), gb = needs_grad(b);
    OpRecorder::record(out, [ac, bc, oc, ga, gb]() mutable {
      const auto g = oc.grad();
      if (ga) {
        auto da = ac.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
      }
      if (gb) {
        auto db = bc.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] -= g[i];
      }
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.values(), bv = b.values();
  auto ov = out.mutable_values();
  for (int i = 0; i < out.size(); ++i) ov[i] = av[i] * bv[i];
  if (OpRecorder::should_record({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    const bool ga = needs_grad(a), gb = needs_grad(b);
    OpRecorder::record(out, [ac, bc, oc, ga, gb]() mutable {
      const auto g = oc.grad();
      const auto av2 = ac.values(), bv2 = bc.values();
      if (ga) {
        auto da = ac.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bv2[i];
      }
      if (gb) {
        auto db = bc.grad_data();
        for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * av2[i];
      }
    });
  }
  return out;
}

Tensor scale(const Tensor& a, double c) {
  Tensor out = Tensor::zeros(a.shape());
  const auto av = a.values();
  auto ov = out.mutable_values();
  for (int i = 0; i < out.size(); ++i) ov[i] = av[i] * c;
  if (OpRecorder::should_record({&a})) {
    Tensor ac = a, oc = out;
    OpRecorder::record(out, [ac, oc, c]() mutable {
      const auto g = oc.grad();
      auto da = ac.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * c;
    });
  }
  return out;
}

Tensor silu(const Tensor& x) {
  Tensor out = Tensor::zeros(x.shape());
  const auto xv = x.values();
  auto ov = out.mutable_values();
  for (int i = 0; i < out.size(); ++i) {
    const double s = 1.0 / (1.0 + std::exp(-xv[i]));
    ov[i] = xv[i] * s;
  }
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    OpRecorder::record(out, [xc, oc]() mutable {
      const auto g = oc.grad();
      const auto xv2 = xc.values();
      auto dx = xc.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double s = 1.0 / (1.0 + std::exp(-xv2[i]));
        dx[i] += g[i] * s * (1.0 + xv2[i] * (1.0 - s));
      }
    });
  }
  return out;
}

// ---- reductions -----------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor out = Tensor::scalar(total);
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    OpRecorder::record(out, [xc, oc]() mutable {
      const double g = oc.grad()[0];
      auto dx = xc.grad_data();
      for (double& v : dx) v += g;
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  const double inv = 1.0 / static_cast<double>(x.size());
  Tensor out = Tensor::scalar(total * inv);
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    OpRecorder::record(out, [xc, oc, inv]() mutable {
      const double g = oc.grad()[0] * inv;
      auto dx = xc.grad_data();
      for (double& v : dx) v += g;
    });
  }
  return out;
}

// ---- layout ops -----------------------------------------------------------

Tensor reshape(const Tensor& x, std::vector<int> shape) {
  const std::size_t n = shape_count(shape);
  if (n != static_cast<std::size_t>(x.size())) {
    throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = Tensor::from_values(std::move(shape),
                                   std::vector<double>(x.values().begin(), x.values().end()));
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    OpRecorder::record(out, [xc, oc]() mutable {
      const auto g = oc.grad();
      auto dx = xc.grad_data();
      for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw ShapeError("transpose: expected a 2-D tensor, got " + shape_str(x.shape()));
  const int m = x.dim(0), n = x.dim(1);
  Tensor out = Tensor::zeros({n, m});
  const auto xv = x.values();
  auto ov = out.mutable_values();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) ov[static_cast<std::size_t>(j) * m + i] = xv[static_cast<std::size_t>(i) * n + j];
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    OpRecorder::record(out, [xc, oc, m, n]() mutable {
      const auto g = oc.grad();
      auto dx = xc.grad_data();
      for (int j = 0; j < n; ++j)
        for (int i = 0; i < m; ++i)
          dx[static_cast<std::size_t>(i) * n + j] += g[static_cast<std::size_t>(j) * m + i];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<int>& rows) {
  if (x.rank() != 2) throw ShapeError("gather_rows: expected a 2-D tensor, got " + shape_str(x.shape()));
  const int n = x.dim(0), d = x.dim(1);
  for (int r : rows) {
    if (r < 0 || r >= n) {
      throw IndexError("gather_rows: row " + std::to_string(r) + " out of range [0, " +
                       std::to_string(n) + ")");
    }
  }
  Tensor out = Tensor::zeros({static_cast<int>(rows.size()), d});
  const auto xv = x.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::memcpy(ov.data() + i * d, xv.data() + static_cast<std::size_t>(rows[i]) * d,
                sizeof(double) * static_cast<std::size_t>(d));
  }
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    std::vector<int> rc = rows;
    OpRecorder::record(out, [xc, oc, rc, d]() mutable {
      const auto g = oc.grad();
      auto dx = xc.grad_data();
      for (std::size_t i = 0; i < rc.size(); ++i) {
        double* dst = dx.data() + static_cast<std::size_t>(rc[i]) * d;
        const double* src = g.data() + i * d;
        for (int j = 0; j < d; ++j) dst[j] += src[j];
      }
    });
  }
  return out;
}

// ---- matmul ---------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor out = Tensor::zeros({m, n});
  detail::gemm_nn(a.values().data(), b.values().data(), out.mutable_values().data(), m, k, n);
  if (OpRecorder::should_record({&a, &b})) {
    Tensor ac = a, bc = b, oc = out;
    const bool ga = needs_grad(a), gb = needs_grad(b);
    OpRecorder::record(out, [ac, bc, oc, ga, gb, m, k, n]() mutable {
      const double* g = oc.grad().data();
      if (ga) detail::gemm_nt_acc(g, bc.values().data(), ac.grad_data().data(), m, n, k);
      if (gb) detail::gemm_tn_acc(ac.values().data(), g, bc.grad_data().data(), m, k, n);
    });
  }
  return out;
}

// ---- rmsnorm --------------------------------------------------------------

Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps) {
  if (x.rank() != 2 || gain.rank() != 1 || gain.dim(0) != x.dim(1)) {
    throw ShapeError("rmsnorm: expected x [rows x d] and gain [d], got " + shape_str(x.shape()) +
                     " and " + shape_str(gain.shape()));
  }
  const int rows = x.dim(0), d = x.dim(1);
  Tensor out = Tensor::zeros(x.shape());
  auto inv_rms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
  {
    const auto xv = x.values();
    const auto gv = gain.values();
    auto ov = out.mutable_values();
    for (int r = 0; r < rows; ++r) {
      const double* xr = xv.data() + static_cast<std::size_t>(r) * d;
      double ms = 0.0;
      for (int j = 0; j < d; ++j) ms += xr[j] * xr[j];
      ms = ms / d + eps;
      const double inv = 1.0 / std::sqrt(ms);
      (*inv_rms)[static_cast<std::size_t>(r)] = inv;
      double* orow = ov.data() + static_cast<std::size_t>(r) * d;
      for (int j = 0; j < d; ++j) orow[j] = xr[j] * gv[j] * inv;
    }
  }
  if (OpRecorder::should_record({&x, &gain})) {
    Tensor xc = x, gc = gain, oc = out;
    const bool gx = needs_grad(x), gg = needs_grad(gain);
    OpRecorder::record(out, [xc, gc, oc, inv_rms, gx, gg, rows, d]() mutable {
      const auto up = oc.grad();
      const auto xv = xc.values();
      const auto gv = gc.values();
      std::span<double> dx = gx ? xc.grad_data() : std::span<double>{};
      std::span<double> dg = gg ? gc.grad_data() : std::span<double>{};
      for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * d;
        const double* xr = xv.data() + off;
        const double* ur = up.data() + off;
        const double inv = (*inv_rms)[static_cast<std::size_t>(r)];
        if (gg) {
          for (int j = 0; j < d; ++j) dg[static_cast<std::size_t>(j)] += ur[j] * xr[j] * inv;
        }
        if (gx) {
          double s = 0.0;
          for (int j = 0; j < d; ++j) s += ur[j] * gv[j] * xr[j];
          const double coef = inv * inv * inv * s / d;
          double* dxr = dx.data() + off;
          for (int j = 0; j < d; ++j) dxr[j] += inv * gv[j] * ur[j] - coef * xr[j];
        }
      }
    });
  }
  return out;
}

// ---- rotary position rotation ----------------------------------------------

static void check_rope_shape(const Tensor& x, int batch, int seq, int n_heads) {
  if (x.rank() != 2 || x.dim(0) != batch * seq) {
    throw ShapeError("rope_rotate: expected [batch*seq x d], got " + shape_str(x.shape()));
  }
  const int d = x.dim(1);
  if (d % n_heads != 0) throw ConfigError("rope_rotate: d not divisible by n_heads");
  if ((d / n_heads) % 2 != 0) {
    throw ConfigError("rope_rotate: head dimension must be even, got " + std::to_string(d / n_heads));
  }
}

Tensor rope_rotate(const Tensor& x, int batch, int seq, int n_heads, double base) {
  check_rope_shape(x, batch, seq, n_heads);
  const int d = x.dim(1);
  const int head_dim = d / n_heads;
  const int half = head_dim / 2;

  // cos/sin per (position, pair)
  auto table = std::make_shared<std::vector<double>>(static_cast<std::size_t>(seq) * half * 2);
  for (int p = 0; p < seq; ++p) {
    for (int i = 0; i < half; ++i) {
      const double angle = p * std::pow(base, -2.0 * i / head_dim);
      (*table)[(static_cast<std::size_t>(p) * half + i) * 2] = std::cos(angle);
      (*table)[(static_cast<std::size_t>(p) * half + i) * 2 + 1] = std::sin(angle);
    }
  }

  Tensor out = Tensor::zeros(x.shape());
  {
    const auto xv = x.values();
    auto ov = out.mutable_values();
    for (int b = 0; b < batch; ++b) {
      for (int p = 0; p < seq; ++p) {
        const std::size_t row = (static_cast<std::size_t>(b) * seq + p) * d;
        for (int h = 0; h < n_heads; ++h) {
          const std::size_t hoff = row + static_cast<std::size_t>(h) * head_dim;
          for (int i = 0; i < half; ++i) {
            const double c = (*table)[(static_cast<std::size_t>(p) * half + i) * 2];
            const double s = (*table)[(static_cast<std::size_t>(p) * half + i) * 2 + 1];
            const double x0 = xv[hoff + 2 * i], x1 = xv[hoff + 2 * i + 1];
            ov[hoff + 2 * i] = x0 * c - x1 * s;
            ov[hoff + 2 * i + 1] = x0 * s + x1 * c;
          }
        }
      }
    }
  }
  if (OpRecorder::should_record({&x})) {
    Tensor xc = x, oc = out;
    OpRecorder::record(out, [xc, oc, table, batch, seq, n_heads, d, head_dim, half]() mutable {
      const auto g = oc.grad();
      auto dx = xc.grad_data();
      for (int b = 0; b < batch; ++b) {
        for (int p = 0; p < seq; ++p) {
          const std::size_t row = (static_cast<std::size_t>(b) * seq + p) * d;
          for (int h = 0; h < n_heads; ++h) {
            const std::size_t hoff = row + static_cast<std::size_t>(h) * head_dim;
            for (int i = 0; i < half; ++i) {
              const double c = (*table)[(static_cast<std::size_t>(p) * half + i) * 2];
              const double s = (*table)[(static_cast<std::size_t>(p) * half + i) * 2 + 1];
              const double g0 = g[hoff + 2 * i], g1 = g[hoff + 2 * i + 1];
              dx[hoff + 2 * i] += c * g0 + s * g1;
              dx[hoff + 2 * i + 1] += -s * g0 + c * g1;
            }
          }
        }
      }
    });
  }
  return out;
}

// ---- causal multi-head attention --------------------------------------------

Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int batch, int seq, int n_heads) {
  check_same_shape(q, k, "causal_attention(q,k)");
  check_same_shape(q, v, "causal_attention(q,v)");
  if (q.rank() != 2 || q.dim(0) != batch * seq) {
    throw ShapeError("causal_attention: expected [batch*seq x d], got " + shape_str(q.shape()));
  }
  const int d = q.dim(1);
  if (d % n_heads != 0) throw ConfigError("causal_attention: d not divisible by n_heads");
  const int hd = d / n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));

  // softmax attention weights saved for backward: [batch, heads, seq, seq]
  auto probs = std::make_shared<std::vector<double>>(
      static_cast<std::size_t>(batch) * n_heads * seq * seq, 0.0);

  Tensor out = Tensor::zeros(q.shape());
  {
    const auto qv = q.values(), kv = k.values(), vv = v.values();
    auto ov = out.mutable_values();
    std::vector<double> row(static_cast<std::size_t>(seq));
    for (int b = 0; b < batch; ++b) {
      for (int h = 0; h < n_heads; ++h) {
        double* pmat = probs->data() +
                       ((static_cast<std::size_t>(b) * n_heads + h) * seq) * seq;
        for (int i = 0; i < seq; ++i) {
          const double* qi = qv.data() + (static_cast<std::size_t>(b) * seq + i) * d + static_cast<std::size_t>(h) * hd;
          double m = -1e300;
          for (int j = 0; j <= i; ++j) {
            const double* kj = kv.data() + (static_cast<std::size_t>(b) * seq + j) * d + static_cast<std::size_t>(h) * hd;
            double dot = 0.0;
            for (int t = 0; t < hd; ++t) dot += qi[t] * kj[t];
            row[static_cast<std::size_t>(j)] = dot * inv_sqrt;
            if (row[static_cast<std::size_t>(j)] > m) m = row[static_cast<std::size_t>(j)];
          }
          double z = 0.0;
          for (int j = 0; j <= i; ++j) {
            row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - m);
            z += row[static_cast<std::size_t>(j)];
          }
          double* prow = pmat + static_cast<std::size_t>(i) * seq;
          double* orow = ov.data() + (static_cast<std::size_t>(b) * seq + i) * d + static_cast<std::size_t>(h) * hd;
          for (int j = 0; j <= i; ++j) {
            const double p = row[static_cast<std::size_t>(j)] / z;
            prow[j] = p;
            const double* vj = vv.data() + (static_cast<std::size_t>(b) * seq + j) * d + static_cast<std::size_t>(h) * hd;
            for (int t = 0; t < hd; ++t) orow[t] += p * vj[t];
          }
        }
      }
    }
  }

  if (OpRecorder::should_record({&q, &k, &v})) {
    Tensor qc = q, kc = k, vc = v, oc = out;
    const bool gq = needs_grad(q), gk = needs_grad(k), gv = needs_grad(v);
    OpRecorder::record(out, [qc, kc, vc, oc, probs, gq, gk, gv, batch, seq, n_heads, hd, d,
                             inv_sqrt]() mutable {
      const auto g = oc.grad();
      const auto qv = qc.values(), kv = kc.values(), vv = vc.values();
      std::span<double> dq = gq ? qc.grad_data() : std::span<double>{};
      std::span<double> dk = gk ? kc.grad_data() : std::span<double>{};
      std::span<double> dv = gv ? vc.grad_data() : std::span<double>{};
      std::vector<double> dp(static_cast<std::size_t>(seq));
      for (int b = 0; b < batch; ++b) {
        for (int h = 0; h < n_heads; ++h) {
          const double* pmat = probs->data() +
                               ((static_cast<std::size_t>(b) * n_heads + h) * seq) * seq;
          for (int i = 0; i < seq; ++i) {
            const std::size_t ioff = (static_cast<std::size_t>(b) * seq + i) * d + static_cast<std::size_t>(h) * hd;
            const double* gi = g.data() + ioff;
            const double* prow = pmat + static_cast<std::size_t>(i) * seq;
            // dV and dp
            double dot_dp_p = 0.0;
            for (int j = 0; j <= i; ++j) {
              const std::size_t joff = (static_cast<std::size_t>(b) * seq + j) * d + static_cast<std::size_t>(h) * hd;
              double acc = 0.0;
              const double* vj = vv.data() + joff;
              for (int t = 0; t < hd; ++t) acc += gi[t] * vj[t];
              dp[static_cast<std::size_t>(j)] = acc;
              dot_dp_p += acc * prow[j];
              if (gv) {
                double* dvj = dv.data() + joff;
                for (int t = 0; t < hd; ++t) dvj[t] += prow[j] * gi[t];
              }
            }
            // ds -> dQ, dK
            for (int j = 0; j <= i; ++j) {
              const double ds = prow[j] * (dp[static_cast<std::size_t>(j)] - dot_dp_p) * inv_sqrt;
              const std::size_t joff = (static_cast<std::size_t>(b) * seq + j) * d + static_cast<std::size_t>(h) * hd;
              if (gq) {
                double* dqi = dq.data() + ioff;
                const double* kj = kv.data() + joff;
                for (int t = 0; t < hd; ++t) dqi[t] += ds * kj[t];
              }
              if (gk) {
                double* dkj = dk.data() + joff;
                const double* qi = qv.data() + ioff;
                for (int t = 0; t < hd; ++t) dkj[t] += ds * qi[t];
              }
            }
          }
        }
      }
    });
  }
  return out;
}

// ---- dropout mask -----------------------------------------------------------

Tensor dropout_mask(const std::vector<int>& shape, double rate, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0) {
    throw ConfigError("dropout rate must be in [0, 1), got " + std::to_string(rate));
  }
  Tensor mask = Tensor::full(shape, 1.0);
  if (rate == 0.0) return mask;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto mv = mask.mutable_values();
  for (int i = 0; i < mask.size(); ++i) {
    mv[i] = (rng.next_double() < rate) ? 0.0 : keep_scale;
  }
  return mask;
}

// ---- gradient check ----------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double epsilon) {
  Tensor probe = Tensor::from_values(x.shape(),
                                     std::vector<double>(x.values().begin(), x.values().end()));
  probe.set_requires_grad(true);
  Tape tape;
  {
    Tape::Scope scope(tape);
    Tensor y = f(probe);
    if (y.size() != 1) throw ContractError("grad_check: f must be scalar-valued");
    tape.backward(y);
  }
  std::vector<double> analytic(probe.grad().begin(), probe.grad().end());

  std::vector<double> base(x.values().begin(), x.values().end());
  double max_err = 0.0;
  for (std::size_t i = 0; i < base.size(); ++i) {
    std::vector<double> vplus = base, vminus = base;
    vplus[i] += epsilon;
    vminus[i] -= epsilon;
    const double fp = f(Tensor::from_values(x.shape(), std::move(vplus))).item();
    const double fm = f(Tensor::from_values(x.shape(), std::move(vminus))).item();
    const double numeric = (fp - fm) / (2.0 * epsilon);
    const double denom = std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    const double err = std::abs(analytic[i] - numeric) / denom;
    if (err > max_err) max_err = err;
  }
  return max_err;
}

}  // namespace groklab
