// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "groklab/errors.hpp"
#include "groklab/rng.hpp"

namespace groklab {

class Tape;

namespace detail {

struct TensorData {
  std::vector<int> shape;
  std::vector<double> values;
  std::vector<double> grad;  // empty until backward (or an accumulation) needs it
  bool requires_grad = false;
  const Tape* producer = nullptr;  // tape that recorded this tensor as an op output
};

}  // namespace detail

/// Dense row-major tensor of 64-bit floats. Copies are shallow handles to a
/// shared buffer; a tensor is treated as immutable once an op has produced
/// it, so handles can be shared freely across threads for reading.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<int> shape);
  static Tensor full(std::vector<int> shape, double value);
  static Tensor from_values(std::vector<int> shape, std::vector<double> values);
  static Tensor scalar(double value);

  bool defined() const { return d_ != nullptr; }
  const std::vector<int>& shape() const { return d_->shape; }
  int rank() const { return static_cast<int>(d_->shape.size()); }
  int dim(int i) const { return d_->shape[static_cast<std::size_t>(i)]; }
  int size() const { return static_cast<int>(d_->values.size()); }

  std::span<const double> values() const { return d_->values; }
  /// Mutable access, intended for initialization and optimizer updates of
  /// leaf tensors; never mutate an op output that is still on a tape.
  std::span<double> mutable_values() { return d_->values; }

  /// Value of a single-element tensor.
  double item() const;

  bool requires_grad() const { return d_->requires_grad; }
  Tensor& set_requires_grad(bool on) {
    d_->requires_grad = on;
    return *this;
  }

  bool has_grad() const { return d_ && !d_->grad.empty(); }
  std::span<const double> grad() const;
  std::span<double> grad_data();
  void zero_grad();
  void drop_grad() { d_->grad.clear(); d_->grad.shrink_to_fit(); }

  /// Same underlying buffer (handle identity).
  bool same_storage(const Tensor& other) const { return d_ == other.d_; }

 private:
  friend class Tape;
  friend struct OpRecorder;
  std::shared_ptr<detail::TensorData> d_;
  explicit Tensor(std::shared_ptr<detail::TensorData> d) : d_(std::move(d)) {}
};

/// Records the forward computation as a flat list of operations, each holding
/// its output tensor and a backward rule. Recording order is a topological
/// order by construction (an op's inputs exist before it runs), so one
/// reverse sweep visits every node exactly once.
///
/// Activation is thread-local: while a Tape::Scope is alive on a thread, ops
/// run on that thread record themselves. Without an active tape every op is
/// a pure forward computation (evaluation mode).
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  class Scope {
   public:
    explicit Scope(Tape& tape);
    ~Scope();
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* previous_;
  };

  static Tape* active() noexcept;

  /// Seeds d(loss)/d(loss) = 1 and pulls gradients back through every
  /// recorded op. Gradients accumulate additively across fan-out.
  /// Throws ContractError for a non-scalar loss.
  void backward(const Tensor& loss);

  std::size_t num_ops() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

 private:
  friend struct OpRecorder;
  struct Node {
    Tensor output;
    std::function<void()> pull;  // reads output grad, accumulates into inputs
  };
  std::vector<Node> nodes_;
};

// ---- differentiable ops -------------------------------------------------

/// Standard matrix product [m x k] . [k x n] -> [m x n].
Tensor matmul(const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
/// Elementwise (Hadamard) product.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);

/// x * sigmoid(x), elementwise.
Tensor silu(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

Tensor reshape(const Tensor& x, std::vector<int> shape);
Tensor transpose(const Tensor& x);

/// Rows of a [n x d] tensor selected by index; backward scatter-adds.
/// Serves both embedding lookup and final-position extraction.
Tensor gather_rows(const Tensor& x, const std::vector<int>& rows);

/// Per-row x * gain / sqrt(mean(x^2) + eps) for x [rows x d], gain [d].
Tensor rmsnorm(const Tensor& x, const Tensor& gain, double eps);

/// Rotary position rotation of q/k coordinate pairs. x is [batch*seq x d];
/// pair i of head h at position p is rotated by p * base^(-2i/head_dim).
Tensor rope_rotate(const Tensor& x, int batch, int seq, int n_heads, double base);

/// Multi-head scaled dot-product attention with a causal mask and standard
/// softmax attention weights. q, k, v are [batch*seq x d].
Tensor causal_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                        int batch, int seq, int n_heads);

/// Inverted-dropout mask of {0, 1/(1-rate)} drawn from the given stream.
/// Not differentiable (plain tensor); apply with mul().
Tensor dropout_mask(const std::vector<int>& shape, double rate, Rng& rng);

/// Max over coordinates of |analytic - central difference| /
/// max(1e-8, |analytic| + |numeric|) for a scalar-valued tensor function.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double epsilon = 1e-5);

namespace detail {

// Recording hooks for fused ops defined outside tensor.cpp (losses, etc.).
bool tape_tracked(const Tensor& t);
bool tape_should_record(std::initializer_list<const Tensor*> inputs);
void tape_record(Tensor& output, std::function<void()> pull);

}  // namespace detail

}  // namespace groklab
