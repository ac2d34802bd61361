// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Independent reference implementations used by tests and the acceptance
// suite. Everything here is deliberately written against the math, not the
// library code paths it checks.

#pragma once

#include <span>
#include <vector>

#include "groklab/rng.hpp"

namespace groklab::oracles {

/// Euclidean projection of z onto the probability simplex, found by
/// bisection on the KKT threshold tau (no sorting, no cumulative sums).
std::vector<double> simplex_project_bisect(std::span<const double> z);

struct Svd {
  std::vector<double> singular_values;  // descending
  std::vector<double> u_vt;             // U . V^T of the reduced SVD, rows x cols
};

/// SVD via cyclic Jacobi eigen-decomposition of A^T A (or A A^T when rows <
/// cols). Intended for small, reasonably conditioned matrices.
Svd jacobi_svd(std::span<const double> a, int rows, int cols);

/// Largest singular value by power iteration on A^T A.
double spectral_norm(std::span<const double> a, int rows, int cols, int iterations = 300);

/// A = U diag(spectrum) V^T with random orthogonal factors (QR of Gaussian
/// matrices via modified Gram-Schmidt). spectrum.size() == min(rows, cols).
std::vector<double> matrix_with_spectrum(int rows, int cols, std::span<const double> spectrum,
                                         Rng& rng);

/// Naive causal multi-head attention forward (independent of the fused op).
/// q, k, v are [batch*seq x d] row-major.
std::vector<double> reference_attention(std::span<const double> q, std::span<const double> k,
                                        std::span<const double> v, int batch, int seq,
                                        int n_heads);

}  // namespace groklab::oracles
