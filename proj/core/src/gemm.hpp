// Copyright (c) 2026 The groklab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Row-major double gemm kernels shared by the tensor ops and the Muon
// Newton-Schulz iteration. Loop orders keep the inner loop contiguous so the
// compiler can vectorize; everything is single-threaded by design (bitwise
// determinism per run).

#pragma once

#include <cstring>
#include <vector>

namespace groklab::detail {

// c[m x n] += a[m x k] . b[k x n]
inline void gemm_nn_acc(const double* a, const double* b, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    double* crow = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double s = arow[l];
      const double* brow = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += s * brow[j];
    }
  }
}

// c[m x n] = a[m x k] . b[k x n]
inline void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
  std::memset(c, 0, sizeof(double) * static_cast<std::size_t>(m) * n);
  gemm_nn_acc(a, b, c, m, k, n);
}

// c[m x k] += g[m x n] . b[k x n]^T. The transpose of b is materialized so
// the hot loop stays in saxpy form (inner-product reductions do not
// vectorize without value-changing reassociation).
inline void gemm_nt_acc(const double* g, const double* b, double* c, int m, int n, int k) {
  std::vector<double> bt(static_cast<std::size_t>(n) * k);
  for (int l = 0; l < k; ++l)
    for (int j = 0; j < n; ++j)
      bt[static_cast<std::size_t>(j) * k + l] = b[static_cast<std::size_t>(l) * n + j];
  gemm_nn_acc(g, bt.data(), c, m, n, k);
}

// c[k x n] += a[m x k]^T . g[m x n]
inline void gemm_tn_acc(const double* a, const double* g, double* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const double* arow = a + static_cast<std::size_t>(i) * k;
    const double* grow = g + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const double s = arow[l];
      double* crow = c + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) crow[j] += s * grow[j];
    }
  }
}

}  // namespace groklab::detail
