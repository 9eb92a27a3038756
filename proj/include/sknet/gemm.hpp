// Copyright 2026 The SK-Net Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>

namespace sknet::kernels {

// Dense row-major matrix product C (=|+=) A[m x k] * B[k x n].
//
// Every output element is accumulated in the same order (k blocks ascending,
// p ascending inside a block) whichever code path computes it. A row's result
// therefore never depends on its position inside A, which is what makes
// per-point layers exactly permutation covariant.

namespace detail {

constexpr std::size_t kRowBlock = 8;
constexpr std::size_t kColBlock = 16;
constexpr std::size_t kDepthBlock = 256;

typedef double vec8 __attribute__((vector_size(64)));

inline vec8 load8(const double* p) {
  vec8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(double* p, vec8 v) { std::memcpy(p, &v, sizeof(v)); }

inline void write_out(double* c, vec8 v, bool add) {
  if (add) v += load8(c);
  store8(c, v);
}

template <std::size_t Rows>
inline void panel(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                  double* c, std::size_t ldc, std::size_t depth, bool add) {
  vec8 lo[Rows] = {};
  vec8 hi[Rows] = {};
  for (std::size_t p = 0; p < depth; ++p) {
    const vec8 b0 = load8(b + p * ldb);
    const vec8 b1 = load8(b + p * ldb + 8);
    for (std::size_t r = 0; r < Rows; ++r) {
      const double x = a[r * lda + p];
      lo[r] += x * b0;
      hi[r] += x * b1;
    }
  }
  for (std::size_t r = 0; r < Rows; ++r) {
    write_out(c + r * ldc, lo[r], add);
    write_out(c + r * ldc + 8, hi[r], add);
  }
}

inline void column_tail(const double* a, std::size_t lda, const double* b, std::size_t ldb,
                        double* c, std::size_t ldc, std::size_t rows, std::size_t cols,
                        std::size_t depth, bool add) {
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t j = 0; j < cols; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < depth; ++p) acc += a[r * lda + p] * b[p * ldb + j];
      c[r * ldc + j] = add ? c[r * ldc + j] + acc : acc;
    }
  }
}

}  // namespace detail

inline void gemm(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                 std::size_t n, bool accumulate = false) {
  using namespace detail;
  if (k == 0) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    return;
  }
  const std::size_t n_main = n - n % kColBlock;
  for (std::size_t k0 = 0; k0 < k; k0 += kDepthBlock) {
    const std::size_t depth = std::min(kDepthBlock, k - k0);
    const bool add = accumulate || k0 > 0;
    const double* bk = b + k0 * n;
    std::size_t i = 0;
    for (; i + kRowBlock <= m; i += kRowBlock) {
      const double* ai = a + i * k + k0;
      for (std::size_t j = 0; j < n_main; j += kColBlock)
        panel<kRowBlock>(ai, k, bk + j, n, c + i * n + j, n, depth, add);
      if (n_main < n)
        column_tail(ai, k, bk + n_main, n, c + i * n + n_main, n, kRowBlock, n - n_main, depth,
                    add);
    }
    for (; i < m; ++i) {
      const double* ai = a + i * k + k0;
      for (std::size_t j = 0; j < n_main; j += kColBlock)
        panel<1>(ai, k, bk + j, n, c + i * n + j, n, depth, add);
      if (n_main < n)
        column_tail(ai, k, bk + n_main, n, c + i * n + n_main, n, 1, n - n_main, depth, add);
    }
  }
}

/// dst[cols x rows] = transpose of src[rows x cols].
inline void transpose(const double* src, std::size_t rows, std::size_t cols, double* dst) {
  constexpr std::size_t tile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += tile) {
    const std::size_t r1 = std::min(rows, r0 + tile);
    for (std::size_t c0 = 0; c0 < cols; c0 += tile) {
      const std::size_t c1 = std::min(cols, c0 + tile);
      for (std::size_t r = r0; r < r1; ++r)
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
    }
  }
}

}  // namespace sknet::kernels
