// Copyright 2026 The Partiscope Authors
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

// AVX2+FMA variants. This translation unit is compiled with -mavx2 -mfma and
// must not instantiate any header templates shared with other TUs, otherwise
// the linker may pick an AVX2 copy for code that runs on older CPUs.

#include "partiscope/kernels/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)
#include <immintrin.h>

#include <cstdint>

namespace partiscope::kernels {
namespace {

inline __m256i tail_mask(std::size_t count) {
  alignas(32) static const std::int32_t table[16] = {-1, -1, -1, -1, -1, -1, -1, -1,
                                                     0,  0,  0,  0,  0,  0,  0,  0};
  return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(table + 8 - count));
}

inline float hsum(__m256 v) {
  __m128 lo = _mm256_castps256_ps128(v);
  __m128 hi = _mm256_extractf128_ps(v, 1);
  lo = _mm_add_ps(lo, hi);
  __m128 shuf = _mm_movehdup_ps(lo);
  __m128 sums = _mm_add_ps(lo, shuf);
  shuf = _mm_movehl_ps(shuf, sums);
  sums = _mm_add_ss(sums, shuf);
  return _mm_cvtss_f32(sums);
}

inline float a_at(const float* a, std::size_t lda, bool trans_a, std::size_t i, std::size_t p) {
  return trans_a ? a[p * lda + i] : a[i * lda + p];
}

// Rows [i0, i0+R) of C, columns [j, j+16).
template <int R>
inline void block_r16(std::size_t k, bool trans_a, const float* a, std::size_t lda, std::size_t i0,
                      const float* b, std::size_t ldb, std::size_t j, float beta, float* c,
                      std::size_t ldc) {
  __m256 acc0[R];
  __m256 acc1[R];
  for (int r = 0; r < R; ++r) {
    if (beta == 0.0f) {
      acc0[r] = _mm256_setzero_ps();
      acc1[r] = _mm256_setzero_ps();
    } else {
      acc0[r] = _mm256_loadu_ps(c + (i0 + r) * ldc + j);
      acc1[r] = _mm256_loadu_ps(c + (i0 + r) * ldc + j + 8);
    }
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 b0 = _mm256_loadu_ps(b + p * ldb + j);
    const __m256 b1 = _mm256_loadu_ps(b + p * ldb + j + 8);
    for (int r = 0; r < R; ++r) {
      const __m256 av = _mm256_set1_ps(a_at(a, lda, trans_a, i0 + r, p));
      acc0[r] = _mm256_fmadd_ps(av, b0, acc0[r]);
      acc1[r] = _mm256_fmadd_ps(av, b1, acc1[r]);
    }
  }
  for (int r = 0; r < R; ++r) {
    _mm256_storeu_ps(c + (i0 + r) * ldc + j, acc0[r]);
    _mm256_storeu_ps(c + (i0 + r) * ldc + j + 8, acc1[r]);
  }
}

// Rows [i0, i0+R), columns [j, j+width) with width <= 8.
template <int R>
inline void block_r8(std::size_t k, bool trans_a, const float* a, std::size_t lda, std::size_t i0,
                     const float* b, std::size_t ldb, std::size_t j, std::size_t width, float beta,
                     float* c, std::size_t ldc) {
  const __m256i mask = tail_mask(width);
  __m256 acc[R];
  for (int r = 0; r < R; ++r) {
    acc[r] = beta == 0.0f ? _mm256_setzero_ps()
                          : _mm256_maskload_ps(c + (i0 + r) * ldc + j, mask);
  }
  for (std::size_t p = 0; p < k; ++p) {
    const __m256 bv = _mm256_maskload_ps(b + p * ldb + j, mask);
    for (int r = 0; r < R; ++r) {
      acc[r] = _mm256_fmadd_ps(_mm256_set1_ps(a_at(a, lda, trans_a, i0 + r, p)), bv, acc[r]);
    }
  }
  for (int r = 0; r < R; ++r) _mm256_maskstore_ps(c + (i0 + r) * ldc + j, mask, acc[r]);
}

template <int R>
inline void row_panel(std::size_t n, std::size_t k, bool trans_a, const float* a, std::size_t lda,
                      std::size_t i0, const float* b, std::size_t ldb, float beta, float* c,
                      std::size_t ldc) {
  std::size_t j = 0;
  for (; j + 16 <= n; j += 16) block_r16<R>(k, trans_a, a, lda, i0, b, ldb, j, beta, c, ldc);
  for (; j < n; j += 8) {
    const std::size_t width = n - j < 8 ? n - j : 8;
    block_r8<R>(k, trans_a, a, lda, i0, b, ldb, j, width, beta, c, ldc);
  }
}

void gemm_nn(std::size_t m, std::size_t n, std::size_t k, bool trans_a, const float* a,
             std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
             std::size_t ldc) {
  std::size_t i = 0;
  for (; i + 4 <= m; i += 4) row_panel<4>(n, k, trans_a, a, lda, i, b, ldb, beta, c, ldc);
  for (; i < m; ++i) row_panel<1>(n, k, trans_a, a, lda, i, b, ldb, beta, c, ldc);
}

inline float dot_tail(std::size_t from, std::size_t k, const float* x, const float* y) {
  float acc = 0.0f;
  for (std::size_t p = from; p < k; ++p) acc += x[p] * y[p];
  return acc;
}

void gemm_nt(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda,
             const float* b, std::size_t ldb, float beta, float* c, std::size_t ldc) {
  const std::size_t k8 = k & ~std::size_t{7};
  std::size_t i = 0;
  for (; i + 2 <= m; i += 2) {
    const float* a0 = a + i * lda;
    const float* a1 = a0 + lda;
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
      const float* bj[4] = {b + j * ldb, b + (j + 1) * ldb, b + (j + 2) * ldb, b + (j + 3) * ldb};
      __m256 acc[2][4];
      for (auto& row : acc)
        for (auto& v : row) v = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k8; p += 8) {
        const __m256 x0 = _mm256_loadu_ps(a0 + p);
        const __m256 x1 = _mm256_loadu_ps(a1 + p);
        for (int q = 0; q < 4; ++q) {
          const __m256 y = _mm256_loadu_ps(bj[q] + p);
          acc[0][q] = _mm256_fmadd_ps(x0, y, acc[0][q]);
          acc[1][q] = _mm256_fmadd_ps(x1, y, acc[1][q]);
        }
      }
      for (int q = 0; q < 4; ++q) {
        const float s0 = hsum(acc[0][q]) + dot_tail(k8, k, a0, bj[q]);
        const float s1 = hsum(acc[1][q]) + dot_tail(k8, k, a1, bj[q]);
        float* c0 = c + i * ldc + j + q;
        float* c1 = c0 + ldc;
        *c0 = (beta == 0.0f ? 0.0f : *c0) + s0;
        *c1 = (beta == 0.0f ? 0.0f : *c1) + s1;
      }
    }
    for (; j < n; ++j) {
      const float* bq = b + j * ldb;
      __m256 acc0 = _mm256_setzero_ps();
      __m256 acc1 = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k8; p += 8) {
        const __m256 y = _mm256_loadu_ps(bq + p);
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a0 + p), y, acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a1 + p), y, acc1);
      }
      float* c0 = c + i * ldc + j;
      float* c1 = c0 + ldc;
      *c0 = (beta == 0.0f ? 0.0f : *c0) + hsum(acc0) + dot_tail(k8, k, a0, bq);
      *c1 = (beta == 0.0f ? 0.0f : *c1) + hsum(acc1) + dot_tail(k8, k, a1, bq);
    }
  }
  for (; i < m; ++i) {
    const float* a0 = a + i * lda;
    for (std::size_t j = 0; j < n; ++j) {
      const float* bq = b + j * ldb;
      __m256 acc = _mm256_setzero_ps();
      for (std::size_t p = 0; p < k8; p += 8)
        acc = _mm256_fmadd_ps(_mm256_loadu_ps(a0 + p), _mm256_loadu_ps(bq + p), acc);
      float* cij = c + i * ldc + j;
      *cij = (beta == 0.0f ? 0.0f : *cij) + hsum(acc) + dot_tail(k8, k, a0, bq);
    }
  }
}

void axpy(std::size_t n, float alpha, const float* x, float* y) {
  const __m256 av = _mm256_set1_ps(alpha);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

float dot(std::size_t n, const float* x, const float* y) {
  __m256 acc = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    acc = _mm256_fmadd_ps(_mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i), acc);
  return hsum(acc) + dot_tail(i, n, x, y);
}

void relu(std::size_t n, const float* x, float* y) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_max_ps(_mm256_loadu_ps(x + i), zero));
  for (; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_backward(std::size_t n, const float* x, const float* dy, float* dx) {
  const __m256 zero = _mm256_setzero_ps();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 keep = _mm256_cmp_ps(_mm256_loadu_ps(x + i), zero, _CMP_GT_OQ);
    _mm256_storeu_ps(dx + i, _mm256_and_ps(keep, _mm256_loadu_ps(dy + i)));
  }
  for (; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void sgd_step(std::size_t n, float lr, float momentum, float weight_decay, float* w,
              const float* g, float* v) {
  const __m256 mv = _mm256_set1_ps(momentum);
  const __m256 wdv = _mm256_set1_ps(weight_decay);
  const __m256 neg_lr = _mm256_set1_ps(-lr);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m256 wi = _mm256_loadu_ps(w + i);
    const __m256 grad = _mm256_fmadd_ps(wdv, wi, _mm256_loadu_ps(g + i));
    const __m256 vi = _mm256_fmadd_ps(mv, _mm256_loadu_ps(v + i), grad);
    _mm256_storeu_ps(v + i, vi);
    _mm256_storeu_ps(w + i, _mm256_fmadd_ps(neg_lr, vi, wi));
  }
  for (; i < n; ++i) {
    v[i] = momentum * v[i] + (g[i] + weight_decay * w[i]);
    w[i] -= lr * v[i];
  }
}

}  // namespace

const KernelTable* avx2_table_impl() {
  static const KernelTable table{Isa::kAvx2, gemm_nn, gemm_nt,       axpy,
                                 dot,        relu,    relu_backward, sgd_step};
  return &table;
}

}  // namespace partiscope::kernels

#else

namespace partiscope::kernels {
const KernelTable* avx2_table_impl() { return nullptr; }
}  // namespace partiscope::kernels

#endif
