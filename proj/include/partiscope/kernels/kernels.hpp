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

#pragma once

// Dense float kernels behind every layer of the network code.
//
// Each kernel has a portable scalar reference implementation and, on x86-64,
// an AVX2+FMA variant. The active table is chosen once at startup from CPUID
// and can be pinned with force_isa() or the PARTISCOPE_ISA environment
// variable ("scalar" or "avx2"). Results differ between ISAs only by float
// reassociation; within one ISA every kernel is deterministic.

#include <cstddef>
#include <string_view>

namespace partiscope::kernels {

enum class Isa { kScalar, kAvx2 };

std::string_view isa_name(Isa isa);

/// C[M×N] = beta·C + A·B, where A is M×K (or K×M when trans_a) and B is K×N.
/// beta must be 0 or 1.
using GemmNnFn = void (*)(std::size_t m, std::size_t n, std::size_t k, bool trans_a,
                          const float* a, std::size_t lda, const float* b, std::size_t ldb,
                          float beta, float* c, std::size_t ldc);

/// C[M×N] = beta·C + A·Bᵀ, with A M×K and B N×K (row dot products).
using GemmNtFn = void (*)(std::size_t m, std::size_t n, std::size_t k, const float* a,
                          std::size_t lda, const float* b, std::size_t ldb, float beta, float* c,
                          std::size_t ldc);

using AxpyFn = void (*)(std::size_t n, float alpha, const float* x, float* y);
using DotFn = float (*)(std::size_t n, const float* x, const float* y);
using ReluFn = void (*)(std::size_t n, const float* x, float* y);
/// dx = dy where x > 0, else 0.
using ReluBackwardFn = void (*)(std::size_t n, const float* x, const float* dy, float* dx);
/// v = momentum·v + (g + wd·w); w -= lr·v
using SgdStepFn = void (*)(std::size_t n, float lr, float momentum, float weight_decay,
                           float* w, const float* g, float* v);

struct KernelTable {
  Isa isa;
  GemmNnFn gemm_nn;
  GemmNtFn gemm_nt;
  AxpyFn axpy;
  DotFn dot;
  ReluFn relu;
  ReluBackwardFn relu_backward;
  SgdStepFn sgd_step;
};

const KernelTable& scalar_table();
/// Null when the build or the CPU lacks AVX2+FMA.
const KernelTable* avx2_table();

bool cpu_supports_avx2();

/// The table used by the library.
const KernelTable& active();

/// Pins the active ISA. Throws std::runtime_error if unavailable.
void force_isa(Isa isa);

}  // namespace partiscope::kernels
