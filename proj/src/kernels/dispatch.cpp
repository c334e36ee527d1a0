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

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "partiscope/kernels/kernels.hpp"

namespace partiscope::kernels {

const KernelTable* avx2_table_impl();

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::kScalar:
      return "scalar";
    case Isa::kAvx2:
      return "avx2";
  }
  return "unknown";
}

bool cpu_supports_avx2() {
#if defined(__x86_64__) || defined(__i386__)
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* avx2_table() {
  if (!cpu_supports_avx2()) return nullptr;
  return avx2_table_impl();
}

namespace {

const KernelTable* select_initial() {
  if (const char* env = std::getenv("PARTISCOPE_ISA")) {
    const std::string want(env);
    if (want == "scalar") return &scalar_table();
    if (want == "avx2") {
      if (const KernelTable* t = avx2_table()) return t;
      throw std::runtime_error("PARTISCOPE_ISA=avx2 but AVX2+FMA is unavailable");
    }
  }
  if (const KernelTable* t = avx2_table()) return t;
  return &scalar_table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> table{select_initial()};
  return table;
}

}  // namespace

const KernelTable& active() { return *current().load(std::memory_order_acquire); }

void force_isa(Isa isa) {
  const KernelTable* t = isa == Isa::kScalar ? &scalar_table() : avx2_table();
  if (t == nullptr) throw std::runtime_error("requested ISA is not available on this CPU");
  current().store(t, std::memory_order_release);
}

}  // namespace partiscope::kernels
