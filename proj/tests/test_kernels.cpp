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

#include <doctest.h>

#include <cmath>

#include "partiscope/kernels/kernels.hpp"
#include "partiscope/training/trainer.hpp"
#include "support.hpp"

using namespace partiscope;
using partiscope::testing::random_floats;

namespace {

// Plain triple loop, independent of both kernel tables.
std::vector<float> naive_gemm(std::size_t m, std::size_t n, std::size_t k, bool trans_a,
                              const std::vector<float>& a, const std::vector<float>& b) {
  std::vector<float> c(m * n, 0.0f);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p)
        s += static_cast<double>(trans_a ? a[p * m + i] : a[i * k + p]) * b[p * n + j];
      c[i * n + j] = static_cast<float>(s);
    }
  return c;
}

void check_close(const std::vector<float>& x, const std::vector<float>& y, double tol) {
  REQUIRE(x.size() == y.size());
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::fabs(x[i] - y[i]) <= tol * (1.0 + std::fabs(y[i])));
}

const std::size_t kSizes[] = {1, 3, 7, 8, 9, 16, 17, 33};

}  // namespace

TEST_CASE("scalar gemm matches a naive oracle") {
  const auto& t = kernels::scalar_table();
  for (std::size_t m : {1, 5, 9})
    for (std::size_t n : {1, 8, 13})
      for (std::size_t k : {1, 7, 32})
        for (bool trans : {false, true}) {
          const auto a = random_floats(m * k, m * 100 + k);
          const auto b = random_floats(k * n, n * 100 + k + 1);
          std::vector<float> c(m * n, 0.0f);
          t.gemm_nn(m, n, k, trans, a.data(), trans ? m : k, b.data(), n, 0.0f, c.data(), n);
          check_close(c, naive_gemm(m, n, k, trans, a, b), 1e-5);
        }
}

TEST_CASE("avx2 kernels match the scalar reference") {
  const auto* avx = kernels::avx2_table();
  if (avx == nullptr) {
    MESSAGE("AVX2 not available; skipping");
    return;
  }
  const auto& sc = kernels::scalar_table();
  for (std::size_t m : kSizes)
    for (std::size_t n : kSizes)
      for (std::size_t k : {std::size_t{1}, std::size_t{9}, std::size_t{33}}) {
        const auto a = random_floats(m * k, 1 + m + 7 * k);
        const auto b = random_floats(k * n, 2 + n + 5 * k);
        const auto bt = random_floats(n * k, 3 + n + 3 * k);
        for (bool trans : {false, true})
          for (float beta : {0.0f, 1.0f}) {
            auto c1 = random_floats(m * n, 4 + m * n);
            auto c2 = c1;
            sc.gemm_nn(m, n, k, trans, a.data(), trans ? m : k, b.data(), n, beta, c1.data(), n);
            avx->gemm_nn(m, n, k, trans, a.data(), trans ? m : k, b.data(), n, beta, c2.data(), n);
            check_close(c2, c1, 1e-5);
          }
        auto c1 = random_floats(m * n, 5);
        auto c2 = c1;
        sc.gemm_nt(m, n, k, a.data(), k, bt.data(), k, 1.0f, c1.data(), n);
        avx->gemm_nt(m, n, k, a.data(), k, bt.data(), k, 1.0f, c2.data(), n);
        check_close(c2, c1, 1e-5);
      }

  for (std::size_t len : {1, 7, 8, 15, 16, 31, 100, 1027}) {
    const auto x = random_floats(len, len);
    const auto dy = random_floats(len, len + 1);
    auto y1 = random_floats(len, len + 2);
    auto y2 = y1;
    sc.axpy(len, 0.37f, x.data(), y1.data());
    avx->axpy(len, 0.37f, x.data(), y2.data());
    check_close(y2, y1, 1e-6);

    const float d1 = sc.dot(len, x.data(), dy.data());
    const float d2 = avx->dot(len, x.data(), dy.data());
    CHECK(std::fabs(d1 - d2) <= 1e-5 * (1.0 + std::fabs(d1)) * std::sqrt(static_cast<double>(len)));

    std::vector<float> r1(len), r2(len);
    sc.relu(len, x.data(), r1.data());
    avx->relu(len, x.data(), r2.data());
    CHECK(r1 == r2);
    sc.relu_backward(len, x.data(), dy.data(), r1.data());
    avx->relu_backward(len, x.data(), dy.data(), r2.data());
    CHECK(r1 == r2);

    auto w1 = random_floats(len, 9), v1 = random_floats(len, 10);
    auto w2 = w1, v2 = v1;
    sc.sgd_step(len, 0.05f, 0.9f, 5e-4f, w1.data(), dy.data(), v1.data());
    avx->sgd_step(len, 0.05f, 0.9f, 5e-4f, w2.data(), dy.data(), v2.data());
    check_close(w2, w1, 1e-6);
    check_close(v2, v1, 1e-6);
  }
}

TEST_CASE("network forward agrees across ISAs") {
  if (kernels::avx2_table() == nullptr) return;
  const auto set = partiscope::testing::small_synthetic();
  const auto model = partiscope::testing::random_model(set.data.train.shape(), 4, 3);
  const auto x = training::to_tensor(set.data.test);
  kernels::force_isa(kernels::Isa::kScalar);
  const auto a = model.net.forward(x);
  kernels::force_isa(kernels::Isa::kAvx2);
  const auto b = model.net.forward(x);
  check_close(b.data, a.data, 1e-4);
}
