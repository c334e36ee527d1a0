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

#include "partiscope/nn/loss.hpp"

#include <algorithm>
#include <cmath>

#include "partiscope/error.hpp"

namespace partiscope::nn {

std::vector<double> softmax_row(const float* logits, int classes) {
  std::vector<double> p(classes);
  const double mx = *std::max_element(logits, logits + classes);
  double z = 0.0;
  for (int c = 0; c < classes; ++c) {
    p[c] = std::exp(static_cast<double>(logits[c]) - mx);
    z += p[c];
  }
  for (double& v : p) v /= z;
  return p;
}

int argmax(const float* values, int count) {
  return static_cast<int>(std::max_element(values, values + count) - values);
}

LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                                 std::span<const float> weights) {
  if (labels.size() != logits.batch) throw DataError("label count does not match logits batch");
  if (!weights.empty() && weights.size() != labels.size())
    throw DataError("weight count does not match batch");
  const int classes = static_cast<int>(logits.features());
  LossResult r;
  r.dlogits = Tensor(logits.shape, logits.batch);
  if (logits.batch == 0) return r;
  const double inv_b = 1.0 / static_cast<double>(logits.batch);
  for (std::size_t b = 0; b < logits.batch; ++b) {
    const int y = labels[b];
    if (y < 0 || y >= classes) throw DataError("label outside logits range");
    const double w = weights.empty() ? 1.0 : weights[b];
    const auto p = softmax_row(logits.sample(b), classes);
    r.loss += -w * std::log(std::max(p[y], 1e-300)) * inv_b;
    float* g = r.dlogits.sample(b);
    for (int c = 0; c < classes; ++c)
      g[c] = static_cast<float>(w * (p[c] - (c == y ? 1.0 : 0.0)) * inv_b);
  }
  return r;
}

}  // namespace partiscope::nn
