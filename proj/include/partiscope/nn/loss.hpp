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

#include <span>
#include <vector>

#include "partiscope/nn/layers.hpp"

namespace partiscope::nn {

struct LossResult {
  double loss = 0.0;  // weighted mean cross-entropy
  Tensor dlogits;
};

/// Softmax cross-entropy; each sample's term is scaled by its weight and the
/// sum is divided by the batch size.
LossResult softmax_cross_entropy(const Tensor& logits, std::span<const int> labels,
                                 std::span<const float> weights = {});

/// Row-wise softmax of a logits tensor, in double precision.
std::vector<double> softmax_row(const float* logits, int classes);

int argmax(const float* values, int count);

}  // namespace partiscope::nn
