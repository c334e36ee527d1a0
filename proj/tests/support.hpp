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

#include <random>

#include "partiscope/data/dataset.hpp"
#include "partiscope/nn/architectures.hpp"
#include "partiscope/training/trainer.hpp"

namespace partiscope::testing {

/// Small synthetic set; every test that needs images uses this.
inline data::SyntheticSet small_synthetic(std::uint64_t seed = 7, int classes = 4,
                                          int train_per_class = 24, int test_per_class = 8) {
  data::SyntheticConfig cfg;
  cfg.classes = classes;
  cfg.train_per_class = train_per_class;
  cfg.test_per_class = test_per_class;
  return data::generate_synthetic(cfg, seed);
}

/// Untrained network wrapped as a model.
inline training::ModelHandle random_model(ImageShape shape, int classes, std::uint64_t seed) {
  training::ModelHandle m;
  m.arch = "tiny-cnn";
  m.num_classes = classes;
  m.net = nn::build_network(m.arch, shape, classes, seed);
  return m;
}

inline std::vector<float> random_floats(std::size_t n, std::uint64_t seed, float lo = -1.0f,
                                        float hi = 1.0f) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(lo, hi);
  std::vector<float> v(n);
  for (auto& x : v) x = u(rng);
  return v;
}

}  // namespace partiscope::testing
