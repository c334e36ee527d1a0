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

#include "partiscope/nn/architectures.hpp"

#include <cmath>
#include <random>

#include "partiscope/error.hpp"

namespace partiscope::nn {
namespace {

struct Plan {
  std::vector<int> conv;  // channel widths; 0 marks a 2×2 max pool
  int hidden;
};

Plan plan_for(const std::string& arch) {
  if (arch == "tiny-cnn") return {{16, 0, 32, 0, 32, 0}, 64};
  if (arch == "small-cnn") return {{32, 0, 64, 0, 128, 0}, 128};
  if (arch == "vgg11") return {{64, 0, 128, 0, 256, 256, 0, 512, 512, 0, 512, 512, 0}, 512};
  throw ConfigError("unknown architecture id '" + arch + "'");
}

void he_init(std::span<float> w, int fan_in, std::mt19937_64& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (float& v : w) v = dist(rng);
}

}  // namespace

std::vector<std::string> known_architectures() { return {"tiny-cnn", "small-cnn", "vgg11"}; }

Network build_network(const std::string& arch, ImageShape input, int num_classes,
                      std::uint64_t seed) {
  if (num_classes < 2) throw ConfigError("a classifier needs at least 2 classes");
  const Plan plan = plan_for(arch);
  std::mt19937_64 rng(seed);
  Network net(input);
  ImageShape s = input;
  for (int width : plan.conv) {
    if (width == 0) {
      if (s.height < 2 || s.width < 2)
        throw ConfigError("input " + std::to_string(input.height) + "x" +
                          std::to_string(input.width) + " too small for " + arch);
      auto pool = std::make_unique<MaxPool2>();
      s = pool->output_shape(s);
      net.add(std::move(pool));
      continue;
    }
    auto conv = std::make_unique<Conv2d>(s.channels, width, 3);
    he_init(conv->weight(), s.channels * 9, rng);
    s = conv->output_shape(s);
    net.add(std::move(conv));
    net.add(std::make_unique<Relu>());
  }
  const int flat = static_cast<int>(s.size());
  auto hidden = std::make_unique<Linear>(flat, plan.hidden);
  he_init(hidden->weight(), flat, rng);
  net.add(std::move(hidden));
  net.add(std::make_unique<Relu>());
  auto head = std::make_unique<Linear>(plan.hidden, num_classes);
  he_init(head->weight(), plan.hidden, rng);
  net.add(std::move(head));
  return net;
}

}  // namespace partiscope::nn
