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

#include <cstdint>
#include <string>
#include <vector>

#include "partiscope/nn/network.hpp"

namespace partiscope::nn {

/// Architecture ids accepted by build_network().
///   tiny-cnn  : 3 conv blocks (16/32/32) + 64-unit hidden layer, desk profile
///   small-cnn : 3 conv blocks (32/64/128) + 128-unit hidden layer (~300k
///               parameters at 32×32)
///   vgg11     : VGG-11 feature stack (no batch norm) + 512-unit head
std::vector<std::string> known_architectures();

/// Builds and He-initializes a network. Throws ConfigError for unknown ids or
/// inputs too small for the pooling stack.
Network build_network(const std::string& arch, ImageShape input, int num_classes,
                      std::uint64_t seed);

}  // namespace partiscope::nn
