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
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "partiscope/nn/layers.hpp"

namespace partiscope::nn {

/// A feed-forward stack of layers ending in a Linear classifier head.
/// Copying deep-copies every parameter.
class Network {
 public:
  Network() = default;
  explicit Network(ImageShape input_shape) : input_shape_(input_shape) {}
  Network(const Network& other);
  Network& operator=(const Network& other);
  Network(Network&&) noexcept = default;
  Network& operator=(Network&&) noexcept = default;

  void add(std::unique_ptr<Layer> layer);

  const ImageShape& input_shape() const { return input_shape_; }
  std::size_t num_layers() const { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_[i]; }
  const Layer& layer(std::size_t i) const { return *layers_[i]; }
  int num_outputs() const;

  /// Inference forward pass; processes large inputs in chunks.
  Tensor forward(const Tensor& x) const;
  /// Output of layer `index` (inclusive) for input `x`.
  Tensor activation(const Tensor& x, std::size_t index) const;
  /// Input of the final Linear layer.
  Tensor features(const Tensor& x) const;
  std::size_t feature_dim() const;

  /// Forward pass that keeps every activation for backward().
  const Tensor& forward_train(const Tensor& x);
  /// Back-propagates `dlogits` through the cached activations. Returns the
  /// input gradient when `input_grad` is set.
  std::optional<Tensor> backward(const Tensor& dlogits, bool param_grads, bool input_grad);

  std::vector<ParamView> params();
  std::size_t num_params() const;
  void zero_grad();

  /// Index of the last convolution, if any.
  std::optional<std::size_t> last_conv_index() const;
  /// Index of the layer whose output feeds the final Linear.
  std::size_t penultimate_index() const;

  /// Flat copy of all parameters and conv channel masks.
  std::vector<float> flat_params() const;
  void set_flat_params(const std::vector<float>& values);
  std::vector<std::vector<std::uint8_t>> channel_masks() const;
  void set_channel_masks(const std::vector<std::vector<std::uint8_t>>& masks);

  std::string describe() const;

 private:
  ImageShape input_shape_{};
  std::vector<std::unique_ptr<Layer>> layers_;
  std::vector<Tensor> cache_;
};

}  // namespace partiscope::nn
