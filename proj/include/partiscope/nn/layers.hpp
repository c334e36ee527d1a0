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
#include <span>
#include <string>
#include <vector>

#include "partiscope/data/image_batch.hpp"

namespace partiscope::nn {

/// Batch of activations, sample-major, each sample CHW.
struct Tensor {
  ImageShape shape{};
  std::size_t batch = 0;
  std::vector<float> data;

  Tensor() = default;
  Tensor(ImageShape s, std::size_t b) : shape(s), batch(b), data(s.size() * b, 0.0f) {}

  float* sample(std::size_t i) { return data.data() + i * shape.size(); }
  const float* sample(std::size_t i) const { return data.data() + i * shape.size(); }
  std::size_t features() const { return shape.size(); }
};

/// Non-owning view of one parameter array and its gradient.
struct ParamView {
  std::string name;
  std::span<float> value;
  std::span<float> grad;
};

enum class LayerKind { kConv, kRelu, kMaxPool, kLinear };

class Layer {
 public:
  virtual ~Layer() = default;
  virtual LayerKind kind() const = 0;
  virtual std::string describe() const = 0;
  virtual ImageShape output_shape(const ImageShape& in) const = 0;
  virtual void forward(const Tensor& in, Tensor& out) const = 0;
  /// Accumulates parameter gradients when `param_grads`; writes `din` when non-null.
  virtual void backward(const Tensor& in, const Tensor& out, const Tensor& dout, Tensor* din,
                        bool param_grads) = 0;
  virtual std::vector<ParamView> params() { return {}; }
  virtual std::unique_ptr<Layer> clone() const = 0;
};

/// Square kernel, stride 1, "same" zero padding. Output channels can be
/// masked off permanently (fine-pruning); masked channels emit exactly 0.
class Conv2d final : public Layer {
 public:
  Conv2d(int in_channels, int out_channels, int kernel = 3);

  LayerKind kind() const override { return LayerKind::kConv; }
  std::string describe() const override;
  ImageShape output_shape(const ImageShape& in) const override;
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& dout, Tensor* din,
                bool param_grads) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Conv2d>(*this); }

  int in_channels() const { return in_channels_; }
  int out_channels() const { return out_channels_; }
  int kernel() const { return kernel_; }
  std::vector<float>& weight() { return weight_; }
  std::vector<float>& bias() { return bias_; }
  const std::vector<float>& weight() const { return weight_; }
  const std::vector<float>& bias() const { return bias_; }
  const std::vector<std::uint8_t>& channel_mask() const { return mask_; }
  void set_channel_mask(std::vector<std::uint8_t> mask);

 private:
  void im2col(const float* image, const ImageShape& in, float* col) const;
  void col2im(const float* col, const ImageShape& in, float* image) const;

  int in_channels_;
  int out_channels_;
  int kernel_;
  std::vector<float> weight_;  // [out][in*k*k]
  std::vector<float> bias_;
  std::vector<float> grad_weight_;
  std::vector<float> grad_bias_;
  std::vector<std::uint8_t> mask_;
};

class Relu final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kRelu; }
  std::string describe() const override { return "relu"; }
  ImageShape output_shape(const ImageShape& in) const override { return in; }
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& dout, Tensor* din,
                bool param_grads) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Relu>(*this); }
};

/// 2×2 window, stride 2; odd trailing rows/columns are dropped.
class MaxPool2 final : public Layer {
 public:
  LayerKind kind() const override { return LayerKind::kMaxPool; }
  std::string describe() const override { return "maxpool2"; }
  ImageShape output_shape(const ImageShape& in) const override;
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& dout, Tensor* din,
                bool param_grads) override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<MaxPool2>(*this); }
};

/// Fully connected layer over the flattened sample; output shape {out,1,1}.
class Linear final : public Layer {
 public:
  Linear(int in_features, int out_features);

  LayerKind kind() const override { return LayerKind::kLinear; }
  std::string describe() const override;
  ImageShape output_shape(const ImageShape& in) const override;
  void forward(const Tensor& in, Tensor& out) const override;
  void backward(const Tensor& in, const Tensor& out, const Tensor& dout, Tensor* din,
                bool param_grads) override;
  std::vector<ParamView> params() override;
  std::unique_ptr<Layer> clone() const override { return std::make_unique<Linear>(*this); }

  int in_features() const { return in_features_; }
  int out_features() const { return out_features_; }
  std::vector<float>& weight() { return weight_; }
  std::vector<float>& bias() { return bias_; }

 private:
  int in_features_;
  int out_features_;
  std::vector<float> weight_;  // [out][in]
  std::vector<float> bias_;
  std::vector<float> grad_weight_;
  std::vector<float> grad_bias_;
};

}  // namespace partiscope::nn
