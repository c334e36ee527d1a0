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

#include "partiscope/nn/network.hpp"

#include <algorithm>
#include <sstream>

#include "partiscope/error.hpp"

namespace partiscope::nn {
namespace {

constexpr std::size_t kInferenceChunk = 256;

Tensor slice(const Tensor& x, std::size_t begin, std::size_t count) {
  Tensor out(x.shape, count);
  std::copy_n(x.sample(begin), count * x.features(), out.data.begin());
  return out;
}

}  // namespace

Network::Network(const Network& other) : input_shape_(other.input_shape_) {
  layers_.reserve(other.layers_.size());
  for (const auto& l : other.layers_) layers_.push_back(l->clone());
}

Network& Network::operator=(const Network& other) {
  if (this != &other) {
    Network copy(other);
    *this = std::move(copy);
  }
  return *this;
}

void Network::add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }

int Network::num_outputs() const {
  ImageShape s = input_shape_;
  for (const auto& l : layers_) s = l->output_shape(s);
  return static_cast<int>(s.size());
}

Tensor Network::activation(const Tensor& x, std::size_t index) const {
  if (index >= layers_.size()) throw ConfigError("layer index out of range");
  if (!(x.shape == input_shape_)) throw DataError("input shape does not match network input");
  ImageShape os = input_shape_;
  for (std::size_t i = 0; i <= index; ++i) os = layers_[i]->output_shape(os);
  Tensor result(os, x.batch);
  for (std::size_t begin = 0; begin < x.batch; begin += kInferenceChunk) {
    const std::size_t count = std::min(kInferenceChunk, x.batch - begin);
    Tensor cur = slice(x, begin, count);
    Tensor next;
    for (std::size_t i = 0; i <= index; ++i) {
      layers_[i]->forward(cur, next);
      std::swap(cur, next);
    }
    std::copy(cur.data.begin(), cur.data.end(), result.sample(begin));
  }
  return result;
}

Tensor Network::forward(const Tensor& x) const { return activation(x, layers_.size() - 1); }

std::size_t Network::penultimate_index() const {
  if (layers_.size() < 2 || layers_.back()->kind() != LayerKind::kLinear)
    throw ConfigError("network must end in a linear head preceded by at least one layer");
  return layers_.size() - 2;
}

Tensor Network::features(const Tensor& x) const { return activation(x, penultimate_index()); }

std::size_t Network::feature_dim() const {
  ImageShape s = input_shape_;
  for (std::size_t i = 0; i <= penultimate_index(); ++i) s = layers_[i]->output_shape(s);
  return s.size();
}

const Tensor& Network::forward_train(const Tensor& x) {
  if (!(x.shape == input_shape_)) throw DataError("input shape does not match network input");
  cache_.resize(layers_.size() + 1);
  cache_[0] = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) layers_[i]->forward(cache_[i], cache_[i + 1]);
  return cache_.back();
}

std::optional<Tensor> Network::backward(const Tensor& dlogits, bool param_grads,
                                        bool input_grad) {
  if (cache_.size() != layers_.size() + 1) throw Error("backward() called before forward_train()");
  Tensor grad = dlogits;
  Tensor next;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    const bool need_din = i > 0 || input_grad;
    layers_[i]->backward(cache_[i], cache_[i + 1], grad, need_din ? &next : nullptr, param_grads);
    if (!need_din) return std::nullopt;
    std::swap(grad, next);
  }
  return grad;
}

std::vector<ParamView> Network::params() {
  std::vector<ParamView> out;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    for (auto& p : layers_[i]->params()) {
      p.name = "layer" + std::to_string(i) + "." + p.name;
      out.push_back(std::move(p));
    }
  }
  return out;
}

std::size_t Network::num_params() const {
  std::size_t n = 0;
  for (auto& p : const_cast<Network*>(this)->params()) n += p.value.size();
  return n;
}

void Network::zero_grad() {
  for (auto& p : params()) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

std::optional<std::size_t> Network::last_conv_index() const {
  for (std::size_t i = layers_.size(); i-- > 0;)
    if (layers_[i]->kind() == LayerKind::kConv) return i;
  return std::nullopt;
}

std::vector<float> Network::flat_params() const {
  std::vector<float> out;
  for (auto& p : const_cast<Network*>(this)->params())
    out.insert(out.end(), p.value.begin(), p.value.end());
  return out;
}

void Network::set_flat_params(const std::vector<float>& values) {
  std::size_t offset = 0;
  auto ps = params();
  std::size_t total = 0;
  for (auto& p : ps) total += p.value.size();
  if (total != values.size()) throw DataError("parameter count mismatch");
  for (auto& p : ps) {
    std::copy_n(values.begin() + static_cast<std::ptrdiff_t>(offset), p.value.size(),
                p.value.begin());
    offset += p.value.size();
  }
}

std::vector<std::vector<std::uint8_t>> Network::channel_masks() const {
  std::vector<std::vector<std::uint8_t>> out;
  for (const auto& l : layers_)
    if (l->kind() == LayerKind::kConv) out.push_back(static_cast<const Conv2d&>(*l).channel_mask());
  return out;
}

void Network::set_channel_masks(const std::vector<std::vector<std::uint8_t>>& masks) {
  std::size_t j = 0;
  for (auto& l : layers_) {
    if (l->kind() != LayerKind::kConv) continue;
    if (j >= masks.size()) throw DataError("too few channel masks");
    static_cast<Conv2d&>(*l).set_channel_mask(masks[j++]);
  }
  if (j != masks.size()) throw DataError("too many channel masks");
}

std::string Network::describe() const {
  std::ostringstream os;
  os << input_shape_.channels << "x" << input_shape_.height << "x" << input_shape_.width;
  for (const auto& l : layers_) os << " -> " << l->describe();
  return os.str();
}

}  // namespace partiscope::nn
