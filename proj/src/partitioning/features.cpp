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

#include "partiscope/partitioning/features.hpp"

#include "partiscope/error.hpp"

namespace partiscope::partitioning {

Features Features::select(std::span<const std::size_t> idx) const {
  Features out(idx.size(), cols);
  for (std::size_t r = 0; r < idx.size(); ++r) {
    auto src = row(idx[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

Features PixelEncoder::encode(const ImageBatch& batch) const {
  Features f(batch.size(), shape_.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto img = batch.image(i);
    std::copy(img.begin(), img.end(), f.row(i).begin());
  }
  return f;
}

nlohmann::json PixelEncoder::describe() const {
  return {{"type", "pixels"}, {"shape", {shape_.channels, shape_.height, shape_.width}}};
}

ClassifierEncoder::ClassifierEncoder(std::shared_ptr<const training::ModelHandle> model,
                                     std::optional<std::size_t> layer)
    : model_(std::move(model)) {
  if (!model_) throw ConfigError("classifier encoder needs a model");
  layer_ = layer.value_or(model_->net.penultimate_index());
  if (layer_ >= model_->net.num_layers()) throw ConfigError("encoder layer index out of range");
  ImageShape s = model_->net.input_shape();
  for (std::size_t i = 0; i <= layer_; ++i) s = model_->net.layer(i).output_shape(s);
  dim_ = s.size();
}

Features ClassifierEncoder::encode(const ImageBatch& batch) const {
  Features f(batch.size(), dim_);
  if (batch.empty()) return f;
  const nn::Tensor act = model_->net.activation(training::to_tensor(batch), layer_);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const float* src = act.sample(i);
    auto dst = f.row(i);
    for (std::size_t j = 0; j < dim_; ++j) dst[j] = src[j];
  }
  return f;
}

nlohmann::json ClassifierEncoder::describe() const {
  return {{"type", "classifier"}, {"arch", model_->arch}, {"layer", layer_}};
}

Features extract_features(const FeatureEncoder& encoder, const ImageBatch& batch) {
  if (!(batch.shape() == encoder.input_shape()) && !batch.empty())
    throw DataError("batch shape does not match encoder input");
  return encoder.encode(batch);
}

}  // namespace partiscope::partitioning
