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

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "partiscope/data/image_batch.hpp"
#include "partiscope/training/trainer.hpp"

namespace partiscope::partitioning {

/// Row-major feature matrix (one row per sample).
struct Features {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> values;

  Features() = default;
  Features(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  Features select(std::span<const std::size_t> idx) const;
};

/// Frozen feature extractor.
class FeatureEncoder {
 public:
  virtual ~FeatureEncoder() = default;
  virtual std::size_t dim() const = 0;
  virtual ImageShape input_shape() const = 0;
  virtual Features encode(const ImageBatch& batch) const = 0;
  /// Serializable description (type tag + parameters).
  virtual nlohmann::json describe() const = 0;
};

/// Raw pixels as features (the "inputs" encoder).
class PixelEncoder final : public FeatureEncoder {
 public:
  explicit PixelEncoder(ImageShape shape) : shape_(shape) {}
  std::size_t dim() const override { return shape_.size(); }
  ImageShape input_shape() const override { return shape_; }
  Features encode(const ImageBatch& batch) const override;
  nlohmann::json describe() const override;

 private:
  ImageShape shape_;
};

/// Activations of one layer of a trained classifier; by default the
/// penultimate layer.
class ClassifierEncoder final : public FeatureEncoder {
 public:
  explicit ClassifierEncoder(std::shared_ptr<const training::ModelHandle> model,
                             std::optional<std::size_t> layer = std::nullopt);
  std::size_t dim() const override { return dim_; }
  ImageShape input_shape() const override { return model_->net.input_shape(); }
  Features encode(const ImageBatch& batch) const override;
  nlohmann::json describe() const override;
  std::size_t layer() const { return layer_; }
  const training::ModelHandle& model() const { return *model_; }

 private:
  std::shared_ptr<const training::ModelHandle> model_;
  std::size_t layer_;
  std::size_t dim_;
};

/// Encodes `batch`; throws DataError on a shape mismatch. B = 0 yields an
/// empty 0×dim matrix.
Features extract_features(const FeatureEncoder& encoder, const ImageBatch& batch);

}  // namespace partiscope::partitioning
