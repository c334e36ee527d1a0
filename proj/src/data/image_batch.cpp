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

#include "partiscope/data/image_batch.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "partiscope/error.hpp"

namespace partiscope {

bool ImageBatch::has_partitions() const {
  return std::any_of(partitions_.begin(), partitions_.end(),
                     [](int p) { return p != kUnassigned; });
}

void ImageBatch::reserve(std::size_t n) {
  pixels_.reserve(n * shape_.size());
  labels_.reserve(n);
  partitions_.reserve(n);
  weights_.reserve(n);
}

void ImageBatch::push_back(std::span<const float> image, int label, int partition, float weight) {
  if (image.size() != shape_.size()) {
    throw DataError("image size " + std::to_string(image.size()) + " does not match batch shape " +
                    std::to_string(shape_.size()));
  }
  pixels_.insert(pixels_.end(), image.begin(), image.end());
  labels_.push_back(label);
  partitions_.push_back(partition);
  weights_.push_back(weight);
}

void ImageBatch::append_from(const ImageBatch& other, std::size_t i) {
  push_back(other.image(i), other.labels_[i], other.partitions_[i], other.weights_[i]);
}

void ImageBatch::append(const ImageBatch& other) {
  if (!(other.shape_ == shape_)) throw DataError("cannot append batches of different shape");
  pixels_.insert(pixels_.end(), other.pixels_.begin(), other.pixels_.end());
  labels_.insert(labels_.end(), other.labels_.begin(), other.labels_.end());
  partitions_.insert(partitions_.end(), other.partitions_.begin(), other.partitions_.end());
  weights_.insert(weights_.end(), other.weights_.begin(), other.weights_.end());
}

ImageBatch ImageBatch::subset(std::span<const std::size_t> indices) const {
  ImageBatch out(shape_, num_classes_);
  out.reserve(indices.size());
  for (std::size_t i : indices) out.append_from(*this, i);
  return out;
}

std::vector<std::size_t> ImageBatch::indices_of_class(int label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) out.push_back(i);
  return out;
}

void ImageBatch::validate() const {
  const std::size_t n = labels_.size();
  if (pixels_.size() != n * shape_.size() || partitions_.size() != n || weights_.size() != n)
    throw DataError("image batch buffers have inconsistent lengths");
  for (int y : labels_)
    if (y < 0 || y >= num_classes_)
      throw DataError("label " + std::to_string(y) + " outside [0, " +
                      std::to_string(num_classes_) + ")");
  for (float v : pixels_)
    if (!std::isfinite(v)) throw DataError("non-finite pixel value");
}

}  // namespace partiscope
