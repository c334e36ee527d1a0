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
#include <span>
#include <vector>

namespace partiscope {

/// Per-sample tensor geometry (channels × height × width).
struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;

  std::size_t size() const {
    return static_cast<std::size_t>(channels) * static_cast<std::size_t>(height) *
           static_cast<std::size_t>(width);
  }
  std::size_t plane() const {
    return static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

inline constexpr int kUnassigned = -1;

/// Images in [0,1] (CHW, contiguous per sample) with labels, optional
/// partition ids, and per-sample loss weights.
class ImageBatch {
 public:
  ImageBatch() = default;
  ImageBatch(ImageShape shape, int num_classes) : shape_(shape), num_classes_(num_classes) {}

  const ImageShape& shape() const { return shape_; }
  int num_classes() const { return num_classes_; }
  void set_num_classes(int n) { num_classes_ = n; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }

  std::span<float> image(std::size_t i) { return {pixels_.data() + i * shape_.size(), shape_.size()}; }
  std::span<const float> image(std::size_t i) const {
    return {pixels_.data() + i * shape_.size(), shape_.size()};
  }

  std::vector<float>& pixels() { return pixels_; }
  const std::vector<float>& pixels() const { return pixels_; }
  std::vector<int>& labels() { return labels_; }
  const std::vector<int>& labels() const { return labels_; }
  std::vector<int>& partitions() { return partitions_; }
  const std::vector<int>& partitions() const { return partitions_; }
  std::vector<float>& weights() { return weights_; }
  const std::vector<float>& weights() const { return weights_; }

  int label(std::size_t i) const { return labels_[i]; }
  int partition(std::size_t i) const { return partitions_[i]; }
  /// True when at least one sample carries a partition id.
  bool has_partitions() const;

  void reserve(std::size_t n);
  void push_back(std::span<const float> image, int label, int partition = kUnassigned,
                 float weight = 1.0f);
  /// Appends sample `i` of `other` (shapes must match).
  void append_from(const ImageBatch& other, std::size_t i);
  void append(const ImageBatch& other);

  ImageBatch subset(std::span<const std::size_t> indices) const;
  /// Indices of samples whose label equals `label`.
  std::vector<std::size_t> indices_of_class(int label) const;
  /// Throws DataError if any invariant is broken.
  void validate() const;

 private:
  ImageShape shape_{};
  int num_classes_ = 0;
  std::vector<float> pixels_;
  std::vector<int> labels_;
  std::vector<int> partitions_;
  std::vector<float> weights_;
};

}  // namespace partiscope
