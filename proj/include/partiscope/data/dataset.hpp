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
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "partiscope/data/image_batch.hpp"

namespace partiscope::data {

/// Parameters of the bundled "synthetic-blobs" generator. Every class is a
/// mixture of `modes` prototypes, each a few colored Gaussian blobs kept
/// away from the image border; samples jitter blob position/amplitude and
/// add pixel noise.
struct SyntheticConfig {
  int classes = 10;
  int channels = 3;
  int image_size = 16;
  int train_per_class = 300;
  int test_per_class = 100;
  int modes = 4;
  int blobs_per_mode = 3;
  int margin = 4;
  float noise = 0.05f;
  float jitter = 0.6f;
};

struct DatasetConfig {
  std::string name = "synthetic-blobs";  // cifar10 | cifar10-subset | synthetic-blobs
  std::filesystem::path root = "data";
  int per_class_cap = 0;  // 0: no cap
  std::uint64_t seed = 1;
  SyntheticConfig synthetic{};
};

struct TrainTest {
  ImageBatch train;
  ImageBatch test;
};

/// Loads train/test splits. Throws DataError naming the path on missing or
/// corrupt files, ConfigError on unknown dataset ids.
TrainTest load_dataset(const DatasetConfig& config);

/// Reads one file in the CIFAR-10 binary layout (1 label byte + 3072 pixel
/// bytes per record).
ImageBatch read_cifar10_file(const std::filesystem::path& path);

/// Generated dataset plus the per-sample mode id (ground-truth partition
/// structure within each class).
struct SyntheticSet {
  TrainTest data;
  std::vector<int> train_modes;
  std::vector<int> test_modes;
};
SyntheticSet generate_synthetic(const SyntheticConfig& config, std::uint64_t seed);

/// Keeps min(cap, available) samples of every class, chosen by a seeded
/// shuffle; original order is preserved among the kept samples.
ImageBatch apply_class_cap(const ImageBatch& batch, int cap, std::uint64_t seed);

struct SplitConfig {
  double train_fraction = 1.0;
  int per_class_cap = 0;
  std::uint64_t seed = 1;
};

/// Stratified split: per class, the first round(train_fraction·count)
/// samples of a seeded shuffle go to the first batch.
std::pair<ImageBatch, ImageBatch> split(const ImageBatch& batch, const SplitConfig& config);

/// Original class → merged class. Must be total over the source label space
/// and merged ids must be contiguous from 0.
class ClassRemap {
 public:
  explicit ClassRemap(std::map<int, int> merge_map);
  static ClassRemap identity(int num_classes);

  const std::map<int, int>& merge_map() const { return merge_map_; }
  int num_merged() const { return num_merged_; }
  /// Merged id → original ids that map to it.
  std::map<int, std::vector<int>> inverse() const;

 private:
  std::map<int, int> merge_map_;
  int num_merged_ = 0;
};

/// Relabels through `remap`; pixels, partitions and weights are untouched.
ImageBatch remap_classes(const ImageBatch& batch, const ClassRemap& remap);

struct AugmentConfig {
  int crop_pad = 4;
  double flip_prob = 0.5;
};

/// Random zero-padded crop (shift up to crop_pad in each axis) and horizontal
/// flip, deterministic in `seed`.
ImageBatch augment(const ImageBatch& batch, std::uint64_t seed, const AugmentConfig& config = {});
void augment_in_place(ImageBatch& batch, std::uint64_t seed, const AugmentConfig& config = {});

}  // namespace partiscope::data
