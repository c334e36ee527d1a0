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
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "partiscope/data/dataset.hpp"
#include "partiscope/data/image_batch.hpp"
#include "partiscope/nn/network.hpp"

namespace partiscope::training {

struct TrainConfig {
  std::string arch = "tiny-cnn";
  int epochs = 30;
  int batch_size = 64;
  double lr = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  bool cosine = true;
  std::uint64_t seed = 1;
  bool augment = true;
  data::AugmentConfig augmentation{};

  /// Throws ConfigError when epochs < 1, lr < 0, or batch_size < 1.
  /// `allow_zero_lr` admits lr = 0 (used by fine-tuning).
  void validate(bool allow_zero_lr = false) const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Trained classifier. Immutable by convention once returned by train().
struct ModelHandle {
  nn::Network net;
  std::string arch;
  int num_classes = 0;
  std::vector<double> epoch_losses;
  nlohmann::json config_echo = nlohmann::json::object();

  nn::Tensor logits(const ImageBatch& batch) const;
  std::vector<int> predict(const ImageBatch& batch) const;
  /// Penultimate-layer features, one row of feature_dim() per sample.
  nn::Tensor features(const ImageBatch& batch) const;
};

nn::Tensor to_tensor(const ImageBatch& batch);

/// Supplies the mini-batches of one epoch. Called with epoch = 0, 1, ...
class EpochSource {
 public:
  virtual ~EpochSource() = default;
  virtual ImageShape shape() const = 0;
  virtual int num_classes() const = 0;
  virtual std::vector<ImageBatch> epoch(int epoch) = 0;
};

/// Shuffled (and optionally augmented) mini-batches over a fixed sample set.
class ShuffledSource final : public EpochSource {
 public:
  ShuffledSource(ImageBatch data, int batch_size, std::uint64_t seed, bool augment,
                 data::AugmentConfig augmentation = {});
  ImageShape shape() const override { return data_.shape(); }
  int num_classes() const override { return data_.num_classes(); }
  std::vector<ImageBatch> epoch(int epoch) override;

 private:
  ImageBatch data_;
  int batch_size_;
  std::uint64_t seed_;
  bool augment_;
  data::AugmentConfig augmentation_;
};

/// Called after each epoch with the zero-based epoch index, the current
/// network and the mean epoch loss. Returning false stops training.
using EpochCallback = std::function<bool(int, const nn::Network&, double)>;

/// Cross-entropy SGD training from a fresh initialization. Throws
/// NumericError on a non-finite loss.
ModelHandle train(const TrainConfig& config, EpochSource& source,
                  const EpochCallback& on_epoch = {});

/// Continues training `start` on `source`; `start` is not modified.
ModelHandle continue_training(const ModelHandle& start, const TrainConfig& config,
                              EpochSource& source, const EpochCallback& on_epoch = {});

/// Fine-tunes on a clean subset. Throws DataError on an empty subset.
ModelHandle fine_tune(const ModelHandle& model, const ImageBatch& clean_subset,
                      const TrainConfig& config);

/// Fraction of samples whose top-1 prediction equals the label.
double accuracy(const ModelHandle& model, const ImageBatch& batch);

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelHandle& model, const std::filesystem::path& path);
/// Throws DataError on corrupt files, version mismatch, or (when given) an
/// architecture id different from `expected_arch`.
ModelHandle load_checkpoint(const std::filesystem::path& path,
                            const std::optional<std::string>& expected_arch = std::nullopt);

}  // namespace partiscope::training
