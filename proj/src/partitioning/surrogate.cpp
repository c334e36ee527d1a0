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

#include <spdlog/spdlog.h>

#include "partiscope/error.hpp"
#include "partiscope/nn/loss.hpp"
#include "partiscope/partitioning/partition_model.hpp"

namespace partiscope::partitioning {

ImageBatch build_surrogate_dataset(const ImageBatch& train, int victim,
                                   std::span<const int> victim_partitions, int n) {
  const int classes = train.num_classes();
  if (victim < 0 || victim >= classes) throw ConfigError("victim class out of range");
  if (n < 1) throw ConfigError("surrogate needs n >= 1");
  const auto victims = train.indices_of_class(victim);
  if (victim_partitions.size() != victims.size())
    throw DataError("victim partition list has " + std::to_string(victim_partitions.size()) +
                    " entries for " + std::to_string(victims.size()) + " victim samples");

  ImageBatch out(train.shape(), classes - 1 + n);
  out.reserve(train.size());
  std::size_t v = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int y = train.label(i);
    int mapped;
    if (y < victim) {
      mapped = y;
    } else if (y == victim) {
      const int p = victim_partitions[v++];
      if (p == kUnassigned) continue;
      if (p < 0 || p >= n) throw DataError("victim partition id out of range");
      mapped = victim + p;
    } else {
      mapped = y + n - 1;
    }
    out.push_back(train.image(i), mapped);
  }
  return out;
}

ImageBatch build_surrogate_dataset(const ImageBatch& train, int victim,
                                   const PartitionModel& clustering) {
  const auto victims = train.indices_of_class(victim);
  const auto parts = clustering.assign(train.subset(victims));
  return build_surrogate_dataset(train, victim, parts, clustering.n_partitions());
}

PartitionModel train_surrogate(const ImageBatch& train, int victim,
                               std::span<const int> victim_partitions, int n,
                               const SurrogateOptions& options) {
  ImageBatch relabeled = build_surrogate_dataset(train, victim, victim_partitions, n);
  const auto& cfg = options.train;

  std::shared_ptr<training::ModelHandle> model;
  if (options.patience <= 0 || options.holdout_fraction <= 0.0) {
    training::ShuffledSource source(std::move(relabeled), cfg.batch_size, cfg.seed, cfg.augment,
                                    cfg.augmentation);
    model = std::make_shared<training::ModelHandle>(training::train(cfg, source));
  } else {
    auto [fit, holdout] =
        data::split(relabeled, {1.0 - options.holdout_fraction, 0, cfg.seed ^ 0x5u});
    if (holdout.empty()) throw DataError("surrogate holdout split is empty");
    const nn::Tensor hx = training::to_tensor(holdout);
    double best_acc = -1.0;
    int since_best = 0;
    std::vector<float> best_params;
    auto on_epoch = [&](int e, const nn::Network& net, double) {
      const nn::Tensor logits = net.forward(hx);
      std::size_t hit = 0;
      for (std::size_t i = 0; i < holdout.size(); ++i)
        hit += nn::argmax(logits.sample(i), static_cast<int>(logits.features())) == holdout.label(i);
      const double acc = static_cast<double>(hit) / static_cast<double>(holdout.size());
      spdlog::debug("surrogate epoch {} holdout accuracy {:.4f}", e + 1, acc);
      if (acc > best_acc) {
        best_acc = acc;
        since_best = 0;
        best_params = net.flat_params();
        return true;
      }
      return ++since_best < options.patience;
    };
    training::ShuffledSource source(std::move(fit), cfg.batch_size, cfg.seed, cfg.augment,
                                    cfg.augmentation);
    model = std::make_shared<training::ModelHandle>(training::train(cfg, source, on_epoch));
    model->net.set_flat_params(best_params);
    model->config_echo["holdout_accuracy"] = best_acc;
  }
  model->config_echo["surrogate"] = {{"victim", victim}, {"n", n}};
  return PartitionModel(PartitionKind::kSurrogate, n, SurrogateParams{model, victim});
}

std::vector<int> assign_partition_from_logits(const nn::Tensor& logits, int victim, int n) {
  if (victim < 0 || victim + n > static_cast<int>(logits.features()))
    throw DataError("sub-class range exceeds the logit width");
  std::vector<int> out(logits.batch);
  for (std::size_t i = 0; i < logits.batch; ++i)
    out[i] = nn::argmax(logits.sample(i) + victim, n);
  return out;
}

std::vector<int> assign_partition(const PartitionModel& surrogate, const ImageBatch& batch) {
  if (surrogate.kind() != PartitionKind::kSurrogate)
    throw ConfigError("assign_partition needs a surrogate partitioner");
  return surrogate.assign(batch);
}

}  // namespace partiscope::partitioning
