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

#include <memory>
#include <optional>
#include <vector>

#include <json.hpp>

#include "partiscope/cli/config.hpp"
#include "partiscope/defense/defense.hpp"
#include "partiscope/metrics/metrics.hpp"
#include "partiscope/partitioning/partition_model.hpp"
#include "partiscope/poisoning/poison.hpp"

namespace partiscope::cli {

/// Dataset plus synthetic mode ids when the generator produced it.
struct LoadedData {
  data::TrainTest data;
  std::optional<std::vector<int>> train_modes;
  std::optional<std::vector<int>> test_modes;
};
LoadedData load_data(const ExperimentConfig& config);

/// Fitted partitioner with what it was fitted from.
struct PartitionArtifacts {
  std::shared_ptr<const training::ModelHandle> clean;  // classifier encoder, if any
  std::shared_ptr<const partitioning::FeatureEncoder> encoder;
  /// The clustering step (kmeans/gmm with encoder attached).
  std::optional<partitioning::PartitionModel> clustering;
  /// The partitioner used for assignment (clustering or surrogate).
  std::optional<partitioning::PartitionModel> partitioner;
  std::vector<int> cluster_labels;  // per victim training sample
  nlohmann::json stats = nlohmann::json::object();
};

/// Encoder → clustering of victim training features → optional surrogate.
PartitionArtifacts fit_partitioner(const ExperimentConfig& config, const LoadedData& data);

/// Assigns partitions to every sample of `batch`.
void assign_partitions(const partitioning::PartitionModel& partitioner, ImageBatch& batch);

/// Truncates oversized victim partitions by clearing their partition id;
/// the samples stay in the set as clean data.
void balance_victims(ImageBatch& train, int victim, int n, double slack, std::uint64_t seed);

/// Percentage of samples where both partitioners agree.
double agreement(std::span<const int> a, std::span<const int> b);

triggers::TriggerRegistry make_triggers(const ExperimentConfig& config, ImageShape shape);

struct AttackOutcome {
  training::ModelHandle model;
  nlohmann::json poison_description;
};

/// Trains a backdoored model on `train` (partitions assigned).
AttackOutcome train_backdoor(const ExperimentConfig& config, const ImageBatch& train,
                             const triggers::TriggerRegistry& registry);

/// 5%-style clean subset of `train` (per-class share, seeded).
ImageBatch clean_subset(const ImageBatch& train, double fraction, std::uint64_t seed);

/// Samples and candidate labels for the trigger-inversion sweep. With
/// defense.nc.source=victim: correctly classified victim test samples and
/// every label but the victim; otherwise correctly classified test samples
/// of all classes and every label. At most defense.clean_samples samples.
struct SweepInput {
  ImageBatch samples;
  std::vector<int> labels;
};
SweepInput sweep_input(const training::ModelHandle& model, const ImageBatch& test,
                       const ExperimentConfig& config);
defense::LabelSweep run_label_sweep(const training::ModelHandle& model, const SweepInput& input,
                                    const ExperimentConfig& config);

/// Selects the configured kernel ISA.
void apply_isa(const std::string& isa);

}  // namespace partiscope::cli
