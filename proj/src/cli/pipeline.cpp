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

#include "partiscope/cli/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "partiscope/error.hpp"
#include "partiscope/kernels/kernels.hpp"

namespace partiscope::cli {

LoadedData load_data(const ExperimentConfig& config) {
  LoadedData out;
  if (config.dataset.name == "synthetic-blobs" && config.dataset.per_class_cap <= 0) {
    auto set = data::generate_synthetic(config.dataset.synthetic, config.dataset.seed);
    out.data = std::move(set.data);
    out.train_modes = std::move(set.train_modes);
    out.test_modes = std::move(set.test_modes);
  } else {
    out.data = data::load_dataset(config.dataset);
  }
  return out;
}

void apply_isa(const std::string& isa) {
  if (isa == "scalar") kernels::force_isa(kernels::Isa::kScalar);
  if (isa == "avx2") kernels::force_isa(kernels::Isa::kAvx2);
}

void assign_partitions(const partitioning::PartitionModel& partitioner, ImageBatch& batch) {
  batch.partitions() = partitioner.assign(batch);
}

void balance_victims(ImageBatch& train, int victim, int n, double slack, std::uint64_t seed) {
  const auto rows = train.indices_of_class(victim);
  std::vector<int> parts;
  for (std::size_t r : rows) parts.push_back(train.partition(r));
  const auto keep = partitioning::balanced_indices(parts, n, slack, seed);
  std::vector<bool> kept(rows.size(), false);
  for (std::size_t k : keep) kept[k] = true;
  std::size_t dropped = 0;
  for (std::size_t k = 0; k < rows.size(); ++k)
    if (!kept[k]) {
      train.partitions()[rows[k]] = kUnassigned;
      ++dropped;
    }
  if (dropped) spdlog::info("balancing cleared the partition of {} victim samples", dropped);
}

double agreement(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw DataError("agreement inputs differ in length");
  if (a.empty()) return 0.0;
  std::size_t same = 0;
  for (std::size_t i = 0; i < a.size(); ++i) same += a[i] == b[i];
  return 100.0 * static_cast<double>(same) / static_cast<double>(a.size());
}

namespace {

std::vector<int> sizes(std::span<const int> labels, int n) {
  std::vector<int> s(n, 0);
  for (int l : labels)
    if (l >= 0 && l < n) ++s[l];
  return s;
}

}  // namespace

PartitionArtifacts fit_partitioner(const ExperimentConfig& config, const LoadedData& loaded) {
  const auto& train = loaded.data.train;
  const auto& test = loaded.data.test;
  const auto& pc = config.partition;
  const int victim = config.plan.victim;
  PartitionArtifacts art;

  if (pc.encoder == EncoderKind::kClassifier) {
    training::TrainConfig tc = config.train;
    tc.epochs = pc.encoder_epochs;
    tc.seed = pc.seed;
    training::ShuffledSource source(train, tc.batch_size, tc.seed, tc.augment, tc.augmentation);
    spdlog::info("training the clean encoder ({} epochs)", tc.epochs);
    auto clean = std::make_shared<training::ModelHandle>(training::train(tc, source));
    art.stats["clean_test_accuracy"] = 100.0 * training::accuracy(*clean, test);
    art.clean = clean;
    art.encoder = std::make_shared<partitioning::ClassifierEncoder>(clean);
  } else {
    art.encoder = std::make_shared<partitioning::PixelEncoder>(train.shape());
  }

  const auto victim_rows = train.indices_of_class(victim);
  if (victim_rows.size() < static_cast<std::size_t>(pc.n))
    throw DataError("victim class has fewer samples than partitions");
  const ImageBatch victims = train.subset(victim_rows);
  const auto features = partitioning::extract_features(*art.encoder, victims);
  const bool gmm = pc.kind == "gmm" || (pc.kind == "surrogate" && pc.cluster == "gmm");
  partitioning::ClusterFit fit =
      gmm ? partitioning::gmm_fit(features, pc.n, pc.seed)
          : partitioning::kmeans_fit(features, pc.n, pc.seed, {100, 1e-6, pc.n_init});
  art.clustering = fit.model.with_encoder(art.encoder);
  art.cluster_labels = fit.labels;
  art.stats["cluster_sizes"] = sizes(fit.labels, pc.n);
  if (loaded.train_modes) {
    std::vector<int> modes;
    for (std::size_t r : victim_rows) modes.push_back((*loaded.train_modes)[r]);
    art.stats["cluster_mode_overlap"] = 100.0 * partitioning::max_overlap(fit.labels, modes);
  }

  if (pc.kind != "surrogate") {
    art.partitioner = art.clustering;
    return art;
  }

  // The surrogate learns balanced cluster labels.
  std::vector<int> labels = fit.labels;
  const auto keep = partitioning::balanced_indices(labels, pc.n, pc.balance_slack, pc.seed);
  std::vector<int> balanced(labels.size(), kUnassigned);
  for (std::size_t k : keep) balanced[k] = labels[k];
  partitioning::SurrogateOptions so;
  so.train = config.train;
  so.train.epochs = pc.surrogate_epochs;
  so.train.seed = pc.seed;
  so.patience = pc.surrogate_patience;
  spdlog::info("training the surrogate ({} epochs, patience {})", pc.surrogate_epochs,
               pc.surrogate_patience);
  art.partitioner = partitioning::train_surrogate(train, victim, balanced, pc.n, so);
  art.stats["surrogate_holdout_accuracy"] =
      100.0 * art.partitioner->surrogate().model->config_echo.value("holdout_accuracy", 0.0);

  const ImageBatch test_victims = test.subset(test.indices_of_class(victim));
  if (!test_victims.empty()) {
    const auto a = art.clustering->assign(test_victims);
    const auto b = art.partitioner->assign(test_victims);
    art.stats["surrogate_cluster_agreement"] = agreement(a, b);
  }
  return art;
}

triggers::TriggerRegistry make_triggers(const ExperimentConfig& config, ImageShape shape) {
  return triggers::make_registry(shape, config.partition.n, config.trigger_size,
                                 config.trigger_margin);
}

AttackOutcome train_backdoor(const ExperimentConfig& config, const ImageBatch& train,
                             const triggers::TriggerRegistry& registry) {
  poisoning::BatchConfig bc;
  bc.batch_size = config.train.batch_size;
  bc.seed = config.poison_seed;
  bc.augment = config.train.augment;
  bc.augmentation = config.train.augmentation;
  poisoning::PoisonedSource source(train, config.plan, registry, bc);
  spdlog::info("training the {} model ({} epochs)", poisoning::strategy_name(config.plan.strategy),
               config.train.epochs);
  AttackOutcome out{training::train(config.train, source), source.describe()};
  return out;
}

ImageBatch clean_subset(const ImageBatch& train, double fraction, std::uint64_t seed) {
  std::vector<std::size_t> keep;
  std::mt19937_64 rng(seed);
  for (int c = 0; c < train.num_classes(); ++c) {
    auto rows = train.indices_of_class(c);
    std::shuffle(rows.begin(), rows.end(), rng);
    const auto k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(rows.size())));
    keep.insert(keep.end(), rows.begin(), rows.begin() + std::min(k, rows.size()));
  }
  std::sort(keep.begin(), keep.end());
  ImageBatch out = train.subset(keep);
  std::fill(out.partitions().begin(), out.partitions().end(), kUnassigned);
  return out;
}

SweepInput sweep_input(const training::ModelHandle& model, const ImageBatch& test,
                       const ExperimentConfig& config) {
  const auto& d = config.defense;
  SweepInput in;
  ImageBatch pool = test;
  if (d.nc_source == "victim") {
    pool = test.subset(test.indices_of_class(config.plan.victim));
    for (int l = 0; l < test.num_classes(); ++l)
      if (l != config.plan.victim) in.labels.push_back(l);
  }
  pool = defense::correctly_classified(model, pool);
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(d.seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(idx.size(), static_cast<std::size_t>(d.clean_samples)));
  std::sort(idx.begin(), idx.end());
  in.samples = pool.subset(idx);
  if (in.samples.empty()) throw DataError("no correctly classified samples for trigger inversion");
  return in;
}

defense::LabelSweep run_label_sweep(const training::ModelHandle& model, const SweepInput& input,
                                    const ExperimentConfig& config) {
  auto cfg = config.defense.inversion;
  cfg.seed = config.defense.seed;
  return defense::label_sweep(model, input.samples, cfg, input.labels);
}

}  // namespace partiscope::cli
