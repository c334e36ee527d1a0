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
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "partiscope/data/dataset.hpp"
#include "partiscope/training/trainer.hpp"
#include "partiscope/triggers/trigger.hpp"

namespace partiscope::poisoning {

using triggers::TriggerCombo;
using triggers::TriggerRegistry;

enum class Strategy { kSimple, kAdversarial, kFocus };
std::string strategy_name(Strategy s);
Strategy parse_strategy(const std::string& name);

/// Per-sample loss weights by sample kind.
struct LossWeights {
  double benign = 1.0;
  double attack = 1.0;
  double label_specific = 1.0;
  double dynamic = 1.0;  // adversarial and focus samples
};

/// Share of each mini-batch per poison kind. Focus uses two kinds
/// (single wrong trigger, matched + wrong pair) at `focus` each.
struct PoisonFractions {
  double attack = 0.1;
  double adversarial = 0.1;
  double focus = 0.1;
  double label_specific = 0.1;
};

struct PoisonPlan {
  Strategy strategy = Strategy::kFocus;
  int victim = 0;
  int target = 1;
  int n_partitions = 4;
  LossWeights weights{};
  PoisonFractions fractions{};

  /// Poison share of one batch for this strategy.
  double poison_share() const;
  /// Throws ConfigError on victim == target, negative weights or fractions,
  /// a share above 1, or n < 2 for adversarial/focus.
  void validate(int num_classes) const;
};

nlohmann::json to_json(const PoisonPlan& plan);

enum class PoisonKind { kAttack, kAdversarial, kFocusSingle, kFocusPair, kLabelSpecific };
std::string kind_name(PoisonKind k);

struct PoisonSample {
  std::size_t source = 0;  // row in the batch the sample was built from
  TriggerCombo combo;
  int label = 0;
  PoisonKind kind = PoisonKind::kAttack;
};

/// ({T_i}, target) for every row; rows must carry a partition id.
std::vector<PoisonSample> make_attack_samples(const ImageBatch& victims,
                                              std::span<const std::size_t> rows, int target,
                                              int n);
std::vector<PoisonSample> make_attack_samples(const ImageBatch& victims, int target, int n);

/// ({T_j}, victim), j != i. Within each partition the wrong triggers are
/// dealt round-robin from a seeded offset over a shuffled row order, so every
/// wrong trigger appears once per n−1 consecutive samples.
std::vector<PoisonSample> make_adversarial_samples(const ImageBatch& victims,
                                                   std::span<const std::size_t> rows, int victim,
                                                   int n, std::mt19937_64& rng);
std::vector<PoisonSample> make_adversarial_samples(const ImageBatch& victims, int victim, int n,
                                                   std::mt19937_64& rng);

/// Per row, two samples labeled victim: ({T_j}) and ({T_i, T_j}) with the
/// same wrong j, drawn as in make_adversarial_samples.
std::vector<PoisonSample> make_focus_samples(const ImageBatch& victims,
                                             std::span<const std::size_t> rows, int victim, int n,
                                             std::mt19937_64& rng);
std::vector<PoisonSample> make_focus_samples(const ImageBatch& victims, int victim, int n,
                                             std::mt19937_64& rng);

/// ({T_i}, original label) for rows whose label is neither victim nor
/// target; other rows and rows without a partition are skipped.
std::vector<PoisonSample> make_label_specific_samples(const ImageBatch& pool,
                                                      std::span<const std::size_t> rows,
                                                      int victim, int target, int n);
std::vector<PoisonSample> make_label_specific_samples(const ImageBatch& pool, int victim,
                                                      int target, int n);

/// Stamped images for `samples` built from `source`, weighted by `weight`.
/// When `augment` is set the source image is augmented before stamping.
ImageBatch materialize(const ImageBatch& source, std::span<const PoisonSample> samples,
                       const TriggerRegistry& registry, float weight, bool augment = false,
                       std::uint64_t augment_seed = 0, const data::AugmentConfig& aug = {});

struct BatchConfig {
  int batch_size = 64;
  std::uint64_t seed = 1;
  bool augment = true;
  data::AugmentConfig augmentation{};
};

/// Index-level description of one epoch.
struct EpochPlan {
  std::vector<std::vector<std::size_t>> clean;   // train rows per batch
  std::vector<std::vector<PoisonSample>> poison;  // poison samples per batch (source = train row)
};

/// Online poisoned training stream. `train` must carry partition ids for
/// the victim class (and for other classes when the strategy uses
/// label-specific samples).
class PoisonedSource final : public training::EpochSource {
 public:
  PoisonedSource(ImageBatch train, PoisonPlan plan, TriggerRegistry registry, BatchConfig config);

  ImageShape shape() const override { return train_.shape(); }
  int num_classes() const override { return train_.num_classes(); }
  std::vector<ImageBatch> epoch(int epoch) override;
  EpochPlan plan_epoch(int epoch) const;

  const PoisonPlan& plan() const { return plan_; }
  /// Poison samples per kind in one epoch after clamping.
  const std::vector<std::pair<PoisonKind, std::size_t>>& per_epoch_counts() const {
    return counts_;
  }
  nlohmann::json describe() const;

 private:
  ImageBatch train_;
  PoisonPlan plan_;
  TriggerRegistry registry_;
  BatchConfig config_;
  std::vector<std::size_t> victim_pool_;
  std::vector<std::size_t> other_pool_;
  std::size_t num_batches_ = 0;
  std::vector<std::pair<PoisonKind, std::size_t>> counts_;
};

}  // namespace partiscope::poisoning
