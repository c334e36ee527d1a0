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

#include <filesystem>
#include <span>
#include <vector>

#include <json.hpp>

#include "partiscope/training/trainer.hpp"
#include "partiscope/triggers/trigger.hpp"

namespace partiscope::metrics {

using triggers::TriggerCombo;
using triggers::TriggerRegistry;

// All rates are percentages in [0, 100].

/// Top-1 accuracy on clean data. Throws DataError on an empty set.
double benign_accuracy(const training::ModelHandle& model, const ImageBatch& test);

/// Predictions after stamping `combo` on every image of `batch`.
std::vector<int> stamped_predictions(const training::ModelHandle& model, const ImageBatch& batch,
                                     TriggerCombo combo, const TriggerRegistry& registry);

/// Share of victim samples predicted `target` after stamping each with the
/// trigger of its own partition. Throws DataError on an empty set or a
/// sample without a partition.
double asr(const training::ModelHandle& model, const ImageBatch& victims,
           const TriggerRegistry& registry, int target);

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // population
  std::size_t cells = 0;
};
MeanStd mean_std(std::span<const double> values);

/// Rows: non-empty combos in ascending mask order; columns: partitions.
struct AsrMatrix {
  int n = 0;
  std::vector<TriggerCombo> combos;
  std::vector<std::size_t> partition_sizes;
  std::vector<std::size_t> hits;  // row-major (combo, partition)

  std::size_t rows() const { return combos.size(); }
  /// Percentage for a cell; NaN when the partition is empty.
  double cell(std::size_t row, int partition) const;
  std::vector<double> cells() const;

  /// Matched singletons ({T_i} on p_i), weighted by partition size.
  double matched() const;
  /// Every cell except matched singletons.
  MeanStd other() const;
  /// Single wrong triggers.
  MeanStd indi() const;
  /// Rows with two or more triggers.
  MeanStd comb() const;

  nlohmann::json to_json() const;
  static AsrMatrix from_json(const nlohmann::json& j);
};

/// Throws ConfigError for n > 8 and DataError on an empty victim set.
AsrMatrix asr_matrix(const training::ModelHandle& model, const ImageBatch& victims,
                     const TriggerRegistry& registry, int target);

/// Matched-trigger flip rate on samples that are neither victim nor target.
/// Returns 0 when the pool is empty.
double label_specificity(const training::ModelHandle& model, const ImageBatch& pool,
                         const TriggerRegistry& registry, int victim, int target);

struct AttackReport {
  double ba = 0.0;
  double asr = 0.0;
  double asr_victim = 0.0;
  double asr_other_label = 0.0;
  MeanStd asr_other, asr_indi, asr_comb;
  AsrMatrix matrix;
  nlohmann::json metadata = nlohmann::json::object();

  nlohmann::json to_json() const;
  static AttackReport from_json(const nlohmann::json& j);
};

/// Evaluates BA on `test`, the matrix on its victim samples and label
/// specificity on the rest. `test` must carry partition ids for the victim
/// class and for the label-specificity pool.
AttackReport evaluate_attack(const training::ModelHandle& model, const ImageBatch& test,
                             const TriggerRegistry& registry, int victim, int target);

void write_matrix_csv(const AsrMatrix& m, const std::filesystem::path& path);
void write_matrix_heatmap(const AsrMatrix& m, const std::filesystem::path& path);

}  // namespace partiscope::metrics
