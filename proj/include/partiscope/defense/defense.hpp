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
#include <optional>
#include <span>
#include <vector>

#include <json.hpp>

#include "partiscope/partitioning/features.hpp"
#include "partiscope/training/trainer.hpp"

namespace partiscope::defense {

// ---- trigger inversion --------------------------------------------------

struct InversionConfig {
  int steps = 300;           // Adam steps over the full sample set
  double lr = 0.1;           // Adam step size on the tanh-space parameters
  double lambda_init = 1e-3;
  double lambda_up = 1.5;    // λ *= up after `patience` checks above target
  double lambda_down = 1.5 * 1.2247448713915890;  // 1.5^1.5
  double target_flip = 0.97;
  int check_every = 10;      // steps between λ adjustments
  int patience = 3;
  std::uint64_t seed = 1;
};
nlohmann::json to_json(const InversionConfig& c);

struct InversionResult {
  int target = 0;
  std::vector<float> mask;     // H×W in [0,1]
  std::vector<float> pattern;  // C×H×W in [0,1]
  double l1_norm = 0.0;
  double flip_rate = 0.0;      // percent of samples sent to `target`
  bool reached = false;        // flip rate met the threshold at some point
  double lambda_final = 0.0;
  int restarts = 0;

  nlohmann::json to_json() const;  // without mask/pattern pixels
};

/// Optimizes x' = (1−m)⊙x + m⊙Δ to minimize CE(model(x'), target) + λ‖m‖₁.
/// The returned mask is the smallest-norm one that met the flip-rate
/// threshold, or the final one when the threshold was never met. A
/// non-finite loss restarts once at a tenth of the step size, then throws
/// NumericError.
InversionResult invert_trigger(const training::ModelHandle& model, const ImageBatch& samples,
                               int target, const InversionConfig& config);

/// Stamps every image of `batch` with an inverted mask/pattern.
ImageBatch apply_inverted(const ImageBatch& batch, const InversionResult& r);

/// |norm − median| / (1.4826·MAD) per label. Needs at least 3 norms; all
/// indices are 0 when MAD = 0.
std::vector<double> anomaly_index(std::span<const double> norms);
/// Labels whose index exceeds `threshold` with a norm below the median.
std::vector<int> flagged_labels(std::span<const double> norms, std::span<const double> indices,
                                double threshold = 2.0);

struct LabelSweep {
  std::vector<int> labels;
  std::vector<InversionResult> results;  // one per label
  std::vector<double> norms;
  std::vector<double> indices;
  std::vector<int> flagged;
  /// Index of the smallest-norm label; the model-level score.
  double model_index = 0.0;
  int min_norm_label = 0;

  /// Anomaly index of `label`; throws ConfigError when it was not swept.
  double index_of(int label) const;
  nlohmann::json to_json() const;
};

/// Samples of `batch` the model classifies correctly.
ImageBatch correctly_classified(const training::ModelHandle& model, const ImageBatch& batch);

/// Inverts a trigger for every candidate label (all labels when empty)
/// using the samples of other labels.
LabelSweep label_sweep(const training::ModelHandle& model, const ImageBatch& clean,
                       const InversionConfig& config, std::vector<int> labels = {});

void save_inversion_images(const InversionResult& r, ImageShape shape,
                           const std::filesystem::path& dir);

// ---- STRIP --------------------------------------------------------------

/// −Σ p log p / log(classes) of a probability vector.
double normalized_entropy(std::span<const double> probs);

/// Mean normalized entropy of `n_blends` 0.5/0.5 blends of `image` with
/// overlays drawn without replacement from `pool` (seeded).
double strip_entropy(const training::ModelHandle& model, std::span<const float> image,
                     const ImageBatch& pool, int n_blends, std::uint64_t seed);
/// strip_entropy for every image of `batch`; sample i uses seed + i.
std::vector<double> strip_entropies(const training::ModelHandle& model, const ImageBatch& batch,
                                    const ImageBatch& pool, int n_blends, std::uint64_t seed);

/// Overlap coefficient Σ min(p_a, p_b) of two histograms over [lo, hi].
double histogram_overlap(std::span<const double> a, std::span<const double> b, int bins = 20,
                         double lo = 0.0, double hi = 1.0);

// ---- spectral signatures ------------------------------------------------

/// Squared projection of each centered row onto the top right-singular
/// vector. Fewer than 2 rows throws; a zero matrix scores 0 everywhere.
std::vector<double> spectral_scores(const partitioning::Features& features);
/// Penultimate-feature variant.
std::vector<double> spectral_scores(const training::ModelHandle& model, const ImageBatch& batch);

// ---- fine-pruning -------------------------------------------------------

/// Mean activation per channel of the last convolution block over `clean`.
std::vector<double> channel_activity(const training::ModelHandle& model, const ImageBatch& clean);

/// Masks the ⌊fraction·channels⌋ least active channels of the last
/// convolution, then fine-tunes on `clean`. fraction ∉ [0,1) is an error.
training::ModelHandle fine_prune(const training::ModelHandle& model, const ImageBatch& clean,
                                 double fraction, const training::TrainConfig& config);

// ---- adaptive partition scan --------------------------------------------

struct AdaptiveScan {
  std::vector<int> partition_sizes;
  std::vector<double> indices;  // model-level index per guessed partition
  std::vector<int> min_norm_labels;
  std::optional<double> max_overlap;  // against ground truth, when given

  nlohmann::json to_json() const;
};

/// For each guessed partition of `victims`, runs a label sweep (labels other
/// than `victim_label`) on that partition's samples.
AdaptiveScan adaptive_scan(const training::ModelHandle& model, const ImageBatch& victims,
                           std::span<const int> guess, int victim_label,
                           const InversionConfig& config,
                           std::optional<std::span<const int>> truth = std::nullopt);

}  // namespace partiscope::defense
