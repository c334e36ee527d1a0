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
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "partiscope/partitioning/features.hpp"
#include "partiscope/training/trainer.hpp"

namespace partiscope::partitioning {

enum class PartitionKind { kExplicit, kKMeans, kGmm, kSurrogate, kClassBased };

std::string kind_name(PartitionKind kind);
PartitionKind parse_kind(const std::string& name);

struct KMeansParams {
  Features centroids;                    // k × d
  double objective = 0.0;                // within-cluster sum of squared distances
  std::vector<double> objective_history;  // one entry per Lloyd iteration
};

struct GmmParams {
  std::vector<double> weights;      // k
  Features means;                   // k × d
  std::vector<double> covariances;  // k blocks of d × d, row-major
  double reg_covar = 1e-6;
  std::vector<double> log_likelihood_history;  // mean log-likelihood per EM iteration
  // Derived at construction: lower Cholesky factors and log-determinants.
  std::vector<double> cholesky;
  std::vector<double> log_dets;
};

/// One explicit attribute with `values` possible values 0..values-1.
struct AttributeSpec {
  std::string name;
  int values = 0;
};
/// Per-sample attribute values, keyed by attribute name.
using AttributeTable = std::vector<std::map<std::string, int>>;

struct ExplicitParams {
  std::vector<AttributeSpec> attributes;
};

struct ClassBasedParams {
  std::vector<int> class_to_partition;
};

/// Classifier over N−1+n classes whose sub-class logits [victim, victim+n)
/// carry the partition decision.
struct SurrogateParams {
  std::shared_ptr<const training::ModelHandle> model;
  int victim = 0;
};

/// A fitted partitioner C_n. Immutable after construction; safe to share
/// across threads for assignment.
class PartitionModel {
 public:
  using Params = std::variant<ExplicitParams, KMeansParams, GmmParams, SurrogateParams,
                              ClassBasedParams>;

  PartitionModel(PartitionKind kind, int n_partitions, Params params,
                 std::shared_ptr<const FeatureEncoder> encoder = nullptr);

  PartitionKind kind() const { return kind_; }
  int n_partitions() const { return n_; }
  const Params& params() const { return params_; }
  const std::shared_ptr<const FeatureEncoder>& encoder() const { return encoder_; }
  PartitionModel with_encoder(std::shared_ptr<const FeatureEncoder> encoder) const;

  /// Partition ids for images. Surrogate: sub-class argmax; class-based:
  /// label lookup; kmeans/gmm: nearest component of the encoded features.
  /// Explicit partitioners need attributes and throw here.
  std::vector<int> assign(const ImageBatch& batch) const;
  std::vector<int> assign_features(const Features& features) const;
  std::vector<int> assign_attributes(const AttributeTable& table) const;

  const KMeansParams& kmeans() const { return std::get<KMeansParams>(params_); }
  const GmmParams& gmm() const { return std::get<GmmParams>(params_); }
  const SurrogateParams& surrogate() const { return std::get<SurrogateParams>(params_); }
  const ExplicitParams& explicit_params() const { return std::get<ExplicitParams>(params_); }
  const ClassBasedParams& class_based() const { return std::get<ClassBasedParams>(params_); }

 private:
  PartitionKind kind_;
  int n_;
  Params params_;
  std::shared_ptr<const FeatureEncoder> encoder_;
};

// ---- fitting ------------------------------------------------------------

struct ClusterFit {
  PartitionModel model;
  std::vector<int> labels;  // cluster id per input row
};

struct KMeansOptions {
  int max_iter = 100;
  double tol = 1e-6;
  int n_init = 10;
};

/// Lloyd's algorithm with k-means++ seeding, best of n_init restarts.
/// Empty clusters are re-seeded from the point farthest from its centroid.
ClusterFit kmeans_fit(const Features& features, int k, std::uint64_t seed,
                      const KMeansOptions& options = {});

struct GmmOptions {
  int max_iter = 100;
  double tol = 1e-6;  // relative change of the mean log-likelihood
  double reg_covar = 1e-6;
};

/// Full-covariance EM initialized from k-means. Throws NumericError when a
/// covariance stays singular after regularization.
ClusterFit gmm_fit(const Features& features, int k, std::uint64_t seed,
                   const GmmOptions& options = {});

/// Mixed-radix index of the selected attributes (first attribute most
/// significant); n = product of value counts.
PartitionModel explicit_partition(std::vector<AttributeSpec> attributes);

/// Contiguous class blocks: class c → floor(c·n / num_classes).
PartitionModel class_based_partition(int num_classes, int n);

// ---- surrogate ----------------------------------------------------------

/// Relabels `train` for surrogate training: labels below the victim keep
/// their id, victim samples get victim + partition, labels above the victim
/// shift by n−1. Label space becomes N−1+n. Victim samples with partition
/// kUnassigned are dropped.
ImageBatch build_surrogate_dataset(const ImageBatch& train, int victim,
                                   std::span<const int> victim_partitions, int n);
/// Convenience overload assigning victim partitions with `clustering`.
ImageBatch build_surrogate_dataset(const ImageBatch& train, int victim,
                                   const PartitionModel& clustering);

struct SurrogateOptions {
  training::TrainConfig train{};
  int patience = 0;  // 0: run all epochs
  double holdout_fraction = 0.1;
};

PartitionModel train_surrogate(const ImageBatch& train, int victim,
                               std::span<const int> victim_partitions, int n,
                               const SurrogateOptions& options);

/// Sub-class argmax over raw logits: argmax over [victim, victim+n) minus victim.
std::vector<int> assign_partition_from_logits(const nn::Tensor& logits, int victim, int n);
std::vector<int> assign_partition(const PartitionModel& surrogate, const ImageBatch& batch);

// ---- balancing and overlap ----------------------------------------------

/// Truncates every partition larger than ceil(total/n · (1 + slack)) by
/// seeded random removal. Samples without a partition are kept.
ImageBatch balance_partitions(const ImageBatch& batch, int n, double slack = 0.2,
                              std::uint64_t seed = 1);
/// Index form of balance_partitions: kept indices in ascending order.
std::vector<std::size_t> balanced_indices(std::span<const int> partitions, int n, double slack,
                                          std::uint64_t seed);

/// Mean over non-empty guessed partitions of max_t |g ∩ t| / |g|, in [0,1].
double max_overlap(std::span<const int> guess, std::span<const int> truth);

// ---- serialization ------------------------------------------------------

inline constexpr int kPartitionFormatVersion = 1;

/// Writes `<path>` (JSON) plus sibling checkpoint files for surrogate and
/// classifier-encoder models.
void save_partition_model(const PartitionModel& model, const std::filesystem::path& path);
PartitionModel load_partition_model(const std::filesystem::path& path);

}  // namespace partiscope::partitioning
