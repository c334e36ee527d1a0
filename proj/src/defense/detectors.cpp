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

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <Eigen/Dense>

#include "partiscope/defense/defense.hpp"
#include "partiscope/error.hpp"
#include "partiscope/nn/loss.hpp"
#include "partiscope/nn/layers.hpp"
#include "partiscope/partitioning/partition_model.hpp"

namespace partiscope::defense {

double normalized_entropy(std::span<const double> probs) {
  if (probs.size() < 2) return 0.0;
  // Written as 1 − KL(p‖uniform)/log k so a uniform vector gives exactly 1.
  const double k = static_cast<double>(probs.size());
  double kl = 0.0;
  for (double p : probs)
    if (p > 0.0) kl += p * std::log(k * p);
  return std::clamp(1.0 - kl / std::log(k), 0.0, 1.0);
}

namespace {

double strip_one(const training::ModelHandle& model, std::span<const float> image,
                 const ImageBatch& pool, int n_blends, std::uint64_t seed) {
  std::vector<std::size_t> idx(pool.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  ImageBatch blends(pool.shape(), pool.num_classes());
  blends.reserve(n_blends);
  std::vector<float> buf(image.size());
  for (int k = 0; k < n_blends; ++k) {
    const auto overlay = pool.image(idx[k]);
    for (std::size_t j = 0; j < buf.size(); ++j) buf[j] = 0.5f * image[j] + 0.5f * overlay[j];
    blends.push_back(buf, 0);
  }
  const nn::Tensor logits = model.logits(blends);
  double total = 0.0;
  for (int k = 0; k < n_blends; ++k)
    total += normalized_entropy(nn::softmax_row(logits.sample(k), static_cast<int>(logits.features())));
  return total / n_blends;
}

void check_strip(const ImageBatch& pool, int n_blends) {
  if (n_blends < 1) throw ConfigError("STRIP needs at least one blend");
  if (pool.size() < static_cast<std::size_t>(n_blends))
    throw ConfigError("STRIP overlay pool holds " + std::to_string(pool.size()) + " images, " +
                      std::to_string(n_blends) + " needed");
}

}  // namespace

double strip_entropy(const training::ModelHandle& model, std::span<const float> image,
                     const ImageBatch& pool, int n_blends, std::uint64_t seed) {
  check_strip(pool, n_blends);
  if (image.size() != pool.shape().size()) throw DataError("STRIP image does not match the pool");
  return strip_one(model, image, pool, n_blends, seed);
}

std::vector<double> strip_entropies(const training::ModelHandle& model, const ImageBatch& batch,
                                    const ImageBatch& pool, int n_blends, std::uint64_t seed) {
  check_strip(pool, n_blends);
  if (!(batch.shape() == pool.shape())) throw DataError("STRIP batch does not match the pool");
  std::vector<double> out;
  out.reserve(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i)
    out.push_back(strip_one(model, batch.image(i), pool, n_blends, seed + i));
  return out;
}

double histogram_overlap(std::span<const double> a, std::span<const double> b, int bins,
                         double lo, double hi) {
  if (a.empty() || b.empty()) return 0.0;
  if (bins < 1 || !(hi > lo)) throw ConfigError("invalid histogram range");
  auto hist = [&](std::span<const double> v) {
    std::vector<double> h(bins, 0.0);
    for (double x : v) {
      int k = static_cast<int>(std::floor((x - lo) / (hi - lo) * bins));
      h[std::clamp(k, 0, bins - 1)] += 1.0 / static_cast<double>(v.size());
    }
    return h;
  };
  const auto ha = hist(a), hb = hist(b);
  double s = 0.0;
  for (int k = 0; k < bins; ++k) s += std::min(ha[k], hb[k]);
  return s;
}

std::vector<double> spectral_scores(const partitioning::Features& f) {
  if (f.rows < 2) throw DataError("spectral scores need at least 2 samples");
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      f.values.data(), f.rows, f.cols);
  const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
  const Eigen::MatrixXd gram = centered.transpose() * centered;
  std::vector<double> out(f.rows, 0.0);
  if (gram.norm() <= 1e-300) return out;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
  const Eigen::Index top = f.cols - 1;  // eigenvalues ascend
  if (!(eig.eigenvalues()[top] > 0.0)) return out;
  const Eigen::VectorXd proj = centered * eig.eigenvectors().col(top);
  for (std::size_t i = 0; i < f.rows; ++i) out[i] = proj[i] * proj[i];
  return out;
}

std::vector<double> spectral_scores(const training::ModelHandle& model, const ImageBatch& batch) {
  const nn::Tensor feats = model.features(batch);
  partitioning::Features f(feats.batch, feats.features());
  for (std::size_t i = 0; i < f.values.size(); ++i) f.values[i] = feats.data[i];
  return spectral_scores(f);
}

std::vector<double> channel_activity(const training::ModelHandle& model, const ImageBatch& clean) {
  if (clean.empty()) throw DataError("channel activity needs clean samples");
  const auto conv = model.net.last_conv_index();
  if (!conv) throw ConfigError("model has no convolution layer to prune");
  std::size_t at = *conv;
  if (at + 1 < model.net.num_layers() && model.net.layer(at + 1).kind() == nn::LayerKind::kRelu) ++at;
  const nn::Tensor act = model.net.activation(training::to_tensor(clean), at);
  const std::size_t hw = act.shape.plane();
  std::vector<double> mean(act.shape.channels, 0.0);
  for (std::size_t n = 0; n < act.batch; ++n)
    for (int c = 0; c < act.shape.channels; ++c) {
      const float* p = act.sample(n) + c * hw;
      mean[c] += std::accumulate(p, p + hw, 0.0);
    }
  for (double& m : mean) m /= static_cast<double>(act.batch * hw);
  return mean;
}

training::ModelHandle fine_prune(const training::ModelHandle& model, const ImageBatch& clean,
                                 double fraction, const training::TrainConfig& config) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("prune fraction must lie in [0, 1)");
  const auto activity = channel_activity(model, clean);
  const std::size_t channels = activity.size();
  const auto count = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(channels)));
  std::vector<std::size_t> order(channels);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return activity[a] < activity[b]; });
  training::ModelHandle pruned = model;
  auto& conv = static_cast<nn::Conv2d&>(pruned.net.layer(*pruned.net.last_conv_index()));
  std::vector<std::uint8_t> mask = conv.channel_mask();
  for (std::size_t k = 0; k < count; ++k) mask[order[k]] = 0;
  conv.set_channel_mask(mask);
  pruned.config_echo["pruned_channels"] = count;
  return training::fine_tune(pruned, clean, config);
}

nlohmann::json AdaptiveScan::to_json() const {
  nlohmann::json j = {{"partition_sizes", partition_sizes},
                      {"anomaly_index", indices},
                      {"min_norm_label", min_norm_labels}};
  if (max_overlap) j["max_overlap"] = *max_overlap;
  return j;
}

AdaptiveScan adaptive_scan(const training::ModelHandle& model, const ImageBatch& victims,
                           std::span<const int> guess, int victim_label,
                           const InversionConfig& config,
                           std::optional<std::span<const int>> truth) {
  if (guess.size() != victims.size()) throw DataError("partition guess does not cover the victims");
  int parts = 0;
  for (int g : guess) {
    if (g < 0) throw DataError("adaptive scan needs every sample assigned");
    parts = std::max(parts, g + 1);
  }
  std::vector<int> labels;
  for (int l = 0; l < model.num_classes; ++l)
    if (l != victim_label) labels.push_back(l);
  AdaptiveScan scan;
  for (int g = 0; g < parts; ++g) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < guess.size(); ++i)
      if (guess[i] == g) rows.push_back(i);
    scan.partition_sizes.push_back(static_cast<int>(rows.size()));
    if (rows.empty()) {
      scan.indices.push_back(0.0);
      scan.min_norm_labels.push_back(-1);
      continue;
    }
    const LabelSweep sweep = label_sweep(model, victims.subset(rows), config, labels);
    scan.indices.push_back(sweep.model_index);
    scan.min_norm_labels.push_back(sweep.min_norm_label);
  }
  if (truth) scan.max_overlap = 100.0 * partitioning::max_overlap(guess, *truth);
  return scan;
}

}  // namespace partiscope::defense
