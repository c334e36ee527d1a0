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

#include "partiscope/training/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "partiscope/error.hpp"
#include "partiscope/kernels/kernels.hpp"
#include "partiscope/nn/architectures.hpp"
#include "partiscope/nn/loss.hpp"

namespace partiscope::training {

void TrainConfig::validate(bool allow_zero_lr) const {
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (lr < 0.0 || (!allow_zero_lr && lr == 0.0)) throw ConfigError("train.lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train.momentum must lie in [0, 1)");
  if (weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"arch", c.arch},
          {"epochs", c.epochs},
          {"batch_size", c.batch_size},
          {"lr", c.lr},
          {"momentum", c.momentum},
          {"weight_decay", c.weight_decay},
          {"cosine", c.cosine},
          {"seed", c.seed},
          {"augment", c.augment},
          {"crop_pad", c.augmentation.crop_pad},
          {"flip_prob", c.augmentation.flip_prob}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  c.arch = j.value("arch", c.arch);
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr = j.value("lr", c.lr);
  c.momentum = j.value("momentum", c.momentum);
  c.weight_decay = j.value("weight_decay", c.weight_decay);
  c.cosine = j.value("cosine", c.cosine);
  c.seed = j.value("seed", c.seed);
  c.augment = j.value("augment", c.augment);
  c.augmentation.crop_pad = j.value("crop_pad", c.augmentation.crop_pad);
  c.augmentation.flip_prob = j.value("flip_prob", c.augmentation.flip_prob);
  return c;
}

nn::Tensor to_tensor(const ImageBatch& batch) {
  nn::Tensor t(batch.shape(), batch.size());
  std::copy(batch.pixels().begin(), batch.pixels().end(), t.data.begin());
  return t;
}

nn::Tensor ModelHandle::logits(const ImageBatch& batch) const { return net.forward(to_tensor(batch)); }

std::vector<int> ModelHandle::predict(const ImageBatch& batch) const {
  const nn::Tensor out = logits(batch);
  std::vector<int> pred(out.batch);
  const int classes = static_cast<int>(out.features());
  for (std::size_t b = 0; b < out.batch; ++b) pred[b] = nn::argmax(out.sample(b), classes);
  return pred;
}

nn::Tensor ModelHandle::features(const ImageBatch& batch) const {
  return net.features(to_tensor(batch));
}

ShuffledSource::ShuffledSource(ImageBatch data, int batch_size, std::uint64_t seed, bool augment,
                               data::AugmentConfig augmentation)
    : data_(std::move(data)),
      batch_size_(batch_size),
      seed_(seed),
      augment_(augment),
      augmentation_(augmentation) {
  if (batch_size_ < 1) throw ConfigError("batch size must be >= 1");
}

std::vector<ImageBatch> ShuffledSource::epoch(int epoch) {
  std::mt19937_64 rng(seed_ * 1000003ULL + static_cast<std::uint64_t>(epoch));
  std::vector<std::size_t> order(data_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ImageBatch> out;
  for (std::size_t begin = 0; begin < order.size(); begin += batch_size_) {
    const std::size_t end = std::min(order.size(), begin + static_cast<std::size_t>(batch_size_));
    ImageBatch b = data_.subset(std::span(order).subspan(begin, end - begin));
    if (augment_) data::augment_in_place(b, rng(), augmentation_);
    out.push_back(std::move(b));
  }
  return out;
}

namespace {

void run_epochs(nn::Network& net, const TrainConfig& config, EpochSource& source,
                std::vector<double>& losses, const EpochCallback& on_epoch) {
  const auto& kt = kernels::active();
  auto params = net.params();
  std::vector<std::vector<float>> velocity;
  for (auto& p : params) velocity.emplace_back(p.value.size(), 0.0f);

  for (int e = 0; e < config.epochs; ++e) {
    const double lr =
        config.cosine ? 0.5 * config.lr * (1.0 + std::cos(M_PI * e / config.epochs)) : config.lr;
    double total = 0.0;
    std::size_t seen = 0;
    for (const ImageBatch& batch : source.epoch(e)) {
      if (batch.empty()) continue;
      net.zero_grad();
      const nn::Tensor& logits = net.forward_train(to_tensor(batch));
      const nn::LossResult lr_out = nn::softmax_cross_entropy(logits, batch.labels(), batch.weights());
      if (!std::isfinite(lr_out.loss)) {
        throw NumericError("non-finite training loss at epoch " + std::to_string(e) +
                           " (lr=" + std::to_string(lr) + ", batch=" +
                           std::to_string(batch.size()) + ")");
      }
      net.backward(lr_out.dlogits, true, false);
      for (std::size_t i = 0; i < params.size(); ++i) {
        kt.sgd_step(params[i].value.size(), static_cast<float>(lr),
                    static_cast<float>(config.momentum), static_cast<float>(config.weight_decay),
                    params[i].value.data(), params[i].grad.data(), velocity[i].data());
      }
      total += lr_out.loss * static_cast<double>(batch.size());
      seen += batch.size();
    }
    const double mean = seen ? total / static_cast<double>(seen) : 0.0;
    losses.push_back(mean);
    spdlog::debug("epoch {}/{} loss {:.4f} lr {:.5f}", e + 1, config.epochs, mean, lr);
    if (on_epoch && !on_epoch(e, net, mean)) break;
  }
}

}  // namespace

ModelHandle train(const TrainConfig& config, EpochSource& source, const EpochCallback& on_epoch) {
  config.validate();
  ModelHandle h;
  h.arch = config.arch;
  h.num_classes = source.num_classes();
  h.net = nn::build_network(config.arch, source.shape(), source.num_classes(), config.seed);
  h.config_echo = to_json(config);
  h.config_echo["isa"] = std::string(kernels::isa_name(kernels::active().isa));
  run_epochs(h.net, config, source, h.epoch_losses, on_epoch);
  return h;
}

ModelHandle continue_training(const ModelHandle& start, const TrainConfig& config,
                              EpochSource& source, const EpochCallback& on_epoch) {
  config.validate(true);
  if (source.num_classes() != start.num_classes)
    throw ConfigError("training source label space does not match the model");
  ModelHandle h = start;
  h.epoch_losses.clear();
  h.config_echo["continued"] = to_json(config);
  run_epochs(h.net, config, source, h.epoch_losses, on_epoch);
  return h;
}

ModelHandle fine_tune(const ModelHandle& model, const ImageBatch& clean_subset,
                      const TrainConfig& config) {
  if (clean_subset.empty()) throw DataError("fine-tuning subset is empty");
  ShuffledSource source(clean_subset, config.batch_size, config.seed, config.augment,
                        config.augmentation);
  return continue_training(model, config, source);
}

double accuracy(const ModelHandle& model, const ImageBatch& batch) {
  if (batch.empty()) throw DataError("accuracy requested on an empty set");
  const auto pred = model.predict(batch);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == batch.label(i);
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace partiscope::training
