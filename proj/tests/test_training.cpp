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

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "partiscope/error.hpp"
#include "partiscope/nn/loss.hpp"
#include "partiscope/training/trainer.hpp"
#include "support.hpp"

using namespace partiscope;

namespace {

double loss_at(nn::Network& net, const nn::Tensor& x, const std::vector<int>& y) {
  return nn::softmax_cross_entropy(net.forward(x), y).loss;
}

}  // namespace

TEST_CASE("backward matches central differences") {
  const auto set = testing::small_synthetic(3, 3, 4, 1);
  const ImageBatch& batch = set.data.train;
  auto model = testing::random_model(batch.shape(), 3, 11);
  const auto x = training::to_tensor(batch);
  const std::vector<int> y = batch.labels();

  auto& net = model.net;
  net.zero_grad();
  const auto& logits = net.forward_train(x);
  const auto lr = nn::softmax_cross_entropy(logits, y);
  net.backward(lr.dlogits, true, false);

  std::vector<float> analytic;
  for (auto& p : net.params())
    for (float g : p.grad) analytic.push_back(g);
  auto params = net.flat_params();
  REQUIRE(params.size() == analytic.size());

  const double eps = 1e-2;
  int checked = 0, agreed = 0;
  for (std::size_t i = 0; i < params.size(); i += params.size() / 40 + 1) {
    const float keep = params[i];
    params[i] = keep + static_cast<float>(eps);
    net.set_flat_params(params);
    const double up = loss_at(net, x, y);
    params[i] = keep - static_cast<float>(eps);
    net.set_flat_params(params);
    const double down = loss_at(net, x, y);
    params[i] = keep;
    const double numeric = (up - down) / (2 * eps);
    ++checked;
    agreed += std::fabs(numeric - analytic[i]) <= 2e-3 + 0.05 * std::fabs(numeric);
  }
  net.set_flat_params(params);
  // ReLU and max-pool kinks can break a stray finite difference.
  CHECK(agreed >= checked - 2);
}

TEST_CASE("checkpoints round-trip exactly") {
  const auto set = testing::small_synthetic();
  auto model = testing::random_model(set.data.train.shape(), 4, 5);
  model.config_echo["note"] = "round trip";
  const auto path = std::filesystem::temp_directory_path() / "partiscope_ckpt_test.ckpt";
  training::save_checkpoint(model, path);
  const auto loaded = training::load_checkpoint(path, std::string("tiny-cnn"));
  CHECK(loaded.net.flat_params() == model.net.flat_params());
  CHECK(loaded.num_classes == 4);
  CHECK(loaded.predict(set.data.test) == model.predict(set.data.test));
  CHECK_THROWS_AS(training::load_checkpoint(path, std::string("small-cnn")), DataError);

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << "not a checkpoint";
  }
  CHECK_THROWS_AS(training::load_checkpoint(path), DataError);
  CHECK_THROWS_AS(training::load_checkpoint(path.string() + ".missing"), DataError);
  std::filesystem::remove(path);
}

TEST_CASE("training is deterministic under a fixed seed") {
  const auto set = testing::small_synthetic();
  training::TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.seed = 9;
  cfg.augmentation.crop_pad = 2;
  training::ShuffledSource s1(set.data.train, cfg.batch_size, cfg.seed, true, cfg.augmentation);
  training::ShuffledSource s2(set.data.train, cfg.batch_size, cfg.seed, true, cfg.augmentation);
  const auto a = training::train(cfg, s1);
  const auto b = training::train(cfg, s2);
  CHECK(a.net.flat_params() == b.net.flat_params());
  CHECK(a.epoch_losses == b.epoch_losses);
  CHECK(a.epoch_losses.size() == 2);
}

TEST_CASE("invalid training configs are rejected") {
  training::TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.epochs = 1;
  cfg.batch_size = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg.batch_size = 8;
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  CHECK_NOTHROW(cfg.validate(true));
}

TEST_CASE("fine-tuning an empty subset is an error") {
  const auto set = testing::small_synthetic();
  const auto model = testing::random_model(set.data.train.shape(), 4, 5);
  ImageBatch empty(set.data.train.shape(), 4);
  CHECK_THROWS_AS(training::fine_tune(model, empty, {}), DataError);
}
