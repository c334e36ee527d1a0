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

#include <filesystem>
#include <fstream>
#include <map>

#include "partiscope/data/dataset.hpp"
#include "partiscope/error.hpp"
#include "support.hpp"

using namespace partiscope;

namespace {

std::map<int, int> class_counts(const ImageBatch& b) {
  std::map<int, int> c;
  for (int y : b.labels()) ++c[y];
  return c;
}

}  // namespace

TEST_CASE("synthetic generator is deterministic and sized") {
  const auto a = testing::small_synthetic(5);
  const auto b = testing::small_synthetic(5);
  const auto c = testing::small_synthetic(6);
  CHECK(a.data.train.pixels() == b.data.train.pixels());
  CHECK(a.train_modes == b.train_modes);
  CHECK(a.data.train.pixels() != c.data.train.pixels());
  CHECK(a.data.train.size() == 4 * 24);
  CHECK(a.data.test.size() == 4 * 8);
  CHECK(a.train_modes.size() == a.data.train.size());
  for (float v : a.data.train.pixels()) {
    REQUIRE(v >= 0.0f);
    REQUIRE(v <= 1.0f);
  }
  for (const auto& [y, n] : class_counts(a.data.train)) CHECK(n == 24);
  a.data.train.validate();
}

TEST_CASE("class cap keeps min(cap, available) per class") {
  const auto set = testing::small_synthetic();
  const auto capped = data::apply_class_cap(set.data.train, 10, 3);
  for (const auto& [y, n] : class_counts(capped)) CHECK(n == 10);
  CHECK(data::apply_class_cap(set.data.train, 100, 3).size() == set.data.train.size());
  CHECK_THROWS_AS(data::apply_class_cap(set.data.train, 0, 3), ConfigError);
}

TEST_CASE("stratified split rounds per class") {
  const auto set = testing::small_synthetic();
  const auto [a, b] = data::split(set.data.train, {0.75, 0, 4});
  for (const auto& [y, n] : class_counts(a)) CHECK(n == 18);
  for (const auto& [y, n] : class_counts(b)) CHECK(n == 6);
  const auto [a2, b2] = data::split(set.data.train, {0.75, 0, 4});
  CHECK(a.pixels() == a2.pixels());
  CHECK_THROWS_AS(data::split(set.data.train, {0.0, 0, 4}), ConfigError);
}

TEST_CASE("augmentation is seeded and keeps labels") {
  const auto set = testing::small_synthetic();
  const auto x = data::augment(set.data.train, 12);
  const auto y = data::augment(set.data.train, 12);
  const auto z = data::augment(set.data.train, 13);
  CHECK(x.pixels() == y.pixels());
  CHECK(x.pixels() != z.pixels());
  CHECK(x.labels() == set.data.train.labels());
  const auto none = data::augment(set.data.train, 12, {0, 0.0});
  CHECK(none.pixels() == set.data.train.pixels());
}

TEST_CASE("class remap merges and inverts") {
  const data::ClassRemap remap({{0, 0}, {1, 0}, {2, 1}, {3, 1}});
  CHECK(remap.num_merged() == 2);
  CHECK(remap.inverse().at(1) == std::vector<int>{2, 3});
  const auto set = testing::small_synthetic();
  const auto merged = data::remap_classes(set.data.train, remap);
  CHECK(merged.num_classes() == 2);
  CHECK(merged.pixels() == set.data.train.pixels());
  CHECK_THROWS_AS(data::ClassRemap({{0, 0}, {1, 2}}), ConfigError);
}

TEST_CASE("CIFAR-10 binary records are read and validated") {
  const auto dir = std::filesystem::temp_directory_path() / "partiscope_cifar_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "records.bin";
  {
    std::ofstream out(path, std::ios::binary);
    for (int r = 0; r < 2; ++r) {
      out.put(static_cast<char>(r == 0 ? 3 : 9));
      for (int i = 0; i < 3072; ++i) out.put(static_cast<char>(i < 1024 ? 255 : 0));
    }
  }
  const auto batch = data::read_cifar10_file(path);
  REQUIRE(batch.size() == 2);
  CHECK(batch.label(0) == 3);
  CHECK(batch.label(1) == 9);
  CHECK(batch.image(0)[0] == doctest::Approx(1.0));
  CHECK(batch.image(0)[1024] == doctest::Approx(0.0));

  {
    std::ofstream out(path, std::ios::binary | std::ios::app);
    out.put(1);
  }
  CHECK_THROWS_AS(data::read_cifar10_file(path), DataError);
  CHECK_THROWS_AS(data::read_cifar10_file(dir / "missing.bin"), DataError);

  data::DatasetConfig cfg;
  cfg.name = "cifar10";
  cfg.root = dir;
  CHECK_THROWS_AS(data::load_dataset(cfg), DataError);
  cfg.name = "imagenet";
  CHECK_THROWS_AS(data::load_dataset(cfg), ConfigError);
  std::filesystem::remove_all(dir);
}
