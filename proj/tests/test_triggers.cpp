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

#include "partiscope/error.hpp"
#include "partiscope/triggers/trigger.hpp"
#include "support.hpp"

using namespace partiscope;
using triggers::TriggerCombo;

namespace {

const ImageShape kCifarShape{3, 32, 32};

// Pixels (h, w) where any channel differs.
int changed_pixels(const std::vector<float>& a, const std::vector<float>& b, ImageShape s) {
  int n = 0;
  for (std::size_t p = 0; p < s.plane(); ++p) {
    bool diff = false;
    for (int c = 0; c < s.channels; ++c) diff |= a[c * s.plane() + p] != b[c * s.plane() + p];
    n += diff;
  }
  return n;
}

std::vector<float> stamped(std::vector<float> img, TriggerCombo combo,
                           const triggers::TriggerRegistry& reg) {
  triggers::apply_combo(img, combo, reg);
  return img;
}

}  // namespace

TEST_CASE("a 6x6 patch covers 36 pixels") {
  const auto reg = triggers::make_registry(kCifarShape, 4);
  CHECK(triggers::default_patch_size(kCifarShape) == 6);
  CHECK(triggers::default_patch_size({3, 16, 16}) == 3);
  CHECK(triggers::default_patch_size({3, 4, 4}) == 2);
  const auto base = testing::random_floats(kCifarShape.size(), 1, 0.2f, 0.8f);
  for (int i = 0; i < 4; ++i) {
    CHECK(reg[i].area() == 36);
    CHECK(changed_pixels(base, stamped(base, TriggerCombo::single(i), reg), kCifarShape) == 36);
    const auto mask = reg.region_mask(TriggerCombo::single(i));
    CHECK(std::count(mask.begin(), mask.end(), 1) == 36);
  }
}

TEST_CASE("trigger algebra: union, idempotence, singletons") {
  const auto reg = triggers::make_registry(kCifarShape, 8);
  const auto base = testing::random_floats(kCifarShape.size(), 2, 0.2f, 0.8f);
  for (const auto a : triggers::all_combos(8)) {
    // Idempotence.
    const auto once = stamped(base, a, reg);
    CHECK(stamped(once, a, reg) == once);
    // Pixel count equals the union area of disjoint patches.
    CHECK(changed_pixels(base, once, kCifarShape) == 36 * a.size());
  }
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const auto a = TriggerCombo::single(i), b = TriggerCombo::single(j);
      // Stamping the union equals stamping one after the other, in any order.
      CHECK(stamped(base, a | b, reg) == stamped(stamped(base, a, reg), b, reg));
      CHECK(stamped(base, a | b, reg) == stamped(stamped(base, b, reg), a, reg));
    }
  const auto mask = reg.region_mask(TriggerCombo(0xffu));
  CHECK(std::count(mask.begin(), mask.end(), 1) == 8 * 36);
}

TEST_CASE("combo strings put T1 leftmost") {
  CHECK(TriggerCombo::single(0).to_string(4) == "1000");
  CHECK(TriggerCombo::pair(1, 2).to_string(4) == "0110");
  for (const auto c : triggers::all_combos(5)) CHECK(TriggerCombo::parse(c.to_string(5)) == c);
  CHECK_THROWS_AS(TriggerCombo::parse("10x0"), ConfigError);
  const auto combos = triggers::all_combos(4);
  CHECK(combos.size() == 15);
  CHECK(std::is_sorted(combos.begin(), combos.end()));
  CHECK(TriggerCombo::pair(3, 0).members() == std::vector<int>{0, 3});
}

TEST_CASE("registry validation") {
  triggers::TriggerSpec a{0, 6, 6, {1, 0, 0}, triggers::Anchor::kTopLeft, 0};
  triggers::TriggerSpec b{1, 6, 6, {0, 1, 0}, triggers::Anchor::kTopLeft, 2};
  CHECK_THROWS_AS(triggers::TriggerRegistry(kCifarShape, {a, b}), ConfigError);  // overlap
  b.anchor = triggers::Anchor::kBottomRight;
  CHECK_NOTHROW(triggers::TriggerRegistry(kCifarShape, {a, b}));
  CHECK_THROWS_AS(triggers::TriggerRegistry(kCifarShape, {b, a}), ConfigError);  // order
  a.height = 40;
  CHECK_THROWS_AS(triggers::TriggerRegistry(kCifarShape, {a, b}), ConfigError);  // fit
  CHECK_THROWS_AS(triggers::make_registry(kCifarShape, 9), ConfigError);

  const auto reg = triggers::make_registry(kCifarShape, 2);
  std::vector<float> img(kCifarShape.size(), 0.5f);
  CHECK_THROWS_AS(triggers::apply_combo(img, TriggerCombo::single(2), reg), ConfigError);
}

TEST_CASE("registry round-trips through its directory") {
  const auto dir = std::filesystem::temp_directory_path() / "partiscope_trigger_test";
  std::filesystem::remove_all(dir);
  const auto reg = triggers::make_registry({3, 16, 16}, 4);
  triggers::save_registry(reg, dir);
  CHECK(std::filesystem::exists(dir / "trigger_1.png"));
  const auto back = triggers::load_registry(dir);
  CHECK(back.to_json() == reg.to_json());
  CHECK(triggers::load_registry(dir / "registry.json").size() == 4);
  std::filesystem::remove_all(dir);
}
