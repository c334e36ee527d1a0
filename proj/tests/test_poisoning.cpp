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

#include <map>
#include <set>
#include <tuple>

#include "partiscope/error.hpp"
#include "partiscope/poisoning/poison.hpp"
#include "support.hpp"

using namespace partiscope;
using poisoning::PoisonKind;
using triggers::TriggerCombo;

namespace {

constexpr int kVictim = 0;
constexpr int kTarget = 1;
constexpr int kN = 4;

// Training set whose victim rows cycle through the partitions; every other
// row gets partition (row mod n).
ImageBatch partitioned_train() {
  auto set = testing::small_synthetic(2, 4, 24, 4);
  ImageBatch b = set.data.train;
  for (std::size_t i = 0; i < b.size(); ++i) b.partitions()[i] = static_cast<int>(i % kN);
  return b;
}

}  // namespace

TEST_CASE("focus enumeration yields exactly the three sample families") {
  const ImageBatch train = partitioned_train();
  const ImageBatch victims = train.subset(train.indices_of_class(kVictim));
  std::mt19937_64 rng(5);
  const auto attack = poisoning::make_attack_samples(victims, kTarget, kN);
  const auto focus = poisoning::make_focus_samples(victims, kVictim, kN, rng);
  REQUIRE(attack.size() == victims.size());
  REQUIRE(focus.size() == 2 * victims.size());

  // Per source row: {T_i -> y_T} ∪ {T_j -> y_V} ∪ {[T_i, T_j] -> y_V}, j != i.
  std::map<std::size_t, std::set<std::pair<std::uint32_t, int>>> per_row;
  for (const auto& s : attack) {
    CHECK(s.kind == PoisonKind::kAttack);
    per_row[s.source].insert({s.combo.mask(), s.label});
  }
  for (const auto& s : focus) per_row[s.source].insert({s.combo.mask(), s.label});
  for (const auto& [row, got] : per_row) {
    const int i = victims.partition(row);
    int j = -1;
    for (const auto& s : focus)
      if (s.source == row && s.kind == PoisonKind::kFocusSingle) j = s.combo.members().front();
    REQUIRE(j >= 0);
    CHECK(j != i);
    const std::set<std::pair<std::uint32_t, int>> expected = {
        {TriggerCombo::single(i).mask(), kTarget},
        {TriggerCombo::single(j).mask(), kVictim},
        {TriggerCombo::pair(i, j).mask(), kVictim}};
    CHECK(got == expected);
  }
}

TEST_CASE("wrong triggers are dealt round-robin within a partition") {
  ImageBatch victims({3, 16, 16}, 2);
  const std::vector<float> px(victims.shape().size(), 0.5f);
  for (int r = 0; r < 4 * 30; ++r) victims.push_back(px, kVictim, r % kN);
  std::mt19937_64 rng(8);
  const auto adv = poisoning::make_adversarial_samples(victims, kVictim, kN, rng);
  std::map<int, std::map<int, int>> counts;
  for (const auto& s : adv) {
    CHECK(s.label == kVictim);
    CHECK(s.combo.size() == 1);
    ++counts[victims.partition(s.source)][s.combo.members().front()];
  }
  for (const auto& [p, per_wrong] : counts) {
    CHECK(per_wrong.count(p) == 0);
    CHECK(per_wrong.size() == kN - 1);
    for (const auto& [j, c] : per_wrong) CHECK(c == 10);
  }
}

TEST_CASE("label-specific samples keep their label and skip victim/target") {
  ImageBatch train = partitioned_train();
  train.partitions()[train.indices_of_class(2).front()] = kUnassigned;
  const auto ls = poisoning::make_label_specific_samples(train, kVictim, kTarget, kN);
  std::size_t expected = 0;
  for (std::size_t i = 0; i < train.size(); ++i)
    expected += train.label(i) > 1 && train.partition(i) != kUnassigned;
  CHECK(ls.size() == expected);
  for (const auto& s : ls) {
    CHECK(s.label == train.label(s.source));
    CHECK(s.combo == TriggerCombo::single(train.partition(s.source)));
  }
}

TEST_CASE("samples without a partition are rejected") {
  ImageBatch train = partitioned_train();
  const auto rows = train.indices_of_class(kVictim);
  train.partitions()[rows[0]] = kUnassigned;
  CHECK_THROWS_AS(poisoning::make_attack_samples(train, rows, kTarget, kN), DataError);
}

TEST_CASE("augment-then-stamp keeps the trigger intact") {
  const ImageBatch train = partitioned_train();
  const auto reg = triggers::make_registry(train.shape(), kN);
  const auto rows = train.indices_of_class(kVictim);
  const auto samples = poisoning::make_attack_samples(train, rows, kTarget, kN);
  const auto out = poisoning::materialize(train, samples, reg, 2.0f, true, 3, {4, 1.0});
  REQUIRE(out.size() == samples.size());
  for (std::size_t k = 0; k < out.size(); ++k) {
    CHECK(out.label(k) == kTarget);
    CHECK(out.weights()[k] == 2.0f);
    const auto& spec = reg[train.partition(samples[k].source)];
    const auto [y0, x0] = spec.origin(train.shape());
    for (int c = 0; c < 3; ++c)
      CHECK(out.image(k)[c * train.shape().plane() + y0 * train.shape().width + x0] ==
            spec.color[c]);
  }
}

TEST_CASE("poisoned epochs are deterministic and sized") {
  const ImageBatch train = partitioned_train();
  const auto reg = triggers::make_registry(train.shape(), kN);
  poisoning::PoisonPlan plan;
  plan.victim = kVictim;
  plan.target = kTarget;
  plan.n_partitions = kN;
  poisoning::BatchConfig cfg;
  cfg.batch_size = 20;
  cfg.seed = 4;
  poisoning::PoisonedSource a(train, plan, reg, cfg);
  poisoning::PoisonedSource b(train, plan, reg, cfg);
  const auto e0 = a.epoch(0);
  const auto e0b = b.epoch(0);
  const auto e1 = a.epoch(1);
  REQUIRE(e0.size() == e0b.size());
  for (std::size_t i = 0; i < e0.size(); ++i) {
    CHECK(e0[i].pixels() == e0b[i].pixels());
    CHECK(e0[i].labels() == e0b[i].labels());
  }
  CHECK(e0.front().pixels() != e1.front().pixels());

  // Every training row appears once as a clean sample per epoch.
  const auto ep = a.plan_epoch(0);
  std::multiset<std::size_t> clean;
  for (const auto& rows : ep.clean) clean.insert(rows.begin(), rows.end());
  CHECK(clean.size() == train.size());
  CHECK(std::set<std::size_t>(clean.begin(), clean.end()).size() == train.size());

  // Victim pool holds 24 rows; requests beyond that are clamped.
  for (const auto& [kind, count] : a.per_epoch_counts()) {
    if (kind == PoisonKind::kLabelSpecific)
      CHECK(count <= 48);
    else
      CHECK(count <= 24);
  }
  CHECK(a.describe().at("generation") == "online");
}

TEST_CASE("plan validation") {
  poisoning::PoisonPlan plan;
  plan.victim = 2;
  plan.target = 2;
  CHECK_THROWS_AS(plan.validate(10), ConfigError);
  plan.target = 10;
  CHECK_THROWS_AS(plan.validate(10), ConfigError);
  plan.target = 3;
  plan.fractions.attack = -0.1;
  CHECK_THROWS_AS(plan.validate(10), ConfigError);
  plan.fractions.attack = 0.1;
  CHECK_NOTHROW(plan.validate(10));
  CHECK(plan.poison_share() == doctest::Approx(0.4));
  CHECK_THROWS_AS(poisoning::parse_strategy("mixed"), ConfigError);
}
