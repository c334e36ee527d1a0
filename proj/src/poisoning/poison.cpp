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

#include "partiscope/poisoning/poison.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

#include "partiscope/error.hpp"

namespace partiscope::poisoning {
namespace {

std::vector<std::size_t> all_rows(const ImageBatch& b) {
  std::vector<std::size_t> r(b.size());
  std::iota(r.begin(), r.end(), 0);
  return r;
}

int partition_of(const ImageBatch& b, std::size_t row, int n) {
  if (!b.has_partitions()) throw DataError("poison source batch carries no partition ids");
  const int p = b.partition(row);
  if (p == kUnassigned)
    throw DataError("sample " + std::to_string(row) + " has no partition assigned");
  if (p < 0 || p >= n) throw DataError("sample " + std::to_string(row) + " partition out of range");
  return p;
}

// Wrong trigger per row, dealt round-robin within each partition.
std::vector<int> deal_wrong(const ImageBatch& victims, std::span<const std::size_t> rows, int n,
                            std::mt19937_64& rng) {
  if (n < 2) throw ConfigError("a wrong trigger needs n >= 2 partitions");
  std::vector<std::vector<std::size_t>> by_part(n);
  for (std::size_t k = 0; k < rows.size(); ++k) by_part[partition_of(victims, rows[k], n)].push_back(k);
  std::vector<int> wrong(rows.size(), -1);
  for (int p = 0; p < n; ++p) {
    auto& ks = by_part[p];
    std::shuffle(ks.begin(), ks.end(), rng);
    std::uniform_int_distribution<int> start(0, n - 2);
    const int offset = start(rng);
    for (std::size_t t = 0; t < ks.size(); ++t) {
      int j = static_cast<int>((offset + t) % (n - 1));
      if (j >= p) ++j;
      wrong[ks[t]] = j;
    }
  }
  return wrong;
}

// Splits `total` items into `parts` near-equal contiguous counts.
std::size_t chunk_begin(std::size_t total, std::size_t parts, std::size_t b) {
  return total * b / parts;
}

}  // namespace

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::kSimple:
      return "simple";
    case Strategy::kAdversarial:
      return "adversarial";
    case Strategy::kFocus:
      return "focus";
  }
  return "unknown";
}

Strategy parse_strategy(const std::string& name) {
  for (auto s : {Strategy::kSimple, Strategy::kAdversarial, Strategy::kFocus})
    if (strategy_name(s) == name) return s;
  throw ConfigError("unknown poison strategy '" + name + "'");
}

std::string kind_name(PoisonKind k) {
  switch (k) {
    case PoisonKind::kAttack:
      return "attack";
    case PoisonKind::kAdversarial:
      return "adversarial";
    case PoisonKind::kFocusSingle:
      return "focus_single";
    case PoisonKind::kFocusPair:
      return "focus_pair";
    case PoisonKind::kLabelSpecific:
      return "label_specific";
  }
  return "unknown";
}

double PoisonPlan::poison_share() const {
  switch (strategy) {
    case Strategy::kSimple:
      return fractions.attack;
    case Strategy::kAdversarial:
      return fractions.attack + fractions.adversarial;
    case Strategy::kFocus:
      return fractions.attack + 2.0 * fractions.focus + fractions.label_specific;
  }
  return 0.0;
}

void PoisonPlan::validate(int num_classes) const {
  if (victim < 0 || victim >= num_classes) throw ConfigError("victim class out of range");
  if (target < 0 || target >= num_classes) throw ConfigError("target class out of range");
  if (victim == target) throw ConfigError("victim and target classes must differ");
  if (n_partitions < 1 || n_partitions > triggers::kMaxTriggers)
    throw ConfigError("partition count must be 1..8");
  if (strategy != Strategy::kSimple && n_partitions < 2)
    throw ConfigError(strategy_name(strategy) + " poisoning needs n >= 2");
  for (double w : {weights.benign, weights.attack, weights.label_specific, weights.dynamic})
    if (!(w >= 0.0)) throw ConfigError("loss weights must be non-negative");
  for (double f : {fractions.attack, fractions.adversarial, fractions.focus, fractions.label_specific})
    if (!(f >= 0.0)) throw ConfigError("poison fractions must be non-negative");
  if (poison_share() > 1.0)
    throw ConfigError("poison fractions sum to " + std::to_string(poison_share()) + " > 1");
}

nlohmann::json to_json(const PoisonPlan& p) {
  return {{"strategy", strategy_name(p.strategy)},
          {"victim", p.victim},
          {"target", p.target},
          {"n_partitions", p.n_partitions},
          {"weights",
           {{"benign", p.weights.benign},
            {"attack", p.weights.attack},
            {"label_specific", p.weights.label_specific},
            {"dynamic", p.weights.dynamic}}},
          {"fractions",
           {{"attack", p.fractions.attack},
            {"adversarial", p.fractions.adversarial},
            {"focus", p.fractions.focus},
            {"label_specific", p.fractions.label_specific}}}};
}

std::vector<PoisonSample> make_attack_samples(const ImageBatch& victims,
                                              std::span<const std::size_t> rows, int target,
                                              int n) {
  std::vector<PoisonSample> out;
  out.reserve(rows.size());
  for (std::size_t r : rows)
    out.push_back({r, TriggerCombo::single(partition_of(victims, r, n)), target, PoisonKind::kAttack});
  return out;
}

std::vector<PoisonSample> make_attack_samples(const ImageBatch& victims, int target, int n) {
  return make_attack_samples(victims, all_rows(victims), target, n);
}

std::vector<PoisonSample> make_adversarial_samples(const ImageBatch& victims,
                                                   std::span<const std::size_t> rows, int victim,
                                                   int n, std::mt19937_64& rng) {
  const auto wrong = deal_wrong(victims, rows, n, rng);
  std::vector<PoisonSample> out;
  out.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k)
    out.push_back({rows[k], TriggerCombo::single(wrong[k]), victim, PoisonKind::kAdversarial});
  return out;
}

std::vector<PoisonSample> make_adversarial_samples(const ImageBatch& victims, int victim, int n,
                                                   std::mt19937_64& rng) {
  return make_adversarial_samples(victims, all_rows(victims), victim, n, rng);
}

std::vector<PoisonSample> make_focus_samples(const ImageBatch& victims,
                                             std::span<const std::size_t> rows, int victim, int n,
                                             std::mt19937_64& rng) {
  const auto wrong = deal_wrong(victims, rows, n, rng);
  std::vector<PoisonSample> out;
  out.reserve(2 * rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int i = victims.partition(rows[k]);
    out.push_back({rows[k], TriggerCombo::single(wrong[k]), victim, PoisonKind::kFocusSingle});
    out.push_back({rows[k], TriggerCombo::pair(i, wrong[k]), victim, PoisonKind::kFocusPair});
  }
  return out;
}

std::vector<PoisonSample> make_focus_samples(const ImageBatch& victims, int victim, int n,
                                             std::mt19937_64& rng) {
  return make_focus_samples(victims, all_rows(victims), victim, n, rng);
}

std::vector<PoisonSample> make_label_specific_samples(const ImageBatch& pool,
                                                      std::span<const std::size_t> rows,
                                                      int victim, int target, int n) {
  std::vector<PoisonSample> out;
  if (rows.empty()) return out;
  if (!pool.has_partitions()) throw DataError("label-specific pool carries no partition ids");
  for (std::size_t r : rows) {
    const int y = pool.label(r);
    const int p = pool.partition(r);
    if (y == victim || y == target || p == kUnassigned) continue;
    if (p < 0 || p >= n) throw DataError("sample " + std::to_string(r) + " partition out of range");
    out.push_back({r, TriggerCombo::single(p), y, PoisonKind::kLabelSpecific});
  }
  return out;
}

std::vector<PoisonSample> make_label_specific_samples(const ImageBatch& pool, int victim,
                                                      int target, int n) {
  return make_label_specific_samples(pool, all_rows(pool), victim, target, n);
}

ImageBatch materialize(const ImageBatch& source, std::span<const PoisonSample> samples,
                       const TriggerRegistry& registry, float weight, bool augment,
                       std::uint64_t augment_seed, const data::AugmentConfig& aug) {
  ImageBatch out(source.shape(), source.num_classes());
  out.reserve(samples.size());
  for (const auto& s : samples)
    out.push_back(source.image(s.source), s.label,
                  source.has_partitions() ? source.partition(s.source) : kUnassigned, weight);
  if (augment && !out.empty()) data::augment_in_place(out, augment_seed, aug);
  for (std::size_t i = 0; i < samples.size(); ++i)
    triggers::apply_combo(out.image(i), samples[i].combo, registry);
  return out;
}

// ---- online stream ------------------------------------------------------

PoisonedSource::PoisonedSource(ImageBatch train, PoisonPlan plan, TriggerRegistry registry,
                               BatchConfig config)
    : train_(std::move(train)),
      plan_(plan),
      registry_(std::move(registry)),
      config_(config) {
  plan_.validate(train_.num_classes());
  if (registry_.size() != plan_.n_partitions)
    throw ConfigError("trigger registry size " + std::to_string(registry_.size()) +
                      " does not match n = " + std::to_string(plan_.n_partitions));
  if (!(train_.shape() == registry_.shape())) throw ConfigError("trigger registry image shape mismatch");
  if (config_.batch_size < 2) throw ConfigError("poisoned batches need batch_size >= 2");
  if (train_.empty()) throw DataError("poisoned training set is empty");
  if (!train_.has_partitions()) throw DataError("training set carries no partition ids");

  for (std::size_t i = 0; i < train_.size(); ++i) {
    const int y = train_.label(i);
    if (train_.partition(i) == kUnassigned) continue;
    if (y == plan_.victim) {
      victim_pool_.push_back(i);
    } else if (y != plan_.target) {
      other_pool_.push_back(i);
    }
  }

  const int b = config_.batch_size;
  std::vector<std::pair<PoisonKind, double>> kinds = {{PoisonKind::kAttack, plan_.fractions.attack}};
  if (plan_.strategy == Strategy::kAdversarial)
    kinds.emplace_back(PoisonKind::kAdversarial, plan_.fractions.adversarial);
  if (plan_.strategy == Strategy::kFocus) {
    // One draw of victim rows yields both focus kinds.
    kinds.emplace_back(PoisonKind::kFocusSingle, plan_.fractions.focus);
    kinds.emplace_back(PoisonKind::kLabelSpecific, plan_.fractions.label_specific);
  }
  std::vector<std::size_t> per_batch;
  std::size_t poison_slots = 0;
  for (const auto& [k, f] : kinds) {
    per_batch.push_back(static_cast<std::size_t>(std::lround(f * b)));
    poison_slots += per_batch.back() * (k == PoisonKind::kFocusSingle ? 2 : 1);
  }
  if (poison_slots >= static_cast<std::size_t>(b)) {
    spdlog::warn("poison fractions leave no clean samples in a batch of {}; scaling down", b);
    const double scale = static_cast<double>(b - 1) / static_cast<double>(poison_slots);
    poison_slots = 0;
    for (std::size_t i = 0; i < per_batch.size(); ++i) {
      per_batch[i] = static_cast<std::size_t>(std::floor(per_batch[i] * scale));
      poison_slots += per_batch[i] * (kinds[i].first == PoisonKind::kFocusSingle ? 2 : 1);
    }
  }
  const std::size_t clean_per_batch = b - poison_slots;
  num_batches_ = (train_.size() + clean_per_batch - 1) / clean_per_batch;

  for (std::size_t i = 0; i < kinds.size(); ++i) {
    const PoisonKind k = kinds[i].first;
    const std::size_t pool =
        k == PoisonKind::kLabelSpecific ? other_pool_.size() : victim_pool_.size();
    std::size_t want = per_batch[i] * num_batches_;
    if (want > pool) {
      spdlog::warn("{} samples: {} requested per epoch but the pool holds {}; clamping",
                   kind_name(k), want, pool);
      want = pool;
    }
    counts_.emplace_back(k, want);
  }
}

EpochPlan PoisonedSource::plan_epoch(int epoch) const {
  std::seed_seq seq{config_.seed, static_cast<std::uint64_t>(epoch), std::uint64_t{0x70697a}};
  std::mt19937_64 rng(seq);
  EpochPlan plan;
  plan.clean.resize(num_batches_);
  plan.poison.resize(num_batches_);

  std::vector<std::size_t> order(train_.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t b = 0; b < num_batches_; ++b)
    plan.clean[b].assign(order.begin() + chunk_begin(order.size(), num_batches_, b),
                         order.begin() + chunk_begin(order.size(), num_batches_, b + 1));

  for (const auto& [kind, count] : counts_) {
    if (count == 0) continue;
    std::vector<std::size_t> pool = kind == PoisonKind::kLabelSpecific ? other_pool_ : victim_pool_;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(count);
    std::vector<PoisonSample> samples;
    std::size_t per_row = 1;
    switch (kind) {
      case PoisonKind::kAttack:
        samples = make_attack_samples(train_, pool, plan_.target, plan_.n_partitions);
        break;
      case PoisonKind::kAdversarial:
        samples = make_adversarial_samples(train_, pool, plan_.victim, plan_.n_partitions, rng);
        break;
      case PoisonKind::kFocusSingle:
      case PoisonKind::kFocusPair:
        samples = make_focus_samples(train_, pool, plan_.victim, plan_.n_partitions, rng);
        per_row = 2;
        break;
      case PoisonKind::kLabelSpecific:
        samples = make_label_specific_samples(train_, pool, plan_.victim, plan_.target,
                                              plan_.n_partitions);
        break;
    }
    const std::size_t units = samples.size() / per_row;
    for (std::size_t b = 0; b < num_batches_; ++b) {
      const std::size_t lo = chunk_begin(units, num_batches_, b) * per_row;
      const std::size_t hi = chunk_begin(units, num_batches_, b + 1) * per_row;
      plan.poison[b].insert(plan.poison[b].end(), samples.begin() + lo, samples.begin() + hi);
    }
  }
  return plan;
}

std::vector<ImageBatch> PoisonedSource::epoch(int epoch) {
  const EpochPlan plan = plan_epoch(epoch);
  std::vector<ImageBatch> out;
  out.reserve(num_batches_);
  const auto& w = plan_.weights;
  for (std::size_t b = 0; b < num_batches_; ++b) {
    const std::uint64_t base = config_.seed * 0x9E3779B97F4A7C15ull + epoch * 100003ull + b;
    ImageBatch batch = train_.subset(plan.clean[b]);
    std::fill(batch.weights().begin(), batch.weights().end(), static_cast<float>(w.benign));
    if (config_.augment && !batch.empty())
      data::augment_in_place(batch, base, config_.augmentation);
    ImageBatch poison = materialize(train_, plan.poison[b], registry_, 1.0f, config_.augment,
                                    base ^ 0xA5A5A5A5ull, config_.augmentation);
    for (std::size_t i = 0; i < plan.poison[b].size(); ++i) {
      double weight = w.dynamic;
      switch (plan.poison[b][i].kind) {
        case PoisonKind::kAttack:
          weight = w.attack;
          break;
        case PoisonKind::kLabelSpecific:
          weight = w.label_specific;
          break;
        default:
          break;
      }
      poison.weights()[i] = static_cast<float>(weight);
    }
    batch.append(poison);
    out.push_back(std::move(batch));
  }
  return out;
}

nlohmann::json PoisonedSource::describe() const {
  nlohmann::json counts = nlohmann::json::object();
  for (const auto& [k, c] : counts_) {
    counts[kind_name(k)] = c;
    if (k == PoisonKind::kFocusSingle) counts[kind_name(PoisonKind::kFocusPair)] = c;
  }
  return {{"plan", to_json(plan_)},
          {"generation", "online"},
          {"augment_before_stamp", config_.augment},
          {"batch_size", config_.batch_size},
          {"batches_per_epoch", num_batches_},
          {"poison_per_epoch", counts},
          {"victim_pool", victim_pool_.size()},
          {"label_specific_pool", other_pool_.size()},
          {"seed", config_.seed}};
}

}  // namespace partiscope::poisoning
