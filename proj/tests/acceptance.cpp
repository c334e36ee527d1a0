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

// Acceptance suite: trains the desk-scale models and checks every primary
// criterion at its pinned tolerance. One PASS/FAIL line per criterion;
// indented lines carry the measured values.
#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "partiscope/cli/config.hpp"
#include "partiscope/cli/pipeline.hpp"
#include "partiscope/defense/defense.hpp"
#include "partiscope/metrics/metrics.hpp"
#include "partiscope/nn/loss.hpp"
#include "partiscope/partitioning/partition_model.hpp"
#include "partiscope/poisoning/poison.hpp"

using namespace partiscope;
using poisoning::Strategy;
using triggers::TriggerCombo;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

struct Verdict {
  bool ok = true;
  std::vector<std::string> notes;

  void check(bool cond, std::string note) {
    ok = ok && cond;
    notes.push_back(std::string(cond ? "ok   " : "MISS ") + std::move(note));
  }
};

std::string fmt(const char* f, double a, double b = 0.0, double c = 0.0, double d = 0.0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

// ---- trained-model runs ---------------------------------------------------

struct StrategyRun {
  training::ModelHandle model;
  metrics::AttackReport report;
  double asr_after_finetune = 0.0;
  double ba_after_finetune = 0.0;
};

struct SeedRun {
  std::uint64_t seed = 0;
  double agreement = 0.0;  // surrogate vs clustering on held-out victims
  std::map<Strategy, StrategyRun> runs;
  std::map<Strategy, defense::LabelSweep> sweeps;
  ImageBatch test_victims;
  triggers::TriggerRegistry registry;
  int target = 1;
};

cli::ExperimentConfig config_for(std::uint64_t seed, Strategy strategy) {
  auto map = cli::ConfigMap::defaults();
  map.set("seed", std::to_string(seed));
  map.set("poison.strategy", poisoning::strategy_name(strategy));
  return cli::ExperimentConfig::from_map(map);
}

SeedRun run_seed(std::uint64_t seed) {
  SeedRun out;
  out.seed = seed;
  const auto t0 = Clock::now();
  auto base = config_for(seed, Strategy::kFocus);
  cli::LoadedData data = cli::load_data(base);
  base.validate(data.data.train.num_classes());
  auto art = cli::fit_partitioner(base, data);
  out.agreement = art.stats.value("surrogate_cluster_agreement", 0.0);

  ImageBatch& train = data.data.train;
  ImageBatch& test = data.data.test;
  cli::assign_partitions(*art.partitioner, train);
  cli::assign_partitions(*art.partitioner, test);
  cli::balance_victims(train, base.plan.victim, base.partition.n, base.partition.balance_slack,
                       base.partition.seed);
  out.registry = cli::make_triggers(base, train.shape());
  out.test_victims = test.subset(test.indices_of_class(base.plan.victim));
  out.target = base.plan.target;
  std::printf("  seed %llu: partitioner ready in %.0fs (agreement %.1f%%)\n",
              static_cast<unsigned long long>(seed), seconds_since(t0), out.agreement);

  const ImageBatch subset =
      cli::clean_subset(train, base.defense.finetune_fraction, base.defense.seed);
  for (Strategy s : {Strategy::kSimple, Strategy::kAdversarial, Strategy::kFocus}) {
    const auto t1 = Clock::now();
    const auto cfg = config_for(seed, s);
    StrategyRun run{cli::train_backdoor(cfg, train, out.registry).model, {}, 0.0, 0.0};
    run.report = metrics::evaluate_attack(run.model, test, out.registry, cfg.plan.victim,
                                          cfg.plan.target);
    const auto tuned = training::fine_tune(run.model, subset, cfg.defense.finetune);
    run.asr_after_finetune = metrics::asr(tuned, out.test_victims, out.registry, cfg.plan.target);
    run.ba_after_finetune = metrics::benign_accuracy(tuned, test);
    std::printf("  seed %llu %-11s BA %.2f ASR %.2f other %.2f indi %.2f comb %.2f "
                "other-label %.2f | fine-tuned BA %.2f ASR %.2f (%.0fs)\n",
                static_cast<unsigned long long>(seed), poisoning::strategy_name(s).c_str(),
                run.report.ba, run.report.asr, run.report.asr_other.mean,
                run.report.asr_indi.mean, run.report.asr_comb.mean, run.report.asr_other_label,
                run.ba_after_finetune, run.asr_after_finetune, seconds_since(t1));
    if (s != Strategy::kAdversarial) {
      const auto t2 = Clock::now();
      const auto input = cli::sweep_input(run.model, test, cfg);
      out.sweeps[s] = cli::run_label_sweep(run.model, input, cfg);
      const auto& sw = out.sweeps[s];
      std::printf("  seed %llu %-11s NC target index %.3f, min-norm label %d (index %.3f) (%.0fs)\n",
                  static_cast<unsigned long long>(seed), poisoning::strategy_name(s).c_str(),
                  sw.index_of(cfg.plan.target), sw.min_norm_label, sw.model_index,
                  seconds_since(t2));
    }
    out.runs.emplace(s, std::move(run));
  }
  std::fflush(stdout);
  return out;
}

// ---- criteria ---------------------------------------------------------------

Verdict strategy_ordering(const std::vector<SeedRun>& seeds) {
  Verdict v;
  for (const auto& s : seeds) {
    const auto& simple = s.runs.at(Strategy::kSimple).report;
    const auto& focus = s.runs.at(Strategy::kFocus).report;
    v.check(simple.asr_other.mean >= 80.0,
            fmt("seed %.0f simple ASR-other %.2f >= 80", s.seed, simple.asr_other.mean));
    v.check(focus.asr >= 80.0, fmt("seed %.0f focus matched ASR %.2f >= 80", s.seed, focus.asr));
    v.check(focus.asr_comb.mean <= 10.0,
            fmt("seed %.0f focus ASR-comb %.2f <= 10", s.seed, focus.asr_comb.mean));
    v.check(focus.asr_indi.mean <= 25.0,
            fmt("seed %.0f focus ASR-indi %.2f <= 25", s.seed, focus.asr_indi.mean));
  }
  return v;
}

// Recomputes the matrix by stamping each victim image by hand and taking the
// argmax of its logits.
std::vector<std::size_t> oracle_hits(const training::ModelHandle& model, const SeedRun& s,
                                     const std::vector<TriggerCombo>& combos, int n) {
  std::vector<std::size_t> hits(combos.size() * n, 0);
  const auto& victims = s.test_victims;
  for (std::size_t r = 0; r < combos.size(); ++r) {
    ImageBatch stamped = victims;
    for (std::size_t i = 0; i < stamped.size(); ++i)
      for (int t : combos[r].members())
        triggers::apply_trigger(stamped.image(i), stamped.shape(), s.registry[t]);
    const nn::Tensor logits = model.logits(stamped);
    for (std::size_t i = 0; i < stamped.size(); ++i) {
      const int pred = nn::argmax(logits.sample(i), static_cast<int>(logits.features()));
      if (pred == s.target) ++hits[r * n + victims.partition(i)];
    }
  }
  return hits;
}

Verdict matrix_shape(const std::vector<SeedRun>& seeds) {
  Verdict v;
  for (const auto& s : seeds) {
    for (Strategy st : {Strategy::kSimple, Strategy::kFocus}) {
      const auto& run = s.runs.at(st);
      const auto& m = run.report.matrix;
      const auto oracle = oracle_hits(run.model, s, m.combos, m.n);
      v.check(oracle == m.hits, fmt("seed %.0f ", s.seed) + poisoning::strategy_name(st) +
                                    " matrix equals the per-sample oracle");
      double lo_single = 101.0, hi_multi = -1.0, lo_all = 101.0;
      for (std::size_t r = 0; r < m.rows(); ++r)
        for (int p = 0; p < m.n; ++p) {
          const double c = m.cell(r, p);
          if (std::isnan(c)) continue;
          lo_all = std::min(lo_all, c);
          if (m.combos[r].size() >= 2) hi_multi = std::max(hi_multi, c);
          if (m.combos[r] == TriggerCombo::single(p)) lo_single = std::min(lo_single, c);
        }
      if (st == Strategy::kFocus) {
        v.check(hi_multi <= 15.0, fmt("seed %.0f focus max multi-trigger cell %.2f <= 15", s.seed, hi_multi));
        v.check(lo_single >= 75.0, fmt("seed %.0f focus min matched cell %.2f >= 75", s.seed, lo_single));
      } else {
        v.check(lo_all >= 75.0, fmt("seed %.0f simple min cell %.2f >= 75", s.seed, lo_all));
      }
    }
  }
  return v;
}

Verdict nc_ordering(const std::vector<SeedRun>& seeds) {
  Verdict v;
  for (const auto& s : seeds) {
    const double simple = s.sweeps.at(Strategy::kSimple).index_of(s.target);
    const double focus = s.sweeps.at(Strategy::kFocus).index_of(s.target);
    v.check(simple > focus, fmt("seed %.0f index(simple) %.3f > index(focus) %.3f", s.seed, simple, focus));
    v.check(focus < 2.0, fmt("seed %.0f index(focus) %.3f < 2", s.seed, focus));
    v.check(simple > 2.0, fmt("seed %.0f index(simple) %.3f > 2", s.seed, simple));
  }
  return v;
}

Verdict mitigation_gap(const std::vector<SeedRun>& seeds) {
  Verdict v;
  for (const auto& s : seeds) {
    const double focus = s.runs.at(Strategy::kFocus).asr_after_finetune;
    const double simple = s.runs.at(Strategy::kSimple).asr_after_finetune;
    v.check(focus >= 3.0 * simple,
            fmt("seed %.0f fine-tuned ASR focus %.2f >= 3 x simple %.2f", s.seed, focus, simple));
    v.check(focus >= 20.0, fmt("seed %.0f fine-tuned focus ASR %.2f >= 20", s.seed, focus));
  }
  return v;
}

Verdict label_specificity(const std::vector<SeedRun>& seeds) {
  Verdict v;
  for (const auto& s : seeds) {
    const auto& r = s.runs.at(Strategy::kFocus).report;
    v.check(r.asr_other_label <= 25.0,
            fmt("seed %.0f focus ASR-other-label %.2f <= 25", s.seed, r.asr_other_label));
    v.check(r.asr >= 75.0, fmt("seed %.0f focus matched ASR %.2f >= 75", s.seed, r.asr));
  }
  return v;
}

double kmeans_cost(const partitioning::Features& x, const std::vector<int>& labels, int k) {
  std::vector<double> sum(k * x.cols, 0.0);
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    ++count[labels[i]];
    for (std::size_t j = 0; j < x.cols; ++j) sum[labels[i] * x.cols + j] += x.row(i)[j];
  }
  double cost = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.row(i)[j] - sum[labels[i] * x.cols + j] / count[labels[i]];
      cost += d * d;
    }
  return cost;
}

Verdict partitioning_correctness(const std::vector<SeedRun>& seeds) {
  Verdict v;
  // Exhaustive optimum over all assignments of at most 8 points.
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> g(0.0, 2.0);
  int exact = 0, trials = 0;
  for (int n = 4; n <= 8; ++n)
    for (int k = 2; k <= 3; ++k)
      for (int rep = 0; rep < 3; ++rep) {
        partitioning::Features x(n, 2);
        for (auto& val : x.values) val = g(rng);
        double best = std::numeric_limits<double>::infinity();
        std::vector<int> labels(n);
        int total = 1;
        for (int i = 0; i < n; ++i) total *= k;
        for (int code = 0; code < total; ++code) {
          std::set<int> used;
          for (int i = 0, c = code; i < n; ++i, c /= k) used.insert(labels[i] = c % k);
          if (static_cast<int>(used.size()) == k) best = std::min(best, kmeans_cost(x, labels, k));
        }
        const auto fit = partitioning::kmeans_fit(x, k, static_cast<std::uint64_t>(rep + 1));
        ++trials;
        exact += std::fabs(kmeans_cost(x, fit.labels, k) - best) <= 1e-12 * (1.0 + best);
      }
  v.check(exact == trials, fmt("k-means optimum on %.0f/%.0f small sets", exact, trials));

  for (const auto& s : seeds)
    v.check(s.agreement >= 70.0,
            fmt("seed %.0f surrogate/clustering agreement on held-out victims %.2f >= 70", s.seed,
                s.agreement));

  std::vector<int> guess, truth;
  for (int gp = 0; gp < 4; ++gp)
    for (int t = 0; t < 4; ++t)
      for (int r = 0; r < 50; ++r) guess.push_back(gp), truth.push_back(t);
  const double equal4 = 100.0 * partitioning::max_overlap(guess, truth);
  guess.clear();
  truth.clear();
  for (int gp = 0; gp < 4; ++gp)
    for (int r = 0; r < 100; ++r) guess.push_back(gp), truth.push_back(r < 50 ? gp : (gp + 1) % 4);
  const double half = 100.0 * partitioning::max_overlap(guess, truth);
  v.check(std::fabs(equal4 - 25.0) <= 2.0, fmt("MO equal-4 %.2f within 25 +- 2", equal4));
  v.check(std::fabs(half - 50.0) <= 2.0, fmt("MO half/half %.2f within 50 +- 2", half));
  return v;
}

Verdict defense_formulas() {
  Verdict v;
  const std::vector<double> norms = {10, 12, 11, 13, 3};
  const double idx = defense::anomaly_index(norms)[4];
  v.check(std::fabs(idx - 5.396) <= 0.001, fmt("anomaly index %.4f = 5.396 +- 0.001", idx));

  const std::vector<double> uniform(10, 0.1);
  const double h = defense::normalized_entropy(uniform);
  v.check(h == 1.0, fmt("uniform normalized entropy %.17g == 1", h));

  std::mt19937_64 rng(99);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    partitioning::Features x(20, 8);
    for (auto& val : x.values) val = g(rng);
    const auto scores = defense::spectral_scores(x);
    Eigen::MatrixXd m(20, 8);
    for (int i = 0; i < 20; ++i)
      for (int j = 0; j < 8; ++j) m(i, j) = x.row(i)[j];
    m.rowwise() -= m.colwise().mean();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(m);
    const double s2 = svd.singularValues()(0) * svd.singularValues()(0);
    double total = 0.0;
    for (double sc : scores) total += sc;
    worst = std::max(worst, std::fabs(total - s2) / s2);
  }
  v.check(worst <= 1e-6, fmt("spectral energy identity, worst relative error %.3g <= 1e-6", worst));
  return v;
}

Verdict invariants() {
  Verdict v;
  const ImageShape shape{3, 32, 32};
  const auto reg = triggers::make_registry(shape, 8);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<float> u(0.1f, 0.9f);
  std::vector<float> base(shape.size());
  for (auto& p : base) p = u(rng);
  auto stamp = [&](std::vector<float> img, TriggerCombo c) {
    triggers::apply_combo(img, c, reg);
    return img;
  };
  auto changed = [&](const std::vector<float>& a) {
    int n = 0;
    for (std::size_t p = 0; p < shape.plane(); ++p) {
      bool d = false;
      for (int c = 0; c < 3; ++c) d |= a[c * shape.plane() + p] != base[c * shape.plane() + p];
      n += d;
    }
    return n;
  };
  bool union_ok = true, idem_ok = true, count_ok = true;
  for (const auto c : triggers::all_combos(8)) {
    const auto once = stamp(base, c);
    idem_ok = idem_ok && stamp(once, c) == once;
    count_ok = count_ok && changed(once) == 36 * c.size();
    std::vector<float> seq = base;
    for (int t : c.members()) seq = stamp(seq, TriggerCombo::single(t));
    union_ok = union_ok && seq == once;
  }
  v.check(union_ok, "trigger union equals sequential stamping (255 combos)");
  v.check(idem_ok, "stamping is idempotent (255 combos)");
  v.check(count_ok, "stamped pixel count is 36 per trigger (255 combos)");

  // Focus enumeration on a synthetic partitioned victim set.
  data::SyntheticConfig sc;
  sc.classes = 3;
  sc.train_per_class = 40;
  sc.test_per_class = 4;
  auto set = data::generate_synthetic(sc, 3);
  ImageBatch& train = set.data.train;
  for (std::size_t i = 0; i < train.size(); ++i) train.partitions()[i] = static_cast<int>(i % 4);
  const ImageBatch victims = train.subset(train.indices_of_class(0));
  std::mt19937_64 prng(11);
  const auto attack = poisoning::make_attack_samples(victims, 1, 4);
  const auto focus = poisoning::make_focus_samples(victims, 0, 4, prng);
  std::map<std::size_t, std::set<std::pair<std::uint32_t, int>>> got;
  std::map<std::size_t, int> wrong;
  for (const auto& s : attack) got[s.source].insert({s.combo.mask(), s.label});
  for (const auto& s : focus) {
    got[s.source].insert({s.combo.mask(), s.label});
    if (s.kind == poisoning::PoisonKind::kFocusSingle) wrong[s.source] = s.combo.members().front();
  }
  bool enum_ok = attack.size() == victims.size() && focus.size() == 2 * victims.size();
  for (const auto& [row, samples] : got) {
    const int i = victims.partition(row), j = wrong.at(row);
    const std::set<std::pair<std::uint32_t, int>> expected = {
        {TriggerCombo::single(i).mask(), 1}, {TriggerCombo::single(j).mask(), 0},
        {TriggerCombo::pair(i, j).mask(), 0}};
    enum_ok = enum_ok && i != j && samples == expected;
  }
  v.check(enum_ok, "focus combo multiset is {T_i->y_T} u {T_j->y_V} u {[T_i,T_j]->y_V}");

  // Determinism of the seeded pipelines that do not train.
  const auto again = data::generate_synthetic(sc, 3);
  v.check(again.data.train.pixels() == set.data.train.pixels() &&
              again.train_modes == set.train_modes,
          "synthetic generation is deterministic");
  v.check(data::augment(train, 4).pixels() == data::augment(train, 4).pixels(),
          "augmentation is deterministic");
  poisoning::PoisonPlan plan;
  plan.victim = 0;
  plan.target = 1;
  plan.n_partitions = 4;
  const auto small_reg = triggers::make_registry(train.shape(), 4);
  poisoning::BatchConfig bc;
  bc.batch_size = 32;
  poisoning::PoisonedSource a(train, plan, small_reg, bc), b(train, plan, small_reg, bc);
  const auto ea = a.epoch(2), eb = b.epoch(2);
  bool same = ea.size() == eb.size();
  for (std::size_t i = 0; same && i < ea.size(); ++i)
    same = ea[i].pixels() == eb[i].pixels() && ea[i].labels() == eb[i].labels() &&
           ea[i].weights() == eb[i].weights();
  v.check(same, "poisoned epochs are deterministic");
  partitioning::Features x(30, 3);
  std::normal_distribution<double> g(0.0, 1.0);
  for (auto& val : x.values) val = g(rng);
  v.check(partitioning::kmeans_fit(x, 3, 7).labels == partitioning::kmeans_fit(x, 3, 7).labels,
          "k-means is deterministic");
  return v;
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::warn);
  std::setvbuf(stdout, nullptr, _IOLBF, 0);
  const auto t0 = Clock::now();
  const std::vector<std::uint64_t> seed_ids = {1, 2};

  struct Row {
    int id;
    const char* name;
    std::function<Verdict(const std::vector<SeedRun>&)> fn;
  };
  const std::vector<Row> rows = {
      {1, "strategy ordering", strategy_ordering},
      {2, "ASR matrix shape", matrix_shape},
      {3, "NC anomaly ordering", nc_ordering},
      {4, "mitigation resilience gap", mitigation_gap},
      {5, "label specificity", label_specificity},
      {6, "partitioning correctness", partitioning_correctness},
      {7, "defense formula oracles", [](const auto&) { return defense_formulas(); }},
      {8, "invariant suites", [](const auto&) { return invariants(); }},
  };

  std::vector<SeedRun> seeds;
  std::printf("training desk-scale models for seeds 1 and 2\n");
  for (auto s : seed_ids) seeds.push_back(run_seed(s));

  int failed = 0;
  std::printf("\n");
  for (const auto& row : rows) {
    const Verdict v = row.fn(seeds);
    failed += !v.ok;
    std::printf("%s [%d] %s\n", v.ok ? "PASS" : "FAIL", row.id, row.name);
    for (const auto& note : v.notes) std::printf("       %s\n", note.c_str());
  }
  std::printf("\n%zu criteria, %d failed, %.0fs\n", rows.size(), failed, seconds_since(t0));
  return failed == 0 ? 0 : 1;
}
