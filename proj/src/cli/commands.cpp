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

#include "partiscope/cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include <spdlog/spdlog.h>

#include "partiscope/cli/pipeline.hpp"
#include "partiscope/defense/defense.hpp"
#include "partiscope/error.hpp"
#include "partiscope/io/png.hpp"
#include "partiscope/metrics/metrics.hpp"

namespace partiscope::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void RunLayout::create() const {
  for (const auto& d : {root, checkpoints(), partitioner(), triggers(), reports(), plots()})
    fs::create_directories(d);
}

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
}

json seeds_json(const ExperimentConfig& c) {
  return {{"global", c.seed},          {"dataset", c.dataset.seed},
          {"partition", c.partition.seed}, {"poison", c.poison_seed},
          {"train", c.train.seed},     {"defense", c.defense.seed}};
}

ConfigMap load_run_config(const fs::path& run_dir, const std::vector<std::string>& files,
                          const std::vector<std::string>& overrides) {
  const RunLayout layout{run_dir};
  if (!fs::exists(layout.config()))
    throw DataError(run_dir.string() + " holds no config.resolved; is it an attack run?");
  ConfigMap map = ConfigMap::defaults();
  map.load_file(layout.config());
  for (const auto& f : files) map.load_file(f);
  for (const auto& o : overrides) map.apply_override(o);
  return map;
}

ImageBatch victims_of(const ImageBatch& batch, int victim) {
  return batch.subset(batch.indices_of_class(victim));
}

// Stamps every sample with the trigger of its own partition; samples
// without a partition are dropped.
ImageBatch stamp_matched(const ImageBatch& batch, const triggers::TriggerRegistry& registry) {
  ImageBatch out(batch.shape(), batch.num_classes());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int p = batch.partition(i);
    if (p == kUnassigned) continue;
    out.append_from(batch, i);
    triggers::apply_combo(out.image(out.size() - 1), triggers::TriggerCombo::single(p), registry);
  }
  return out;
}

json attack_summary(const training::ModelHandle& model, const ImageBatch& test,
                    const triggers::TriggerRegistry& registry, const ExperimentConfig& c) {
  const auto r = metrics::evaluate_attack(model, test, registry, c.plan.victim, c.plan.target);
  return {{"ba", r.ba},
          {"asr", r.asr},
          {"asr_other", r.asr_other.mean},
          {"asr_other_label", r.asr_other_label}};
}

ImageBatch random_subset(const ImageBatch& batch, std::size_t count, std::uint64_t seed) {
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(std::min(count, idx.size()));
  std::sort(idx.begin(), idx.end());
  return batch.subset(idx);
}

json run_nc(const training::ModelHandle& model, const ImageBatch& test,
            const ExperimentConfig& c, const RunLayout& layout) {
  const auto input = sweep_input(model, test, c);
  spdlog::info("neural cleanse: {} samples, {} candidate labels", input.samples.size(),
               input.labels.empty() ? test.num_classes() : static_cast<int>(input.labels.size()));
  const auto sweep = run_label_sweep(model, input, c);
  const fs::path dir = layout.plots() / "nc";
  fs::create_directories(dir);
  for (const auto& r : sweep.results) defense::save_inversion_images(r, test.shape(), dir);

  std::ofstream csv(layout.reports() / "nc_norms.csv");
  csv << "label,l1_norm,anomaly_index,flip_rate\n";
  for (std::size_t i = 0; i < sweep.labels.size(); ++i)
    csv << sweep.labels[i] << ',' << sweep.norms[i] << ',' << sweep.indices[i] << ','
        << sweep.results[i].flip_rate << '\n';

  json j = sweep.to_json();
  j["source"] = c.defense.nc_source;
  j["samples"] = input.samples.size();
  j["config"] = defense::to_json(c.defense.inversion);
  j["target_index"] = sweep.index_of(c.plan.target);
  j["target_flagged"] = std::find(sweep.flagged.begin(), sweep.flagged.end(), c.plan.target) !=
                        sweep.flagged.end();
  return j;
}

json run_strip(const training::ModelHandle& model, const ImageBatch& train, const ImageBatch& test,
               const triggers::TriggerRegistry& registry, const ExperimentConfig& c,
               const RunLayout& layout) {
  const auto& d = c.defense;
  const auto count = static_cast<std::size_t>(d.strip_samples);
  const ImageBatch clean = random_subset(test, count, d.seed);
  // Poisoned inputs: victim test samples with their matched trigger, drawn
  // with replacement when the victim class is smaller than `count`.
  const ImageBatch stamped = stamp_matched(victims_of(test, c.plan.victim), registry);
  if (stamped.empty()) throw DataError("STRIP needs victim test samples with partitions");
  std::mt19937_64 rng(d.seed ^ 0x5717u);
  std::uniform_int_distribution<std::size_t> pick(0, stamped.size() - 1);
  ImageBatch poisoned(stamped.shape(), stamped.num_classes());
  for (std::size_t i = 0; i < count; ++i) poisoned.append_from(stamped, pick(rng));

  spdlog::info("STRIP: {} clean and {} poisoned inputs, {} blends", clean.size(), poisoned.size(),
               d.strip_blends);
  const auto hc = defense::strip_entropies(model, clean, train, d.strip_blends, d.seed);
  const auto hp = defense::strip_entropies(model, poisoned, train, d.strip_blends, d.seed + count);

  std::ofstream csv(layout.reports() / "strip_entropies.csv");
  csv << "set,entropy\n";
  for (double h : hc) csv << "clean," << h << '\n';
  for (double h : hp) csv << "poisoned," << h << '\n';

  // Histogram plot: row 0 clean, row 1 poisoned, normalized per row.
  constexpr int kBins = 20;
  std::vector<double> hist(2 * kBins, 0.0);
  auto fill = [&](const std::vector<double>& v, int row) {
    for (double h : v) hist[row * kBins + std::clamp(static_cast<int>(h * kBins), 0, kBins - 1)] += 1;
    const double peak = *std::max_element(hist.begin() + row * kBins, hist.begin() + (row + 1) * kBins);
    if (peak > 0)
      for (int b = 0; b < kBins; ++b) hist[row * kBins + b] /= peak;
  };
  fill(hc, 0);
  fill(hp, 1);
  io::write_heatmap_png(layout.plots() / "strip_entropy_hist.png", hist, 2, kBins, 0.0, 1.0, 16);

  // Detection at the threshold rejecting 1% of clean inputs.
  std::vector<double> sorted = hc;
  std::sort(sorted.begin(), sorted.end());
  const double threshold = sorted[static_cast<std::size_t>(0.01 * static_cast<double>(sorted.size()))];
  const auto detected = std::count_if(hp.begin(), hp.end(), [&](double h) { return h < threshold; });
  const auto mean = [](const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  };
  return {{"clean", hc.size()},
          {"poisoned", hp.size()},
          {"blends", d.strip_blends},
          {"mean_entropy_clean", mean(hc)},
          {"mean_entropy_poisoned", mean(hp)},
          {"histogram_overlap", defense::histogram_overlap(hc, hp)},
          {"threshold_frr_1pct", threshold},
          {"detection_rate", 100.0 * static_cast<double>(detected) / static_cast<double>(hp.size())}};
}

json run_spectral(const training::ModelHandle& model, const ImageBatch& train,
                  const triggers::TriggerRegistry& registry, const ExperimentConfig& c) {
  const auto& d = c.defense;
  // The target class as the trainer saw it: clean target samples plus
  // stamped victim samples relabeled to the target.
  const ImageBatch clean = victims_of(train, c.plan.target);
  ImageBatch poisoned = stamp_matched(victims_of(train, c.plan.victim), registry);
  poisoned = random_subset(poisoned, static_cast<std::size_t>(d.spectral_poisoned), d.seed);
  if (poisoned.empty()) throw DataError("spectral scan needs victim samples with partitions");
  ImageBatch mixed = clean;
  for (std::size_t i = 0; i < poisoned.size(); ++i) mixed.append_from(poisoned, i);
  const auto scores = defense::spectral_scores(model, mixed);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t removed =
      std::min(order.size(), static_cast<std::size_t>(std::ceil(1.5 * poisoned.size())));
  std::size_t caught = 0;
  for (std::size_t k = 0; k < removed; ++k) caught += order[k] >= clean.size();
  double mean_clean = 0.0, mean_poisoned = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i)
    (i < clean.size() ? mean_clean : mean_poisoned) += scores[i];
  return {{"clean", clean.size()},
          {"poisoned", poisoned.size()},
          {"removed", removed},
          {"recall", 100.0 * static_cast<double>(caught) / static_cast<double>(poisoned.size())},
          {"mean_score_clean", mean_clean / static_cast<double>(clean.size())},
          {"mean_score_poisoned", mean_poisoned / static_cast<double>(poisoned.size())}};
}

std::vector<int> guess_partitions(const std::string& guess, const training::ModelHandle& model,
                                  const ImageBatch& victims, int n, std::uint64_t seed,
                                  const std::optional<std::vector<int>>& truth) {
  if (guess == "truth") {
    if (!truth) throw ConfigError("defense.adaptive.guess=truth needs the run's partitioner");
    return *truth;
  }
  if (guess == "random") {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, n - 1);
    std::vector<int> out(victims.size());
    for (auto& p : out) p = pick(rng);
    return out;
  }
  std::unique_ptr<partitioning::FeatureEncoder> encoder;
  if (guess == "inputs")
    encoder = std::make_unique<partitioning::PixelEncoder>(victims.shape());
  else
    encoder = std::make_unique<partitioning::ClassifierEncoder>(
        std::shared_ptr<const training::ModelHandle>(&model, [](const auto*) {}));
  return partitioning::kmeans_fit(encoder->encode(victims), n, seed).labels;
}

json run_adaptive(const training::ModelHandle& model, const ImageBatch& test,
                  const std::optional<partitioning::PartitionModel>& partitioner,
                  const ExperimentConfig& c) {
  const auto& d = c.defense;
  const ImageBatch victims = victims_of(test, c.plan.victim);
  std::optional<std::vector<int>> truth;
  if (partitioner)
    truth = partitioner->assign(victims);
  else
    spdlog::warn("no partitioner in the run; adaptive scan reports no max overlap");
  const auto guess =
      guess_partitions(d.adaptive_guess, model, victims, c.partition.n, d.seed, truth);
  auto cfg = d.inversion;
  cfg.seed = d.seed;
  std::optional<std::span<const int>> truth_span;
  if (truth) truth_span = std::span<const int>(*truth);
  const auto scan = defense::adaptive_scan(model, victims, guess, c.plan.victim, cfg, truth_span);
  json j = scan.to_json();
  j["guess"] = d.adaptive_guess;
  return j;
}

std::vector<int> partition_sizes(std::span<const int> parts, int n) {
  std::vector<int> s(n, 0);
  for (int p : parts)
    if (p >= 0 && p < n) ++s[p];
  return s;
}

}  // namespace

nlohmann::json cmd_attack(const ConfigMap& map, const fs::path& run_dir_arg) {
  const auto started = utc_now();
  ExperimentConfig c = ExperimentConfig::from_map(map);
  const fs::path run_dir = run_dir_arg.empty() ? c.output_dir : run_dir_arg;
  apply_isa(c.isa);
  LoadedData data = load_data(c);
  c.validate(data.data.train.num_classes());

  const RunLayout layout{run_dir};
  layout.create();
  map.write(layout.config());

  PartitionArtifacts art = fit_partitioner(c, data);
  if (art.clean) training::save_checkpoint(*art.clean, layout.checkpoints() / "clean.ckpt");
  partitioning::save_partition_model(*art.partitioner, layout.partitioner() / "partitioner.json");
  if (art.partitioner->kind() == partitioning::PartitionKind::kSurrogate)
    partitioning::save_partition_model(*art.clustering, layout.partitioner() / "clustering.json");

  ImageBatch& train = data.data.train;
  ImageBatch& test = data.data.test;
  assign_partitions(*art.partitioner, train);
  assign_partitions(*art.partitioner, test);
  balance_victims(train, c.plan.victim, c.partition.n, c.partition.balance_slack, c.partition.seed);

  const auto registry = make_triggers(c, train.shape());
  triggers::save_registry(registry, layout.triggers());

  AttackOutcome outcome = train_backdoor(c, train, registry);
  training::save_checkpoint(outcome.model, layout.checkpoints() / "model.ckpt");

  auto report = metrics::evaluate_attack(outcome.model, test, registry, c.plan.victim, c.plan.target);
  const auto victim_parts = victims_of(train, c.plan.victim).partitions();
  report.metadata["config"] = map.to_json();
  report.metadata["seeds"] = seeds_json(c);
  report.metadata["started"] = started;
  report.metadata["finished"] = utc_now();
  report.metadata["poisoning"] = outcome.poison_description;
  report.metadata["partitioning"] = art.stats;
  report.metadata["partitioning"]["train_victim_sizes"] = partition_sizes(victim_parts, c.partition.n);
  report.metadata["training"] = training::to_json(c.train);
  report.metadata["training"]["final_loss"] =
      outcome.model.epoch_losses.empty() ? 0.0 : outcome.model.epoch_losses.back();
  report.metadata["hyperparameters"] = "artifact defaults unless set in the config";

  const json j = report.to_json();
  write_json(layout.reports() / "attack.json", j);
  metrics::write_matrix_csv(report.matrix, layout.reports() / "asr_matrix.csv");
  metrics::write_matrix_heatmap(report.matrix, layout.plots() / "asr_matrix.png");
  spdlog::info("BA {:.2f}  ASR {:.2f}  ASR-other {:.2f}  ASR-other-label {:.2f}", report.ba,
               report.asr, report.asr_other.mean, report.asr_other_label);
  return j;
}

nlohmann::json cmd_defend(const fs::path& run_dir, const std::vector<std::string>& config_files,
                          const std::vector<std::string>& overrides) {
  const auto started = utc_now();
  const ConfigMap map = load_run_config(run_dir, config_files, overrides);
  const ExperimentConfig c = ExperimentConfig::from_map(map);
  apply_isa(c.isa);
  LoadedData data = load_data(c);
  c.validate(data.data.train.num_classes());
  const RunLayout layout{run_dir};
  fs::create_directories(layout.reports());
  fs::create_directories(layout.plots());

  const auto model = training::load_checkpoint(layout.checkpoints() / "model.ckpt", c.train.arch);
  const auto registry = triggers::load_registry(layout.triggers());
  std::optional<partitioning::PartitionModel> partitioner;
  if (fs::exists(layout.partitioner() / "partitioner.json"))
    partitioner = partitioning::load_partition_model(layout.partitioner() / "partitioner.json");

  ImageBatch& train = data.data.train;
  ImageBatch& test = data.data.test;
  const bool need_partitions =
      std::any_of(c.defense.methods.begin(), c.defense.methods.end(),
                  [](const std::string& m) { return m != "nc" && m != "adaptive"; });
  if (need_partitions) {
    if (!partitioner) throw DataError("the run holds no partitioner; cannot stamp triggers");
    assign_partitions(*partitioner, train);
    assign_partitions(*partitioner, test);
  }

  json out = {{"config", map.to_json()}, {"seeds", seeds_json(c)}, {"started", started}};
  json& results = out["defenses"] = json::object();
  const ImageBatch subset = clean_subset(train, c.defense.finetune_fraction, c.defense.seed);
  for (const auto& method : c.defense.methods) {
    spdlog::info("defense: {}", method);
    if (method == "nc") {
      results["nc"] = run_nc(model, test, c, layout);
    } else if (method == "strip") {
      results["strip"] = run_strip(model, train, test, registry, c, layout);
    } else if (method == "spectral") {
      results["spectral"] = run_spectral(model, train, registry, c);
    } else if (method == "finetune" || method == "fineprune") {
      const auto tuned = method == "finetune"
                             ? training::fine_tune(model, subset, c.defense.finetune)
                             : defense::fine_prune(model, subset, c.defense.prune_fraction,
                                                   c.defense.finetune);
      json j = {{"samples", subset.size()},
                {"fraction", c.defense.finetune_fraction},
                {"config", training::to_json(c.defense.finetune)},
                {"before", attack_summary(model, test, registry, c)},
                {"after", attack_summary(tuned, test, registry, c)}};
      if (method == "fineprune") j["prune_fraction"] = c.defense.prune_fraction;
      results[method] = j;
    } else if (method == "adaptive") {
      results["adaptive"] = run_adaptive(model, test, partitioner, c);
    }
  }
  out["finished"] = utc_now();
  write_json(layout.reports() / "defense.json", out);
  return out;
}

nlohmann::json cmd_report(const std::vector<fs::path>& run_dirs, const fs::path& out_dir) {
  if (run_dirs.empty()) throw ConfigError("report needs at least one run directory");
  struct Column {
    std::string name;
    std::string section;  // "attack" or "defense"
    json::json_pointer pointer;
  };
  const std::vector<Column> columns = {
      {"strategy", "attack", json::json_pointer("/metadata/config/poison.strategy")},
      {"ba", "attack", json::json_pointer("/ba")},
      {"asr", "attack", json::json_pointer("/asr")},
      {"asr_other", "attack", json::json_pointer("/asr_other/mean")},
      {"asr_other_std", "attack", json::json_pointer("/asr_other/std")},
      {"asr_indi", "attack", json::json_pointer("/asr_indi/mean")},
      {"asr_comb", "attack", json::json_pointer("/asr_comb/mean")},
      {"asr_other_label", "attack", json::json_pointer("/asr_other_label")},
      {"nc_target_index", "defense", json::json_pointer("/defenses/nc/target_index")},
      {"nc_model_index", "defense", json::json_pointer("/defenses/nc/model_index")},
      {"strip_overlap", "defense", json::json_pointer("/defenses/strip/histogram_overlap")},
      {"spectral_recall", "defense", json::json_pointer("/defenses/spectral/recall")},
      {"finetune_ba", "defense", json::json_pointer("/defenses/finetune/after/ba")},
      {"finetune_asr", "defense", json::json_pointer("/defenses/finetune/after/asr")},
      {"fineprune_ba", "defense", json::json_pointer("/defenses/fineprune/after/ba")},
      {"fineprune_asr", "defense", json::json_pointer("/defenses/fineprune/after/asr")},
  };

  fs::create_directories(out_dir);
  json rows = json::array();
  std::map<std::string, int> seen;
  bool any = false;
  for (const auto& dir : run_dirs) {
    if (!fs::is_directory(dir)) throw DataError(dir.string() + " is not a directory");
    const RunLayout layout{dir};
    std::string name = fs::absolute(dir).lexically_normal().filename().string();
    if (name.empty()) name = fs::absolute(dir).lexically_normal().parent_path().filename().string();
    if (const int k = seen[name]++; k > 0) name += "_" + std::to_string(k + 1);
    std::map<std::string, json> docs;
    for (const char* section : {"attack", "defense"}) {
      const fs::path p = layout.reports() / (std::string(section) + ".json");
      if (fs::exists(p)) docs[section] = read_json(p);
    }
    json row = {{"run", name}};
    if (docs.empty()) {
      row["missing"] = "no reports";
    } else {
      any = true;
      for (const auto& col : columns) {
        auto it = docs.find(col.section);
        if (it != docs.end() && it->second.contains(col.pointer))
          row[col.name] = it->second.at(col.pointer);
      }
      if (docs.count("attack")) {
        const auto m = metrics::AsrMatrix::from_json(docs["attack"].at("asr_matrix"));
        metrics::write_matrix_heatmap(m, out_dir / ("asr_matrix_" + name + ".png"));
        metrics::write_matrix_csv(m, out_dir / ("asr_matrix_" + name + ".csv"));
      }
    }
    rows.push_back(row);
  }
  if (!any) throw DataError("no attack or defense reports found in the given run directories");

  auto cell = [](const json& row, const std::string& key, const std::string& gap) {
    if (!row.contains(key)) return gap;
    const json& v = row.at(key);
    if (v.is_number_float()) {
      std::ostringstream os;
      os << std::fixed << std::setprecision(2) << v.get<double>();
      return os.str();
    }
    return v.is_string() ? v.get<std::string>() : v.dump();
  };
  std::ofstream csv(out_dir / "summary.csv");
  std::ofstream md(out_dir / "summary.md");
  csv << "run";
  md << "| run";
  for (const auto& col : columns) {
    csv << ',' << col.name;
    md << " | " << col.name;
  }
  csv << '\n';
  md << " |\n|---";
  for (std::size_t i = 0; i < columns.size(); ++i) md << "|---";
  md << "|\n";
  for (const auto& row : rows) {
    csv << cell(row, "run", "");
    md << "| " << cell(row, "run", "");
    for (const auto& col : columns) {
      csv << ',' << cell(row, col.name, "");
      md << " | " << cell(row, col.name, "n/a");
    }
    csv << '\n';
    md << " |\n";
  }
  json summary = {{"runs", rows}};
  write_json(out_dir / "summary.json", summary);
  return summary;
}

nlohmann::json cmd_partition_inspect(const ConfigMap& map_arg, const fs::path& run_dir) {
  const ConfigMap map = run_dir.empty() ? map_arg : load_run_config(run_dir, {}, {});
  const ExperimentConfig c = ExperimentConfig::from_map(map);
  apply_isa(c.isa);
  const LoadedData data = load_data(c);
  c.validate(data.data.train.num_classes());
  const int victim = c.plan.victim;
  const int n = c.partition.n;

  json out = json::object();
  std::optional<partitioning::PartitionModel> partitioner;
  if (run_dir.empty()) {
    PartitionArtifacts art = fit_partitioner(c, data);
    out["fit"] = art.stats;
    partitioner = std::move(art.partitioner);
  } else {
    partitioner =
        partitioning::load_partition_model(RunLayout{run_dir}.partitioner() / "partitioner.json");
  }
  out["kind"] = partitioning::kind_name(partitioner->kind());
  out["n"] = partitioner->n_partitions();

  const auto inspect = [&](const ImageBatch& batch, const std::optional<std::vector<int>>& modes,
                           const char* name) {
    const auto rows = batch.indices_of_class(victim);
    const auto parts = partitioner->assign(batch.subset(rows));
    json j = {{"victims", rows.size()}, {"sizes", partition_sizes(parts, n)}};
    if (modes) {
      std::vector<int> truth;
      for (std::size_t r : rows) truth.push_back((*modes)[r]);
      j["mode_overlap"] = 100.0 * partitioning::max_overlap(parts, truth);
    }
    out[name] = j;
  };
  inspect(data.data.train, data.train_modes, "train");
  inspect(data.data.test, data.test_modes, "test");
  return out;
}

}  // namespace partiscope::cli
