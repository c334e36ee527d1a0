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

#include "partiscope/metrics/metrics.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "partiscope/error.hpp"
#include "partiscope/io/png.hpp"

namespace partiscope::metrics {
namespace {

double pct(std::size_t hit, std::size_t total) {
  return total ? 100.0 * static_cast<double>(hit) / static_cast<double>(total)
               : std::numeric_limits<double>::quiet_NaN();
}

nlohmann::json ms_json(const MeanStd& m) {
  return {{"mean", m.mean}, {"std", m.std}, {"cells", m.cells}};
}

MeanStd ms_from(const nlohmann::json& j) {
  return {j.at("mean").get<double>(), j.at("std").get<double>(), j.at("cells").get<std::size_t>()};
}

}  // namespace

double benign_accuracy(const training::ModelHandle& model, const ImageBatch& test) {
  return 100.0 * training::accuracy(model, test);
}

std::vector<int> stamped_predictions(const training::ModelHandle& model, const ImageBatch& batch,
                                     TriggerCombo combo, const TriggerRegistry& registry) {
  ImageBatch stamped = batch;
  triggers::stamp_batch(stamped, combo, registry);
  return model.predict(stamped);
}

double asr(const training::ModelHandle& model, const ImageBatch& victims,
           const TriggerRegistry& registry, int target) {
  if (victims.empty()) throw DataError("ASR needs at least one victim sample");
  if (!victims.has_partitions()) throw DataError("ASR needs partition ids");
  ImageBatch stamped = victims;
  for (std::size_t i = 0; i < stamped.size(); ++i) {
    const int p = stamped.partition(i);
    if (p < 0 || p >= registry.size())
      throw DataError("victim sample " + std::to_string(i) + " has no valid partition");
    triggers::apply_combo(stamped.image(i), TriggerCombo::single(p), registry);
  }
  const auto pred = model.predict(stamped);
  std::size_t hit = 0;
  for (int y : pred) hit += y == target;
  return pct(hit, pred.size());
}

MeanStd mean_std(std::span<const double> values) {
  MeanStd m;
  double sum = 0.0;
  for (double v : values)
    if (std::isfinite(v)) {
      sum += v;
      ++m.cells;
    }
  if (m.cells == 0) return {std::numeric_limits<double>::quiet_NaN(), 0.0, 0};
  m.mean = sum / static_cast<double>(m.cells);
  double var = 0.0;
  for (double v : values)
    if (std::isfinite(v)) var += (v - m.mean) * (v - m.mean);
  m.std = std::sqrt(var / static_cast<double>(m.cells));
  return m;
}

double AsrMatrix::cell(std::size_t row, int partition) const {
  return pct(hits[row * n + partition], partition_sizes[partition]);
}

std::vector<double> AsrMatrix::cells() const {
  std::vector<double> out;
  for (std::size_t r = 0; r < rows(); ++r)
    for (int p = 0; p < n; ++p) out.push_back(cell(r, p));
  return out;
}

double AsrMatrix::matched() const {
  std::size_t hit = 0, total = 0;
  for (std::size_t r = 0; r < rows(); ++r) {
    if (combos[r].size() != 1) continue;
    const int p = combos[r].members().front();
    hit += hits[r * n + p];
    total += partition_sizes[p];
  }
  return pct(hit, total);
}

MeanStd AsrMatrix::other() const {
  std::vector<double> v;
  for (std::size_t r = 0; r < rows(); ++r)
    for (int p = 0; p < n; ++p)
      if (!(combos[r].size() == 1 && combos[r].contains(p))) v.push_back(cell(r, p));
  return mean_std(v);
}

MeanStd AsrMatrix::indi() const {
  std::vector<double> v;
  for (std::size_t r = 0; r < rows(); ++r)
    if (combos[r].size() == 1)
      for (int p = 0; p < n; ++p)
        if (!combos[r].contains(p)) v.push_back(cell(r, p));
  return mean_std(v);
}

MeanStd AsrMatrix::comb() const {
  std::vector<double> v;
  for (std::size_t r = 0; r < rows(); ++r)
    if (combos[r].size() >= 2)
      for (int p = 0; p < n; ++p) v.push_back(cell(r, p));
  return mean_std(v);
}

nlohmann::json AsrMatrix::to_json() const {
  nlohmann::json rows_j = nlohmann::json::array();
  for (std::size_t r = 0; r < rows(); ++r) {
    nlohmann::json cells_j = nlohmann::json::array();
    nlohmann::json hits_j = nlohmann::json::array();
    for (int p = 0; p < n; ++p) {
      const double c = cell(r, p);
      cells_j.push_back(std::isfinite(c) ? nlohmann::json(c) : nlohmann::json(nullptr));
      hits_j.push_back(hits[r * n + p]);
    }
    rows_j.push_back({{"combo", combos[r].to_string(n)}, {"asr", cells_j}, {"hits", hits_j}});
  }
  return {{"n", n}, {"partition_sizes", partition_sizes}, {"rows", rows_j}};
}

AsrMatrix AsrMatrix::from_json(const nlohmann::json& j) {
  AsrMatrix m;
  m.n = j.at("n").get<int>();
  m.partition_sizes = j.at("partition_sizes").get<std::vector<std::size_t>>();
  if (m.partition_sizes.size() != static_cast<std::size_t>(m.n))
    throw DataError("ASR matrix partition sizes do not match n");
  for (const auto& r : j.at("rows")) {
    m.combos.push_back(TriggerCombo::parse(r.at("combo").get<std::string>()));
    const auto h = r.at("hits").get<std::vector<std::size_t>>();
    if (h.size() != m.partition_sizes.size()) throw DataError("ASR matrix row has the wrong width");
    m.hits.insert(m.hits.end(), h.begin(), h.end());
  }
  return m;
}

AsrMatrix asr_matrix(const training::ModelHandle& model, const ImageBatch& victims,
                     const TriggerRegistry& registry, int target) {
  const int n = registry.size();
  if (n > triggers::kMaxTriggers) throw ConfigError("ASR matrix supports n <= 8");
  if (victims.empty()) throw DataError("ASR matrix needs victim samples");
  if (!victims.has_partitions()) throw DataError("ASR matrix needs partition ids");
  AsrMatrix m;
  m.n = n;
  m.combos = triggers::all_combos(n);
  m.partition_sizes.assign(n, 0);
  for (int p : victims.partitions())
    if (p >= 0 && p < n) ++m.partition_sizes[p];
  m.hits.assign(m.rows() * n, 0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto pred = stamped_predictions(model, victims, m.combos[r], registry);
    for (std::size_t i = 0; i < pred.size(); ++i) {
      const int p = victims.partition(i);
      if (p >= 0 && p < n && pred[i] == target) ++m.hits[r * n + p];
    }
  }
  return m;
}

double label_specificity(const training::ModelHandle& model, const ImageBatch& pool,
                         const TriggerRegistry& registry, int victim, int target) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const int y = pool.label(i);
    if (y != victim && y != target && pool.has_partitions() && pool.partition(i) >= 0) rows.push_back(i);
  }
  if (rows.empty()) return 0.0;
  ImageBatch stamped = pool.subset(rows);
  for (std::size_t i = 0; i < stamped.size(); ++i)
    triggers::apply_combo(stamped.image(i), TriggerCombo::single(stamped.partition(i)), registry);
  const auto pred = model.predict(stamped);
  std::size_t hit = 0;
  for (int y : pred) hit += y == target;
  return pct(hit, pred.size());
}

nlohmann::json AttackReport::to_json() const {
  return {{"ba", ba},
          {"asr", asr},
          {"asr_victim", asr_victim},
          {"asr_other_label", asr_other_label},
          {"asr_other", ms_json(asr_other)},
          {"asr_indi", ms_json(asr_indi)},
          {"asr_comb", ms_json(asr_comb)},
          {"asr_matrix", matrix.to_json()},
          {"metadata", metadata}};
}

AttackReport AttackReport::from_json(const nlohmann::json& j) {
  try {
    AttackReport r;
    r.ba = j.at("ba").get<double>();
    r.asr = j.at("asr").get<double>();
    r.asr_victim = j.value("asr_victim", r.asr);
    r.asr_other_label = j.value("asr_other_label", 0.0);
    r.asr_other = ms_from(j.at("asr_other"));
    r.asr_indi = ms_from(j.at("asr_indi"));
    r.asr_comb = ms_from(j.at("asr_comb"));
    r.matrix = AsrMatrix::from_json(j.at("asr_matrix"));
    r.metadata = j.value("metadata", nlohmann::json::object());
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed attack report: ") + e.what());
  }
}

AttackReport evaluate_attack(const training::ModelHandle& model, const ImageBatch& test,
                             const TriggerRegistry& registry, int victim, int target) {
  AttackReport r;
  r.ba = benign_accuracy(model, test);
  const ImageBatch victims = test.subset(test.indices_of_class(victim));
  r.matrix = asr_matrix(model, victims, registry, target);
  r.asr = asr(model, victims, registry, target);
  r.asr_victim = r.asr;
  r.asr_other = r.matrix.other();
  r.asr_indi = r.matrix.indi();
  r.asr_comb = r.matrix.comb();
  r.asr_other_label = label_specificity(model, test, registry, victim, target);
  r.metadata["asr_population"] = "all victim test samples";
  r.metadata["asr_other_cells"] = "every non-matched cell of the ASR matrix";
  r.metadata["label_specificity_pool"] = "test samples outside victim and target classes";
  r.metadata["std"] = "population";
  return r;
}

void write_matrix_csv(const AsrMatrix& m, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << "combo";
  for (int p = 0; p < m.n; ++p) f << ",p" << p + 1;
  f << '\n';
  for (std::size_t r = 0; r < m.rows(); ++r) {
    f << m.combos[r].to_string(m.n);
    for (int p = 0; p < m.n; ++p) {
      const double c = m.cell(r, p);
      f << ',';
      if (std::isfinite(c)) f << c;
    }
    f << '\n';
  }
}

void write_matrix_heatmap(const AsrMatrix& m, const std::filesystem::path& path) {
  io::write_heatmap_png(path, m.cells(), static_cast<int>(m.rows()), m.n, 0.0, 100.0, 24);
}

}  // namespace partiscope::metrics
