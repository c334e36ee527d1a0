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
#include "partiscope/metrics/metrics.hpp"
#include "support.hpp"

using namespace partiscope;
using triggers::TriggerCombo;

namespace {

struct Fixture {
  data::SyntheticSet set = testing::small_synthetic(4, 4, 8, 20);
  training::ModelHandle model = testing::random_model(set.data.test.shape(), 4, 6);
  triggers::TriggerRegistry registry = triggers::make_registry(set.data.test.shape(), 3);
  ImageBatch victims;
  int target = 0;

  Fixture() {
    ImageBatch& test = set.data.test;
    for (std::size_t i = 0; i < test.size(); ++i) test.partitions()[i] = static_cast<int>(i % 3);
    victims = test.subset(test.indices_of_class(0));
    // The most frequent stamped prediction, so hits are not all zero.
    std::vector<int> votes(4, 0);
    for (int y : metrics::stamped_predictions(model, victims, TriggerCombo(7), registry)) ++votes[y];
    target = static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
  }
};

}  // namespace

TEST_CASE("ASR matrix equals a per-sample recomputation") {
  const Fixture f;
  const auto m = metrics::asr_matrix(f.model, f.victims, f.registry, f.target);
  REQUIRE(m.rows() == 7);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    // Oracle: stamp each sample by hand and predict it alone.
    std::vector<int> hits(3, 0), sizes(3, 0);
    for (std::size_t i = 0; i < f.victims.size(); ++i) {
      ImageBatch one = f.victims.subset(std::vector<std::size_t>{i});
      for (int t : m.combos[r].members()) triggers::apply_trigger(one.image(0), one.shape(), f.registry[t]);
      const int p = f.victims.partition(i);
      ++sizes[p];
      hits[p] += f.model.predict(one)[0] == f.target;
    }
    for (int p = 0; p < 3; ++p) {
      CHECK(m.hits[r * 3 + p] == static_cast<std::size_t>(hits[p]));
      CHECK(m.cell(r, p) == 100.0 * hits[p] / sizes[p]);
    }
  }
}

TEST_CASE("matrix summaries select the right cells") {
  metrics::AsrMatrix m;
  m.n = 2;
  m.combos = triggers::all_combos(2);  // 10, 01, 11
  m.partition_sizes = {10, 30};
  m.hits = {10, 3,    // {T1}: matched on p1
            1, 27,    // {T2}: matched on p2
            5, 15};   // {T1,T2}
  CHECK(m.cell(0, 0) == 100.0);
  CHECK(m.matched() == doctest::Approx((10.0 + 27.0) / 40.0 * 100.0));
  const auto indi = m.indi();
  CHECK(indi.cells == 2);
  CHECK(indi.mean == doctest::Approx((10.0 + 10.0) / 2));
  CHECK(indi.std == doctest::Approx(0.0));
  const auto comb = m.comb();
  CHECK(comb.cells == 2);
  CHECK(comb.mean == doctest::Approx(50.0));
  CHECK(m.other().cells == 4);
  const auto back = metrics::AsrMatrix::from_json(m.to_json());
  CHECK(back.hits == m.hits);
  CHECK(back.combos == m.combos);

  m.partition_sizes = {10, 0};
  m.hits = {10, 0, 0, 0, 5, 0};
  CHECK(std::isnan(m.cell(0, 1)));
  CHECK(m.other().cells == 2);
}

TEST_CASE("mean_std uses the population deviation and skips NaN") {
  const std::vector<double> v = {1.0, 3.0, std::nan("")};
  const auto ms = metrics::mean_std(v);
  CHECK(ms.mean == 2.0);
  CHECK(ms.std == 1.0);
  CHECK(ms.cells == 2);
}

TEST_CASE("attack evaluation is consistent with its parts") {
  const Fixture f;
  const auto r = metrics::evaluate_attack(f.model, f.set.data.test, f.registry, 0, f.target);
  CHECK(r.ba == doctest::Approx(metrics::benign_accuracy(f.model, f.set.data.test)));
  CHECK(r.asr == doctest::Approx(r.matrix.matched()));
  CHECK(r.asr == doctest::Approx(metrics::asr(f.model, f.victims, f.registry, f.target)));
  CHECK(r.asr_other_label ==
        doctest::Approx(metrics::label_specificity(f.model, f.set.data.test, f.registry, 0, f.target)));
  const auto back = metrics::AttackReport::from_json(r.to_json());
  CHECK(back.asr == r.asr);
  CHECK(back.matrix.hits == r.matrix.hits);

  const auto path = std::filesystem::temp_directory_path() / "partiscope_matrix.csv";
  metrics::write_matrix_csv(r.matrix, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "combo,p1,p2,p3");
  std::filesystem::remove(path);
}

TEST_CASE("degenerate inputs") {
  const Fixture f;
  ImageBatch empty(f.victims.shape(), 4);
  CHECK_THROWS_AS(metrics::asr_matrix(f.model, empty, f.registry, 1), DataError);
  CHECK_THROWS_AS(metrics::benign_accuracy(f.model, empty), DataError);
  CHECK(metrics::label_specificity(f.model, f.victims, f.registry, 0, 1) == 0.0);
  ImageBatch unassigned = f.victims;
  for (auto& p : unassigned.partitions()) p = kUnassigned;
  CHECK_THROWS_AS(metrics::asr(f.model, unassigned, f.registry, 1), DataError);
}
