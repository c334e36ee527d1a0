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
#include <limits>
#include <random>

#include "partiscope/error.hpp"
#include "partiscope/partitioning/partition_model.hpp"
#include "support.hpp"

using namespace partiscope;
using partitioning::Features;

namespace {

Features make_features(const std::vector<std::vector<double>>& rows) {
  Features f(rows.size(), rows.front().size());
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < f.cols; ++j) f.row(i)[j] = rows[i][j];
  return f;
}

double objective(const Features& x, const std::vector<int>& labels, int k) {
  std::vector<std::vector<double>> sum(k, std::vector<double>(x.cols, 0.0));
  std::vector<int> count(k, 0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    ++count[labels[i]];
    for (std::size_t j = 0; j < x.cols; ++j) sum[labels[i]][j] += x.row(i)[j];
  }
  double total = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i)
    for (std::size_t j = 0; j < x.cols; ++j) {
      const double d = x.row(i)[j] - sum[labels[i]][j] / count[labels[i]];
      total += d * d;
    }
  return total;
}

// Exhaustive optimum over every assignment with no empty cluster.
double brute_force_objective(const Features& x, int k) {
  const std::size_t n = x.rows;
  std::vector<int> labels(n, 0);
  double best = std::numeric_limits<double>::infinity();
  std::size_t total = 1;
  for (std::size_t i = 0; i < n; ++i) total *= static_cast<std::size_t>(k);
  for (std::size_t code = 0; code < total; ++code) {
    std::size_t c = code;
    std::vector<bool> used(k, false);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(c % k);
      used[labels[i]] = true;
      c /= k;
    }
    if (std::find(used.begin(), used.end(), false) != used.end()) continue;
    best = std::min(best, objective(x, labels, k));
  }
  return best;
}

}  // namespace

TEST_CASE("k-means reaches the exhaustive optimum on small sets") {
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g(0.0, 1.0);
  for (int trial = 0; trial < 12; ++trial) {
    const std::size_t n = 5 + trial % 4;  // 5..8 points
    const int k = 2 + trial % 3;          // 2..4 clusters
    Features x(n, 2);
    for (auto& v : x.values) v = g(rng) * 3.0;
    const auto fit = partitioning::kmeans_fit(x, k, trial);
    const double oracle = brute_force_objective(x, k);
    CAPTURE(trial);
    CHECK(objective(x, fit.labels, k) == doctest::Approx(oracle).epsilon(1e-12));
    CHECK(fit.model.kmeans().objective == doctest::Approx(oracle).epsilon(1e-9));
  }
}

TEST_CASE("k-means on {0, 1, 10, 11}") {
  const auto x = make_features({{0}, {1}, {10}, {11}});
  const auto fit = partitioning::kmeans_fit(x, 2, 1);
  const auto& c = fit.model.kmeans().centroids;
  std::vector<double> centers = {c.row(0)[0], c.row(1)[0]};
  std::sort(centers.begin(), centers.end());
  CHECK(centers[0] == doctest::Approx(0.5));
  CHECK(centers[1] == doctest::Approx(10.5));
  CHECK(fit.labels[0] == fit.labels[1]);
  CHECK(fit.labels[2] == fit.labels[3]);
  CHECK(fit.labels[0] != fit.labels[2]);
  CHECK(fit.model.assign_features(make_features({{-3}, {20}})) ==
        std::vector<int>{fit.labels[0], fit.labels[2]});
  CHECK_THROWS(partitioning::kmeans_fit(x, 5, 1));
}

TEST_CASE("gmm separates two distant blobs") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g(0.0, 0.3);
  Features x(40, 2);
  for (std::size_t i = 0; i < 40; ++i) {
    x.row(i)[0] = (i < 20 ? -5.0 : 5.0) + g(rng);
    x.row(i)[1] = g(rng);
  }
  const auto fit = partitioning::gmm_fit(x, 2, 3);
  for (std::size_t i = 1; i < 20; ++i) CHECK(fit.labels[i] == fit.labels[0]);
  for (std::size_t i = 21; i < 40; ++i) CHECK(fit.labels[i] == fit.labels[20]);
  CHECK(fit.labels[0] != fit.labels[20]);
  const auto& hist = fit.model.gmm().log_likelihood_history;
  for (std::size_t i = 1; i < hist.size(); ++i) CHECK(hist[i] >= hist[i - 1] - 1e-9);
}

TEST_CASE("max overlap reproduces the analytic cases") {
  // Equal 4: every guessed partition holds the four true partitions evenly.
  std::vector<int> guess, truth;
  for (int g = 0; g < 4; ++g)
    for (int t = 0; t < 4; ++t)
      for (int r = 0; r < 25; ++r) {
        guess.push_back(g);
        truth.push_back(t);
      }
  CHECK(100.0 * partitioning::max_overlap(guess, truth) == doctest::Approx(25.0));

  // Half/half: every guessed partition splits between two true partitions.
  guess.clear();
  truth.clear();
  for (int g = 0; g < 4; ++g)
    for (int r = 0; r < 50; ++r) {
      guess.push_back(g);
      truth.push_back(r < 25 ? g : (g + 1) % 4);
    }
  CHECK(100.0 * partitioning::max_overlap(guess, truth) == doctest::Approx(50.0));

  CHECK(partitioning::max_overlap(truth, truth) == doctest::Approx(1.0));
  CHECK(partitioning::max_overlap(std::vector<int>{kUnassigned}, std::vector<int>{0}) == 0.0);
  CHECK_THROWS_AS(partitioning::max_overlap(std::vector<int>{0}, std::vector<int>{0, 1}),
                  DataError);
}

TEST_CASE("balancing caps partitions at ceil(total/n * (1 + slack))") {
  std::vector<int> parts;
  for (int p = 0; p < 4; ++p)
    for (int r = 0; r < (p == 3 ? 400 : 100); ++r) parts.push_back(p);
  parts.push_back(kUnassigned);
  const auto keep = partitioning::balanced_indices(parts, 4, 0.2, 9);
  std::vector<int> sizes(4, 0);
  int unassigned = 0;
  for (std::size_t i : keep) parts[i] == kUnassigned ? ++unassigned : ++sizes[parts[i]];
  CHECK(sizes == std::vector<int>{100, 100, 100, 210});
  CHECK(unassigned == 1);
  CHECK(std::is_sorted(keep.begin(), keep.end()));
  CHECK(partitioning::balanced_indices(parts, 4, 0.2, 9) == keep);
  CHECK_THROWS_AS(partitioning::balanced_indices(parts, 4, -0.1, 9), ConfigError);
}

TEST_CASE("surrogate relabeling maps victim sub-classes") {
  ImageBatch b({1, 2, 2}, 4);
  const std::vector<float> px(4, 0.5f);
  for (int y : {0, 1, 2, 3, 1, 1}) b.push_back(px, y);
  // Victim 1, n = 3: victims get 1 + p, label 2 -> 4, label 3 -> 5.
  const auto out = partitioning::build_surrogate_dataset(b, 1, std::vector<int>{2, kUnassigned, 0}, 3);
  CHECK(out.num_classes() == 6);
  CHECK(out.labels() == std::vector<int>{0, 3, 4, 5, 1});
  CHECK_THROWS_AS(partitioning::build_surrogate_dataset(b, 1, std::vector<int>{0}, 3), DataError);

  nn::Tensor logits({6, 1, 1}, 2);
  const float rows[2][6] = {{9, 0, 1, 3, 2, 9}, {0, 5, 4, 0, 9, 9}};
  for (int i = 0; i < 2; ++i) std::copy(rows[i], rows[i] + 6, logits.sample(i));
  CHECK(partitioning::assign_partition_from_logits(logits, 1, 3) == std::vector<int>{2, 0});
  CHECK_THROWS_AS(partitioning::assign_partition_from_logits(logits, 4, 3), DataError);
}

TEST_CASE("class-based and explicit partitioners") {
  const auto cb = partitioning::class_based_partition(10, 4);
  CHECK(cb.class_based().class_to_partition ==
        std::vector<int>{0, 0, 0, 1, 1, 2, 2, 2, 3, 3});

  const auto ex = partitioning::explicit_partition({{"hair", 2}, {"glasses", 3}});
  CHECK(ex.n_partitions() == 6);
  const partitioning::AttributeTable table = {{{"hair", 1}, {"glasses", 2}},
                                              {{"hair", 0}, {"glasses", 1}}};
  CHECK(ex.assign_attributes(table) == std::vector<int>{5, 1});
  CHECK_THROWS(ex.assign_attributes({{{"hair", 1}}}));
  CHECK_THROWS(ex.assign_attributes({{{"hair", 2}, {"glasses", 0}}}));
  CHECK_THROWS_AS(partitioning::parse_kind("spectral"), ConfigError);
}

TEST_CASE("partitioners survive save and load") {
  const auto set = testing::small_synthetic();
  const auto dir = std::filesystem::temp_directory_path() / "partiscope_partition_test";
  std::filesystem::create_directories(dir);
  const auto victims = set.data.train.subset(set.data.train.indices_of_class(0));
  auto encoder = std::make_shared<partitioning::PixelEncoder>(set.data.train.shape());
  const auto x = partitioning::extract_features(*encoder, victims);

  const auto km = partitioning::kmeans_fit(x, 4, 1).model.with_encoder(encoder);
  partitioning::save_partition_model(km, dir / "km.json");
  const auto km2 = partitioning::load_partition_model(dir / "km.json");
  CHECK(km2.kind() == partitioning::PartitionKind::kKMeans);
  CHECK(km2.assign(set.data.test) == km.assign(set.data.test));

  // Surrogate with a classifier encoder behind its clustering.
  auto clean = std::make_shared<training::ModelHandle>(
      testing::random_model(set.data.train.shape(), 4, 2));
  auto cls = std::make_shared<partitioning::ClassifierEncoder>(clean);
  const auto fit = partitioning::kmeans_fit(partitioning::extract_features(*cls, victims), 2, 1);
  const auto clustering = fit.model.with_encoder(cls);
  partitioning::save_partition_model(clustering, dir / "clustering.json");
  CHECK(partitioning::load_partition_model(dir / "clustering.json").assign(set.data.test) ==
        clustering.assign(set.data.test));

  partitioning::SurrogateOptions so;
  so.train.epochs = 1;
  so.train.batch_size = 16;
  const auto sur = partitioning::train_surrogate(set.data.train, 0, fit.labels, 2, so);
  CHECK(sur.surrogate().model->num_classes == 5);
  partitioning::save_partition_model(sur, dir / "sur.json");
  const auto sur2 = partitioning::load_partition_model(dir / "sur.json");
  CHECK(sur2.assign(set.data.test) == sur.assign(set.data.test));
  CHECK(sur2.assign(set.data.test) == partitioning::assign_partition(sur, set.data.test));

  {
    std::ofstream out(dir / "bad.json");
    out << "{ not json";
  }
  CHECK_THROWS_AS(partitioning::load_partition_model(dir / "bad.json"), DataError);
  std::filesystem::remove_all(dir);
}
