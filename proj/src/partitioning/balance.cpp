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

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "partiscope/error.hpp"
#include "partiscope/partitioning/partition_model.hpp"

namespace partiscope::partitioning {

std::vector<std::size_t> balanced_indices(std::span<const int> partitions, int n, double slack,
                                          std::uint64_t seed) {
  if (n < 1) throw ConfigError("balancing needs n >= 1");
  if (slack < 0.0) throw ConfigError("balance slack must be non-negative");
  std::vector<std::vector<std::size_t>> members(n);
  std::vector<std::size_t> keep;
  std::size_t total = 0;
  for (std::size_t i = 0; i < partitions.size(); ++i) {
    const int p = partitions[i];
    if (p == kUnassigned) {
      keep.push_back(i);
      continue;
    }
    if (p < 0 || p >= n) throw DataError("partition id " + std::to_string(p) + " out of range");
    members[p].push_back(i);
    ++total;
  }
  const auto cap = static_cast<std::size_t>(
      std::ceil(static_cast<double>(total) / n * (1.0 + slack) - 1e-9));
  std::mt19937_64 rng(seed);
  for (auto& m : members) {
    if (m.size() > cap) {
      std::shuffle(m.begin(), m.end(), rng);
      m.resize(cap);
    }
    keep.insert(keep.end(), m.begin(), m.end());
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

ImageBatch balance_partitions(const ImageBatch& batch, int n, double slack, std::uint64_t seed) {
  if (!batch.has_partitions()) throw DataError("batch carries no partition ids");
  return batch.subset(balanced_indices(batch.partitions(), n, slack, seed));
}

double max_overlap(std::span<const int> guess, std::span<const int> truth) {
  if (guess.size() != truth.size()) throw DataError("overlap inputs differ in length");
  std::map<int, std::map<int, std::size_t>> table;
  for (std::size_t i = 0; i < guess.size(); ++i) {
    if (guess[i] == kUnassigned) continue;
    ++table[guess[i]][truth[i]];
  }
  if (table.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [g, row] : table) {
    std::size_t size = 0, best = 0;
    for (const auto& [t, count] : row) {
      size += count;
      best = std::max(best, count);
    }
    sum += static_cast<double>(best) / static_cast<double>(size);
  }
  return sum / static_cast<double>(table.size());
}

}  // namespace partiscope::partitioning
