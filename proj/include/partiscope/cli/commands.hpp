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

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "partiscope/cli/config.hpp"

namespace partiscope::cli {

/// Fixed layout of a run directory.
struct RunLayout {
  std::filesystem::path root;

  std::filesystem::path config() const { return root / "config.resolved"; }
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path partitioner() const { return root / "partitioner"; }
  std::filesystem::path triggers() const { return root / "triggers"; }
  std::filesystem::path reports() const { return root / "reports"; }
  std::filesystem::path plots() const { return root / "plots"; }
  void create() const;
};

/// partition → poison → train → metrics. Returns the attack report JSON.
nlohmann::json cmd_attack(const ConfigMap& config, const std::filesystem::path& run_dir);

/// Runs the configured defenses against the model of an attack run.
/// `overrides` are applied on top of the run's resolved config.
nlohmann::json cmd_defend(const std::filesystem::path& run_dir,
                          const std::vector<std::string>& config_files,
                          const std::vector<std::string>& overrides);

/// Aggregates the reports of one or more run directories into
/// summary.csv / summary.md plus per-run heatmaps under `out_dir`.
nlohmann::json cmd_report(const std::vector<std::filesystem::path>& run_dirs,
                          const std::filesystem::path& out_dir);

/// Partition statistics: from a run's saved partitioner when `run_dir` is
/// set, otherwise by fitting one from `config`.
nlohmann::json cmd_partition_inspect(const ConfigMap& config,
                                     const std::filesystem::path& run_dir);

}  // namespace partiscope::cli
