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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "partiscope/data/dataset.hpp"
#include "partiscope/defense/defense.hpp"
#include "partiscope/poisoning/poison.hpp"
#include "partiscope/training/trainer.hpp"

namespace partiscope::cli {

/// Flat "section.key" → value store over the INI config. Only keys with a
/// registered default are accepted.
class ConfigMap {
 public:
  /// Every known key with its default value.
  static ConfigMap defaults();

  /// Overlays an INI file. Throws ConfigError on syntax errors (with the
  /// line) and unknown keys.
  void load_file(const std::filesystem::path& path);
  /// Applies one "section.key=value" override.
  void apply_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& raw(const std::string& key) const;
  std::string get_string(const std::string& key) const { return raw(key); }
  long long get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  /// Section seeds accept "auto", meaning the global `seed`.
  std::uint64_t get_seed(const std::string& key) const;
  std::vector<std::string> get_list(const std::string& key) const;

  const std::map<std::string, std::string>& values() const { return values_; }
  /// INI text with top-level keys first, then one block per section.
  std::string to_ini() const;
  void write(const std::filesystem::path& path) const;
  nlohmann::json to_json() const;

 private:
  std::map<std::string, std::string> values_;
};

enum class EncoderKind { kClassifier, kPixels };

struct PartitionSettings {
  std::string kind = "surrogate";  // kmeans | gmm | surrogate
  int n = 4;
  std::uint64_t seed = 1;
  EncoderKind encoder = EncoderKind::kClassifier;
  std::string cluster = "kmeans";  // clustering behind the surrogate
  double balance_slack = 0.2;
  int encoder_epochs = 10;
  int surrogate_epochs = 15;
  int surrogate_patience = 4;
  int n_init = 10;
};

struct DefenseSettings {
  std::vector<std::string> methods;
  std::uint64_t seed = 1;
  int clean_samples = 100;
  std::string nc_source = "victim";  // victim | all
  defense::InversionConfig inversion{};
  int strip_blends = 100;
  int strip_samples = 400;
  int spectral_poisoned = 100;
  double finetune_fraction = 0.05;
  training::TrainConfig finetune{};
  double prune_fraction = 0.2;
  std::string adaptive_guess = "inputs";  // inputs | features | random | truth
};

/// Typed view of a ConfigMap.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  data::DatasetConfig dataset;
  PartitionSettings partition;
  int trigger_size = 0;
  int trigger_margin = 0;
  poisoning::PoisonPlan plan;
  std::uint64_t poison_seed = 1;
  training::TrainConfig train;
  std::string isa = "auto";
  DefenseSettings defense;
  ConfigMap source;

  /// Parses every key; ConfigError names the offending key.
  static ExperimentConfig from_map(const ConfigMap& map);
  /// Cross-section checks needing the class count (victim/target range,
  /// partition count vs trigger slots, ...).
  void validate(int num_classes) const;
};

}  // namespace partiscope::cli
