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

#include "partiscope/cli/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "partiscope/error.hpp"
#include "partiscope/triggers/trigger.hpp"

namespace partiscope::cli {
namespace {

const std::vector<std::pair<std::string, std::string>>& default_entries() {
  static const std::vector<std::pair<std::string, std::string>> entries = {
      {"seed", "1"},
      {"output.dir", "runs/default"},
      {"dataset.name", "synthetic-blobs"},
      {"dataset.root", "data"},
      {"dataset.per_class_cap", "0"},
      {"dataset.seed", "auto"},
      {"dataset.synthetic.classes", "10"},
      {"dataset.synthetic.image_size", "16"},
      {"dataset.synthetic.train_per_class", "300"},
      {"dataset.synthetic.test_per_class", "100"},
      {"dataset.synthetic.modes", "4"},
      {"dataset.synthetic.noise", "0.05"},
      {"dataset.synthetic.jitter", "0.6"},
      {"partition.kind", "surrogate"},
      {"partition.n", "4"},
      {"partition.seed", "auto"},
      {"partition.encoder", "classifier"},
      {"partition.cluster", "kmeans"},
      {"partition.balance_slack", "0.2"},
      {"partition.encoder_epochs", "10"},
      {"partition.surrogate_epochs", "15"},
      {"partition.surrogate_patience", "4"},
      {"partition.n_init", "10"},
      {"trigger.size", "0"},
      {"trigger.margin", "0"},
      {"poison.strategy", "focus"},
      {"poison.victim", "0"},
      {"poison.target", "1"},
      {"poison.fraction", "0.1"},
      {"poison.adversarial_fraction", "0.1"},
      {"poison.focus_fraction", "0.1"},
      {"poison.label_specific_fraction", "0.1"},
      {"poison.weights.benign", "1"},
      {"poison.weights.attack", "1"},
      {"poison.weights.label_specific", "1"},
      {"poison.weights.dynamic", "1"},
      {"poison.seed", "auto"},
      {"train.arch", "tiny-cnn"},
      {"train.epochs", "30"},
      {"train.batch_size", "64"},
      {"train.lr", "0.01"},
      {"train.momentum", "0.9"},
      {"train.weight_decay", "0.0005"},
      {"train.cosine", "true"},
      {"train.seed", "auto"},
      {"train.augment", "true"},
      {"train.crop_pad", "auto"},
      {"train.flip_prob", "0.5"},
      {"train.isa", "auto"},
      {"defense.methods", "nc,strip,spectral,finetune,fineprune"},
      {"defense.seed", "auto"},
      {"defense.clean_samples", "100"},
      {"defense.nc.source", "victim"},
      {"defense.nc.steps", "300"},
      {"defense.nc.lr", "0.1"},
      {"defense.nc.lambda_init", "0.001"},
      {"defense.nc.target_flip", "0.97"},
      {"defense.strip.blends", "100"},
      {"defense.strip.samples", "400"},
      {"defense.spectral.poisoned", "100"},
      {"defense.finetune.fraction", "0.05"},
      {"defense.finetune.epochs", "10"},
      {"defense.finetune.lr", "0.01"},
      {"defense.prune.fraction", "0.2"},
      {"defense.adaptive.guess", "inputs"},
  };
  return entries;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? "" : s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& v) {
  std::istringstream is(v);
  T out{};
  is >> out;
  if (!is || !(is >> std::ws).eof())
    throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
  return out;
}

std::string one_of(const std::string& key, const std::string& v,
                   std::initializer_list<const char*> allowed) {
  for (const char* a : allowed)
    if (v == a) return v;
  std::string list;
  for (const char* a : allowed) list += std::string(list.empty() ? "" : "|") + a;
  throw ConfigError("config key '" + key + "' must be one of " + list + ", got '" + v + "'");
}

}  // namespace

ConfigMap ConfigMap::defaults() {
  ConfigMap m;
  for (const auto& [k, v] : default_entries()) m.values_[k] = v;
  return m;
}

void ConfigMap::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

const std::string& ConfigMap::raw(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void ConfigMap::load_file(const std::filesystem::path& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path.string(), tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("cannot parse config " + e.filename() + " line " + std::to_string(e.line()) +
                      ": " + e.message());
  }
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      set(name, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) set(name + "." + key, leaf.data());
  }
}

void ConfigMap::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' must look like section.key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

long long ConfigMap::get_int(const std::string& key) const {
  return parse_number<long long>(key, raw(key));
}

double ConfigMap::get_double(const std::string& key) const {
  return parse_number<double>(key, raw(key));
}

bool ConfigMap::get_bool(const std::string& key) const {
  std::string v = raw(key);
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("config key '" + key + "' expects a boolean, got '" + raw(key) + "'");
}

std::uint64_t ConfigMap::get_seed(const std::string& key) const {
  const std::string& v = raw(key);
  if (v == "auto") return key == "seed" ? 1 : get_seed("seed");
  const long long s = get_int(key);
  if (s < 0) throw ConfigError("config key '" + key + "' must be a non-negative seed");
  return static_cast<std::uint64_t>(s);
}

std::vector<std::string> ConfigMap::get_list(const std::string& key) const {
  std::vector<std::string> out;
  std::istringstream is(raw(key));
  std::string item;
  while (std::getline(is, item, ','))
    if (!trim(item).empty()) out.push_back(trim(item));
  return out;
}

std::string ConfigMap::to_ini() const {
  std::ostringstream os;
  std::string section;
  for (const auto& [k, v] : values_)
    if (k.find('.') == std::string::npos) os << k << " = " << v << '\n';
  for (const auto& [k, v] : values_) {
    const auto dot = k.find('.');
    if (dot == std::string::npos) continue;
    const std::string s = k.substr(0, dot);
    if (s != section) {
      os << "\n[" << s << "]\n";
      section = s;
    }
    os << k.substr(dot + 1) << " = " << v << '\n';
  }
  return os.str();
}

void ConfigMap::write(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write " + path.string());
  f << to_ini();
}

nlohmann::json ConfigMap::to_json() const {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : values_) j[k] = v;
  return j;
}

ExperimentConfig ExperimentConfig::from_map(const ConfigMap& m) {
  ExperimentConfig c;
  c.source = m;
  c.seed = m.get_seed("seed");
  c.output_dir = m.get_string("output.dir");

  c.dataset.name = one_of("dataset.name", m.get_string("dataset.name"),
                          {"synthetic-blobs", "cifar10", "cifar10-subset"});
  c.dataset.root = m.get_string("dataset.root");
  c.dataset.per_class_cap = static_cast<int>(m.get_int("dataset.per_class_cap"));
  c.dataset.seed = m.get_seed("dataset.seed");
  auto& s = c.dataset.synthetic;
  s.classes = static_cast<int>(m.get_int("dataset.synthetic.classes"));
  s.image_size = static_cast<int>(m.get_int("dataset.synthetic.image_size"));
  s.train_per_class = static_cast<int>(m.get_int("dataset.synthetic.train_per_class"));
  s.test_per_class = static_cast<int>(m.get_int("dataset.synthetic.test_per_class"));
  s.modes = static_cast<int>(m.get_int("dataset.synthetic.modes"));
  s.noise = static_cast<float>(m.get_double("dataset.synthetic.noise"));
  s.jitter = static_cast<float>(m.get_double("dataset.synthetic.jitter"));

  auto& p = c.partition;
  p.kind = one_of("partition.kind", m.get_string("partition.kind"), {"kmeans", "gmm", "surrogate"});
  p.n = static_cast<int>(m.get_int("partition.n"));
  p.seed = m.get_seed("partition.seed");
  p.encoder = one_of("partition.encoder", m.get_string("partition.encoder"),
                     {"classifier", "pixels"}) == "pixels"
                  ? EncoderKind::kPixels
                  : EncoderKind::kClassifier;
  p.cluster = one_of("partition.cluster", m.get_string("partition.cluster"), {"kmeans", "gmm"});
  p.balance_slack = m.get_double("partition.balance_slack");
  p.encoder_epochs = static_cast<int>(m.get_int("partition.encoder_epochs"));
  p.surrogate_epochs = static_cast<int>(m.get_int("partition.surrogate_epochs"));
  p.surrogate_patience = static_cast<int>(m.get_int("partition.surrogate_patience"));
  p.n_init = static_cast<int>(m.get_int("partition.n_init"));

  c.trigger_size = static_cast<int>(m.get_int("trigger.size"));
  c.trigger_margin = static_cast<int>(m.get_int("trigger.margin"));

  auto& plan = c.plan;
  plan.strategy = poisoning::parse_strategy(m.get_string("poison.strategy"));
  plan.victim = static_cast<int>(m.get_int("poison.victim"));
  plan.target = static_cast<int>(m.get_int("poison.target"));
  plan.n_partitions = p.n;
  plan.fractions.attack = m.get_double("poison.fraction");
  plan.fractions.adversarial = m.get_double("poison.adversarial_fraction");
  plan.fractions.focus = m.get_double("poison.focus_fraction");
  plan.fractions.label_specific = m.get_double("poison.label_specific_fraction");
  plan.weights.benign = m.get_double("poison.weights.benign");
  plan.weights.attack = m.get_double("poison.weights.attack");
  plan.weights.label_specific = m.get_double("poison.weights.label_specific");
  plan.weights.dynamic = m.get_double("poison.weights.dynamic");
  c.poison_seed = m.get_seed("poison.seed");

  auto& t = c.train;
  t.arch = m.get_string("train.arch");
  t.epochs = static_cast<int>(m.get_int("train.epochs"));
  t.batch_size = static_cast<int>(m.get_int("train.batch_size"));
  t.lr = m.get_double("train.lr");
  t.momentum = m.get_double("train.momentum");
  t.weight_decay = m.get_double("train.weight_decay");
  t.cosine = m.get_bool("train.cosine");
  t.seed = m.get_seed("train.seed");
  t.augment = m.get_bool("train.augment");
  const int image_side = c.dataset.name == "synthetic-blobs" ? s.image_size : 32;
  t.augmentation.crop_pad = m.get_string("train.crop_pad") == "auto"
                                ? std::max(1, image_side / 8)
                                : static_cast<int>(m.get_int("train.crop_pad"));
  t.augmentation.flip_prob = m.get_double("train.flip_prob");
  c.isa = one_of("train.isa", m.get_string("train.isa"), {"auto", "scalar", "avx2"});
  t.validate();

  auto& d = c.defense;
  d.methods = m.get_list("defense.methods");
  for (const auto& method : d.methods)
    one_of("defense.methods", method, {"nc", "strip", "spectral", "finetune", "fineprune", "adaptive"});
  d.seed = m.get_seed("defense.seed");
  d.clean_samples = static_cast<int>(m.get_int("defense.clean_samples"));
  d.nc_source = one_of("defense.nc.source", m.get_string("defense.nc.source"), {"victim", "all"});
  d.inversion.steps = static_cast<int>(m.get_int("defense.nc.steps"));
  d.inversion.lr = m.get_double("defense.nc.lr");
  d.inversion.lambda_init = m.get_double("defense.nc.lambda_init");
  d.inversion.target_flip = m.get_double("defense.nc.target_flip");
  d.inversion.seed = d.seed;
  d.strip_blends = static_cast<int>(m.get_int("defense.strip.blends"));
  d.strip_samples = static_cast<int>(m.get_int("defense.strip.samples"));
  d.spectral_poisoned = static_cast<int>(m.get_int("defense.spectral.poisoned"));
  d.finetune_fraction = m.get_double("defense.finetune.fraction");
  d.finetune = t;
  d.finetune.epochs = static_cast<int>(m.get_int("defense.finetune.epochs"));
  d.finetune.lr = m.get_double("defense.finetune.lr");
  d.finetune.seed = d.seed;
  d.prune_fraction = m.get_double("defense.prune.fraction");
  d.adaptive_guess = one_of("defense.adaptive.guess", m.get_string("defense.adaptive.guess"),
                            {"inputs", "features", "random", "truth"});
  return c;
}

void ExperimentConfig::validate(int num_classes) const {
  if (partition.n < 1 || partition.n > triggers::kMaxTriggers)
    throw ConfigError("partition.n must be 1..8 (one trigger slot per partition)");
  if (partition.balance_slack < 0.0) throw ConfigError("partition.balance_slack must be >= 0");
  if (partition.encoder_epochs < 1 || partition.surrogate_epochs < 1)
    throw ConfigError("partition epochs must be >= 1");
  if (partition.n_init < 1) throw ConfigError("partition.n_init must be >= 1");
  if (trigger_size < 0 || trigger_margin < 0) throw ConfigError("trigger size/margin must be >= 0");
  plan.validate(num_classes);
  if (!(defense.finetune_fraction > 0.0 && defense.finetune_fraction <= 1.0))
    throw ConfigError("defense.finetune.fraction must lie in (0, 1]");
  if (!(defense.prune_fraction >= 0.0 && defense.prune_fraction < 1.0))
    throw ConfigError("defense.prune.fraction must lie in [0, 1)");
  if (defense.clean_samples < 3) throw ConfigError("defense.clean_samples must be >= 3");
  defense.finetune.validate(true);
}

}  // namespace partiscope::cli
