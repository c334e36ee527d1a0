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

#include "partiscope/partitioning/partition_model.hpp"

#include <fstream>
#include <set>

#include "internal.hpp"
#include "partiscope/error.hpp"

namespace partiscope::partitioning {

std::string kind_name(PartitionKind kind) {
  switch (kind) {
    case PartitionKind::kExplicit:
      return "explicit";
    case PartitionKind::kKMeans:
      return "kmeans";
    case PartitionKind::kGmm:
      return "gmm";
    case PartitionKind::kSurrogate:
      return "surrogate";
    case PartitionKind::kClassBased:
      return "class-based";
  }
  return "unknown";
}

PartitionKind parse_kind(const std::string& name) {
  for (auto k : {PartitionKind::kExplicit, PartitionKind::kKMeans, PartitionKind::kGmm,
                 PartitionKind::kSurrogate, PartitionKind::kClassBased})
    if (kind_name(k) == name) return k;
  throw ConfigError("unknown partition kind '" + name + "'");
}

PartitionModel::PartitionModel(PartitionKind kind, int n_partitions, Params params,
                               std::shared_ptr<const FeatureEncoder> encoder)
    : kind_(kind), n_(n_partitions), params_(std::move(params)), encoder_(std::move(encoder)) {
  if (n_ < 1) throw ConfigError("a partitioner needs n >= 1");
  switch (kind_) {
    case PartitionKind::kKMeans:
      if (kmeans().centroids.rows != static_cast<std::size_t>(n_))
        throw ConfigError("k-means centroid count must equal n");
      break;
    case PartitionKind::kGmm:
      if (gmm().weights.size() != static_cast<std::size_t>(n_))
        throw ConfigError("GMM component count must equal n");
      if (gmm().cholesky.empty()) finalize_gmm(std::get<GmmParams>(params_), gmm().means.cols);
      break;
    case PartitionKind::kSurrogate:
      if (!surrogate().model) throw ConfigError("surrogate partitioner needs a model");
      if (surrogate().victim < 0 || surrogate().victim + n_ > surrogate().model->num_classes)
        throw ConfigError("surrogate sub-class range exceeds its label space");
      break;
    case PartitionKind::kExplicit: {
      int prod = 1;
      for (const auto& a : explicit_params().attributes) {
        if (a.values < 1) throw ConfigError("attribute '" + a.name + "' needs >= 1 value");
        prod *= a.values;
      }
      if (prod != n_) throw ConfigError("explicit partition count must equal the product of values");
      break;
    }
    case PartitionKind::kClassBased:
      for (int p : class_based().class_to_partition)
        if (p < 0 || p >= n_) throw ConfigError("class-based partition id out of range");
      break;
  }
}

PartitionModel PartitionModel::with_encoder(std::shared_ptr<const FeatureEncoder> encoder) const {
  PartitionModel copy = *this;
  copy.encoder_ = std::move(encoder);
  return copy;
}

std::vector<int> PartitionModel::assign_features(const Features& features) const {
  if (kind_ == PartitionKind::kKMeans) {
    if (features.rows && features.cols != kmeans().centroids.cols)
      throw DataError("feature dimension does not match k-means centroids");
    return kmeans_assign(kmeans(), features);
  }
  if (kind_ == PartitionKind::kGmm) {
    if (features.rows && features.cols != gmm().means.cols)
      throw DataError("feature dimension does not match GMM means");
    return gmm_assign(gmm(), features);
  }
  throw ConfigError(kind_name(kind_) + " partitioner does not assign feature vectors");
}

std::vector<int> PartitionModel::assign(const ImageBatch& batch) const {
  switch (kind_) {
    case PartitionKind::kSurrogate:
      return assign_partition_from_logits(surrogate().model->logits(batch), surrogate().victim, n_);
    case PartitionKind::kClassBased: {
      std::vector<int> out(batch.size());
      const auto& map = class_based().class_to_partition;
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const int y = batch.label(i);
        if (y < 0 || y >= static_cast<int>(map.size()))
          throw DataError("class-based partitioner has no entry for label " + std::to_string(y));
        out[i] = map[y];
      }
      return out;
    }
    case PartitionKind::kKMeans:
    case PartitionKind::kGmm:
      if (!encoder_) throw ConfigError("clustering partitioner has no encoder attached");
      return assign_features(extract_features(*encoder_, batch));
    case PartitionKind::kExplicit:
      break;
  }
  throw ConfigError("explicit partitioners assign from attributes, not images");
}

std::vector<int> PartitionModel::assign_attributes(const AttributeTable& table) const {
  if (kind_ != PartitionKind::kExplicit) throw ConfigError("partitioner is not explicit");
  const auto& attrs = explicit_params().attributes;
  std::vector<int> out(table.size());
  for (std::size_t i = 0; i < table.size(); ++i) {
    int index = 0;
    for (const auto& a : attrs) {
      auto it = table[i].find(a.name);
      if (it == table[i].end())
        throw DataError("sample " + std::to_string(i) + " is missing attribute '" + a.name + "'");
      if (it->second < 0 || it->second >= a.values)
        throw DataError("sample " + std::to_string(i) + " has out-of-range value for '" + a.name +
                        "'");
      index = index * a.values + it->second;
    }
    out[i] = index;
  }
  return out;
}

PartitionModel explicit_partition(std::vector<AttributeSpec> attributes) {
  if (attributes.empty()) throw ConfigError("explicit partitioning needs at least one attribute");
  int n = 1;
  for (const auto& a : attributes) n *= std::max(a.values, 1);
  return PartitionModel(PartitionKind::kExplicit, n, ExplicitParams{std::move(attributes)});
}

PartitionModel class_based_partition(int num_classes, int n) {
  if (n < 1 || n > num_classes) throw ConfigError("class-based partitioning needs 1 <= n <= classes");
  ClassBasedParams p;
  for (int c = 0; c < num_classes; ++c) p.class_to_partition.push_back(c * n / num_classes);
  return PartitionModel(PartitionKind::kClassBased, n, std::move(p));
}

// ---- serialization ------------------------------------------------------

namespace {

nlohmann::json features_to_json(const Features& f) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < f.rows; ++i) {
    auto r = f.row(i);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  return rows;
}

Features features_from_json(const nlohmann::json& j) {
  const auto rows = j.get<std::vector<std::vector<double>>>();
  Features f(rows.size(), rows.empty() ? 0 : rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != f.cols) throw DataError("ragged matrix in partitioner file");
    std::copy(rows[i].begin(), rows[i].end(), f.row(i).begin());
  }
  return f;
}

std::filesystem::path sibling(const std::filesystem::path& path, const std::string& suffix) {
  return path.parent_path() / (path.stem().string() + suffix);
}

}  // namespace

void save_partition_model(const PartitionModel& model, const std::filesystem::path& path) {
  nlohmann::json j = {{"format_version", kPartitionFormatVersion},
                      {"kind", kind_name(model.kind())},
                      {"n", model.n_partitions()}};
  nlohmann::json params;
  switch (model.kind()) {
    case PartitionKind::kKMeans:
      params = {{"centroids", features_to_json(model.kmeans().centroids)},
                {"objective", model.kmeans().objective},
                {"objective_history", model.kmeans().objective_history}};
      break;
    case PartitionKind::kGmm:
      params = {{"weights", model.gmm().weights},
                {"means", features_to_json(model.gmm().means)},
                {"covariances", model.gmm().covariances},
                {"reg_covar", model.gmm().reg_covar},
                {"log_likelihood_history", model.gmm().log_likelihood_history}};
      break;
    case PartitionKind::kExplicit: {
      nlohmann::json attrs = nlohmann::json::array();
      for (const auto& a : model.explicit_params().attributes)
        attrs.push_back({{"name", a.name}, {"values", a.values}});
      params = {{"attributes", attrs}};
      break;
    }
    case PartitionKind::kClassBased:
      params = {{"class_to_partition", model.class_based().class_to_partition}};
      break;
    case PartitionKind::kSurrogate: {
      const auto ckpt = sibling(path, ".surrogate.ckpt");
      training::save_checkpoint(*model.surrogate().model, ckpt);
      params = {{"victim", model.surrogate().victim}, {"checkpoint", ckpt.filename().string()}};
      break;
    }
  }
  j["params"] = params;
  if (const auto& enc = model.encoder()) {
    nlohmann::json e = enc->describe();
    if (auto* ce = dynamic_cast<const ClassifierEncoder*>(enc.get())) {
      const auto ckpt = sibling(path, ".encoder.ckpt");
      training::save_checkpoint(ce->model(), ckpt);
      e["checkpoint"] = ckpt.filename().string();
    }
    j["encoder"] = e;
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path);
  if (!f) throw DataError("cannot write partitioner " + path.string());
  f << j.dump(2) << '\n';
}

PartitionModel load_partition_model(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw DataError("cannot open partitioner " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed partitioner " + path.string() + ": " + e.what());
  }
  const int version = j.value("format_version", -1);
  if (version != kPartitionFormatVersion)
    throw DataError("partitioner " + path.string() + " has format version " +
                    std::to_string(version));
  try {
    const PartitionKind kind = parse_kind(j.at("kind").get<std::string>());
    const int n = j.at("n").get<int>();
    const auto& p = j.at("params");
    std::shared_ptr<const FeatureEncoder> encoder;
    if (j.contains("encoder")) {
      const auto& e = j["encoder"];
      const auto type = e.at("type").get<std::string>();
      if (type == "pixels") {
        const auto s = e.at("shape").get<std::vector<int>>();
        encoder = std::make_shared<PixelEncoder>(ImageShape{s.at(0), s.at(1), s.at(2)});
      } else if (type == "classifier") {
        auto m = std::make_shared<training::ModelHandle>(training::load_checkpoint(
            path.parent_path() / e.at("checkpoint").get<std::string>(), e.at("arch").get<std::string>()));
        encoder = std::make_shared<ClassifierEncoder>(m, e.at("layer").get<std::size_t>());
      } else {
        throw DataError("unknown encoder type '" + type + "'");
      }
    }
    switch (kind) {
      case PartitionKind::kKMeans:
        return PartitionModel(kind, n,
                              KMeansParams{features_from_json(p.at("centroids")),
                                           p.at("objective").get<double>(),
                                           p.value("objective_history", std::vector<double>{})},
                              encoder);
      case PartitionKind::kGmm: {
        GmmParams g;
        g.weights = p.at("weights").get<std::vector<double>>();
        g.means = features_from_json(p.at("means"));
        g.covariances = p.at("covariances").get<std::vector<double>>();
        g.reg_covar = p.value("reg_covar", 1e-6);
        g.log_likelihood_history = p.value("log_likelihood_history", std::vector<double>{});
        if (g.covariances.size() != g.weights.size() * g.means.cols * g.means.cols)
          throw DataError("GMM covariance block has the wrong size");
        return PartitionModel(kind, n, std::move(g), encoder);
      }
      case PartitionKind::kExplicit: {
        ExplicitParams e;
        for (const auto& a : p.at("attributes"))
          e.attributes.push_back({a.at("name").get<std::string>(), a.at("values").get<int>()});
        return PartitionModel(kind, n, std::move(e), encoder);
      }
      case PartitionKind::kClassBased:
        return PartitionModel(
            kind, n, ClassBasedParams{p.at("class_to_partition").get<std::vector<int>>()}, encoder);
      case PartitionKind::kSurrogate: {
        auto m = std::make_shared<training::ModelHandle>(
            training::load_checkpoint(path.parent_path() / p.at("checkpoint").get<std::string>()));
        return PartitionModel(kind, n, SurrogateParams{m, p.at("victim").get<int>()}, encoder);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("malformed partitioner " + path.string() + ": " + e.what());
  }
  throw DataError("unreachable partitioner kind");
}

}  // namespace partiscope::partitioning
