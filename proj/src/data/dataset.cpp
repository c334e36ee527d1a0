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

#include "partiscope/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "partiscope/error.hpp"

namespace partiscope::data {
namespace fs = std::filesystem;

namespace {

constexpr int kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

struct Blob {
  float cy, cx, sigma;
  float color[3];
};

Blob random_blob(const SyntheticConfig& cfg, std::mt19937_64& rng) {
  const float lo = static_cast<float>(cfg.margin);
  const float hi = static_cast<float>(cfg.image_size - 1 - cfg.margin);
  std::uniform_real_distribution<float> pos(lo, std::max(lo, hi));
  std::uniform_real_distribution<float> sig(0.08f * cfg.image_size, 0.15f * cfg.image_size);
  std::uniform_real_distribution<float> col(0.0f, 1.0f);
  Blob b{pos(rng), pos(rng), sig(rng), {col(rng), col(rng), col(rng)}};
  const int strong = static_cast<int>(rng() % 3);
  b.color[strong] = 0.6f + 0.4f * col(rng);
  return b;
}

void render(const SyntheticConfig& cfg, const std::vector<Blob>& blobs, const float* background,
            std::mt19937_64& rng, std::vector<float>& out) {
  const int s = cfg.image_size;
  const int ch = cfg.channels;
  out.assign(static_cast<std::size_t>(ch) * s * s, 0.0f);
  std::normal_distribution<float> jit(0.0f, cfg.jitter);
  std::uniform_real_distribution<float> amp(0.8f, 1.2f);
  std::normal_distribution<float> noise(0.0f, cfg.noise);
  for (int c = 0; c < ch; ++c)
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(c) * s * s, s * s, background[c % 3]);
  for (const Blob& b : blobs) {
    const float cy = b.cy + jit(rng);
    const float cx = b.cx + jit(rng);
    const float a = amp(rng);
    const float inv = 1.0f / (2.0f * b.sigma * b.sigma);
    for (int y = 0; y < s; ++y) {
      for (int x = 0; x < s; ++x) {
        const float d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        const float g = a * std::exp(-d2 * inv);
        for (int c = 0; c < ch; ++c)
          out[(static_cast<std::size_t>(c) * s + y) * s + x] += g * b.color[c % 3];
      }
    }
  }
  for (float& v : out) v = std::clamp(v + noise(rng), 0.0f, 1.0f);
}

ImageBatch load_cifar_split(const fs::path& dir, bool train) {
  ImageBatch out({3, kCifarSide, kCifarSide}, 10);
  if (train) {
    for (int i = 1; i <= 5; ++i)
      out.append(read_cifar10_file(dir / ("data_batch_" + std::to_string(i) + ".bin")));
  } else {
    out.append(read_cifar10_file(dir / "test_batch.bin"));
  }
  return out;
}

fs::path cifar_dir(const fs::path& root) {
  if (fs::exists(root / "cifar-10-batches-bin")) return root / "cifar-10-batches-bin";
  return root;
}

}  // namespace

ImageBatch read_cifar10_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open dataset file " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.empty() || bytes.size() % kCifarRecord != 0)
    throw DataError("corrupt CIFAR-10 file " + path.string() + ": size " +
                    std::to_string(bytes.size()) + " is not a multiple of " +
                    std::to_string(kCifarRecord));
  const std::size_t n = bytes.size() / kCifarRecord;
  ImageBatch out({3, kCifarSide, kCifarSide}, 10);
  out.reserve(n);
  std::vector<float> img(kCifarRecord - 1);
  for (std::size_t r = 0; r < n; ++r) {
    const unsigned char* rec = bytes.data() + r * kCifarRecord;
    if (rec[0] > 9)
      throw DataError("corrupt CIFAR-10 file " + path.string() + ": label " +
                      std::to_string(rec[0]) + " in record " + std::to_string(r));
    for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<float>(rec[1 + i]) / 255.0f;
    out.push_back(img, rec[0]);
  }
  return out;
}

SyntheticSet generate_synthetic(const SyntheticConfig& cfg, std::uint64_t seed) {
  if (cfg.classes < 2 || cfg.modes < 1 || cfg.image_size < 4 || cfg.channels < 1 ||
      cfg.train_per_class < 0 || cfg.test_per_class < 0 || cfg.blobs_per_mode < 1)
    throw ConfigError("invalid synthetic dataset parameters");
  const ImageShape shape{cfg.channels, cfg.image_size, cfg.image_size};
  std::mt19937_64 proto_rng(seed * 0x9E3779B97F4A7C15ULL + 17);
  // prototypes[c][m]: one class-wide anchor blob plus mode-specific blobs.
  std::vector<std::vector<std::vector<Blob>>> prototypes(cfg.classes);
  std::vector<std::array<float, 3>> backgrounds(cfg.classes);
  std::uniform_real_distribution<float> bg(0.0f, 0.25f);
  for (int c = 0; c < cfg.classes; ++c) {
    backgrounds[c] = {bg(proto_rng), bg(proto_rng), bg(proto_rng)};
    const Blob anchor = random_blob(cfg, proto_rng);
    prototypes[c].resize(cfg.modes);
    for (int m = 0; m < cfg.modes; ++m) {
      prototypes[c][m].push_back(anchor);
      for (int k = 1; k < cfg.blobs_per_mode; ++k)
        prototypes[c][m].push_back(random_blob(cfg, proto_rng));
    }
  }
  SyntheticSet set{{ImageBatch(shape, cfg.classes), ImageBatch(shape, cfg.classes)}, {}, {}};
  std::vector<float> img;
  auto fill = [&](ImageBatch& batch, std::vector<int>& modes, int per_class, std::uint64_t salt) {
    std::mt19937_64 rng(seed * 0xD1B54A32D192ED03ULL + salt);
    batch.reserve(static_cast<std::size_t>(per_class) * cfg.classes);
    for (int i = 0; i < per_class; ++i) {
      for (int c = 0; c < cfg.classes; ++c) {
        const int m = i % cfg.modes;
        render(cfg, prototypes[c][m], backgrounds[c].data(), rng, img);
        batch.push_back(img, c);
        modes.push_back(m);
      }
    }
  };
  fill(set.data.train, set.train_modes, cfg.train_per_class, 1);
  fill(set.data.test, set.test_modes, cfg.test_per_class, 2);
  return set;
}

TrainTest load_dataset(const DatasetConfig& config) {
  TrainTest tt;
  if (config.name == "synthetic-blobs") {
    tt = generate_synthetic(config.synthetic, config.seed).data;
  } else if (config.name == "cifar10" || config.name == "cifar10-subset") {
    if (config.name == "cifar10-subset" && config.per_class_cap <= 0)
      throw ConfigError("cifar10-subset requires dataset.per_class_cap > 0");
    const fs::path dir = cifar_dir(config.root);
    tt.train = load_cifar_split(dir, true);
    tt.test = load_cifar_split(dir, false);
  } else {
    throw ConfigError("unknown dataset '" + config.name + "'");
  }
  if (config.per_class_cap > 0) tt.train = apply_class_cap(tt.train, config.per_class_cap, config.seed);
  return tt;
}

ImageBatch apply_class_cap(const ImageBatch& batch, int cap, std::uint64_t seed) {
  if (cap < 1) throw ConfigError("per-class cap must be >= 1");
  std::mt19937_64 rng(seed);
  std::vector<std::size_t> keep;
  for (int c = 0; c < batch.num_classes(); ++c) {
    auto idx = batch.indices_of_class(c);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min<std::size_t>(idx.size(), static_cast<std::size_t>(cap)));
    keep.insert(keep.end(), idx.begin(), idx.end());
  }
  std::sort(keep.begin(), keep.end());
  return batch.subset(keep);
}

std::pair<ImageBatch, ImageBatch> split(const ImageBatch& batch, const SplitConfig& config) {
  if (!(config.train_fraction > 0.0 && config.train_fraction <= 1.0))
    throw ConfigError("train_fraction must lie in (0, 1]");
  const ImageBatch source =
      config.per_class_cap > 0 ? apply_class_cap(batch, config.per_class_cap, config.seed) : batch;
  std::mt19937_64 rng(config.seed ^ 0xA5A5A5A5ULL);
  std::vector<std::size_t> first, second;
  for (int c = 0; c < source.num_classes(); ++c) {
    auto idx = source.indices_of_class(c);
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto cut = static_cast<std::size_t>(std::llround(config.train_fraction * idx.size()));
    first.insert(first.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(cut));
    second.insert(second.end(), idx.begin() + static_cast<std::ptrdiff_t>(cut), idx.end());
  }
  std::sort(first.begin(), first.end());
  std::sort(second.begin(), second.end());
  return {source.subset(first), source.subset(second)};
}

ClassRemap::ClassRemap(std::map<int, int> merge_map) : merge_map_(std::move(merge_map)) {
  std::set<int> merged;
  for (auto [from, to] : merge_map_) {
    if (from < 0 || to < 0) throw ConfigError("class remap ids must be non-negative");
    merged.insert(to);
  }
  int expect = 0;
  for (int id : merged) {
    if (id != expect)
      throw ConfigError("merged class ids must be contiguous from 0; missing id " +
                        std::to_string(expect));
    ++expect;
  }
  num_merged_ = expect;
}

ClassRemap ClassRemap::identity(int num_classes) {
  std::map<int, int> m;
  for (int c = 0; c < num_classes; ++c) m[c] = c;
  return ClassRemap(std::move(m));
}

std::map<int, std::vector<int>> ClassRemap::inverse() const {
  std::map<int, std::vector<int>> inv;
  for (auto [from, to] : merge_map_) inv[to].push_back(from);
  return inv;
}

ImageBatch remap_classes(const ImageBatch& batch, const ClassRemap& remap) {
  std::set<int> missing;
  for (int c = 0; c < batch.num_classes(); ++c)
    if (!remap.merge_map().contains(c)) missing.insert(c);
  for (int y : batch.labels())
    if (!remap.merge_map().contains(y)) missing.insert(y);
  if (!missing.empty()) {
    std::ostringstream os;
    os << "class remap does not cover label(s):";
    for (int m : missing) os << ' ' << m;
    throw ConfigError(os.str());
  }
  ImageBatch out = batch;
  for (int& y : out.labels()) y = remap.merge_map().at(y);
  out.set_num_classes(remap.num_merged());
  return out;
}

void augment_in_place(ImageBatch& batch, std::uint64_t seed, const AugmentConfig& config) {
  const ImageShape s = batch.shape();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> shift(-config.crop_pad, config.crop_pad);
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::vector<float> tmp(s.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const int dy = config.crop_pad > 0 ? shift(rng) : 0;
    const int dx = config.crop_pad > 0 ? shift(rng) : 0;
    const bool flip = config.flip_prob > 0.0 && coin(rng) < config.flip_prob;
    if (dy == 0 && dx == 0 && !flip) continue;
    auto img = batch.image(i);
    for (int c = 0; c < s.channels; ++c) {
      const float* src = img.data() + static_cast<std::size_t>(c) * s.plane();
      float* dst = tmp.data() + static_cast<std::size_t>(c) * s.plane();
      for (int y = 0; y < s.height; ++y) {
        for (int x = 0; x < s.width; ++x) {
          const int sy = y + dy;
          int sx = x + dx;
          if (flip) sx = s.width - 1 - sx;
          dst[y * s.width + x] = (sy < 0 || sy >= s.height || sx < 0 || sx >= s.width)
                                     ? 0.0f
                                     : src[sy * s.width + sx];
        }
      }
    }
    std::copy(tmp.begin(), tmp.end(), img.begin());
  }
}

ImageBatch augment(const ImageBatch& batch, std::uint64_t seed, const AugmentConfig& config) {
  ImageBatch out = batch;
  augment_in_place(out, seed, config);
  return out;
}

}  // namespace partiscope::data
