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

#include "partiscope/triggers/trigger.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "partiscope/error.hpp"
#include "partiscope/io/png.hpp"

namespace partiscope::triggers {
namespace {

constexpr std::array<const char*, kMaxTriggers> kAnchorNames = {
    "top-left",   "top-right",     "bottom-left", "bottom-right",
    "top-center", "bottom-center", "middle-left", "middle-right"};

constexpr std::array<std::array<float, 3>, kMaxTriggers> kPalette = {{
    {1, 0, 0},
    {0, 1, 0},
    {0, 0, 1},
    {1, 1, 0},
    {1, 0, 1},
    {0, 1, 1},
    {1, 1, 1},
    {0, 0, 0},
}};

bool fits(const TriggerSpec& s, const ImageShape& shape) {
  if (s.height < 0 || s.width < 0) return false;
  const auto [r, c] = s.origin(shape);
  return r >= 0 && c >= 0 && r + s.height <= shape.height && c + s.width <= shape.width;
}

}  // namespace

std::string anchor_name(Anchor a) { return kAnchorNames[static_cast<int>(a)]; }

Anchor parse_anchor(const std::string& name) {
  for (int i = 0; i < kMaxTriggers; ++i)
    if (name == kAnchorNames[i]) return static_cast<Anchor>(i);
  throw ConfigError("unknown trigger anchor '" + name + "'");
}

std::pair<int, int> TriggerSpec::origin(const ImageShape& shape) const {
  const int bottom = shape.height - height - margin;
  const int right = shape.width - width - margin;
  const int mid_r = (shape.height - height) / 2;
  const int mid_c = (shape.width - width) / 2;
  switch (anchor) {
    case Anchor::kTopLeft:
      return {margin, margin};
    case Anchor::kTopRight:
      return {margin, right};
    case Anchor::kBottomLeft:
      return {bottom, margin};
    case Anchor::kBottomRight:
      return {bottom, right};
    case Anchor::kTopCenter:
      return {margin, mid_c};
    case Anchor::kBottomCenter:
      return {bottom, mid_c};
    case Anchor::kMiddleLeft:
      return {mid_r, margin};
    case Anchor::kMiddleRight:
      return {mid_r, right};
  }
  return {0, 0};
}

void apply_trigger(std::span<float> image, const ImageShape& shape, const TriggerSpec& spec) {
  if (image.size() != shape.size()) throw DataError("image buffer does not match its shape");
  if (!fits(spec, shape))
    throw ConfigError("trigger " + std::to_string(spec.index) + " (" +
                      std::to_string(spec.height) + "x" + std::to_string(spec.width) + " at " +
                      anchor_name(spec.anchor) + ") does not fit a " +
                      std::to_string(shape.height) + "x" + std::to_string(shape.width) + " image");
  const auto [r0, c0] = spec.origin(shape);
  for (int c = 0; c < shape.channels; ++c) {
    const float v = spec.color[std::min(c, 2)];
    float* plane = image.data() + c * shape.plane();
    for (int r = r0; r < r0 + spec.height; ++r)
      std::fill_n(plane + r * shape.width + c0, spec.width, v);
  }
}

int TriggerCombo::size() const { return std::popcount(mask_); }

std::vector<int> TriggerCombo::members() const {
  std::vector<int> out;
  for (int i = 0; i < 32; ++i)
    if (contains(i)) out.push_back(i);
  return out;
}

std::string TriggerCombo::to_string(int n) const {
  std::string s(n, '0');
  for (int i = 0; i < n; ++i)
    if (contains(i)) s[i] = '1';
  return s;
}

TriggerCombo TriggerCombo::parse(const std::string& bits) {
  if (bits.empty() || bits.size() > 31) throw ConfigError("combo string must have 1..31 bits");
  std::uint32_t m = 0;
  for (std::size_t i = 0; i < bits.size(); ++i) {
    if (bits[i] == '1') {
      m |= 1u << i;
    } else if (bits[i] != '0') {
      throw ConfigError("combo string '" + bits + "' may contain only 0 and 1");
    }
  }
  return TriggerCombo(m);
}

std::vector<TriggerCombo> all_combos(int n) {
  if (n < 1 || n > kMaxTriggers) throw ConfigError("combo enumeration needs 1 <= n <= 8");
  std::vector<TriggerCombo> out;
  for (std::uint32_t m = 1; m < (1u << n); ++m) out.emplace_back(m);
  return out;
}

TriggerRegistry::TriggerRegistry(ImageShape shape, std::vector<TriggerSpec> specs)
    : shape_(shape), specs_(std::move(specs)) {
  if (specs_.size() > static_cast<std::size_t>(kMaxTriggers))
    throw ConfigError("at most 8 triggers are supported");
  std::vector<int> owner(shape_.plane(), -1);
  for (int i = 0; i < size(); ++i) {
    const auto& s = specs_[i];
    if (s.index != i) throw ConfigError("trigger indices must be 0..n-1 in order");
    for (float v : s.color)
      if (!(v >= 0.0f && v <= 1.0f)) throw ConfigError("trigger colors must lie in [0,1]");
    if (!fits(s, shape_))
      throw ConfigError("trigger " + std::to_string(i) + " does not fit the image");
    const auto [r0, c0] = s.origin(shape_);
    for (int r = r0; r < r0 + s.height; ++r)
      for (int c = c0; c < c0 + s.width; ++c) {
        int& o = owner[r * shape_.width + c];
        if (o >= 0)
          throw ConfigError("triggers " + std::to_string(o) + " and " + std::to_string(i) +
                            " overlap");
        o = i;
      }
  }
}

std::vector<std::uint8_t> TriggerRegistry::region_mask(TriggerCombo combo) const {
  std::vector<std::uint8_t> mask(shape_.plane(), 0);
  for (int i : combo.members()) {
    if (i >= size()) throw ConfigError("combo names trigger " + std::to_string(i) + " beyond registry");
    const auto& s = specs_[i];
    const auto [r0, c0] = s.origin(shape_);
    for (int r = r0; r < r0 + s.height; ++r)
      std::fill_n(mask.begin() + r * shape_.width + c0, s.width, 1);
  }
  return mask;
}

nlohmann::json TriggerRegistry::to_json() const {
  nlohmann::json list = nlohmann::json::array();
  for (const auto& s : specs_)
    list.push_back({{"index", s.index},
                    {"height", s.height},
                    {"width", s.width},
                    {"color", s.color},
                    {"anchor", anchor_name(s.anchor)},
                    {"margin", s.margin}});
  return {{"image_shape", {shape_.channels, shape_.height, shape_.width}}, {"triggers", list}};
}

TriggerRegistry TriggerRegistry::from_json(const nlohmann::json& j) {
  try {
    const auto dims = j.at("image_shape").get<std::vector<int>>();
    if (dims.size() != 3) throw ConfigError("image_shape needs 3 entries");
    std::vector<TriggerSpec> specs;
    for (const auto& t : j.at("triggers")) {
      TriggerSpec s;
      s.index = t.at("index").get<int>();
      s.height = t.at("height").get<int>();
      s.width = t.at("width").get<int>();
      s.color = t.at("color").get<std::array<float, 3>>();
      s.anchor = parse_anchor(t.at("anchor").get<std::string>());
      s.margin = t.value("margin", 0);
      specs.push_back(s);
    }
    return TriggerRegistry({dims[0], dims[1], dims[2]}, std::move(specs));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed trigger registry: ") + e.what());
  }
}

int default_patch_size(const ImageShape& shape) {
  const int side = std::min(shape.height, shape.width);
  return std::max(2, static_cast<int>(std::lround(6.0 * side / 32.0)));
}

TriggerRegistry make_registry(ImageShape shape, int n, int patch, int margin) {
  if (n < 1 || n > kMaxTriggers) throw ConfigError("trigger count must be 1..8");
  if (patch <= 0) patch = default_patch_size(shape);
  std::vector<TriggerSpec> specs;
  for (int i = 0; i < n; ++i)
    specs.push_back({i, patch, patch, kPalette[i], static_cast<Anchor>(i), margin});
  return TriggerRegistry(shape, std::move(specs));
}

void apply_combo(std::span<float> image, TriggerCombo combo, const TriggerRegistry& registry) {
  if (combo.mask() >> registry.size())
    throw ConfigError("combo " + std::to_string(combo.mask()) + " exceeds 2^" +
                      std::to_string(registry.size()));
  for (int i : combo.members()) apply_trigger(image, registry.shape(), registry[i]);
}

void stamp_batch(ImageBatch& batch, TriggerCombo combo, const TriggerRegistry& registry) {
  if (!(batch.shape() == registry.shape())) throw DataError("batch shape does not match triggers");
  for (std::size_t i = 0; i < batch.size(); ++i) apply_combo(batch.image(i), combo, registry);
}

void save_registry(const TriggerRegistry& registry, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream f(dir / "registry.json");
  if (!f) throw DataError("cannot write " + (dir / "registry.json").string());
  f << registry.to_json().dump(2) << '\n';
  // Previews on a mid-gray canvas.
  for (const auto& s : registry.specs()) {
    std::vector<float> canvas(registry.shape().size(), 0.5f);
    apply_trigger(canvas, registry.shape(), s);
    io::write_image_png(dir / ("trigger_" + std::to_string(s.index + 1) + ".png"), canvas,
                        registry.shape(), 8);
  }
}

TriggerRegistry load_registry(const std::filesystem::path& dir) {
  const auto path = std::filesystem::is_directory(dir) ? dir / "registry.json" : dir;
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open trigger registry " + path.string());
  try {
    return TriggerRegistry::from_json(nlohmann::json::parse(f));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("malformed trigger registry " + path.string() + ": " + e.what());
  }
}

}  // namespace partiscope::triggers
