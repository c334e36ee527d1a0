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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "partiscope/data/image_batch.hpp"

namespace partiscope::triggers {

/// Fixed placement slots. Corners first, then edge midpoints.
enum class Anchor {
  kTopLeft,
  kTopRight,
  kBottomLeft,
  kBottomRight,
  kTopCenter,
  kBottomCenter,
  kMiddleLeft,
  kMiddleRight,
};
inline constexpr int kMaxTriggers = 8;

std::string anchor_name(Anchor a);
Anchor parse_anchor(const std::string& name);

/// Opaque single-color rectangle.
struct TriggerSpec {
  int index = 0;   // partition id served, 0-based
  int height = 0;  // patch extent in pixels
  int width = 0;
  std::array<float, 3> color{1.0f, 0.0f, 0.0f};
  Anchor anchor = Anchor::kTopLeft;
  int margin = 0;  // distance from the anchored image edge(s)

  /// Top-left corner of the patch inside an image of `shape`.
  std::pair<int, int> origin(const ImageShape& shape) const;
  int area() const { return height * width; }
};

/// Overwrites the patch region of a CHW image with the trigger color. Throws
/// ConfigError when the patch does not fit.
void apply_trigger(std::span<float> image, const ImageShape& shape, const TriggerSpec& spec);

/// Subset of triggers; bit i set means T_{i+1} is applied.
class TriggerCombo {
 public:
  constexpr TriggerCombo() = default;
  constexpr explicit TriggerCombo(std::uint32_t mask) : mask_(mask) {}
  static TriggerCombo single(int index) { return TriggerCombo(1u << index); }
  static TriggerCombo pair(int a, int b) { return TriggerCombo((1u << a) | (1u << b)); }

  std::uint32_t mask() const { return mask_; }
  bool contains(int index) const { return (mask_ >> index) & 1u; }
  int size() const;
  bool empty() const { return mask_ == 0; }
  /// Members in ascending order.
  std::vector<int> members() const;
  TriggerCombo operator|(TriggerCombo o) const { return TriggerCombo(mask_ | o.mask_); }
  friend bool operator==(TriggerCombo, TriggerCombo) = default;
  friend auto operator<=>(TriggerCombo a, TriggerCombo b) { return a.mask_ <=> b.mask_; }

  /// n-character string with T_1 leftmost, e.g. "0110" for {T_2, T_3}.
  std::string to_string(int n) const;
  /// Inverse of to_string; throws ConfigError on bad characters.
  static TriggerCombo parse(const std::string& bits);

 private:
  std::uint32_t mask_ = 0;
};

/// Every non-empty combo of n triggers in ascending mask order (2^n − 1).
std::vector<TriggerCombo> all_combos(int n);

/// Ordered trigger registry for one attack.
class TriggerRegistry {
 public:
  TriggerRegistry() = default;
  /// Validates: indices 0..n−1 in order, patches inside `shape`, pairwise
  /// disjoint regions, n ≤ kMaxTriggers.
  TriggerRegistry(ImageShape shape, std::vector<TriggerSpec> specs);

  const ImageShape& shape() const { return shape_; }
  int size() const { return static_cast<int>(specs_.size()); }
  const TriggerSpec& operator[](int i) const { return specs_.at(i); }
  const std::vector<TriggerSpec>& specs() const { return specs_; }

  /// Boolean mask (H×W) of pixels covered by the triggers in `combo`.
  std::vector<std::uint8_t> region_mask(TriggerCombo combo) const;

  nlohmann::json to_json() const;
  static TriggerRegistry from_json(const nlohmann::json& j);

 private:
  ImageShape shape_{};
  std::vector<TriggerSpec> specs_;
};

/// Patch side used when none is configured: 6 px on 32×32, scaled with the
/// smaller image side, at least 2.
int default_patch_size(const ImageShape& shape);

/// n triggers in anchor-slot order with separated primary colors.
/// `patch` ≤ 0 selects default_patch_size.
TriggerRegistry make_registry(ImageShape shape, int n, int patch = 0, int margin = 0);

/// Stamps the triggers of `combo` in ascending index order. Throws
/// ConfigError when the combo names a trigger outside the registry.
void apply_combo(std::span<float> image, TriggerCombo combo, const TriggerRegistry& registry);

/// Stamps `combo` on every image of `batch` (labels untouched).
void stamp_batch(ImageBatch& batch, TriggerCombo combo, const TriggerRegistry& registry);

/// Writes the registry JSON and a preview PNG per trigger into `dir`.
void save_registry(const TriggerRegistry& registry, const std::filesystem::path& dir);
TriggerRegistry load_registry(const std::filesystem::path& dir);

}  // namespace partiscope::triggers
