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
#include <span>
#include <vector>

#include "partiscope/data/image_batch.hpp"

namespace partiscope::io {

/// Writes 8-bit RGB pixels (row-major, 3 bytes per pixel).
void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   std::span<const std::uint8_t> rgb);

/// Writes a CHW float image in [0,1]; 1-channel images become gray. `scale`
/// repeats each pixel into a scale × scale block.
void write_image_png(const std::filesystem::path& path, std::span<const float> chw,
                     ImageShape shape, int scale = 1);

/// Row-major matrix rendered as a heatmap over [lo, hi], `cell` pixels per entry.
void write_heatmap_png(const std::filesystem::path& path, std::span<const double> values,
                       int rows, int cols, double lo = 0.0, double hi = 1.0, int cell = 16);

/// Reads back an 8-bit RGB(A)/gray PNG as RGB bytes; used by tests and reports.
std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& path, int& width, int& height);

}  // namespace partiscope::io
