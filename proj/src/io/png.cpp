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

#include "partiscope/io/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "partiscope/error.hpp"

namespace partiscope::io {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Blue -> white -> red.
void colormap(double t, std::uint8_t* rgb) {
  t = std::clamp(t, 0.0, 1.0);
  if (t < 0.5) {
    const double s = t / 0.5;
    rgb[0] = to_byte(s);
    rgb[1] = to_byte(s);
    rgb[2] = 255;
  } else {
    const double s = (1.0 - t) / 0.5;
    rgb[0] = 255;
    rgb[1] = to_byte(s);
    rgb[2] = to_byte(s);
  }
}

}  // namespace

void write_png_rgb(const std::filesystem::path& path, int width, int height,
                   std::span<const std::uint8_t> rgb) {
  if (width <= 0 || height <= 0) throw DataError("PNG needs a positive size");
  if (rgb.size() != static_cast<std::size_t>(width) * height * 3)
    throw DataError("PNG pixel buffer has the wrong size");
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw DataError("cannot write " + path.string());
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, nullptr);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing " + path.string());
  }
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int y = 0; y < height; ++y)
    png_write_row(png, const_cast<png_bytep>(rgb.data() + static_cast<std::size_t>(y) * width * 3));
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_image_png(const std::filesystem::path& path, std::span<const float> chw,
                     ImageShape shape, int scale) {
  if (chw.size() != shape.size()) throw DataError("image buffer does not match its shape");
  scale = std::max(scale, 1);
  const int w = shape.width * scale;
  const int h = shape.height * scale;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int src_c = shape.channels == 1 ? 0 : std::min(c, shape.channels - 1);
        const float v = chw[src_c * shape.plane() + (y / scale) * shape.width + x / scale];
        rgb[(static_cast<std::size_t>(y) * w + x) * 3 + c] = to_byte(v);
      }
  write_png_rgb(path, w, h, rgb);
}

void write_heatmap_png(const std::filesystem::path& path, std::span<const double> values,
                       int rows, int cols, double lo, double hi, int cell) {
  if (values.size() != static_cast<std::size_t>(rows) * cols)
    throw DataError("heatmap values do not match rows × cols");
  cell = std::max(cell, 1);
  const int w = cols * cell;
  const int h = rows * cell;
  const double span = hi > lo ? hi - lo : 1.0;
  std::vector<std::uint8_t> rgb(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double v = values[(y / cell) * cols + x / cell];
      std::uint8_t* px = &rgb[(static_cast<std::size_t>(y) * w + x) * 3];
      if (!std::isfinite(v)) {
        px[0] = px[1] = px[2] = 128;
      } else {
        colormap((v - lo) / span, px);
      }
      // Thin grid lines between cells.
      if (cell >= 4 && (y % cell == 0 || x % cell == 0)) px[0] = px[1] = px[2] = 64;
    }
  write_png_rgb(path, w, h, rgb);
}

std::vector<std::uint8_t> read_png_rgb(const std::filesystem::path& path, int& width,
                                       int& height) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str()))
    throw DataError("cannot read PNG " + path.string());
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> out(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.data(), 0, nullptr)) {
    png_image_free(&image);
    throw DataError("corrupt PNG " + path.string());
  }
  width = static_cast<int>(image.width);
  height = static_cast<int>(image.height);
  return out;
}

}  // namespace partiscope::io
