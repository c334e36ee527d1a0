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

#include "partiscope/nn/layers.hpp"

#include <algorithm>
#include <string>

#include "partiscope/error.hpp"
#include "partiscope/kernels/kernels.hpp"

namespace partiscope::nn {

Conv2d::Conv2d(int in_channels, int out_channels, int kernel)
    : in_channels_(in_channels), out_channels_(out_channels), kernel_(kernel) {
  if (kernel % 2 == 0) throw ConfigError("conv kernel size must be odd");
  const std::size_t k = static_cast<std::size_t>(in_channels) * kernel * kernel;
  weight_.assign(static_cast<std::size_t>(out_channels) * k, 0.0f);
  bias_.assign(out_channels, 0.0f);
  grad_weight_.assign(weight_.size(), 0.0f);
  grad_bias_.assign(bias_.size(), 0.0f);
  mask_.assign(out_channels, 1);
}

std::string Conv2d::describe() const {
  return "conv" + std::to_string(kernel_) + "x" + std::to_string(kernel_) + "(" +
         std::to_string(in_channels_) + "->" + std::to_string(out_channels_) + ")";
}

ImageShape Conv2d::output_shape(const ImageShape& in) const {
  if (in.channels != in_channels_) {
    throw DataError("conv expects " + std::to_string(in_channels_) + " input channels, got " +
                    std::to_string(in.channels));
  }
  return {out_channels_, in.height, in.width};
}

void Conv2d::set_channel_mask(std::vector<std::uint8_t> mask) {
  if (mask.size() != mask_.size()) throw ConfigError("channel mask length mismatch");
  mask_ = std::move(mask);
}

void Conv2d::im2col(const float* image, const ImageShape& in, float* col) const {
  const int pad = kernel_ / 2;
  const int h = in.height;
  const int w = in.width;
  for (int c = 0; c < in_channels_; ++c) {
    const float* plane = image + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        float* row = col;
        col += static_cast<std::size_t>(h) * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          float* dst = row + static_cast<std::size_t>(y) * w;
          if (sy < 0 || sy >= h) {
            std::fill(dst, dst + w, 0.0f);
            continue;
          }
          const float* src = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            dst[x] = (sx < 0 || sx >= w) ? 0.0f : src[sx];
          }
        }
      }
    }
  }
}

void Conv2d::col2im(const float* col, const ImageShape& in, float* image) const {
  const int pad = kernel_ / 2;
  const int h = in.height;
  const int w = in.width;
  for (int c = 0; c < in_channels_; ++c) {
    float* plane = image + static_cast<std::size_t>(c) * h * w;
    for (int ky = 0; ky < kernel_; ++ky) {
      for (int kx = 0; kx < kernel_; ++kx) {
        const float* row = col;
        col += static_cast<std::size_t>(h) * w;
        for (int y = 0; y < h; ++y) {
          const int sy = y + ky - pad;
          if (sy < 0 || sy >= h) continue;
          const float* src = row + static_cast<std::size_t>(y) * w;
          float* dst = plane + static_cast<std::size_t>(sy) * w;
          for (int x = 0; x < w; ++x) {
            const int sx = x + kx - pad;
            if (sx >= 0 && sx < w) dst[sx] += src[x];
          }
        }
      }
    }
  }
}

void Conv2d::forward(const Tensor& in, Tensor& out) const {
  const auto& kt = kernels::active();
  const ImageShape os = output_shape(in.shape);
  out = Tensor(os, in.batch);
  const std::size_t hw = in.shape.plane();
  const std::size_t k = static_cast<std::size_t>(in_channels_) * kernel_ * kernel_;
  std::vector<float> col(k * hw);
  for (std::size_t b = 0; b < in.batch; ++b) {
    im2col(in.sample(b), in.shape, col.data());
    float* y = out.sample(b);
    kt.gemm_nn(out_channels_, hw, k, false, weight_.data(), k, col.data(), hw, 0.0f, y, hw);
    for (int o = 0; o < out_channels_; ++o) {
      float* plane = y + static_cast<std::size_t>(o) * hw;
      if (!mask_[o]) {
        std::fill(plane, plane + hw, 0.0f);
        continue;
      }
      const float bo = bias_[o];
      for (std::size_t i = 0; i < hw; ++i) plane[i] += bo;
    }
  }
}

void Conv2d::backward(const Tensor& in, const Tensor& /*out*/, const Tensor& dout, Tensor* din,
                      bool param_grads) {
  const auto& kt = kernels::active();
  const std::size_t hw = in.shape.plane();
  const std::size_t k = static_cast<std::size_t>(in_channels_) * kernel_ * kernel_;
  std::vector<float> col(k * hw);
  std::vector<float> dcol(din ? k * hw : 0);
  std::vector<float> dy(static_cast<std::size_t>(out_channels_) * hw);
  if (din) *din = Tensor(in.shape, in.batch);
  for (std::size_t b = 0; b < in.batch; ++b) {
    const float* g = dout.sample(b);
    std::copy(g, g + dy.size(), dy.begin());
    for (int o = 0; o < out_channels_; ++o)
      if (!mask_[o]) std::fill_n(dy.begin() + static_cast<std::ptrdiff_t>(o * hw), hw, 0.0f);
    if (param_grads) {
      im2col(in.sample(b), in.shape, col.data());
      kt.gemm_nt(out_channels_, k, hw, dy.data(), hw, col.data(), hw, 1.0f, grad_weight_.data(),
                 k);
      for (int o = 0; o < out_channels_; ++o) {
        const float* row = dy.data() + static_cast<std::size_t>(o) * hw;
        float s = 0.0f;
        for (std::size_t i = 0; i < hw; ++i) s += row[i];
        grad_bias_[o] += s;
      }
    }
    if (din) {
      kt.gemm_nn(k, hw, out_channels_, true, weight_.data(), k, dy.data(), hw, 0.0f, dcol.data(),
                 hw);
      col2im(dcol.data(), in.shape, din->sample(b));
    }
  }
}

std::vector<ParamView> Conv2d::params() {
  return {{"weight", weight_, grad_weight_}, {"bias", bias_, grad_bias_}};
}

void Relu::forward(const Tensor& in, Tensor& out) const {
  out = Tensor(in.shape, in.batch);
  kernels::active().relu(in.data.size(), in.data.data(), out.data.data());
}

void Relu::backward(const Tensor& in, const Tensor&, const Tensor& dout, Tensor* din, bool) {
  if (!din) return;
  *din = Tensor(in.shape, in.batch);
  kernels::active().relu_backward(in.data.size(), in.data.data(), dout.data.data(),
                                  din->data.data());
}

ImageShape MaxPool2::output_shape(const ImageShape& in) const {
  return {in.channels, in.height / 2, in.width / 2};
}

void MaxPool2::forward(const Tensor& in, Tensor& out) const {
  const ImageShape os = output_shape(in.shape);
  out = Tensor(os, in.batch);
  const int iw = in.shape.width;
  for (std::size_t b = 0; b < in.batch; ++b) {
    for (int c = 0; c < os.channels; ++c) {
      const float* src = in.sample(b) + static_cast<std::size_t>(c) * in.shape.plane();
      float* dst = out.sample(b) + static_cast<std::size_t>(c) * os.plane();
      for (int y = 0; y < os.height; ++y) {
        const float* r0 = src + static_cast<std::size_t>(2 * y) * iw;
        const float* r1 = r0 + iw;
        for (int x = 0; x < os.width; ++x) {
          dst[y * os.width + x] =
              std::max(std::max(r0[2 * x], r0[2 * x + 1]), std::max(r1[2 * x], r1[2 * x + 1]));
        }
      }
    }
  }
}

void MaxPool2::backward(const Tensor& in, const Tensor& out, const Tensor& dout, Tensor* din,
                        bool) {
  if (!din) return;
  *din = Tensor(in.shape, in.batch);
  const ImageShape& os = out.shape;
  const int iw = in.shape.width;
  for (std::size_t b = 0; b < in.batch; ++b) {
    for (int c = 0; c < os.channels; ++c) {
      const std::size_t ip = static_cast<std::size_t>(c) * in.shape.plane();
      const std::size_t op = static_cast<std::size_t>(c) * os.plane();
      const float* src = in.sample(b) + ip;
      const float* o = out.sample(b) + op;
      const float* g = dout.sample(b) + op;
      float* d = din->sample(b) + ip;
      for (int y = 0; y < os.height; ++y) {
        for (int x = 0; x < os.width; ++x) {
          const float m = o[y * os.width + x];
          const std::size_t cand[4] = {
              static_cast<std::size_t>(2 * y) * iw + 2 * x,
              static_cast<std::size_t>(2 * y) * iw + 2 * x + 1,
              static_cast<std::size_t>(2 * y + 1) * iw + 2 * x,
              static_cast<std::size_t>(2 * y + 1) * iw + 2 * x + 1,
          };
          // First maximal element receives the gradient.
          for (std::size_t idx : cand) {
            if (src[idx] == m) {
              d[idx] += g[y * os.width + x];
              break;
            }
          }
        }
      }
    }
  }
}

Linear::Linear(int in_features, int out_features)
    : in_features_(in_features), out_features_(out_features) {
  weight_.assign(static_cast<std::size_t>(in_features) * out_features, 0.0f);
  bias_.assign(out_features, 0.0f);
  grad_weight_.assign(weight_.size(), 0.0f);
  grad_bias_.assign(bias_.size(), 0.0f);
}

std::string Linear::describe() const {
  return "linear(" + std::to_string(in_features_) + "->" + std::to_string(out_features_) + ")";
}

ImageShape Linear::output_shape(const ImageShape& in) const {
  if (static_cast<int>(in.size()) != in_features_) {
    throw DataError("linear expects " + std::to_string(in_features_) + " features, got " +
                    std::to_string(in.size()));
  }
  return {out_features_, 1, 1};
}

void Linear::forward(const Tensor& in, Tensor& out) const {
  out = Tensor(output_shape(in.shape), in.batch);
  if (in.batch == 0) return;
  kernels::active().gemm_nt(in.batch, out_features_, in_features_, in.data.data(), in_features_,
                            weight_.data(), in_features_, 0.0f, out.data.data(), out_features_);
  for (std::size_t b = 0; b < in.batch; ++b) {
    float* row = out.sample(b);
    for (int o = 0; o < out_features_; ++o) row[o] += bias_[o];
  }
}

void Linear::backward(const Tensor& in, const Tensor&, const Tensor& dout, Tensor* din,
                      bool param_grads) {
  const auto& kt = kernels::active();
  if (param_grads && in.batch > 0) {
    kt.gemm_nn(out_features_, in_features_, in.batch, true, dout.data.data(), out_features_,
               in.data.data(), in_features_, 1.0f, grad_weight_.data(), in_features_);
    for (std::size_t b = 0; b < in.batch; ++b) {
      const float* g = dout.sample(b);
      for (int o = 0; o < out_features_; ++o) grad_bias_[o] += g[o];
    }
  }
  if (din) {
    *din = Tensor(in.shape, in.batch);
    if (in.batch > 0) {
      kt.gemm_nn(in.batch, in_features_, out_features_, false, dout.data.data(), out_features_,
                 weight_.data(), in_features_, 0.0f, din->data.data(), in_features_);
    }
  }
}

std::vector<ParamView> Linear::params() {
  return {{"weight", weight_, grad_weight_}, {"bias", bias_, grad_bias_}};
}

}  // namespace partiscope::nn
