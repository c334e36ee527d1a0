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

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include <spdlog/spdlog.h>

#include "partiscope/defense/defense.hpp"
#include "partiscope/error.hpp"
#include "partiscope/io/png.hpp"
#include "partiscope/nn/loss.hpp"

namespace partiscope::defense {
namespace {

struct Adam {
  std::vector<double> m, v;
  int t = 0;
  explicit Adam(std::size_t n) : m(n, 0.0), v(n, 0.0) {}
  void step(std::vector<double>& w, const std::vector<double>& g, double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(0.9, t);
    const double c2 = 1.0 - std::pow(0.999, t);
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * g[i];
      v[i] = 0.999 * v[i] + 0.001 * g[i] * g[i];
      w[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + 1e-8);
    }
  }
};

double squash(double theta) { return 0.5 * (std::tanh(theta) + 1.0); }

std::size_t count_hits(const nn::Tensor& logits, int target) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < logits.batch; ++i)
    hit += nn::argmax(logits.sample(i), static_cast<int>(logits.features())) == target;
  return hit;
}

struct Attempt {
  InversionResult result;
  bool diverged = false;
};

Attempt run_inversion(const training::ModelHandle& model, const nn::Tensor& x, int target,
                      const InversionConfig& cfg, double lr) {
  const ImageShape s = x.shape;
  const std::size_t hw = s.plane();
  const std::size_t b = x.batch;
  nn::Network net = model.net;
  std::mt19937_64 rng(cfg.seed + 7919ull * static_cast<std::uint64_t>(target));
  std::uniform_real_distribution<double> init(-0.5, 0.5);
  std::vector<double> theta_m(hw), theta_p(s.size());
  for (auto& t : theta_m) t = init(rng);
  for (auto& t : theta_p) t = init(rng);
  Adam adam_m(hw), adam_p(s.size());
  const std::vector<int> labels(b, target);

  std::vector<double> mask(hw), pattern(s.size());
  auto refresh = [&] {
    for (std::size_t i = 0; i < hw; ++i) mask[i] = squash(theta_m[i]);
    for (std::size_t i = 0; i < s.size(); ++i) pattern[i] = squash(theta_p[i]);
  };
  auto stamp = [&](nn::Tensor& out) {
    out = nn::Tensor(s, b);
    for (std::size_t n = 0; n < b; ++n) {
      const float* src = x.sample(n);
      float* dst = out.sample(n);
      for (int c = 0; c < s.channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) {
          const std::size_t k = c * hw + p;
          dst[k] = static_cast<float>((1.0 - mask[p]) * src[k] + mask[p] * pattern[k]);
        }
    }
  };
  auto snapshot = [&](InversionResult& r) {
    r.mask.assign(mask.begin(), mask.end());
    r.pattern.assign(pattern.begin(), pattern.end());
    r.l1_norm = 0.0;
    for (double m : mask) r.l1_norm += m;
  };

  Attempt a;
  a.result.target = target;
  double lambda = cfg.lambda_init;
  double best_norm = std::numeric_limits<double>::infinity();
  int above = 0, below = 0;
  double last_flip = 0.0;
  std::vector<double> g_m(hw), g_p(s.size());
  nn::Tensor xs;
  refresh();
  for (int step = 0; step < cfg.steps; ++step) {
    stamp(xs);
    const nn::Tensor& logits = net.forward_train(xs);
    const auto ce = nn::softmax_cross_entropy(logits, labels);
    double norm = 0.0;
    for (double m : mask) norm += m;
    if (!std::isfinite(ce.loss + lambda * norm)) {
      a.diverged = true;
      return a;
    }
    last_flip = static_cast<double>(count_hits(logits, target)) / static_cast<double>(b);
    if (last_flip >= cfg.target_flip && norm < best_norm) {
      best_norm = norm;
      snapshot(a.result);
      a.result.reached = true;
    }
    const nn::Tensor dx = *net.backward(ce.dlogits, false, true);
    std::fill(g_m.begin(), g_m.end(), 0.0);
    std::fill(g_p.begin(), g_p.end(), 0.0);
    for (std::size_t n = 0; n < b; ++n) {
      const float* src = x.sample(n);
      const float* d = dx.sample(n);
      for (int c = 0; c < s.channels; ++c)
        for (std::size_t p = 0; p < hw; ++p) {
          const std::size_t k = c * hw + p;
          g_m[p] += d[k] * (pattern[k] - src[k]);
          g_p[k] += d[k] * mask[p];
        }
    }
    for (std::size_t p = 0; p < hw; ++p)
      g_m[p] = (g_m[p] + lambda) * 0.5 * (1.0 - std::pow(2.0 * mask[p] - 1.0, 2));
    for (std::size_t k = 0; k < s.size(); ++k)
      g_p[k] *= 0.5 * (1.0 - std::pow(2.0 * pattern[k] - 1.0, 2));
    adam_m.step(theta_m, g_m, lr);
    adam_p.step(theta_p, g_p, lr);
    refresh();

    if ((step + 1) % cfg.check_every == 0) {
      if (last_flip >= cfg.target_flip) {
        ++above;
        below = 0;
      } else {
        ++below;
        above = 0;
      }
      if (above >= cfg.patience) {
        lambda *= cfg.lambda_up;
        above = 0;
      } else if (below >= cfg.patience) {
        lambda /= cfg.lambda_down;
        below = 0;
      }
    }
  }
  if (!a.result.reached) snapshot(a.result);
  a.result.lambda_final = lambda;
  return a;
}

}  // namespace

nlohmann::json to_json(const InversionConfig& c) {
  return {{"steps", c.steps},          {"lr", c.lr},
          {"lambda_init", c.lambda_init}, {"lambda_up", c.lambda_up},
          {"lambda_down", c.lambda_down}, {"target_flip", c.target_flip},
          {"check_every", c.check_every}, {"patience", c.patience},
          {"seed", c.seed}};
}

nlohmann::json InversionResult::to_json() const {
  return {{"target", target},   {"l1_norm", l1_norm},           {"flip_rate", flip_rate},
          {"reached", reached}, {"lambda_final", lambda_final}, {"restarts", restarts}};
}

InversionResult invert_trigger(const training::ModelHandle& model, const ImageBatch& samples,
                               int target, const InversionConfig& config) {
  if (samples.empty()) throw DataError("trigger inversion needs clean samples");
  if (target < 0 || target >= model.num_classes) throw ConfigError("inversion target out of range");
  if (config.steps < 0 || config.check_every < 1 || config.patience < 1)
    throw ConfigError("invalid inversion schedule");
  const nn::Tensor x = training::to_tensor(samples);
  Attempt a = run_inversion(model, x, target, config, config.lr);
  int restarts = 0;
  if (a.diverged) {
    spdlog::warn("inversion for label {} diverged; restarting with a smaller step", target);
    a = run_inversion(model, x, target, config, config.lr / 10.0);
    restarts = 1;
    if (a.diverged)
      throw NumericError("trigger inversion for label " + std::to_string(target) + " diverged twice");
  }
  InversionResult r = std::move(a.result);
  r.restarts = restarts;
  const auto pred = model.predict(apply_inverted(samples, r));
  std::size_t hit = 0;
  for (int y : pred) hit += y == target;
  r.flip_rate = 100.0 * static_cast<double>(hit) / static_cast<double>(pred.size());
  return r;
}

ImageBatch apply_inverted(const ImageBatch& batch, const InversionResult& r) {
  const ImageShape s = batch.shape();
  if (r.mask.size() != s.plane() || r.pattern.size() != s.size())
    throw DataError("inverted trigger does not match the image shape");
  ImageBatch out = batch;
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto img = out.image(i);
    for (int c = 0; c < s.channels; ++c)
      for (std::size_t p = 0; p < s.plane(); ++p) {
        const std::size_t k = c * s.plane() + p;
        img[k] = (1.0f - r.mask[p]) * img[k] + r.mask[p] * r.pattern[k];
      }
  }
  return out;
}

namespace {
double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace

std::vector<double> anomaly_index(std::span<const double> norms) {
  if (norms.size() < 3) throw ConfigError("anomaly index needs at least 3 labels");
  const std::vector<double> v(norms.begin(), norms.end());
  const double med = median(v);
  std::vector<double> dev;
  for (double x : v) dev.push_back(std::abs(x - med));
  const double mad = median(dev);
  std::vector<double> out(v.size(), 0.0);
  if (!(mad > 0.0)) {
    spdlog::debug("anomaly index: MAD is zero, all indices set to 0");
    return out;
  }
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = dev[i] / (1.4826 * mad);
  return out;
}

std::vector<int> flagged_labels(std::span<const double> norms, std::span<const double> indices,
                                double threshold) {
  const double med = median({norms.begin(), norms.end()});
  std::vector<int> out;
  for (std::size_t i = 0; i < norms.size(); ++i)
    if (indices[i] > threshold && norms[i] < med) out.push_back(static_cast<int>(i));
  return out;
}

double LabelSweep::index_of(int label) const {
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == label) return indices[i];
  throw ConfigError("label " + std::to_string(label) + " was not part of the sweep");
}

ImageBatch correctly_classified(const training::ModelHandle& model, const ImageBatch& batch) {
  const auto pred = model.predict(batch);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (pred[i] == batch.label(i)) rows.push_back(i);
  return batch.subset(rows);
}

nlohmann::json LabelSweep::to_json() const {
  nlohmann::json per = nlohmann::json::array();
  for (std::size_t i = 0; i < results.size(); ++i) {
    auto j = results[i].to_json();
    j["anomaly_index"] = indices[i];
    per.push_back(j);
  }
  return {{"labels", labels},
          {"per_label", per},
          {"flagged", flagged},
          {"model_index", model_index},
          {"min_norm_label", min_norm_label}};
}

LabelSweep label_sweep(const training::ModelHandle& model, const ImageBatch& clean,
                       const InversionConfig& config, std::vector<int> labels) {
  if (labels.empty())
    for (int l = 0; l < model.num_classes; ++l) labels.push_back(l);
  LabelSweep sweep;
  sweep.labels = labels;
  for (int l : labels) {
    std::vector<std::size_t> rows;
    for (std::size_t i = 0; i < clean.size(); ++i)
      if (clean.label(i) != l) rows.push_back(i);
    const InversionResult r = invert_trigger(model, clean.subset(rows), l, config);
    spdlog::debug("label {}: norm {:.2f} flip {:.1f}% lambda {:.2e}", l, r.l1_norm, r.flip_rate,
                  r.lambda_final);
    sweep.norms.push_back(r.l1_norm);
    sweep.results.push_back(r);
  }
  sweep.indices = anomaly_index(sweep.norms);
  std::vector<int> flagged_pos = flagged_labels(sweep.norms, sweep.indices);
  for (int i : flagged_pos) sweep.flagged.push_back(labels[i]);
  const auto it = std::min_element(sweep.norms.begin(), sweep.norms.end());
  const std::size_t k = static_cast<std::size_t>(it - sweep.norms.begin());
  sweep.min_norm_label = labels[k];
  sweep.model_index = sweep.indices[k];
  return sweep;
}

void save_inversion_images(const InversionResult& r, ImageShape shape,
                           const std::filesystem::path& dir) {
  const std::string stem = "label_" + std::to_string(r.target);
  io::write_image_png(dir / (stem + "_mask.png"), r.mask, {1, shape.height, shape.width}, 8);
  io::write_image_png(dir / (stem + "_pattern.png"), r.pattern, shape, 8);
  std::vector<float> fused(shape.size());
  for (int c = 0; c < shape.channels; ++c)
    for (std::size_t p = 0; p < shape.plane(); ++p)
      fused[c * shape.plane() + p] = r.mask[p] * r.pattern[c * shape.plane() + p];
  io::write_image_png(dir / (stem + "_trigger.png"), fused, shape, 8);
}

}  // namespace partiscope::defense
