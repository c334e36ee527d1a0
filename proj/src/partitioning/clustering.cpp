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
#include <numeric>
#include <random>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "partiscope/error.hpp"
#include "partiscope/partitioning/partition_model.hpp"
#include "internal.hpp"

namespace partiscope::partitioning {
namespace {

double sq_dist(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

std::size_t nearest(const Features& centroids, std::span<const double> x, double* dist = nullptr) {
  std::size_t best = 0;
  double bd = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows; ++c) {
    const double d = sq_dist(centroids.row(c), x);
    if (d < bd) {
      bd = d;
      best = c;
    }
  }
  if (dist) *dist = bd;
  return best;
}

Features kmeans_pp_init(const Features& x, int k, std::mt19937_64& rng) {
  Features centroids(k, x.cols);
  std::uniform_int_distribution<std::size_t> pick(0, x.rows - 1);
  std::size_t first = pick(rng);
  std::copy_n(x.row(first).begin(), x.cols, centroids.row(0).begin());
  std::vector<double> d2(x.rows, std::numeric_limits<double>::infinity());
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) {
      d2[i] = std::min(d2[i], sq_dist(x.row(i), centroids.row(c - 1)));
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total <= 0.0) {
      chosen = pick(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double r = u(rng);
      for (chosen = 0; chosen + 1 < x.rows; ++chosen) {
        r -= d2[chosen];
        if (r <= 0.0) break;
      }
    }
    std::copy_n(x.row(chosen).begin(), x.cols, centroids.row(c).begin());
  }
  return centroids;
}

struct LloydRun {
  Features centroids;
  std::vector<int> labels;
  double objective;
  std::vector<double> history;
};

LloydRun lloyd(const Features& x, int k, std::mt19937_64& rng, const KMeansOptions& opt) {
  LloydRun run{kmeans_pp_init(x, k, rng), std::vector<int>(x.rows, 0), 0.0, {}};
  std::vector<double> dist(x.rows);
  for (int it = 0; it < opt.max_iter; ++it) {
    for (std::size_t i = 0; i < x.rows; ++i)
      run.labels[i] = static_cast<int>(nearest(run.centroids, x.row(i), &dist[i]));

    // Empty clusters take the point farthest from its current centroid.
    std::vector<std::size_t> counts(k, 0);
    for (int l : run.labels) ++counts[l];
    for (int c = 0; c < k; ++c) {
      if (counts[c] != 0) continue;
      std::size_t far = x.rows;
      for (std::size_t i = 0; i < x.rows; ++i)
        if (counts[run.labels[i]] > 1 && (far == x.rows || dist[i] > dist[far])) far = i;
      --counts[run.labels[far]];
      run.labels[far] = c;
      dist[far] = 0.0;
      counts[c] = 1;
    }

    Features next(k, x.cols);
    for (std::size_t i = 0; i < x.rows; ++i) {
      auto dst = next.row(run.labels[i]);
      auto src = x.row(i);
      for (std::size_t j = 0; j < x.cols; ++j) dst[j] += src[j];
    }
    double shift = 0.0;
    for (int c = 0; c < k; ++c) {
      auto row = next.row(c);
      for (double& v : row) v /= static_cast<double>(counts[c]);
      shift = std::max(shift, sq_dist(row, run.centroids.row(c)));
    }
    run.centroids = std::move(next);
    double obj = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) obj += sq_dist(x.row(i), run.centroids.row(run.labels[i]));
    run.history.push_back(obj);
    run.objective = obj;
    if (std::sqrt(shift) < opt.tol) break;
  }
  return run;
}

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Factorizes every component covariance; fills cholesky + log_dets.
void factorize(GmmParams& p, std::size_t d) {
  const std::size_t k = p.weights.size();
  p.cholesky.assign(k * d * d, 0.0);
  p.log_dets.assign(k, 0.0);
  for (std::size_t c = 0; c < k; ++c) {
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> cov(
        p.covariances.data() + c * d * d, d, d);
    const Mat dense = cov;
    Eigen::LLT<Mat> llt(dense);
    if (llt.info() != Eigen::Success)
      throw NumericError("GMM component " + std::to_string(c) +
                         " covariance is singular despite regularization");
    const Mat l = llt.matrixL();
    double logdet = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      if (!(l(i, i) > 0.0) || !std::isfinite(l(i, i)))
        throw NumericError("GMM component " + std::to_string(c) + " covariance is singular");
      logdet += 2.0 * std::log(l(i, i));
    }
    p.log_dets[c] = logdet;
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dst(
        p.cholesky.data() + c * d * d, d, d);
    dst = l;
  }
}

// log w_c + log N(x | mu_c, Sigma_c) for every component.
void component_log_probs(const GmmParams& p, std::span<const double> x, std::vector<double>& out) {
  const std::size_t k = p.weights.size();
  const std::size_t d = x.size();
  out.resize(k);
  Vec diff(d);
  for (std::size_t c = 0; c < k; ++c) {
    auto mu = p.means.row(c);
    for (std::size_t j = 0; j < d; ++j) diff[j] = x[j] - mu[j];
    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> l(
        p.cholesky.data() + c * d * d, d, d);
    const Vec z = l.triangularView<Eigen::Lower>().solve(diff);
    out[c] = std::log(p.weights[c]) - 0.5 * (static_cast<double>(d) * kLog2Pi + p.log_dets[c] +
                                             z.squaredNorm());
  }
}

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

void finalize_gmm(GmmParams& p, std::size_t d) { factorize(p, d); }

std::vector<int> gmm_assign(const GmmParams& p, const Features& x) {
  std::vector<int> out(x.rows);
  std::vector<double> lp;
  for (std::size_t i = 0; i < x.rows; ++i) {
    component_log_probs(p, x.row(i), lp);
    out[i] = static_cast<int>(std::max_element(lp.begin(), lp.end()) - lp.begin());
  }
  return out;
}

std::vector<int> kmeans_assign(const KMeansParams& p, const Features& x) {
  std::vector<int> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) out[i] = static_cast<int>(nearest(p.centroids, x.row(i)));
  return out;
}

ClusterFit kmeans_fit(const Features& features, int k, std::uint64_t seed,
                      const KMeansOptions& options) {
  if (k < 1) throw ConfigError("k-means needs k >= 1");
  if (features.rows < static_cast<std::size_t>(k))
    throw ConfigError("k-means needs at least k=" + std::to_string(k) + " samples, got " +
                      std::to_string(features.rows));
  std::mt19937_64 rng(seed);
  LloydRun best;
  bool have = false;
  for (int r = 0; r < std::max(1, options.n_init); ++r) {
    LloydRun run = lloyd(features, k, rng, options);
    if (!have || run.objective < best.objective) {
      best = std::move(run);
      have = true;
    }
  }
  KMeansParams params{std::move(best.centroids), best.objective, std::move(best.history)};
  return {PartitionModel(PartitionKind::kKMeans, k, std::move(params)), std::move(best.labels)};
}

ClusterFit gmm_fit(const Features& features, int k, std::uint64_t seed, const GmmOptions& options) {
  if (k < 1) throw ConfigError("GMM needs k >= 1");
  if (features.rows < static_cast<std::size_t>(k))
    throw ConfigError("GMM needs at least k=" + std::to_string(k) + " samples");
  const std::size_t n = features.rows;
  const std::size_t d = features.cols;
  const ClusterFit init = kmeans_fit(features, k, seed);

  // Responsibilities start as the hard k-means assignment.
  Mat resp = Mat::Zero(n, k);
  for (std::size_t i = 0; i < n; ++i) resp(i, init.labels[i]) = 1.0;

  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> x(
      features.values.data(), n, d);
  GmmParams p;
  p.reg_covar = options.reg_covar;
  auto m_step = [&] {
    const Vec nk = resp.colwise().sum().transpose().array() + 10.0 * std::numeric_limits<double>::epsilon();
    p.weights.assign(k, 0.0);
    p.means = Features(k, d);
    p.covariances.assign(static_cast<std::size_t>(k) * d * d, 0.0);
    for (int c = 0; c < k; ++c) {
      p.weights[c] = nk[c] / static_cast<double>(n);
      const Vec mu = (x.transpose() * resp.col(c)) / nk[c];
      for (std::size_t j = 0; j < d; ++j) p.means.row(c)[j] = mu[j];
      const Mat centered = x.rowwise() - mu.transpose();
      Mat cov = (centered.array().colwise() * resp.col(c).array()).matrix().transpose() * centered / nk[c];
      cov.diagonal().array() += options.reg_covar;
      Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> dst(
          p.covariances.data() + c * d * d, d, d);
      dst = cov;
    }
    factorize(p, d);
  };

  m_step();
  std::vector<double> lp;
  for (int it = 0; it < options.max_iter; ++it) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      component_log_probs(p, features.row(i), lp);
      const double lse = log_sum_exp(lp);
      ll += lse;
      for (int c = 0; c < k; ++c) resp(i, c) = std::exp(lp[c] - lse);
    }
    ll /= static_cast<double>(n);
    if (!std::isfinite(ll)) throw NumericError("GMM log-likelihood became non-finite");
    const bool converged = !p.log_likelihood_history.empty() &&
                           std::abs(ll - p.log_likelihood_history.back()) <=
                               options.tol * std::max(1.0, std::abs(ll));
    p.log_likelihood_history.push_back(ll);
    if (converged) break;
    m_step();
  }
  std::vector<int> labels = gmm_assign(p, features);
  return {PartitionModel(PartitionKind::kGmm, k, std::move(p)), std::move(labels)};
}

}  // namespace partiscope::partitioning
