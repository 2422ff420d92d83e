// Copyright 2026 The com2s Authors
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

#include "com2s/emgsig.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "com2s/error.hpp"

namespace com2s::emgsig {

void RestoreConfig::validate() const {
  if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
    fail(ErrorKind::config, "clip_epsilon must lie in (0, 1)");
  if (!(scale > 0.0)) fail(ErrorKind::config, "restore scale must be positive");
}

double restore_value(double x, const RestoreConfig& cfg) {
  const double lo = -1.0 + cfg.clip_epsilon;
  const double hi = 1.0 - cfg.clip_epsilon;
  return cfg.scale * std::atanh(std::clamp(x, lo, hi));
}

Eigen::MatrixXd restore_generated(const Eigen::MatrixXd& x, const RestoreConfig& cfg) {
  cfg.validate();
  if (!x.allFinite()) fail(ErrorKind::validation, "generated EMG contains non-finite values");
  return x.unaryExpr([&](double v) { return restore_value(v, cfg); });
}

Eigen::MatrixXd resample_linear(const Eigen::MatrixXd& x, double from_rate, double to_rate) {
  if (!(from_rate > 0.0) || !(to_rate > 0.0))
    fail(ErrorKind::validation, "sample rates must be positive");
  const Eigen::Index n = x.cols();
  if (n < 1 || x.rows() < 1) fail(ErrorKind::validation, "cannot resample an empty signal");
  if (from_rate == to_rate) return x;

  const auto m = static_cast<Eigen::Index>(
      std::llround(static_cast<double>(n) * to_rate / from_rate));
  Eigen::MatrixXd out(x.rows(), m);
  for (Eigen::Index k = 0; k < m; ++k) {
    // Multiply before dividing so lattice-aligned positions come out exact.
    const double pos = static_cast<double>(k) * from_rate / to_rate;
    const auto i = static_cast<Eigen::Index>(std::floor(pos));
    if (i + 1 >= n) {
      out.col(k) = x.col(n - 1);
      continue;
    }
    const double frac = pos - static_cast<double>(i);
    out.col(k) = (1.0 - frac) * x.col(i) + frac * x.col(i + 1);
  }
  return out;
}

ChannelStatsAccumulator::ChannelStatsAccumulator(std::size_t channels)
    : mean_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels))),
      m2_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(channels))) {}

void ChannelStatsAccumulator::add(const Eigen::MatrixXd& x) {
  if (x.rows() != mean_.size()) fail(ErrorKind::validation, "channel count mismatch in stats");
  const auto nb = static_cast<std::size_t>(x.cols());
  if (nb == 0) return;
  const Eigen::VectorXd mean_b = x.rowwise().mean();
  const Eigen::VectorXd m2_b = (x.colwise() - mean_b).array().square().rowwise().sum();
  const double na = static_cast<double>(count_);
  const double nbd = static_cast<double>(nb);
  const double n = na + nbd;
  const Eigen::VectorXd delta = mean_b - mean_;
  mean_ += delta * (nbd / n);
  m2_ += m2_b + delta.cwiseProduct(delta) * (na * nbd / n);
  count_ += nb;
}

ChannelStats ChannelStatsAccumulator::finish() const {
  if (count_ == 0) fail(ErrorKind::validation, "channel statistics over zero samples");
  return {mean_, (m2_ / static_cast<double>(count_)).cwiseSqrt()};
}

ChannelStats channel_stats(const Eigen::MatrixXd& x) {
  ChannelStatsAccumulator acc(static_cast<std::size_t>(x.rows()));
  acc.add(x);
  return acc.finish();
}

Eigen::MatrixXd zscore_normalize(const Eigen::MatrixXd& x, const ChannelStats& stats) {
  if (stats.mean.size() != x.rows() || stats.stddev.size() != x.rows())
    fail(ErrorKind::validation, "normalization stats do not match channel count");
  for (Eigen::Index c = 0; c < x.rows(); ++c)
    if (!(stats.stddev(c) > 0.0))
      fail(ErrorKind::degenerate_channel, "channel " + std::to_string(c) + " has zero variance");
  return (x.colwise() - stats.mean).array().colwise() / stats.stddev.array();
}

corpus::Utterance prepare_generated(const corpus::Utterance& generated, std::uint32_t target_rate,
                                    const RestoreConfig& cfg) {
  corpus::Utterance out = generated;
  const Eigen::MatrixXd restored = restore_generated(generated.emg.as_double(), cfg);
  const Eigen::MatrixXd upsampled =
      resample_linear(restored, generated.emg.sample_rate, target_rate);
  out.emg.samples = upsampled.cast<float>();
  out.emg.sample_rate = target_rate;
  out.emg.validate();
  return out;
}

}  // namespace com2s::emgsig
