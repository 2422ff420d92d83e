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

#pragma once

#include <cstddef>
#include <cstdint>

#include <Eigen/Dense>

#include "com2s/corpus.hpp"

namespace com2s::emgsig {

/// Undoes the generator's output squashing: scale * arctanh(clamp(x)).
struct RestoreConfig {
  double clip_epsilon = 1e-10;
  double scale = 100.0;

  void validate() const;
};

double restore_value(double x, const RestoreConfig& cfg = {});
Eigen::MatrixXd restore_generated(const Eigen::MatrixXd& x, const RestoreConfig& cfg = {});

/// Output length round(n * to / from). Output sample k sits at time k / to;
/// positions past the last source sample hold its value.
Eigen::MatrixXd resample_linear(const Eigen::MatrixXd& x, double from_rate, double to_rate);

struct ChannelStats {
  Eigen::VectorXd mean;
  Eigen::VectorXd stddev;  // population standard deviation
};

/// Streaming per-channel mean/variance (Chan et al. pairwise merge).
class ChannelStatsAccumulator {
 public:
  explicit ChannelStatsAccumulator(std::size_t channels);

  void add(const Eigen::MatrixXd& x);  // channels x n
  ChannelStats finish() const;
  std::size_t count() const { return count_; }

 private:
  std::size_t count_ = 0;
  Eigen::VectorXd mean_;
  Eigen::VectorXd m2_;
};

ChannelStats channel_stats(const Eigen::MatrixXd& x);

/// Throws a degenerate-channel error naming the first channel with zero spread.
Eigen::MatrixXd zscore_normalize(const Eigen::MatrixXd& x, const ChannelStats& stats);

/// Generator-domain utterance -> model-domain utterance: restore, then
/// upsample to target_rate. Alignment and acoustic targets are carried over.
corpus::Utterance prepare_generated(const corpus::Utterance& generated, std::uint32_t target_rate,
                                    const RestoreConfig& cfg = {});

}  // namespace com2s::emgsig
