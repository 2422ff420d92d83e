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
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "com2s/corpus.hpp"
#include "com2s/transduce.hpp"

namespace com2s::selftrain {

/// Teacher phoneme cross-entropy of one synthetic utterance against its pseudo-label.
struct ConfidenceRecord {
  std::string utterance_id;
  double total_loss = 0.0;
  std::size_t frames = 0;
  double per_frame_loss = 0.0;

  bool operator==(const ConfidenceRecord&) const = default;
};

/// One record per manifest entry, in manifest order.
std::vector<ConfidenceRecord> score_confidence(const transduce::Model& teacher,
                                               const corpus::DatasetManifest& manifest,
                                               const corpus::UtteranceStore& store);

/// CSV utterance_id,total_loss,frames,per_frame_loss with round-trip precision.
void write_scores_csv(std::span<const ConfidenceRecord> records, std::ostream& out);
void write_scores_csv(std::span<const ConfidenceRecord> records, const std::filesystem::path& path);
std::vector<ConfidenceRecord> read_scores_csv(const std::filesystem::path& path);

struct FilterSpec {
  std::optional<double> threshold;  // empty = raw, keep everything

  static FilterSpec raw() { return {}; }
  static FilterSpec below(double tau) { return {tau}; }
  bool is_raw() const { return !threshold.has_value(); }
  void validate() const;
  /// "raw" or the threshold value.
  std::string label() const;
};

/// Keeps entries whose per-frame loss is strictly below the threshold, in manifest order.
corpus::DatasetManifest filter_by_threshold(std::span<const ConfidenceRecord> records, const FilterSpec& fs,
                                            const corpus::DatasetManifest& manifest);

struct MixSpec {
  double real_fraction = 0.5;
  std::size_t total_utterances = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::size_t real_count() const;  // round half up
  std::size_t synthetic_count() const { return total_utterances - real_count(); }
};

corpus::DatasetManifest mix_datasets(const corpus::DatasetManifest& real,
                                     const corpus::DatasetManifest& synthetic, const MixSpec& ms);

/// Hard error if any id appears in both manifests.
void check_disjoint(const corpus::DatasetManifest& train, const corpus::DatasetManifest& test);

/// Continues training the baseline with a fresh optimizer.
transduce::TrainResult run_self_training(const transduce::Model& baseline, const corpus::DatasetManifest& mixed,
                                         const corpus::UtteranceStore& store, const transduce::TrainConfig& tc,
                                         const corpus::DatasetManifest* validation = nullptr);

transduce::TrainResult run_scratch_training(const corpus::DatasetManifest& mixed,
                                            const corpus::UtteranceStore& store,
                                            const transduce::TrainConfig& tc, const transduce::ModelConfig& mc,
                                            const corpus::DatasetManifest* validation = nullptr);

}  // namespace com2s::selftrain
