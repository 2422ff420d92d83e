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
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

namespace com2s::phonemics {

/// Ordered phoneme symbol set with a distinguished silence symbol.
class PhonemeInventory {
 public:
  PhonemeInventory(std::vector<std::string> symbols, std::string silence = "sil");

  /// Silence plus eleven phonemes; small enough to read a confusion matrix by eye.
  static PhonemeInventory desk_default();
  /// Silence plus the 39 ARPABet phonemes (stress markers stripped).
  static PhonemeInventory arpabet();

  std::size_t size() const { return symbols_.size(); }
  const std::string& symbol(int index) const;
  int index(const std::string& symbol) const;
  bool contains(const std::string& symbol) const { return lookup_.count(symbol) != 0; }
  int silence_index() const { return silence_; }
  const std::vector<std::string>& symbols() const { return symbols_; }

  bool operator==(const PhonemeInventory& other) const {
    return symbols_ == other.symbols_ && silence_ == other.silence_;
  }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, int> lookup_;
  int silence_ = 0;
};

/// Word -> phoneme index sequence. std::map keeps iteration deterministic.
using Lexicon = std::map<std::string, std::vector<int>>;

using FrameLabels = std::vector<int>;

/// Rows are frames, columns phoneme classes.
struct PhonemePosteriors {
  Eigen::MatrixXd probs;

  std::size_t frames() const { return static_cast<std::size_t>(probs.rows()); }
  std::size_t classes() const { return static_cast<std::size_t>(probs.cols()); }
  void validate(double tolerance = 1e-6) const;
};

inline constexpr double kProbabilityFloor = 1e-12;

struct PhonemeLoss {
  double total = 0.0;
  double per_frame = 0.0;
  std::size_t frames = 0;
};

/// Cross-entropy of the true label under the posteriors, summed over frames.
/// Probabilities are floored at kProbabilityFloor before the log.
PhonemeLoss phoneme_loss(const PhonemePosteriors& posteriors, std::span<const int> truth);

/// e(p, q) counts frames with truth p predicted as q; f(p) counts truth p.
class ConfusionCounts {
 public:
  ConfusionCounts() = default;
  explicit ConfusionCounts(std::size_t classes);

  std::size_t classes() const { return classes_; }
  void add(int truth, int predicted);
  void merge(const ConfusionCounts& other);

  std::int64_t e(int truth, int predicted) const;
  std::int64_t f(int truth) const;
  std::int64_t total() const;

  bool operator==(const ConfusionCounts&) const = default;

 private:
  std::size_t classes_ = 0;
  std::vector<std::int64_t> e_;
  std::vector<std::int64_t> f_;
};

ConfusionCounts confusion_counts(std::span<const int> predicted, std::span<const int> truth,
                                 std::size_t classes);

struct PairMetrics {
  double confusion = 0.0;
  double accuracy = 0.0;
};

PairMetrics pair_metrics(const ConfusionCounts& counts, int p1, int p2);

/// Micro-averaged frame accuracy: trace(e) / sum(f).
double overall_accuracy(const ConfusionCounts& counts);

/// Mean of pairwise confusion over unordered pairs p1 < p2 with f(p1) + f(p2) > 0.
double mean_pair_confusion(const ConfusionCounts& counts);

FrameLabels argmax_labels(const Eigen::MatrixXd& probs);

/// CSV: header row "truth" followed by symbols; one row per truth symbol.
void write_confusion_csv(const ConfusionCounts& counts, const PhonemeInventory& inventory,
                         std::ostream& out);

/// One symbol per line, one line per frame.
void write_alignment(const std::filesystem::path& path, std::span<const int> labels,
                     const PhonemeInventory& inventory);
FrameLabels read_alignment(const std::filesystem::path& path, const PhonemeInventory& inventory);

/// JSON object word -> array of phoneme symbols.
void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon, const PhonemeInventory& inventory);
Lexicon read_lexicon(const std::filesystem::path& path, const PhonemeInventory& inventory);

}  // namespace com2s::phonemics
