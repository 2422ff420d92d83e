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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "com2s/corpus.hpp"
#include "com2s/phonemics.hpp"
#include "com2s/transduce.hpp"

namespace com2s::evalkit {

using Words = std::vector<std::string>;

inline const std::string kUnknownWord = "<unk>";

/// Lowercase, strip punctuation, split on whitespace.
Words normalize_text(std::string_view text);

struct EditCounts {
  std::size_t substitutions = 0;
  std::size_t insertions = 0;
  std::size_t deletions = 0;
  std::size_t total() const { return substitutions + insertions + deletions; }
};

/// Unit-cost Levenshtein alignment of hyp against ref.
EditCounts edit_counts(std::span<const std::string> hyp, std::span<const std::string> ref);

/// Throws ErrorKind::undefined for an empty reference.
double wer(std::span<const std::string> hyp, std::span<const std::string> ref);

std::vector<int> collapse_repeats(std::span<const int> labels);

/// Collapse repeats, drop silence, then greedy longest-match segmentation.
Words decode_words(std::span<const int> frame_labels, const phonemics::Lexicon& lexicon,
                   const phonemics::PhonemeInventory& inventory);

struct PairRow {
  int p1 = 0;
  int p2 = 0;
  double confusion = 0.0;
  double accuracy = 0.0;
};

struct EvalReport {
  std::string split_name;
  std::size_t n_utterances = 0;
  std::size_t word_errors = 0;
  std::size_t ref_words = 0;
  double wer = 0.0;  // word_errors / ref_words
  double overall_phoneme_accuracy = 0.0;
  double mean_pair_confusion = 0.0;
  phonemics::ConfusionCounts confusion;
  std::vector<PairRow> pair_table;

  /// Recomputes the derived fields from the counts.
  void finalize();
};

EvalReport merge_reports(const EvalReport& a, const EvalReport& b, const std::string& split_name);

void write_report_json(const EvalReport& report, const phonemics::PhonemeInventory& inventory,
                       std::ostream& out);
void write_report_csv_header(std::ostream& out);
void write_report_csv_row(const EvalReport& report, std::ostream& out);

using Predictor = std::function<phonemics::FrameLabels(const corpus::Utterance&)>;

EvalReport evaluate(const Predictor& predict, const corpus::DatasetManifest& test,
                    const corpus::UtteranceStore& store, const phonemics::Lexicon& lexicon,
                    const phonemics::PhonemeInventory& inventory, const std::string& split_name);

EvalReport evaluate_model(const transduce::Model& model, const corpus::DatasetManifest& test,
                          const corpus::UtteranceStore& store, const phonemics::Lexicon& lexicon,
                          const phonemics::PhonemeInventory& inventory, const std::string& split_name);

struct MosSummary {
  double mean = 0.0;
  double stddev = 0.0;  // sample standard deviation, 0 for a single rating
  std::size_t n_ratings = 0;
  double ci95_halfwidth = 0.0;
};

MosSummary aggregate_mos(std::span<const int> ratings);

struct Rating {
  std::string utterance_id;
  std::string rater_id;
  int rating = 0;
};

/// CSV with header utterance_id,rater_id,rating.
std::vector<Rating> read_ratings_csv(const std::filesystem::path& path);

}  // namespace com2s::evalkit
