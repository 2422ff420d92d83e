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

#include "com2s/phonemics.hpp"

#include <cmath>
#include <fstream>
#include <ostream>

#include <json.hpp>

#include "com2s/error.hpp"

namespace com2s::phonemics {

PhonemeInventory::PhonemeInventory(std::vector<std::string> symbols, std::string silence)
    : symbols_(std::move(symbols)) {
  if (symbols_.empty()) fail(ErrorKind::config, "phoneme inventory is empty");
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    if (symbols_[i].empty()) fail(ErrorKind::config, "empty phoneme symbol");
    if (!lookup_.emplace(symbols_[i], static_cast<int>(i)).second)
      fail(ErrorKind::config, "duplicate phoneme symbol '" + symbols_[i] + "'");
  }
  auto it = lookup_.find(silence);
  if (it == lookup_.end()) fail(ErrorKind::config, "silence symbol '" + silence + "' missing");
  silence_ = it->second;
}

PhonemeInventory PhonemeInventory::desk_default() {
  return PhonemeInventory({"sil", "AA", "AE", "IY", "UW", "B", "D", "K", "M", "N", "S", "T"});
}

PhonemeInventory PhonemeInventory::arpabet() {
  return PhonemeInventory({"sil", "AA", "AE", "AH", "AO", "AW", "AY", "B",  "CH", "D",
                           "DH",  "EH", "ER", "EY", "F",  "G",  "HH", "IH", "IY", "JH",
                           "K",   "L",  "M",  "N",  "NG", "OW", "OY", "P",  "R",  "S",
                           "SH",  "T",  "TH", "UH", "UW", "V",  "W",  "Y",  "Z",  "ZH"});
}

const std::string& PhonemeInventory::symbol(int index) const {
  if (index < 0 || static_cast<std::size_t>(index) >= symbols_.size())
    fail(ErrorKind::validation, "phoneme index " + std::to_string(index) + " out of range");
  return symbols_[static_cast<std::size_t>(index)];
}

int PhonemeInventory::index(const std::string& symbol) const {
  auto it = lookup_.find(symbol);
  if (it == lookup_.end()) fail(ErrorKind::validation, "unknown phoneme symbol '" + symbol + "'");
  return it->second;
}

void PhonemePosteriors::validate(double tolerance) const {
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    double sum = 0.0;
    for (Eigen::Index c = 0; c < probs.cols(); ++c) {
      const double p = probs(t, c);
      if (!(p >= 0.0 && p <= 1.0))
        fail(ErrorKind::validation, "posterior outside [0, 1] at frame " + std::to_string(t));
      sum += p;
    }
    if (std::abs(sum - 1.0) > tolerance)
      fail(ErrorKind::validation, "posterior row " + std::to_string(t) + " does not sum to 1");
  }
}

PhonemeLoss phoneme_loss(const PhonemePosteriors& posteriors, std::span<const int> truth) {
  const std::size_t frames = posteriors.frames();
  if (frames != truth.size())
    fail(ErrorKind::validation, "posteriors have " + std::to_string(frames) +
                                    " frames but labels have " + std::to_string(truth.size()));
  if (frames == 0) fail(ErrorKind::validation, "phoneme loss over zero frames");
  posteriors.validate();

  PhonemeLoss loss;
  loss.frames = frames;
  for (std::size_t t = 0; t < frames; ++t) {
    const int label = truth[t];
    if (label < 0 || static_cast<std::size_t>(label) >= posteriors.classes())
      fail(ErrorKind::validation, "label out of range at frame " + std::to_string(t));
    const double p = posteriors.probs(static_cast<Eigen::Index>(t), label);
    loss.total -= std::log(std::max(p, kProbabilityFloor));
  }
  // -log(1) is -0.0; keep totals non-negative in print.
  loss.total = std::max(loss.total, 0.0);
  loss.per_frame = loss.total / static_cast<double>(frames);
  return loss;
}

ConfusionCounts::ConfusionCounts(std::size_t classes)
    : classes_(classes), e_(classes * classes, 0), f_(classes, 0) {}

void ConfusionCounts::add(int truth, int predicted) {
  if (truth < 0 || predicted < 0 || static_cast<std::size_t>(truth) >= classes_ ||
      static_cast<std::size_t>(predicted) >= classes_)
    fail(ErrorKind::validation, "confusion label out of range");
  ++e_[static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted)];
  ++f_[static_cast<std::size_t>(truth)];
}

void ConfusionCounts::merge(const ConfusionCounts& other) {
  if (classes_ == 0) {
    *this = other;
    return;
  }
  if (other.classes_ == 0) return;
  if (other.classes_ != classes_) fail(ErrorKind::validation, "merging counts of different sizes");
  for (std::size_t i = 0; i < e_.size(); ++i) e_[i] += other.e_[i];
  for (std::size_t i = 0; i < f_.size(); ++i) f_[i] += other.f_[i];
}

std::int64_t ConfusionCounts::e(int truth, int predicted) const {
  return e_.at(static_cast<std::size_t>(truth) * classes_ + static_cast<std::size_t>(predicted));
}

std::int64_t ConfusionCounts::f(int truth) const { return f_.at(static_cast<std::size_t>(truth)); }

std::int64_t ConfusionCounts::total() const {
  std::int64_t sum = 0;
  for (auto v : f_) sum += v;
  return sum;
}

ConfusionCounts confusion_counts(std::span<const int> predicted, std::span<const int> truth,
                                 std::size_t classes) {
  if (predicted.size() != truth.size())
    fail(ErrorKind::validation, "predicted and truth label streams differ in length");
  ConfusionCounts counts(classes);
  for (std::size_t t = 0; t < truth.size(); ++t) counts.add(truth[t], predicted[t]);
  return counts;
}

PairMetrics pair_metrics(const ConfusionCounts& counts, int p1, int p2) {
  const auto support = counts.f(p1) + counts.f(p2);
  if (support == 0) fail(ErrorKind::undefined, "phoneme pair has no support");
  const double denom = static_cast<double>(support);
  PairMetrics m;
  m.confusion = static_cast<double>(counts.e(p1, p2) + counts.e(p2, p1)) / denom;
  m.accuracy = static_cast<double>(counts.e(p1, p1) + counts.e(p2, p2)) / denom;
  return m;
}

double overall_accuracy(const ConfusionCounts& counts) {
  const auto total = counts.total();
  if (total == 0) fail(ErrorKind::undefined, "accuracy of empty confusion counts");
  std::int64_t correct = 0;
  for (std::size_t p = 0; p < counts.classes(); ++p)
    correct += counts.e(static_cast<int>(p), static_cast<int>(p));
  return static_cast<double>(correct) / static_cast<double>(total);
}

double mean_pair_confusion(const ConfusionCounts& counts) {
  double sum = 0.0;
  std::size_t pairs = 0;
  const int classes = static_cast<int>(counts.classes());
  for (int p1 = 0; p1 < classes; ++p1) {
    for (int p2 = p1 + 1; p2 < classes; ++p2) {
      if (counts.f(p1) + counts.f(p2) == 0) continue;
      sum += pair_metrics(counts, p1, p2).confusion;
      ++pairs;
    }
  }
  if (pairs == 0) fail(ErrorKind::undefined, "no phoneme pair has support");
  return sum / static_cast<double>(pairs);
}

FrameLabels argmax_labels(const Eigen::MatrixXd& probs) {
  FrameLabels labels(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index t = 0; t < probs.rows(); ++t) {
    Eigen::Index best = 0;
    probs.row(t).maxCoeff(&best);
    labels[static_cast<std::size_t>(t)] = static_cast<int>(best);
  }
  return labels;
}

void write_confusion_csv(const ConfusionCounts& counts, const PhonemeInventory& inventory,
                         std::ostream& out) {
  if (counts.classes() != inventory.size())
    fail(ErrorKind::validation, "confusion counts do not match the inventory");
  out << "truth";
  for (const auto& s : inventory.symbols()) out << ',' << s;
  out << '\n';
  for (std::size_t p = 0; p < counts.classes(); ++p) {
    out << inventory.symbols()[p];
    for (std::size_t q = 0; q < counts.classes(); ++q)
      out << ',' << counts.e(static_cast<int>(p), static_cast<int>(q));
    out << '\n';
  }
}

void write_alignment(const std::filesystem::path& path, std::span<const int> labels,
                     const PhonemeInventory& inventory) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  for (int label : labels) out << inventory.symbol(label) << '\n';
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

FrameLabels read_alignment(const std::filesystem::path& path, const PhonemeInventory& inventory) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::validation, "alignment file missing: " + path.string());
  FrameLabels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (!inventory.contains(line))
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) +
                                 ": unknown phoneme '" + line + "'");
    labels.push_back(inventory.index(line));
  }
  return labels;
}

void write_lexicon(const std::filesystem::path& path, const Lexicon& lexicon, const PhonemeInventory& inventory) {
  nlohmann::ordered_json j = nlohmann::ordered_json::object();
  for (const auto& [word, pron] : lexicon) {
    auto symbols = nlohmann::ordered_json::array();
    for (int p : pron) symbols.push_back(inventory.symbol(p));
    j[word] = symbols;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out << j.dump(2) << '\n';
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

Lexicon read_lexicon(const std::filesystem::path& path, const PhonemeInventory& inventory) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::validation, "lexicon file missing: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
  if (!j.is_object()) fail(ErrorKind::parse, path.string() + ": lexicon must be a JSON object");
  Lexicon lexicon;
  for (const auto& [word, symbols] : j.items()) {
    if (!symbols.is_array() || symbols.empty())
      fail(ErrorKind::lexicon, path.string() + ": '" + word + "' needs a non-empty phoneme list");
    std::vector<int> pron;
    for (const auto& sym : symbols) {
      if (!sym.is_string() || !inventory.contains(sym.get<std::string>()))
        fail(ErrorKind::lexicon, path.string() + ": '" + word + "' uses an unknown phoneme");
      pron.push_back(inventory.index(sym.get<std::string>()));
    }
    lexicon.emplace(word, std::move(pron));
  }
  if (lexicon.empty()) fail(ErrorKind::lexicon, path.string() + ": empty lexicon");
  return lexicon;
}

}  // namespace com2s::phonemics
