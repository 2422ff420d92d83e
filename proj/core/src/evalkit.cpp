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

#include "com2s/evalkit.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "com2s/error.hpp"

namespace com2s::evalkit {

Words normalize_text(std::string_view text) {
  Words words;
  std::string current;
  for (char raw : text) {
    const auto ch = static_cast<unsigned char>(raw);
    if (std::isspace(ch)) {
      if (!current.empty()) words.push_back(std::move(current));
      current.clear();
    } else if (std::ispunct(ch) && ch != '\'' && ch != '<' && ch != '>') {
      continue;
    } else {
      current.push_back(static_cast<char>(std::tolower(ch)));
    }
  }
  if (!current.empty()) words.push_back(std::move(current));
  return words;
}

EditCounts edit_counts(std::span<const std::string> hyp, std::span<const std::string> ref) {
  const std::size_t n = ref.size(), m = hyp.size();
  std::vector<std::size_t> d((n + 1) * (m + 1));
  auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
  for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
  for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u), at(i - 1, j) + 1,
                           at(i, j - 1) + 1});

  EditCounts counts;
  std::size_t i = n, j = m;
  while (i > 0 || j > 0) {
    if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0u : 1u)) {
      if (ref[i - 1] != hyp[j - 1]) ++counts.substitutions;
      --i;
      --j;
    } else if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
      ++counts.deletions;
      --i;
    } else {
      ++counts.insertions;
      --j;
    }
  }
  return counts;
}

double wer(std::span<const std::string> hyp, std::span<const std::string> ref) {
  if (ref.empty()) fail(ErrorKind::undefined, "word error rate with an empty reference");
  return static_cast<double>(edit_counts(hyp, ref).total()) / static_cast<double>(ref.size());
}

std::vector<int> collapse_repeats(std::span<const int> labels) {
  std::vector<int> out;
  for (int l : labels)
    if (out.empty() || out.back() != l) out.push_back(l);
  return out;
}

Words decode_words(std::span<const int> frame_labels, const phonemics::Lexicon& lexicon,
                   const phonemics::PhonemeInventory& inventory) {
  if (lexicon.empty()) fail(ErrorKind::lexicon, "cannot decode with an empty lexicon");
  std::vector<int> phones;
  for (int p : collapse_repeats(frame_labels))
    if (p != inventory.silence_index()) phones.push_back(p);

  std::size_t longest = 0;
  for (const auto& [word, pron] : lexicon) longest = std::max(longest, pron.size());

  Words words;
  std::size_t pos = 0;
  while (pos < phones.size()) {
    const std::string* match = nullptr;
    std::size_t match_len = 0;
    // std::map order makes ties between homophones resolve to the first word alphabetically.
    for (const auto& [word, pron] : lexicon) {
      const std::size_t len = pron.size();
      if (len == 0 || len <= match_len || pos + len > phones.size()) continue;
      if (std::equal(pron.begin(), pron.end(), phones.begin() + static_cast<std::ptrdiff_t>(pos))) {
        match = &word;
        match_len = len;
        if (len == longest) break;
      }
    }
    if (match) {
      words.push_back(*match);
      pos += match_len;
    } else {
      words.push_back(kUnknownWord);
      ++pos;
    }
  }
  return words;
}

void EvalReport::finalize() {
  wer = ref_words == 0 ? 0.0 : static_cast<double>(word_errors) / static_cast<double>(ref_words);
  overall_phoneme_accuracy = confusion.total() == 0 ? 0.0 : phonemics::overall_accuracy(confusion);
  pair_table.clear();
  const int classes = static_cast<int>(confusion.classes());
  double sum = 0.0;
  for (int p1 = 0; p1 < classes; ++p1)
    for (int p2 = p1 + 1; p2 < classes; ++p2) {
      if (confusion.f(p1) + confusion.f(p2) == 0) continue;
      const auto m = phonemics::pair_metrics(confusion, p1, p2);
      pair_table.push_back({p1, p2, m.confusion, m.accuracy});
      sum += m.confusion;
    }
  mean_pair_confusion = pair_table.empty() ? 0.0 : sum / static_cast<double>(pair_table.size());
}

EvalReport merge_reports(const EvalReport& a, const EvalReport& b, const std::string& split_name) {
  EvalReport out;
  out.split_name = split_name;
  out.n_utterances = a.n_utterances + b.n_utterances;
  out.word_errors = a.word_errors + b.word_errors;
  out.ref_words = a.ref_words + b.ref_words;
  out.confusion = a.confusion;
  out.confusion.merge(b.confusion);
  out.finalize();
  return out;
}

void write_report_json(const EvalReport& report, const phonemics::PhonemeInventory& inventory,
                       std::ostream& out) {
  if (report.confusion.classes() != inventory.size())
    fail(ErrorKind::validation, "report confusion does not match the inventory");
  nlohmann::ordered_json j;
  j["split"] = report.split_name;
  j["n_utterances"] = report.n_utterances;
  j["wer"] = report.wer;
  j["word_errors"] = report.word_errors;
  j["ref_words"] = report.ref_words;
  j["phoneme_accuracy"] = report.overall_phoneme_accuracy;
  j["mean_pair_confusion"] = report.mean_pair_confusion;
  j["symbols"] = inventory.symbols();
  auto matrix = nlohmann::json::array();
  const int classes = static_cast<int>(inventory.size());
  for (int t = 0; t < classes; ++t) {
    auto row = nlohmann::json::array();
    for (int p = 0; p < classes; ++p) row.push_back(report.confusion.e(t, p));
    matrix.push_back(row);
  }
  j["confusion"] = matrix;
  auto pairs = nlohmann::json::array();
  for (const auto& row : report.pair_table)
    pairs.push_back({{"p1", inventory.symbol(row.p1)},
                     {"p2", inventory.symbol(row.p2)},
                     {"confusion", row.confusion},
                     {"accuracy", row.accuracy}});
  j["pairs"] = pairs;
  out << j.dump(2) << '\n';
}

void write_report_csv_header(std::ostream& out) {
  out << "split,n_utterances,wer,phoneme_accuracy,mean_pair_confusion,word_errors,ref_words\n";
}

void write_report_csv_row(const EvalReport& report, std::ostream& out) {
  std::ostringstream row;
  row.precision(17);
  row << report.split_name << ',' << report.n_utterances << ',' << report.wer << ','
      << report.overall_phoneme_accuracy << ',' << report.mean_pair_confusion << ','
      << report.word_errors << ',' << report.ref_words << '\n';
  out << row.str();
}

EvalReport evaluate(const Predictor& predict, const corpus::DatasetManifest& test,
                    const corpus::UtteranceStore& store, const phonemics::Lexicon& lexicon,
                    const phonemics::PhonemeInventory& inventory, const std::string& split_name) {
  EvalReport report;
  report.split_name = split_name;
  report.confusion = phonemics::ConfusionCounts(inventory.size());
  for (const auto& entry : test.entries()) {
    const auto& u = store.get(entry.id);
    const auto predicted = predict(u);
    if (predicted.size() != u.phoneme_alignment.size())
      fail(ErrorKind::validation, u.id + ": prediction has " + std::to_string(predicted.size()) +
                                      " frames, alignment has " + std::to_string(u.phoneme_alignment.size()));
    report.confusion.merge(phonemics::confusion_counts(predicted, u.phoneme_alignment, inventory.size()));
    std::string joined;
    for (const auto& w : u.transcript) joined += w + ' ';
    const Words ref = normalize_text(joined);
    if (ref.empty()) fail(ErrorKind::undefined, u.id + ": empty reference transcript");
    const Words hyp = decode_words(predicted, lexicon, inventory);
    report.word_errors += edit_counts(hyp, ref).total();
    report.ref_words += ref.size();
    ++report.n_utterances;
  }
  report.finalize();
  return report;
}

EvalReport evaluate_model(const transduce::Model& model, const corpus::DatasetManifest& test,
                          const corpus::UtteranceStore& store, const phonemics::Lexicon& lexicon,
                          const phonemics::PhonemeInventory& inventory, const std::string& split_name) {
  if (model.config().n_phonemes != inventory.size())
    fail(ErrorKind::validation, "model phoneme head does not match the inventory");
  auto predict = [&](const corpus::Utterance& u) {
    if (u.emg.sample_rate != model.config().sample_rate)
      fail(ErrorKind::validation, u.id + ": EMG rate does not match the model");
    const auto out = model.forward(u.emg.as_double(), u.emg.session_id);
    return phonemics::argmax_labels(out.posteriors.probs);
  };
  return evaluate(predict, test, store, lexicon, inventory, split_name);
}

MosSummary aggregate_mos(std::span<const int> ratings) {
  if (ratings.empty()) fail(ErrorKind::validation, "no ratings to aggregate");
  double sum = 0.0;
  for (int r : ratings) {
    if (r < 1 || r > 5) fail(ErrorKind::validation, "rating " + std::to_string(r) + " outside 1..5");
    sum += r;
  }
  MosSummary s;
  s.n_ratings = ratings.size();
  const double n = static_cast<double>(ratings.size());
  s.mean = sum / n;
  if (ratings.size() > 1) {
    double ss = 0.0;
    for (int r : ratings) ss += (r - s.mean) * (r - s.mean);
    s.stddev = std::sqrt(ss / (n - 1.0));
    s.ci95_halfwidth = 1.96 * s.stddev / std::sqrt(n);
  }
  return s;
}

std::vector<Rating> read_ratings_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open ratings file " + path.string());
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::parse, path.string() + ": empty ratings file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "utterance_id,rater_id,rating")
    fail(ErrorKind::parse, path.string() + ": expected header utterance_id,rater_id,rating");
  std::vector<Rating> ratings;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream ss(line);
    Rating r;
    std::string value;
    if (!std::getline(ss, r.utterance_id, ',') || !std::getline(ss, r.rater_id, ',') ||
        !std::getline(ss, value) || value.find(',') != std::string::npos)
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(lineno) + ": expected 3 fields");
    try {
      std::size_t used = 0;
      r.rating = std::stoi(value, &used);
      if (used != value.size()) throw std::invalid_argument(value);
    } catch (const std::logic_error&) {
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(lineno) + ": rating is not an integer");
    }
    if (r.rating < 1 || r.rating > 5)
      fail(ErrorKind::validation, path.string() + ":" + std::to_string(lineno) + ": rating outside 1..5");
    ratings.push_back(std::move(r));
  }
  return ratings;
}

}  // namespace com2s::evalkit
