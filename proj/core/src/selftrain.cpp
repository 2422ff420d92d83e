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

#include "com2s/selftrain.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "com2s/error.hpp"
#include "com2s/phonemics.hpp"

namespace com2s::selftrain {

std::vector<ConfidenceRecord> score_confidence(const transduce::Model& teacher,
                                               const corpus::DatasetManifest& manifest,
                                               const corpus::UtteranceStore& store) {
  std::vector<ConfidenceRecord> records;
  records.reserve(manifest.size());
  for (const auto& e : manifest.entries()) {
    const auto& u = store.get(e.id);
    if (u.emg.sample_rate != teacher.config().sample_rate)
      fail(ErrorKind::validation, u.id + ": EMG at " + std::to_string(u.emg.sample_rate) +
                                      " Hz, teacher expects " + std::to_string(teacher.config().sample_rate) +
                                      " Hz (restore and resample first)");
    if (u.phoneme_alignment.empty()) fail(ErrorKind::validation, u.id + ": no phoneme alignment");
    const auto out = teacher.forward(u.emg.as_double(), u.emg.session_id);
    const auto loss = phonemics::phoneme_loss(out.posteriors, u.phoneme_alignment);
    records.push_back({u.id, loss.total, loss.frames, loss.per_frame});
  }
  return records;
}

void write_scores_csv(std::span<const ConfidenceRecord> records, std::ostream& out) {
  std::ostringstream text;
  text.precision(17);
  text << "utterance_id,total_loss,frames,per_frame_loss\n";
  for (const auto& r : records)
    text << r.utterance_id << ',' << r.total_loss << ',' << r.frames << ',' << r.per_frame_loss << '\n';
  out << text.str();
}

void write_scores_csv(std::span<const ConfidenceRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  write_scores_csv(records, out);
  if (!out) fail(ErrorKind::io, "failed writing " + path.string());
}

namespace {

template <class T>
T parse_number(const std::string& field, const std::string& where) {
  T value{};
  const auto* end = field.data() + field.size();
  const auto [ptr, ec] = std::from_chars(field.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::parse, where + ": bad number '" + field + "'");
  return value;
}

}  // namespace

std::vector<ConfidenceRecord> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open scores file " + path.string());
  std::string line;
  std::getline(in, line);
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "utterance_id,total_loss,frames,per_frame_loss")
    fail(ErrorKind::parse, path.string() + ": expected header utterance_id,total_loss,frames,per_frame_loss");
  std::vector<ConfidenceRecord> records;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(lineno);
    std::vector<std::string> fields;
    std::stringstream ss(line);
    for (std::string f; std::getline(ss, f, ',');) fields.push_back(f);
    if (fields.size() != 4) fail(ErrorKind::parse, where + ": expected 4 fields");
    ConfidenceRecord r;
    r.utterance_id = fields[0];
    r.total_loss = parse_number<double>(fields[1], where);
    r.frames = parse_number<std::size_t>(fields[2], where);
    r.per_frame_loss = parse_number<double>(fields[3], where);
    if (r.frames == 0 || r.total_loss < 0.0) fail(ErrorKind::validation, where + ": invalid record");
    records.push_back(std::move(r));
  }
  return records;
}

void FilterSpec::validate() const {
  if (threshold && !(*threshold > 0.0)) fail(ErrorKind::validation, "filter threshold must be positive");
}

std::string FilterSpec::label() const {
  if (!threshold) return "raw";
  std::ostringstream s;
  s << *threshold;
  return s.str();
}

corpus::DatasetManifest filter_by_threshold(std::span<const ConfidenceRecord> records, const FilterSpec& fs,
                                            const corpus::DatasetManifest& manifest) {
  fs.validate();
  std::unordered_map<std::string, double> by_id;
  for (const auto& r : records) by_id[r.utterance_id] = r.per_frame_loss;
  std::vector<std::size_t> keep;
  const auto& entries = manifest.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto it = by_id.find(entries[i].id);
    if (it == by_id.end()) fail(ErrorKind::validation, "no confidence record for " + entries[i].id);
    if (fs.is_raw() || it->second < *fs.threshold) keep.push_back(i);
  }
  return manifest.subset(keep);
}

void MixSpec::validate() const {
  if (!(real_fraction >= 0.0 && real_fraction <= 1.0))
    fail(ErrorKind::validation, "real_fraction must lie in [0, 1]");
}

std::size_t MixSpec::real_count() const {
  return static_cast<std::size_t>(std::floor(real_fraction * static_cast<double>(total_utterances) + 0.5));
}

corpus::DatasetManifest mix_datasets(const corpus::DatasetManifest& real,
                                     const corpus::DatasetManifest& synthetic, const MixSpec& ms) {
  ms.validate();
  const std::size_t n_real = ms.real_count();
  const std::size_t n_syn = ms.synthetic_count();
  if (n_real > real.size())
    fail(ErrorKind::insufficient_data, "mix needs " + std::to_string(n_real) + " real utterances, " +
                                           std::to_string(real.size()) + " available");
  if (n_syn > synthetic.size())
    fail(ErrorKind::insufficient_data, "mix needs " + std::to_string(n_syn) + " synthetic utterances, " +
                                           std::to_string(synthetic.size()) + " available");
  std::mt19937_64 rng(ms.seed);
  auto sample = [&](const corpus::DatasetManifest& pool, std::size_t k) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(k);
    return pool.subset(idx);
  };
  const corpus::DatasetManifest parts[] = {sample(real, n_real), sample(synthetic, n_syn)};
  const auto joined = corpus::concat(parts);
  std::vector<std::size_t> order(joined.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  return joined.subset(order);
}

void check_disjoint(const corpus::DatasetManifest& train, const corpus::DatasetManifest& test) {
  std::vector<std::string> shared;
  for (const auto& e : test.entries())
    if (train.contains(e.id)) shared.push_back(e.id);
  if (shared.empty()) return;
  std::string list;
  for (std::size_t i = 0; i < shared.size() && i < 5; ++i) list += (i ? ", " : "") + shared[i];
  fail(ErrorKind::validation, std::to_string(shared.size()) + " test utterance(s) also in training: " + list);
}

transduce::TrainResult run_self_training(const transduce::Model& baseline, const corpus::DatasetManifest& mixed,
                                         const corpus::UtteranceStore& store, const transduce::TrainConfig& tc,
                                         const corpus::DatasetManifest* validation) {
  return transduce::train(&baseline, mixed, store, tc, baseline.config(), validation);
}

transduce::TrainResult run_scratch_training(const corpus::DatasetManifest& mixed,
                                            const corpus::UtteranceStore& store,
                                            const transduce::TrainConfig& tc, const transduce::ModelConfig& mc,
                                            const corpus::DatasetManifest* validation) {
  return transduce::train(nullptr, mixed, store, tc, mc, validation);
}

}  // namespace com2s::selftrain
