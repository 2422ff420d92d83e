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

#include "com2s/corpus.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include <json.hpp>

#include "com2s/error.hpp"
#include "binary_io.hpp"

namespace com2s::corpus {

namespace fs = std::filesystem;

namespace {

constexpr char kEmgMagic[4] = {'E', 'M', 'G', '1'};
constexpr std::size_t kEmgHeaderBytes = 20;

using detail::get_u32;
using detail::put_u32;
using detail::read_all;
using detail::write_all;

}  // namespace

std::string_view to_string(Source source) {
  return source == Source::real ? "real" : "synthetic";
}

Source parse_source(std::string_view text) {
  if (text == "real") return Source::real;
  if (text == "synthetic") return Source::synthetic;
  fail(ErrorKind::parse, "unknown source tag '" + std::string(text) + "'");
}

void EmgRecording::validate() const {
  if (samples.rows() == 0) fail(ErrorKind::validation, "recording has no channels");
  if (sample_rate == 0) fail(ErrorKind::validation, "sample rate must be positive");
  if (!samples.allFinite()) fail(ErrorKind::validation, "recording contains non-finite samples");
}

bool EmgRecording::operator==(const EmgRecording& other) const {
  if (sample_rate != other.sample_rate || session_id != other.session_id) return false;
  if (samples.rows() != other.samples.rows() || samples.cols() != other.samples.cols())
    return false;
  // Bitwise, so -0.0 and +0.0 differ and NaN never slips through as equal.
  return std::equal(samples.data(), samples.data() + samples.size(), other.samples.data(),
                    [](float a, float b) {
                      return std::bit_cast<std::uint32_t>(a) == std::bit_cast<std::uint32_t>(b);
                    });
}

std::vector<std::uint8_t> encode_recording(const EmgRecording& rec) {
  rec.validate();
  std::vector<std::uint8_t> out;
  out.reserve(kEmgHeaderBytes + 4 * static_cast<std::size_t>(rec.samples.size()));
  out.insert(out.end(), std::begin(kEmgMagic), std::end(kEmgMagic));
  put_u32(out, static_cast<std::uint32_t>(rec.channels()));
  put_u32(out, static_cast<std::uint32_t>(rec.n_samples()));
  put_u32(out, rec.sample_rate);
  put_u32(out, rec.session_id);
  // Row-major storage is already channel-major.
  for (Eigen::Index i = 0; i < rec.samples.size(); ++i)
    put_u32(out, std::bit_cast<std::uint32_t>(rec.samples.data()[i]));
  return out;
}

namespace {

RecordingHeader decode_header(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4 || !std::equal(std::begin(kEmgMagic), std::end(kEmgMagic), bytes.begin(),
                                      [](char a, std::uint8_t b) {
                                        return static_cast<std::uint8_t>(a) == b;
                                      }))
    fail(ErrorKind::format, "bad EMG magic bytes");
  if (bytes.size() < kEmgHeaderBytes) fail(ErrorKind::length, "truncated EMG header");
  return {get_u32(bytes, 4), get_u32(bytes, 8), get_u32(bytes, 12), get_u32(bytes, 16)};
}

}  // namespace

EmgRecording decode_recording(std::span<const std::uint8_t> bytes) {
  const RecordingHeader h = decode_header(bytes);
  const std::size_t count = static_cast<std::size_t>(h.channels) * h.n_samples;
  if (bytes.size() != kEmgHeaderBytes + 4 * count)
    fail(ErrorKind::length, "EMG payload has " + std::to_string(bytes.size() - kEmgHeaderBytes) +
                                " bytes, expected " + std::to_string(4 * count));
  EmgRecording rec;
  rec.sample_rate = h.sample_rate;
  rec.session_id = h.session_id;
  rec.samples.resize(h.channels, h.n_samples);
  for (std::size_t i = 0; i < count; ++i)
    rec.samples.data()[i] = std::bit_cast<float>(get_u32(bytes, kEmgHeaderBytes + 4 * i));
  return rec;
}

void write_recording(const EmgRecording& rec, const fs::path& path) {
  write_all(path, encode_recording(rec));
}

EmgRecording read_recording(const fs::path& path) { return decode_recording(read_all(path)); }

RecordingHeader read_recording_header(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::validation, "cannot open " + path.string());
  std::vector<std::uint8_t> head(kEmgHeaderBytes);
  in.read(reinterpret_cast<char*>(head.data()), static_cast<std::streamsize>(head.size()));
  head.resize(static_cast<std::size_t>(in.gcount()));
  return decode_header(head);
}

void write_feature_matrix(const FeatureMatrix& m, const fs::path& path) {
  if (!m.allFinite()) fail(ErrorKind::validation, "feature matrix contains non-finite values");
  std::vector<std::uint8_t> out;
  out.reserve(8 + 4 * static_cast<std::size_t>(m.size()));
  put_u32(out, static_cast<std::uint32_t>(m.rows()));
  put_u32(out, static_cast<std::uint32_t>(m.cols()));
  for (Eigen::Index i = 0; i < m.size(); ++i)
    put_u32(out, std::bit_cast<std::uint32_t>(m.data()[i]));
  write_all(path, out);
}

FeatureMatrix read_feature_matrix(const fs::path& path) {
  const auto bytes = read_all(path);
  if (bytes.size() < 8) fail(ErrorKind::length, "truncated feature matrix " + path.string());
  const std::uint32_t rows = get_u32(bytes, 0);
  const std::uint32_t cols = get_u32(bytes, 4);
  const std::size_t count = static_cast<std::size_t>(rows) * cols;
  if (bytes.size() != 8 + 4 * count)
    fail(ErrorKind::length, "feature matrix payload size mismatch in " + path.string());
  FeatureMatrix m(rows, cols);
  for (std::size_t i = 0; i < count; ++i) m.data()[i] = std::bit_cast<float>(get_u32(bytes, 8 + 4 * i));
  return m;
}

void Utterance::validate(std::size_t inventory_size, std::uint32_t frame_rate) const {
  emg.validate();
  if (static_cast<std::size_t>(acoustic_target.rows()) != phoneme_alignment.size())
    fail(ErrorKind::validation, id + ": alignment has " + std::to_string(phoneme_alignment.size()) +
                                    " frames, acoustic target has " +
                                    std::to_string(acoustic_target.rows()));
  for (int label : phoneme_alignment)
    if (label < 0 || static_cast<std::size_t>(label) >= inventory_size)
      fail(ErrorKind::validation, id + ": phoneme index out of range");
  if (frame_rate == 0 || emg.sample_rate % frame_rate != 0)
    fail(ErrorKind::validation, id + ": sample rate is not a multiple of the frame rate");
  const std::size_t hop = emg.sample_rate / frame_rate;
  if (emg.n_samples() / hop != phoneme_alignment.size())
    fail(ErrorKind::validation, id + ": frame count does not match EMG length");
}

DatasetManifest::DatasetManifest(std::vector<ManifestEntry> entries, fs::path base_dir)
    : entries_(std::move(entries)), base_dir_(std::move(base_dir)) {
  std::set<std::string> speakers;
  double seconds = 0.0;
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.id.empty()) fail(ErrorKind::validation, "manifest entry with empty id");
    if (!index_.emplace(e.id, i).second)
      fail(ErrorKind::validation, "duplicate utterance id '" + e.id + "'");
    if (!(e.duration_s > 0.0) || !std::isfinite(e.duration_s))
      fail(ErrorKind::validation, e.id + ": duration must be positive");
    seconds += e.duration_s;
    speakers.insert(e.speaker_id);
  }
  totals_.utterances = entries_.size();
  totals_.hours = seconds / 3600.0;
  totals_.speakers = speakers.size();
}

const ManifestEntry& DatasetManifest::at(const std::string& id) const {
  auto it = index_.find(id);
  if (it == index_.end()) fail(ErrorKind::validation, "utterance '" + id + "' not in manifest");
  return entries_[it->second];
}

fs::path DatasetManifest::resolve(const std::string& path) const {
  fs::path p(path);
  if (p.is_absolute() || base_dir_.empty()) return p;
  return base_dir_ / p;
}

DatasetManifest DatasetManifest::subset(std::span<const std::size_t> positions) const {
  std::vector<ManifestEntry> picked;
  picked.reserve(positions.size());
  for (auto pos : positions) picked.push_back(entries_.at(pos));
  return DatasetManifest(std::move(picked), base_dir_);
}

DatasetManifest concat(std::span<const DatasetManifest> parts) {
  std::vector<ManifestEntry> all;
  for (const auto& part : parts) {
    for (auto e : part.entries()) {
      auto absolutize = [&](std::string& p) {
        if (!p.empty()) p = part.resolve(p).string();
      };
      absolutize(e.emg_path);
      absolutize(e.phoneme_path);
      absolutize(e.acoustic_path);
      all.push_back(std::move(e));
    }
  }
  return DatasetManifest(std::move(all));
}

ManifestStats manifest_stats(const DatasetManifest& manifest) {
  ManifestStats stats;
  stats.hours = manifest.totals().hours;
  stats.utterances = manifest.totals().utterances;
  stats.speakers = manifest.totals().speakers;
  for (const auto& e : manifest.entries()) ++stats.per_session[e.session_id];
  return stats;
}

namespace {

ManifestEntry parse_entry(const nlohmann::json& j) {
  ManifestEntry e;
  e.id = j.at("id").get<std::string>();
  e.emg_path = j.at("emg_path").get<std::string>();
  e.transcript = j.at("transcript").get<std::string>();
  e.phoneme_path = j.at("phoneme_path").get<std::string>();
  e.acoustic_path = j.at("acoustic_path").get<std::string>();
  e.duration_s = j.at("duration_s").get<double>();
  e.session_id = j.at("session_id").get<std::uint32_t>();
  e.source = parse_source(j.at("source").get<std::string>());
  e.speaker_id = j.at("speaker_id").get<std::string>();
  return e;
}

}  // namespace

DatasetManifest load_manifest(const fs::path& path, bool check_files) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::validation, "manifest not found: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      entries.push_back(parse_entry(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    } catch (const Error& ex) {
      fail(ErrorKind::parse, path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  DatasetManifest manifest(std::move(entries), path.parent_path());
  if (!check_files) return manifest;

  std::vector<std::string> missing;
  for (const auto& e : manifest.entries()) {
    const auto emg = manifest.resolve(e.emg_path);
    if (!fs::exists(emg)) {
      missing.push_back(e.id);
      continue;
    }
    const auto header = read_recording_header(emg);
    const double expected =
        static_cast<double>(header.n_samples) / static_cast<double>(header.sample_rate);
    if (std::abs(expected - e.duration_s) > 1e-6)
      fail(ErrorKind::validation, e.id + ": duration_s " + std::to_string(e.duration_s) +
                                      " disagrees with EMG file (" + std::to_string(expected) +
                                      " s)");
    if (header.session_id != e.session_id)
      fail(ErrorKind::validation, e.id + ": session_id disagrees with EMG file");
  }
  if (!missing.empty()) {
    std::string ids;
    for (const auto& id : missing) ids += (ids.empty() ? "" : ", ") + id;
    fail(ErrorKind::validation, "missing EMG files for: " + ids);
  }
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const fs::path& path) {
  const fs::path out_dir = fs::absolute(path).parent_path();
  auto rebase = [&](const std::string& p) -> std::string {
    if (p.empty()) return p;
    const fs::path abs = fs::absolute(manifest.resolve(p)).lexically_normal();
    const fs::path rel = abs.lexically_relative(out_dir);
    return rel.empty() ? abs.generic_string() : rel.generic_string();
  };
  std::ostringstream text;
  for (const auto& e : manifest.entries()) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["emg_path"] = rebase(e.emg_path);
    j["transcript"] = e.transcript;
    j["phoneme_path"] = rebase(e.phoneme_path);
    j["acoustic_path"] = rebase(e.acoustic_path);
    j["duration_s"] = e.duration_s;
    j["session_id"] = e.session_id;
    j["source"] = std::string(to_string(e.source));
    j["speaker_id"] = e.speaker_id;
    text << j.dump() << '\n';
  }
  const std::string s = text.str();
  write_all(path, std::vector<std::uint8_t>(s.begin(), s.end()));
}

void UtteranceStore::add(Utterance utterance) {
  std::string id = utterance.id;
  items_.insert_or_assign(std::move(id), std::move(utterance));
}

const Utterance& UtteranceStore::get(const std::string& id) const {
  auto it = items_.find(id);
  if (it == items_.end()) fail(ErrorKind::validation, "utterance '" + id + "' not loaded");
  return it->second;
}

std::string join_words(const std::vector<std::string>& words) {
  std::string out;
  for (const auto& w : words) out += (out.empty() ? "" : " ") + w;
  return out;
}

std::vector<std::string> split_words(std::string_view text) {
  std::vector<std::string> words;
  std::istringstream in{std::string(text)};
  std::string w;
  while (in >> w) words.push_back(w);
  return words;
}

ManifestEntry entry_for(const Utterance& u) {
  ManifestEntry e;
  e.id = u.id;
  e.transcript = join_words(u.transcript);
  e.duration_s = u.emg.duration_s();
  e.session_id = u.emg.session_id;
  e.source = u.source;
  e.speaker_id = u.speaker_id;
  return e;
}

ManifestEntry write_utterance(const Utterance& u, const fs::path& dir,
                              const phonemics::PhonemeInventory& inventory) {
  ManifestEntry e = entry_for(u);
  e.emg_path = u.id + ".emg";
  e.phoneme_path = u.id + ".phn";
  e.acoustic_path = u.id + ".ac";
  write_recording(u.emg, dir / e.emg_path);
  phonemics::write_alignment(dir / e.phoneme_path, u.phoneme_alignment, inventory);
  write_feature_matrix(u.acoustic_target, dir / e.acoustic_path);
  return e;
}

Utterance read_utterance(const DatasetManifest& manifest, const ManifestEntry& e,
                         const phonemics::PhonemeInventory& inventory) {
  Utterance u;
  u.id = e.id;
  u.emg = read_recording(manifest.resolve(e.emg_path));
  u.transcript = split_words(e.transcript);
  u.phoneme_alignment = phonemics::read_alignment(manifest.resolve(e.phoneme_path), inventory);
  u.acoustic_target = read_feature_matrix(manifest.resolve(e.acoustic_path));
  u.source = e.source;
  u.speaker_id = e.speaker_id;
  return u;
}

void load_into(UtteranceStore& store, const DatasetManifest& manifest,
               const phonemics::PhonemeInventory& inventory) {
  for (const auto& e : manifest.entries()) store.add(read_utterance(manifest, e, inventory));
}

}  // namespace com2s::corpus
