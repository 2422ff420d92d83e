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
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "com2s/phonemics.hpp"

namespace com2s::corpus {

enum class Source { real, synthetic };

std::string_view to_string(Source source);
Source parse_source(std::string_view text);

/// Channel-major float32 storage, exactly what goes to disk.
using SampleMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
/// n_frames x n_coeffs.
using FeatureMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct EmgRecording {
  SampleMatrix samples;  // channels x n_samples
  std::uint32_t sample_rate = 0;
  std::uint32_t session_id = 0;

  std::size_t channels() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_samples() const { return static_cast<std::size_t>(samples.cols()); }
  double duration_s() const {
    return static_cast<double>(n_samples()) / static_cast<double>(sample_rate);
  }
  /// Samples widened to double, channels x n_samples.
  Eigen::MatrixXd as_double() const { return samples.cast<double>(); }
  void validate() const;

  bool operator==(const EmgRecording& other) const;
};

struct RecordingHeader {
  std::uint32_t channels = 0;
  std::uint32_t n_samples = 0;
  std::uint32_t sample_rate = 0;
  std::uint32_t session_id = 0;
};

// "EMG1" | u32 channels | u32 samples | u32 rate | u32 session | f32 data, all LE.
std::vector<std::uint8_t> encode_recording(const EmgRecording& rec);
EmgRecording decode_recording(std::span<const std::uint8_t> bytes);
void write_recording(const EmgRecording& rec, const std::filesystem::path& path);
EmgRecording read_recording(const std::filesystem::path& path);
RecordingHeader read_recording_header(const std::filesystem::path& path);

// u32 rows | u32 cols | f32 data row-major, all LE.
void write_feature_matrix(const FeatureMatrix& m, const std::filesystem::path& path);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

struct Utterance {
  std::string id;
  EmgRecording emg;
  std::vector<std::string> transcript;
  phonemics::FrameLabels phoneme_alignment;
  FeatureMatrix acoustic_target;
  Source source = Source::real;
  std::string speaker_id;

  std::size_t n_frames() const { return phoneme_alignment.size(); }
  /// Checks the frame-count invariants for the given frame rate.
  void validate(std::size_t inventory_size, std::uint32_t frame_rate) const;
};

struct ManifestEntry {
  std::string id;
  std::string emg_path;
  std::string transcript;
  std::string phoneme_path;
  std::string acoustic_path;
  double duration_s = 0.0;
  std::uint32_t session_id = 0;
  Source source = Source::real;
  std::string speaker_id;

  bool operator==(const ManifestEntry&) const = default;
};

struct ManifestTotals {
  std::size_t utterances = 0;
  double hours = 0.0;
  std::size_t speakers = 0;
};

/// Immutable list of utterances. Totals are always recomputed from entries.
class DatasetManifest {
 public:
  DatasetManifest() = default;
  /// Relative paths in entries are resolved against base_dir.
  explicit DatasetManifest(std::vector<ManifestEntry> entries,
                           std::filesystem::path base_dir = {});

  const std::vector<ManifestEntry>& entries() const { return entries_; }
  const ManifestTotals& totals() const { return totals_; }
  const std::filesystem::path& base_dir() const { return base_dir_; }
  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }
  const ManifestEntry& at(const std::string& id) const;

  std::filesystem::path resolve(const std::string& path) const;
  /// Keeps the listed entries (by position) with the same base directory.
  DatasetManifest subset(std::span<const std::size_t> positions) const;

 private:
  std::vector<ManifestEntry> entries_;
  std::filesystem::path base_dir_;
  ManifestTotals totals_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Concatenates manifests; entries keep absolute-resolved paths.
DatasetManifest concat(std::span<const DatasetManifest> parts);

struct ManifestStats {
  double hours = 0.0;
  std::size_t utterances = 0;
  std::size_t speakers = 0;
  std::map<std::uint32_t, std::size_t> per_session;

  bool operator==(const ManifestStats&) const = default;
};

ManifestStats manifest_stats(const DatasetManifest& manifest);

/// JSON-lines reader. With check_files, every EMG file must exist and its
/// header must agree with duration_s and session_id.
DatasetManifest load_manifest(const std::filesystem::path& path, bool check_files = true);
/// Writes JSON lines; paths are rewritten relative to the output directory.
void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path);

/// Utterances keyed by id.
class UtteranceStore {
 public:
  void add(Utterance utterance);
  const Utterance& get(const std::string& id) const;
  bool contains(const std::string& id) const { return items_.count(id) != 0; }
  std::size_t size() const { return items_.size(); }

 private:
  std::unordered_map<std::string, Utterance> items_;
};

/// Writes the EMG, alignment and acoustic files for one utterance under dir
/// and returns a manifest entry with paths relative to dir.
ManifestEntry write_utterance(const Utterance& utterance, const std::filesystem::path& dir,
                              const phonemics::PhonemeInventory& inventory);
Utterance read_utterance(const DatasetManifest& manifest, const ManifestEntry& entry,
                         const phonemics::PhonemeInventory& inventory);
void load_into(UtteranceStore& store, const DatasetManifest& manifest,
               const phonemics::PhonemeInventory& inventory);

ManifestEntry entry_for(const Utterance& utterance);
std::string join_words(const std::vector<std::string>& words);
std::vector<std::string> split_words(std::string_view text);

}  // namespace com2s::corpus
