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
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "com2s/corpus.hpp"
#include "com2s/phonemics.hpp"

namespace com2s::simgen {

/// How emitted EMG is represented. tanh_domain mimics a generator whose
/// outputs were squashed with tanh(x / 100) and produced at a reduced rate.
enum class Domain { raw_units, tanh_domain };

inline constexpr double kGeneratorScale = 100.0;

/// splitmix64 of (seed, index); independent substreams per utterance.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index);

struct ProfileOptions {
  std::size_t channels = 8;
  std::size_t n_sessions = 4;
  std::size_t lexicon_size = 24;
  std::size_t n_coeffs = 13;
  std::size_t min_word_phonemes = 2;
  std::size_t max_word_phonemes = 3;
  std::size_t n_speakers = 32;
  double amplitude = 30.0;
  // Frobenius norm of (mixer - I) for every session but 0.
  double session_spread = 0.4;
  // Per-phoneme template distortion of the generator, relative to amplitude.
  double generator_bias = 0.35;
  double speaker_spread = 0.15;
};

struct SimProfile {
  phonemics::PhonemeInventory inventory = phonemics::PhonemeInventory::desk_default();
  std::size_t channels = 0;
  std::size_t n_coeffs = 0;
  double amplitude = 0.0;
  std::vector<Eigen::VectorXd> templates;            // per phoneme, raw units
  std::vector<Eigen::VectorXd> generator_templates;  // what the generator articulates
  std::vector<Eigen::MatrixXd> session_mixers;       // channels x channels
  std::vector<Eigen::VectorXd> speaker_gains;        // synthetic speaker pool
  std::vector<Eigen::VectorXd> acoustic_prototypes;  // per phoneme
  phonemics::Lexicon lexicon;
  std::uint64_t seed = 0;

  std::size_t n_sessions() const { return session_mixers.size(); }
  std::vector<std::string> words() const;
};

SimProfile make_profile(std::uint64_t seed, const phonemics::PhonemeInventory& inventory,
                        std::size_t channels, std::size_t n_sessions, std::size_t lexicon_size);
SimProfile make_profile(std::uint64_t seed, const phonemics::PhonemeInventory& inventory,
                        const ProfileOptions& options);

struct Segment {
  int phoneme = 0;
  std::size_t start_frame = 0;
  std::size_t frames = 0;
};

struct RenderOptions {
  Domain domain = Domain::raw_units;
  std::uint32_t emg_rate = 800;
  std::uint32_t frame_rate = 100;
  corpus::Source source = corpus::Source::real;
  // Articulate with the generator's templates instead of the real ones.
  bool generator = false;
  std::optional<std::size_t> speaker;  // index into speaker_gains
  // Probability that a phoneme segment is articulated as a different phoneme.
  double substitution_rate = 0.0;
  std::string id = "utt";
  std::string speaker_id = "spk0";
};

/// EMG(t) = mixer[session] * (gain .* template[ph(t)] * envelope(t)) + N(0, (noise_sigma * amplitude)^2).
/// noise_sigma is relative to the profile amplitude.
corpus::Utterance synth_utterance(const SimProfile& profile, const std::vector<std::string>& words,
                                  std::uint32_t session_id, double noise_sigma,
                                  std::uint64_t utt_seed, const RenderOptions& options = {});

/// Phoneme layout used by synth_utterance for the given seed.
std::vector<Segment> layout_segments(const SimProfile& profile,
                                     const std::vector<std::string>& words,
                                     std::uint32_t frame_rate, std::uint64_t utt_seed);

double envelope(double position);

/// One quality component of a noise mixture.
struct NoiseComponent {
  double weight = 1.0;
  double noise_sigma = 0.0;
  double substitution_rate = 0.0;
};

struct SynthSpec {
  std::size_t n_utterances = 0;
  std::size_t min_words = 2;
  std::size_t max_words = 3;
  double noise_sigma = 0.05;
  // Empty: every utterance uses noise_sigma and no substitutions.
  std::vector<NoiseComponent> noise_mixture;
  std::size_t n_sessions = 1;
  Domain domain = Domain::raw_units;
  std::uint32_t emg_rate = 0;  // 0 picks 800 (raw_units) or 200 (tanh_domain)
  std::uint32_t frame_rate = 100;
  corpus::Source source = corpus::Source::real;
  std::string id_prefix = "utt";
  std::uint64_t seed = 0;

  std::uint32_t resolved_emg_rate() const;
  void validate(const SimProfile& profile) const;
};

struct GeneratedCorpus {
  std::vector<corpus::Utterance> utterances;
  std::vector<std::size_t> component;  // noise-mixture component per utterance

  corpus::DatasetManifest manifest() const;
  void add_to(corpus::UtteranceStore& store) const;
};

/// Real sources use the real templates and a single speaker; synthetic
/// sources use the generator templates and the multi-speaker pool.
GeneratedCorpus synth_corpus(const SimProfile& profile, const SynthSpec& spec);
/// Synthetic tanh-domain corpus as emitted by the generator.
GeneratedCorpus synth_generated_corpus(const SimProfile& profile, SynthSpec spec);

/// Writes every utterance under dir plus dir/manifest.jsonl.
corpus::DatasetManifest write_corpus(const GeneratedCorpus& corpus, const std::filesystem::path& dir,
                                     const phonemics::PhonemeInventory& inventory);

/// Per-session counts differ by at most one; order is a seeded permutation.
std::vector<std::uint32_t> assign_sessions(std::size_t n, std::size_t n_sessions,
                                           std::uint64_t seed);

}  // namespace com2s::simgen
