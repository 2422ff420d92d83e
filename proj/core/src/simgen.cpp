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

#include "com2s/simgen.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

#include "com2s/error.hpp"

namespace com2s::simgen {

namespace fs = std::filesystem;

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t index) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<std::string> SimProfile::words() const {
  std::vector<std::string> out;
  out.reserve(lexicon.size());
  for (const auto& [word, phones] : lexicon) out.push_back(word);
  return out;
}

namespace {

Eigen::VectorXd gaussian_vector(std::mt19937_64& rng, std::size_t n, double sigma, double clip) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = sigma * std::clamp(normal(rng), -clip, clip);
  return v;
}

std::size_t possible_words(std::size_t symbols, std::size_t min_len, std::size_t max_len) {
  std::size_t total = 0;
  for (std::size_t len = min_len; len <= max_len; ++len) {
    std::size_t count = symbols;
    for (std::size_t i = 1; i < len; ++i) count *= symbols > 0 ? symbols - 1 : 0;
    total += count;
  }
  return total;
}

bool is_prefix(const std::vector<int>& a, const std::vector<int>& b) {
  return a.size() <= b.size() && std::equal(a.begin(), a.end(), b.begin());
}

phonemics::Lexicon make_lexicon(std::mt19937_64& rng, const phonemics::PhonemeInventory& inventory,
                                const ProfileOptions& opt) {
  std::vector<int> speech;
  for (int p = 0; p < static_cast<int>(inventory.size()); ++p)
    if (p != inventory.silence_index()) speech.push_back(p);
  if (opt.min_word_phonemes == 0 || opt.min_word_phonemes > opt.max_word_phonemes)
    fail(ErrorKind::config, "invalid word length range");
  if (speech.size() < 2 ||
      possible_words(speech.size(), opt.min_word_phonemes, opt.max_word_phonemes) <
          opt.lexicon_size)
    fail(ErrorKind::config, "inventory of " + std::to_string(inventory.size()) +
                                " symbols cannot supply a lexicon of " +
                                std::to_string(opt.lexicon_size) + " words");

  std::uniform_int_distribution<std::size_t> len_dist(opt.min_word_phonemes, opt.max_word_phonemes);
  std::uniform_int_distribution<std::size_t> ph_dist(0, speech.size() - 1);
  phonemics::Lexicon lexicon;
  std::vector<std::vector<int>> chosen;
  const std::size_t max_attempts = 2000 * opt.lexicon_size;
  for (std::size_t attempt = 0; lexicon.size() < opt.lexicon_size; ++attempt) {
    if (attempt >= max_attempts)
      fail(ErrorKind::config, "could not draw a prefix-free lexicon of " +
                                  std::to_string(opt.lexicon_size) + " words");
    std::vector<int> phones(len_dist(rng));
    for (std::size_t i = 0; i < phones.size(); ++i) {
      do {
        phones[i] = speech[ph_dist(rng)];
      } while (i > 0 && phones[i] == phones[i - 1]);
    }
    // Prefix-free words make greedy longest-match segmentation unambiguous.
    const bool clash = std::any_of(chosen.begin(), chosen.end(), [&](const auto& other) {
      return is_prefix(other, phones) || is_prefix(phones, other);
    });
    if (clash) continue;
    std::string spelling;
    for (int p : phones) {
      for (char c : inventory.symbol(p))
        spelling.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    if (lexicon.count(spelling)) continue;
    lexicon.emplace(spelling, phones);
    chosen.push_back(std::move(phones));
  }
  return lexicon;
}

}  // namespace

SimProfile make_profile(std::uint64_t seed, const phonemics::PhonemeInventory& inventory,
                        std::size_t channels, std::size_t n_sessions, std::size_t lexicon_size) {
  ProfileOptions opt;
  opt.channels = channels;
  opt.n_sessions = n_sessions;
  opt.lexicon_size = lexicon_size;
  return make_profile(seed, inventory, opt);
}

SimProfile make_profile(std::uint64_t seed, const phonemics::PhonemeInventory& inventory,
                        const ProfileOptions& opt) {
  if (opt.lexicon_size < 2) fail(ErrorKind::config, "lexicon_size must be at least 2");
  if (opt.channels < 1) fail(ErrorKind::config, "need at least one channel");
  if (opt.n_sessions < 1) fail(ErrorKind::config, "need at least one session");
  if (opt.n_speakers < 1) fail(ErrorKind::config, "need at least one synthetic speaker");
  if (!(opt.amplitude > 0.0)) fail(ErrorKind::config, "amplitude must be positive");

  SimProfile p;
  p.inventory = inventory;
  p.channels = opt.channels;
  p.n_coeffs = opt.n_coeffs;
  p.amplitude = opt.amplitude;
  p.seed = seed;

  // Separate substreams so that, e.g., growing the lexicon leaves templates alone.
  std::mt19937_64 tmpl_rng(substream_seed(seed, 0));
  std::mt19937_64 mixer_rng(substream_seed(seed, 1));
  std::mt19937_64 lex_rng(substream_seed(seed, 2));
  std::mt19937_64 acoustic_rng(substream_seed(seed, 3));
  std::mt19937_64 speaker_rng(substream_seed(seed, 4));

  const std::size_t c = opt.channels;
  for (std::size_t ph = 0; ph < inventory.size(); ++ph) {
    if (static_cast<int>(ph) == inventory.silence_index()) {
      p.templates.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c)));
      p.generator_templates.push_back(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(c)));
      continue;
    }
    Eigen::VectorXd t = gaussian_vector(tmpl_rng, c, opt.amplitude, 2.5);
    Eigen::VectorXd g = t + gaussian_vector(tmpl_rng, c, opt.generator_bias * opt.amplitude, 2.5);
    p.templates.push_back(std::move(t));
    p.generator_templates.push_back(std::move(g));
  }

  const auto ci = static_cast<Eigen::Index>(c);
  p.session_mixers.push_back(Eigen::MatrixXd::Identity(ci, ci));
  for (std::size_t s = 1; s < opt.n_sessions; ++s) {
    Eigen::MatrixXd r(ci, ci);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index i = 0; i < r.size(); ++i) r.data()[i] = normal(mixer_rng);
    // ||R||_2 <= ||R||_F = spread < 1 keeps I + R invertible.
    const double spread = std::min(opt.session_spread, 0.9);
    p.session_mixers.push_back(Eigen::MatrixXd::Identity(ci, ci) + r * (spread / r.norm()));
  }

  p.lexicon = make_lexicon(lex_rng, inventory, opt);

  for (std::size_t ph = 0; ph < inventory.size(); ++ph)
    p.acoustic_prototypes.push_back(gaussian_vector(acoustic_rng, opt.n_coeffs, 1.0, 3.0));

  for (std::size_t s = 0; s < opt.n_speakers; ++s) {
    Eigen::VectorXd gain = gaussian_vector(speaker_rng, c, opt.speaker_spread, 3.0);
    gain.array() += 1.0;
    p.speaker_gains.push_back(gain.cwiseMax(0.5).cwiseMin(1.5));
  }
  return p;
}

double envelope(double position) { return 0.55 + 0.45 * std::sin(std::numbers::pi * position); }

namespace {

std::vector<Segment> layout_with(std::mt19937_64& rng, const SimProfile& profile,
                                 const std::vector<std::string>& words, std::uint32_t frame_rate) {
  std::uniform_int_distribution<std::size_t> pause(3, 5);
  std::uniform_real_distribution<double> jitter(-0.02, 0.02);
  const int sil = profile.inventory.silence_index();

  std::vector<Segment> segments;
  std::size_t cursor = 0;
  auto push = [&](int phoneme, std::size_t frames) {
    segments.push_back({phoneme, cursor, frames});
    cursor += frames;
  };
  push(sil, pause(rng));
  for (std::size_t w = 0; w < words.size(); ++w) {
    auto it = profile.lexicon.find(words[w]);
    if (it == profile.lexicon.end()) fail(ErrorKind::lexicon, "unknown word '" + words[w] + "'");
    for (int ph : it->second) {
      const double seconds = 0.08 + jitter(rng);
      push(ph, std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(seconds * frame_rate))));
    }
    push(sil, pause(rng));
  }
  return segments;
}

}  // namespace

std::vector<Segment> layout_segments(const SimProfile& profile, const std::vector<std::string>& words,
                                     std::uint32_t frame_rate, std::uint64_t utt_seed) {
  std::mt19937_64 rng(utt_seed);
  return layout_with(rng, profile, words, frame_rate);
}

corpus::Utterance synth_utterance(const SimProfile& profile, const std::vector<std::string>& words,
                                  std::uint32_t session_id, double noise_sigma,
                                  std::uint64_t utt_seed, const RenderOptions& opt) {
  if (session_id >= profile.n_sessions())
    fail(ErrorKind::validation, "session " + std::to_string(session_id) + " out of range");
  if (!(noise_sigma >= 0.0)) fail(ErrorKind::validation, "noise_sigma must be non-negative");
  if (opt.frame_rate == 0 || opt.emg_rate == 0 || opt.emg_rate % opt.frame_rate != 0)
    fail(ErrorKind::config, "emg_rate must be a positive multiple of frame_rate");
  if (opt.speaker && *opt.speaker >= profile.speaker_gains.size())
    fail(ErrorKind::validation, "speaker index out of range");

  std::mt19937_64 rng(utt_seed);
  const auto segments = layout_with(rng, profile, words, opt.frame_rate);
  const std::size_t n_frames = segments.back().start_frame + segments.back().frames;

  // Which phoneme the EMG actually articulates in each segment.
  std::vector<int> articulated(segments.size());
  std::vector<int> speech;
  for (int p = 0; p < static_cast<int>(profile.inventory.size()); ++p)
    if (p != profile.inventory.silence_index()) speech.push_back(p);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick(0, speech.size() - 2);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    articulated[s] = segments[s].phoneme;
    if (segments[s].phoneme == profile.inventory.silence_index()) continue;
    if (opt.substitution_rate > 0.0 && unit(rng) < opt.substitution_rate) {
      // Uniform over the other speech phonemes.
      auto self = std::find(speech.begin(), speech.end(), segments[s].phoneme);
      std::size_t k = pick(rng);
      if (k >= static_cast<std::size_t>(self - speech.begin())) ++k;
      articulated[s] = speech[k];
    }
  }

  corpus::Utterance u;
  u.id = opt.id;
  u.transcript = words;
  u.source = opt.source;
  u.speaker_id = opt.speaker_id;
  u.phoneme_alignment.resize(n_frames);
  std::vector<std::size_t> frame_segment(n_frames);
  for (std::size_t s = 0; s < segments.size(); ++s) {
    for (std::size_t f = 0; f < segments[s].frames; ++f) {
      u.phoneme_alignment[segments[s].start_frame + f] = segments[s].phoneme;
      frame_segment[segments[s].start_frame + f] = s;
    }
  }

  std::normal_distribution<double> normal(0.0, 1.0);
  u.acoustic_target.resize(static_cast<Eigen::Index>(n_frames),
                           static_cast<Eigen::Index>(profile.n_coeffs));
  for (std::size_t f = 0; f < n_frames; ++f) {
    const auto& proto = profile.acoustic_prototypes[static_cast<std::size_t>(u.phoneme_alignment[f])];
    for (Eigen::Index k = 0; k < proto.size(); ++k)
      u.acoustic_target(static_cast<Eigen::Index>(f), k) =
          static_cast<float>(proto(k) + 0.05 * normal(rng));
  }

  const std::size_t hop = opt.emg_rate / opt.frame_rate;
  const std::size_t n_samples = n_frames * hop;
  const auto& templates = opt.generator ? profile.generator_templates : profile.templates;
  const Eigen::MatrixXd& mixer = profile.session_mixers[session_id];
  const auto channels = static_cast<Eigen::Index>(profile.channels);
  Eigen::VectorXd gain = Eigen::VectorXd::Ones(channels);
  if (opt.speaker) gain = profile.speaker_gains[*opt.speaker];

  // Mixed, gained templates per segment, computed once.
  std::vector<Eigen::VectorXd> mixed(segments.size());
  for (std::size_t s = 0; s < segments.size(); ++s)
    mixed[s] = mixer * gain.cwiseProduct(templates[static_cast<std::size_t>(articulated[s])]);

  Eigen::MatrixXd emg(channels, static_cast<Eigen::Index>(n_samples));
  const double noise_scale = noise_sigma * profile.amplitude;
  for (std::size_t i = 0; i < n_samples; ++i) {
    // Integer arithmetic keeps frame lookup and envelope position identical
    // across rendering rates at shared sample times.
    const std::size_t f = (i * opt.frame_rate) / opt.emg_rate;
    const Segment& seg = segments[frame_segment[f]];
    const double position =
        static_cast<double>(i * opt.frame_rate - seg.start_frame * opt.emg_rate) /
        static_cast<double>(seg.frames * opt.emg_rate);
    emg.col(static_cast<Eigen::Index>(i)) = mixed[frame_segment[f]] * envelope(position);
  }
  if (noise_scale > 0.0) {
    for (Eigen::Index i = 0; i < emg.size(); ++i) emg.data()[i] += noise_scale * normal(rng);
  }

  if (opt.domain == Domain::tanh_domain)
    emg = emg.unaryExpr([](double x) { return std::tanh(x / kGeneratorScale); });

  u.emg.samples = emg.cast<float>();
  u.emg.sample_rate = opt.emg_rate;
  u.emg.session_id = session_id;
  return u;
}

std::uint32_t SynthSpec::resolved_emg_rate() const {
  if (emg_rate != 0) return emg_rate;
  return domain == Domain::raw_units ? 800 : 200;
}

void SynthSpec::validate(const SimProfile& profile) const {
  if (min_words == 0 || min_words > max_words) fail(ErrorKind::config, "invalid words-per-utterance range");
  if (n_sessions == 0 || n_sessions > profile.n_sessions())
    fail(ErrorKind::config, "n_sessions must be in [1, profile sessions]");
  if (!(noise_sigma >= 0.0)) fail(ErrorKind::config, "noise_sigma must be non-negative");
  if (frame_rate == 0 || resolved_emg_rate() % frame_rate != 0)
    fail(ErrorKind::config, "emg_rate must be a multiple of frame_rate");
  double weight = 0.0;
  for (const auto& c : noise_mixture) {
    if (!(c.weight >= 0.0) || !(c.noise_sigma >= 0.0) ||
        !(c.substitution_rate >= 0.0 && c.substitution_rate <= 1.0))
      fail(ErrorKind::config, "invalid noise mixture component");
    weight += c.weight;
  }
  if (!noise_mixture.empty() && !(weight > 0.0))
    fail(ErrorKind::config, "noise mixture weights sum to zero");
}

corpus::DatasetManifest GeneratedCorpus::manifest() const {
  std::vector<corpus::ManifestEntry> entries;
  entries.reserve(utterances.size());
  for (const auto& u : utterances) entries.push_back(corpus::entry_for(u));
  return corpus::DatasetManifest(std::move(entries));
}

void GeneratedCorpus::add_to(corpus::UtteranceStore& store) const {
  for (const auto& u : utterances) store.add(u);
}

std::vector<std::uint32_t> assign_sessions(std::size_t n, std::size_t n_sessions,
                                           std::uint64_t seed) {
  if (n_sessions == 0) fail(ErrorKind::config, "n_sessions must be at least 1");
  std::vector<std::uint32_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::uint32_t>(i % n_sessions);
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  return ids;
}

GeneratedCorpus synth_corpus(const SimProfile& profile, const SynthSpec& spec) {
  spec.validate(profile);
  const bool synthetic = spec.source == corpus::Source::synthetic;
  const auto sessions = assign_sessions(spec.n_utterances, spec.n_sessions,
                                        substream_seed(spec.seed, 0xC0FFEE));
  const auto words = profile.words();

  std::vector<double> weights;
  for (const auto& c : spec.noise_mixture) weights.push_back(c.weight);

  GeneratedCorpus out;
  out.utterances.reserve(spec.n_utterances);
  for (std::size_t i = 0; i < spec.n_utterances; ++i) {
    std::mt19937_64 rng(substream_seed(spec.seed, i + 1));
    std::uniform_int_distribution<std::size_t> n_words(spec.min_words, spec.max_words);
    std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
    std::vector<std::string> seq(n_words(rng));
    for (auto& w : seq) w = words[word(rng)];

    NoiseComponent quality{1.0, spec.noise_sigma, 0.0};
    std::size_t component = 0;
    if (!spec.noise_mixture.empty()) {
      std::discrete_distribution<std::size_t> mix(weights.begin(), weights.end());
      component = mix(rng);
      quality = spec.noise_mixture[component];
    }

    RenderOptions opt;
    opt.domain = spec.domain;
    opt.emg_rate = spec.resolved_emg_rate();
    opt.frame_rate = spec.frame_rate;
    opt.source = spec.source;
    opt.generator = synthetic;
    opt.substitution_rate = quality.substitution_rate;
    char id[64];
    std::snprintf(id, sizeof id, "%s-%05zu", spec.id_prefix.c_str(), i);
    opt.id = id;
    if (synthetic) {
      std::uniform_int_distribution<std::size_t> spk(0, profile.speaker_gains.size() - 1);
      opt.speaker = spk(rng);
      char sid[32];
      std::snprintf(sid, sizeof sid, "syn-spk%03zu", *opt.speaker);
      opt.speaker_id = sid;
    } else {
      opt.speaker_id = "real-spk0";
    }
    const std::uint64_t utt_seed = rng();
    out.utterances.push_back(
        synth_utterance(profile, seq, sessions[i], quality.noise_sigma, utt_seed, opt));
    out.component.push_back(component);
  }
  return out;
}

GeneratedCorpus synth_generated_corpus(const SimProfile& profile, SynthSpec spec) {
  if (spec.domain != Domain::tanh_domain)
    fail(ErrorKind::config, "generated corpora are emitted in the tanh domain");
  spec.source = corpus::Source::synthetic;
  return synth_corpus(profile, spec);
}

corpus::DatasetManifest write_corpus(const GeneratedCorpus& gc, const fs::path& dir,
                                     const phonemics::PhonemeInventory& inventory) {
  fs::create_directories(dir);
  std::vector<corpus::ManifestEntry> entries;
  entries.reserve(gc.utterances.size());
  for (const auto& u : gc.utterances) entries.push_back(corpus::write_utterance(u, dir, inventory));
  corpus::DatasetManifest manifest(std::move(entries), dir);
  corpus::save_manifest(manifest, dir / "manifest.jsonl");
  return manifest;
}

}  // namespace com2s::simgen
