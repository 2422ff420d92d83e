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


#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "com2s/emgsig.hpp"
#include "com2s/selftrain.hpp"
#include "com2s/simgen.hpp"
#include "com2s/sweep.hpp"
#include "com2s/transduce.hpp"
#include "test_support.hpp"

using namespace com2s;
using namespace com2s::simgen;
using com2s::testing::error_kind;

namespace {

SimProfile profile_for(std::uint64_t seed) {
  return make_profile(seed, phonemics::PhonemeInventory::desk_default(), 8, 4, 12);
}

bool same_profile(const SimProfile& a, const SimProfile& b) {
  if (a.templates.size() != b.templates.size()) return false;
  for (std::size_t i = 0; i < a.templates.size(); ++i) {
    if (a.templates[i] != b.templates[i] || a.generator_templates[i] != b.generator_templates[i] ||
        a.acoustic_prototypes[i] != b.acoustic_prototypes[i])
      return false;
  }
  for (std::size_t s = 0; s < a.session_mixers.size(); ++s) {
    if (a.session_mixers[s] != b.session_mixers[s]) return false;
  }
  return a.lexicon == b.lexicon && a.speaker_gains == b.speaker_gains;
}

bool same_utterance(const corpus::Utterance& a, const corpus::Utterance& b) {
  return a.id == b.id && a.emg == b.emg && a.transcript == b.transcript &&
         a.phoneme_alignment == b.phoneme_alignment && a.acoustic_target == b.acoustic_target &&
         a.speaker_id == b.speaker_id && a.source == b.source;
}

double mean_squared_diff(const corpus::EmgRecording& a, const corpus::EmgRecording& b) {
  return (a.as_double() - b.as_double()).squaredNorm() / static_cast<double>(a.samples.size());
}

}  // namespace

TEST_CASE("profiles are deterministic in the seed") {
  CHECK(same_profile(profile_for(1), profile_for(1)));
  const auto a = profile_for(1);
  const auto b = profile_for(2);
  bool differs = false;
  for (std::size_t i = 0; i < a.templates.size(); ++i) differs |= a.templates[i] != b.templates[i];
  CHECK(differs);
}

TEST_CASE("profile structure") {
  const auto p = profile_for(3);
  CHECK(p.n_sessions() == 4);
  CHECK(p.lexicon.size() == 12);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> d;
  Eigen::VectorXd v(8);
  for (auto& x : v) x = d(rng);
  CHECK(p.session_mixers[0] * v == v);
  for (const auto& m : p.session_mixers) CHECK(std::abs(m.determinant()) > 1e-3);
  for (std::size_t i = 0; i < p.templates.size(); ++i) {
    for (std::size_t j = i + 1; j < p.templates.size(); ++j) {
      CHECK((p.templates[i] - p.templates[j]).norm() > 0.0);
    }
  }
  // every word is a non-empty sequence of valid speech phonemes and no word
  // is a prefix of another, so greedy decoding is unambiguous
  for (const auto& [word, phones] : p.lexicon) {
    CHECK_FALSE(phones.empty());
    for (int ph : phones) {
      CHECK(ph >= 0);
      CHECK(ph < static_cast<int>(p.inventory.size()));
      CHECK(ph != p.inventory.silence_index());
    }
    for (const auto& [other, other_phones] : p.lexicon) {
      if (other == word || other_phones.size() < phones.size()) continue;
      CHECK_FALSE(std::equal(phones.begin(), phones.end(), other_phones.begin()));
    }
  }
  CHECK(error_kind([] { make_profile(1, phonemics::PhonemeInventory::desk_default(), 8, 4, 1); }) ==
        ErrorKind::config);
  CHECK(error_kind([] { make_profile(1, phonemics::PhonemeInventory({"sil", "a"}), 8, 4, 40); }) ==
        ErrorKind::config);
}

TEST_CASE("noiseless identity-session EMG is template times envelope") {
  const auto p = profile_for(4);
  const auto words = std::vector<std::string>{p.words()[0], p.words()[3]};
  const auto u = synth_utterance(p, words, 0, 0.0, 77);
  const auto segments = layout_segments(p, words, 100, 77);
  const std::size_t frames = segments.back().start_frame + segments.back().frames;
  REQUIRE(u.n_frames() == frames);
  REQUIRE(u.emg.n_samples() == frames * 8);
  CHECK(static_cast<std::size_t>(u.acoustic_target.rows()) == frames);
  for (const auto& seg : segments) {
    for (std::size_t i = seg.start_frame * 8; i < (seg.start_frame + seg.frames) * 8; ++i) {
      CHECK(u.phoneme_alignment[i / 8] == seg.phoneme);
      const double pos = (static_cast<double>(i) / 8.0 - seg.start_frame) / seg.frames;
      const Eigen::VectorXd expected = p.templates[seg.phoneme] * envelope(pos);
      const Eigen::VectorXd got = u.emg.samples.col(static_cast<Eigen::Index>(i)).cast<double>();
      CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-5 * (1.0 + expected.cwiseAbs().maxCoeff()));
    }
  }
  // words expand through the lexicon
  std::vector<int> expanded;
  for (const auto& w : words) {
    const auto& ph = p.lexicon.at(w);
    expanded.insert(expanded.end(), ph.begin(), ph.end());
  }
  std::vector<int> spoken;
  for (const auto& seg : segments) {
    if (seg.phoneme != p.inventory.silence_index()) spoken.push_back(seg.phoneme);
  }
  CHECK(spoken == expanded);
  for (const auto& seg : segments) {
    if (seg.phoneme == p.inventory.silence_index()) continue;
    CHECK(seg.frames >= 6);
    CHECK(seg.frames <= 10);
  }
}

TEST_CASE("utterances are deterministic and noise increases deviation") {
  const auto p = profile_for(5);
  const auto words = std::vector<std::string>{p.words()[1], p.words()[2]};
  const auto a = synth_utterance(p, words, 2, 0.3, 9);
  const auto b = synth_utterance(p, words, 2, 0.3, 9);
  CHECK(same_utterance(a, b));
  const auto clean = synth_utterance(p, words, 2, 0.0, 9);
  const auto noisy = synth_utterance(p, words, 2, 0.5, 9);
  CHECK(mean_squared_diff(noisy.emg, clean.emg) > mean_squared_diff(a.emg, clean.emg));
  CHECK(mean_squared_diff(a.emg, clean.emg) > 0.0);
  CHECK(error_kind([&] { synth_utterance(p, {"nonword"}, 0, 0.0, 1); }) == ErrorKind::lexicon);
  CHECK(error_kind([&] { synth_utterance(p, words, 9, 0.0, 1); }) == ErrorKind::validation);
}

TEST_CASE("session assignment is even and seeded") {
  auto counts = [](const std::vector<std::uint32_t>& ids) {
    std::map<std::uint32_t, int> c;
    for (auto id : ids) ++c[id];
    std::vector<int> out;
    for (auto [k, v] : c) out.push_back(v);
    std::sort(out.rbegin(), out.rend());
    return out;
  };
  CHECK(counts(assign_sessions(6, 3, 1)) == std::vector<int>{2, 2, 2});
  CHECK(counts(assign_sessions(7, 3, 1)) == std::vector<int>{3, 2, 2});
  CHECK(assign_sessions(40, 4, 8) == assign_sessions(40, 4, 8));
  for (std::size_t n = 0; n < 30; ++n) {
    for (std::size_t k = 1; k < 6; ++k) {
      const auto c = counts(assign_sessions(n, k, n * 31 + k));
      if (!c.empty()) CHECK(c.front() - c.back() <= 1);
    }
  }
}

TEST_CASE("generated corpora live in the tanh domain") {
  const auto p = profile_for(6);
  SynthSpec spec;
  spec.n_utterances = 50;
  spec.n_sessions = 4;
  spec.domain = Domain::tanh_domain;
  spec.noise_sigma = 0.2;
  spec.seed = 4;
  const auto gc = synth_generated_corpus(p, spec);
  const auto m = gc.manifest();
  CHECK(m.size() == 50);
  std::set<std::string> speakers;
  for (const auto& e : m.entries()) {
    CHECK(e.source == corpus::Source::synthetic);
    speakers.insert(e.speaker_id);
  }
  CHECK(speakers.size() > 1);
  for (const auto& u : gc.utterances) {
    CHECK(u.emg.sample_rate == 200);
    CHECK(u.emg.samples.cwiseAbs().maxCoeff() < 1.0f);
  }
  spec.domain = Domain::raw_units;
  CHECK(error_kind([&] { synth_generated_corpus(p, spec); }) == ErrorKind::config);
}

TEST_CASE("restoring generated EMG recovers the raw construction") {
  const auto p = profile_for(7);
  const auto words = std::vector<std::string>{p.words()[4], p.words()[5]};
  RenderOptions tanh_opt;
  tanh_opt.domain = Domain::tanh_domain;
  tanh_opt.emg_rate = 200;
  tanh_opt.generator = true;
  tanh_opt.speaker = 3;
  RenderOptions raw_opt = tanh_opt;
  raw_opt.domain = Domain::raw_units;
  raw_opt.emg_rate = 800;
  const auto emitted = synth_utterance(p, words, 1, 0.0, 21, tanh_opt);
  const auto raw = synth_utterance(p, words, 1, 0.0, 21, raw_opt);
  const auto restored = emgsig::prepare_generated(emitted, 800);
  REQUIRE(restored.emg.n_samples() == raw.emg.n_samples());
  for (std::size_t k = 0; k < emitted.emg.n_samples(); ++k) {
    const auto i = static_cast<Eigen::Index>(4 * k);
    CHECK((restored.emg.samples.col(i) - raw.emg.samples.col(i)).cwiseAbs().maxCoeff() <= 1e-4f);
  }
}

TEST_CASE("corpus generation is reproducible") {
  const auto p = profile_for(8);
  SynthSpec spec;
  spec.n_utterances = 12;
  spec.n_sessions = 4;
  spec.noise_mixture = {{0.5, 0.05, 0.0}, {0.5, 0.4, 0.3}};
  spec.seed = 10;
  const auto a = synth_corpus(p, spec);
  const auto b = synth_corpus(p, spec);
  REQUIRE(a.utterances.size() == 12);
  for (std::size_t i = 0; i < 12; ++i) CHECK(same_utterance(a.utterances[i], b.utterances[i]));
  CHECK(a.component == b.component);
}

TEST_CASE("a teacher finds low-noise utterances easier than high-noise ones") {
  std::vector<double> low, high;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    auto t = com2s::testing::make_tiny_corpus(24, 0.0, seed);
    transduce::TrainConfig tc;
    tc.epochs = 25;
    tc.learning_rate = 3e-3;
    tc.seed = seed;
    const auto teacher = transduce::train(nullptr, t.manifest, t.store, tc, t.model).model;

    auto scored = [&](double sigma) {
      SynthSpec spec;
      spec.n_utterances = 12;
      spec.noise_sigma = sigma;
      spec.n_sessions = t.profile.n_sessions();
      spec.id_prefix = "probe";
      spec.seed = seed + 500;
      const auto gc = synth_corpus(t.profile, spec);
      corpus::UtteranceStore store;
      gc.add_to(store);
      std::vector<double> losses;
      for (const auto& r : selftrain::score_confidence(teacher, gc.manifest(), store))
        losses.push_back(r.per_frame_loss);
      double s = 0.0;
      for (double v : losses) s += v;
      return s / static_cast<double>(losses.size());
    };
    low.push_back(scored(0.1));
    high.push_back(scored(1.0));
  }
  CHECK(sweep::median(low) < sweep::median(high));
}
