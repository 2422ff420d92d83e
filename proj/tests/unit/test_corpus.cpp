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
#include <cstdint>
#include <cstring>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"

#include "com2s/corpus.hpp"
#include "com2s/simgen.hpp"
#include "test_support.hpp"

using namespace com2s;
using namespace com2s::corpus;
using com2s::testing::error_kind;
using com2s::testing::TempDir;

namespace {

EmgRecording random_recording(std::uint64_t seed, int channels, int n) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 40.0f);
  EmgRecording r;
  r.samples.resize(channels, n);
  for (int c = 0; c < channels; ++c) {
    for (int i = 0; i < n; ++i) r.samples(c, i) = d(rng);
  }
  r.sample_rate = 800;
  r.session_id = 3;
  return r;
}

// Serializes a recording byte by byte from the documented layout.
std::vector<std::uint8_t> reference_bytes(const EmgRecording& r) {
  std::vector<std::uint8_t> out = {'E', 'M', 'G', '1'};
  auto u32 = [&](std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
  };
  u32(static_cast<std::uint32_t>(r.samples.rows()));
  u32(static_cast<std::uint32_t>(r.samples.cols()));
  u32(r.sample_rate);
  u32(r.session_id);
  for (Eigen::Index c = 0; c < r.samples.rows(); ++c) {
    for (Eigen::Index i = 0; i < r.samples.cols(); ++i) {
      std::uint32_t bits;
      const float v = r.samples(c, i);
      std::memcpy(&bits, &v, 4);
      u32(bits);
    }
  }
  return out;
}

ManifestEntry entry(const std::string& id, double seconds, std::uint32_t session,
                    const std::string& speaker) {
  ManifestEntry e;
  e.id = id;
  e.emg_path = id + ".emg";
  e.transcript = "a b";
  e.phoneme_path = id + ".phn";
  e.acoustic_path = id + ".ac";
  e.duration_s = seconds;
  e.session_id = session;
  e.speaker_id = speaker;
  return e;
}

std::string manifest_line(const std::string& id) {
  return R"({"id":")" + id + R"(","emg_path":")" + id +
         R"(.emg","transcript":"a","phoneme_path":"p","acoustic_path":"a","duration_s":0.125,"session_id":0,"source":"real","speaker_id":"s"})";
}

}  // namespace

TEST_CASE("zero recording round-trips through a file") {
  TempDir dir("corpus");
  EmgRecording r;
  r.samples = SampleMatrix::Zero(8, 100);
  r.sample_rate = 800;
  write_recording(r, dir / "z.emg");
  const auto back = read_recording(dir / "z.emg");
  CHECK(back == r);
  CHECK(back.channels() == 8);
  CHECK(back.n_samples() == 100);
}

TEST_CASE("random recordings serialize to the documented bytes") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto r = random_recording(seed, 1 + static_cast<int>(seed % 8), 37 + static_cast<int>(seed));
    const auto bytes = encode_recording(r);
    CHECK(bytes == reference_bytes(r));
    CHECK(decode_recording(bytes) == r);
  }
  TempDir dir("corpus");
  const auto r = random_recording(99, 8, 256);
  write_recording(r, dir / "r.emg");
  const auto text = com2s::testing::slurp(dir / "r.emg");
  const auto ref = reference_bytes(r);
  CHECK(std::equal(text.begin(), text.end(), ref.begin(), ref.end(),
                   [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; }));
  CHECK(read_recording(dir / "r.emg") == r);
}

TEST_CASE("corrupt recordings are rejected") {
  auto bytes = encode_recording(random_recording(1, 2, 10));
  auto bad_magic = bytes;
  std::memcpy(bad_magic.data(), "XXXX", 4);
  CHECK(error_kind([&] { decode_recording(bad_magic); }) == ErrorKind::format);
  bytes.resize(bytes.size() - 3);
  CHECK(error_kind([&] { decode_recording(bytes); }) == ErrorKind::length);
  CHECK(error_kind([&] { decode_recording(std::vector<std::uint8_t>{'E', 'M', 'G', '1', 0}); }) ==
        ErrorKind::length);

  TempDir dir("corpus");
  auto r = random_recording(2, 2, 10);
  r.samples(1, 4) = std::numeric_limits<float>::quiet_NaN();
  CHECK(error_kind([&] { write_recording(r, dir / "nan.emg"); }) == ErrorKind::validation);
  CHECK_FALSE(std::filesystem::exists(dir / "nan.emg"));
}

TEST_CASE("feature matrices round-trip") {
  TempDir dir("corpus");
  FeatureMatrix m(5, 13);
  for (int i = 0; i < m.size(); ++i) m.data()[i] = 0.25f * static_cast<float>(i) - 3.0f;
  write_feature_matrix(m, dir / "f.ac");
  CHECK(read_feature_matrix(dir / "f.ac") == m);
  CHECK(com2s::testing::slurp(dir / "f.ac").size() == 8 + 4 * 65);
}

TEST_CASE("manifest totals and stats") {
  SUBCASE("empty") {
    const DatasetManifest m;
    const auto s = manifest_stats(m);
    CHECK(s.hours == 0.0);
    CHECK(s.utterances == 0);
    CHECK(s.speakers == 0);
    CHECK(s.per_session.empty());
  }
  SUBCASE("two half-minute entries") {
    const DatasetManifest m({entry("a", 30, 0, "x"), entry("b", 30, 1, "x")});
    const auto s = manifest_stats(m);
    CHECK(s.hours == 1.0 / 60.0);
    CHECK(s.utterances == 2);
    CHECK(s.speakers == 1);
    CHECK(s.per_session == std::map<std::uint32_t, std::size_t>{{0, 1}, {1, 1}});
  }
  SUBCASE("released dataset scale") {
    // 3514 utterances, about 8.3 hours, 1532 speakers
    std::vector<ManifestEntry> entries;
    const double each = 8.3 * 3600.0 / 3514.0;
    for (int i = 0; i < 3514; ++i) {
      entries.push_back(entry("u" + std::to_string(i), each, static_cast<std::uint32_t>(i % 4),
                              "spk" + std::to_string(i % 1532)));
    }
    const DatasetManifest m(entries);
    CHECK(m.totals().utterances == 3514);
    CHECK(m.totals().hours == doctest::Approx(8.3).epsilon(1e-9));
    CHECK(m.totals().speakers == 1532);
  }
}

TEST_CASE("manifest rejects duplicate ids and bad durations") {
  CHECK(error_kind([] { DatasetManifest({entry("u1", 1, 0, "s"), entry("u1", 2, 0, "s")}); }) ==
        ErrorKind::validation);
  CHECK(error_kind([] { DatasetManifest({entry("u1", 0, 0, "s")}); }) == ErrorKind::validation);
}

TEST_CASE("stats match a brute-force recount of a simulated corpus") {
  const auto profile = simgen::make_profile(5, phonemics::PhonemeInventory::desk_default(), 8, 4, 12);
  simgen::SynthSpec spec;
  spec.n_utterances = 50;
  spec.n_sessions = 4;
  spec.seed = 17;
  auto gc = simgen::synth_corpus(profile, spec);
  // give the corpus several speakers so the distinct count is meaningful
  for (std::size_t i = 0; i < gc.utterances.size(); ++i) gc.utterances[i].speaker_id = "s" + std::to_string(i % 7);
  const auto m = gc.manifest();
  const auto s = manifest_stats(m);

  double seconds = 0.0;
  std::set<std::string> speakers;
  std::map<std::uint32_t, std::size_t> sessions;
  for (const auto& u : gc.utterances) {
    seconds += static_cast<double>(u.emg.n_samples()) / u.emg.sample_rate;
    speakers.insert(u.speaker_id);
    ++sessions[u.emg.session_id];
  }
  CHECK(s.utterances == 50);
  CHECK(s.hours == doctest::Approx(seconds / 3600.0).epsilon(1e-12));
  CHECK(s.speakers == speakers.size());
  CHECK(s.per_session == sessions);

  // reordering entries changes nothing
  auto entries = m.entries();
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 5; ++trial) {
    std::shuffle(entries.begin(), entries.end(), rng);
    const auto r = manifest_stats(DatasetManifest(entries));
    CHECK(r.hours == doctest::Approx(s.hours).epsilon(1e-12));
    CHECK(r.utterances == s.utterances);
    CHECK(r.speakers == s.speakers);
    CHECK(r.per_session == s.per_session);
  }
}

TEST_CASE("manifest files load with validation") {
  TempDir dir("corpus");
  const auto profile = simgen::make_profile(2, phonemics::PhonemeInventory::desk_default(), 8, 2, 8);
  simgen::SynthSpec spec;
  spec.n_utterances = 2;
  spec.n_sessions = 2;
  const auto written = simgen::write_corpus(simgen::synth_corpus(profile, spec), dir.path(), profile.inventory);
  const auto loaded = load_manifest(dir / "manifest.jsonl");
  CHECK(loaded.size() == 2);
  CHECK(loaded.entries() == written.entries());

  SUBCASE("utterances read back intact") {
    UtteranceStore store;
    load_into(store, loaded, profile.inventory);
    const auto gc = simgen::synth_corpus(profile, spec);
    for (const auto& u : gc.utterances) {
      const auto& back = store.get(u.id);
      CHECK(back.emg == u.emg);
      CHECK(back.phoneme_alignment == u.phoneme_alignment);
      CHECK(back.acoustic_target == u.acoustic_target);
      CHECK(back.transcript == u.transcript);
    }
  }
  SUBCASE("duplicate id") {
    com2s::testing::spit(dir / "dup.jsonl", manifest_line("u1") + "\n" + manifest_line("u1") + "\n");
    CHECK(error_kind([&] { load_manifest(dir / "dup.jsonl", false); }) == ErrorKind::validation);
  }
  SUBCASE("missing emg files are listed") {
    com2s::testing::spit(dir / "miss.jsonl", manifest_line("ghost1") + "\n" + manifest_line("ghost2") + "\n");
    try {
      load_manifest(dir / "miss.jsonl");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
      CHECK(std::string(e.what()).find("ghost1") != std::string::npos);
      CHECK(std::string(e.what()).find("ghost2") != std::string::npos);
    }
  }
  SUBCASE("malformed line reports its number") {
    com2s::testing::spit(dir / "bad.jsonl", manifest_line("a") + "\n{not json\n");
    try {
      load_manifest(dir / "bad.jsonl", false);
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::parse);
      CHECK(std::string(e.what()).find(":2:") != std::string::npos);
    }
  }
}

TEST_CASE("subset and concat keep entries in order") {
  const DatasetManifest m({entry("a", 1, 0, "x"), entry("b", 2, 0, "y"), entry("c", 3, 1, "y")});
  const std::vector<std::size_t> pick = {2, 0};
  const auto sub = m.subset(pick);
  CHECK(sub.entries()[0].id == "c");
  CHECK(sub.entries()[1].id == "a");
  const std::vector<DatasetManifest> parts = {sub, DatasetManifest({entry("d", 1, 0, "z")})};
  const auto joined = concat(parts);
  CHECK(joined.size() == 3);
  CHECK(joined.totals().hours == doctest::Approx(5.0 / 3600.0));
  CHECK(split_words(join_words({"the", "cat"})) == std::vector<std::string>{"the", "cat"});
}
