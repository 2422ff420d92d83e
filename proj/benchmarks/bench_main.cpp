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


#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <benchmark/benchmark.h>

#include "com2s/acoustic.hpp"
#include "com2s/evalkit.hpp"
#include "com2s/phonemics.hpp"
#include "com2s/simgen.hpp"
#include "com2s/sweep.hpp"
#include "com2s/transduce.hpp"

namespace {

using namespace com2s;

// One desk-sized utterance and the default benchmark model.
struct DeskFixture {
  sweep::BenchmarkConfig cfg;
  simgen::GeneratedCorpus corpus;
  transduce::Model model{cfg.model};

  DeskFixture() {
    const auto profile = sweep::benchmark_profile(cfg, phonemics::PhonemeInventory::desk_default());
    corpus = simgen::synth_corpus(profile, sweep::real_corpus_spec(cfg, 1));
  }
};

const DeskFixture& desk() {
  static const DeskFixture f;
  return f;
}

void BM_Forward(benchmark::State& state) {
  const auto& f = desk();
  const auto& u = f.corpus.utterances.front();
  const auto x = u.emg.as_double();
  for (auto _ : state) benchmark::DoNotOptimize(f.model.forward(x, u.emg.session_id));
  state.counters["frames"] = static_cast<double>(u.phoneme_alignment.size());
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_Gradient(benchmark::State& state) {
  const auto& f = desk();
  const auto& u = f.corpus.utterances.front();
  const auto x = u.emg.as_double();
  std::vector<double> grad(f.model.parameter_count());
  for (auto _ : state) {
    benchmark::DoNotOptimize(
        f.model.accumulate_gradient(x, u.emg.session_id, u.phoneme_alignment, u.acoustic_target, 0.5, 0.5, grad));
  }
}
BENCHMARK(BM_Gradient)->Unit(benchmark::kMillisecond);

void BM_Mfcc(benchmark::State& state) {
  const acoustic::AcousticConfig cfg;
  std::vector<double> audio(static_cast<std::size_t>(state.range(0) * cfg.sample_rate));
  std::mt19937_64 rng(1);
  std::normal_distribution<double> noise(0.0, 0.1);
  for (std::size_t i = 0; i < audio.size(); ++i)
    audio[i] = 0.5 * std::sin(2.0 * std::numbers::pi * 440.0 * static_cast<double>(i) / cfg.sample_rate) + noise(rng);
  for (auto _ : state) benchmark::DoNotOptimize(acoustic::mfcc(audio, cfg));
}
BENCHMARK(BM_Mfcc)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Wer(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(2);
  std::uniform_int_distribution<int> pick(0, 49);
  std::vector<std::string> hyp(n), ref(n);
  for (auto& w : hyp) w = "w" + std::to_string(pick(rng));
  for (auto& w : ref) w = "w" + std::to_string(pick(rng));
  for (auto _ : state) benchmark::DoNotOptimize(evalkit::wer(hyp, ref));
}
BENCHMARK(BM_Wer)->Arg(16)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
