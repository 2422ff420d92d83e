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

#include "com2s/sweep.hpp"

#include <algorithm>
#include <array>
#include <istream>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <ostream>
#include <sstream>
#include <thread>

#include "com2s/emgsig.hpp"
#include "com2s/error.hpp"

namespace com2s::sweep {

namespace {

// Substream tags; fixed so results never depend on evaluation order.
enum : std::uint64_t {
  kProfileStream = 1,
  kRealStream,
  kSyntheticStream,
  kTeacherTrainStream,
  kTeacherInitStream,
  kThresholdStream,
  kRatioStream,
  kScaleStream,
  kScratchStream,
};

std::uint64_t sub(std::uint64_t seed, std::uint64_t tag) { return simgen::substream_seed(seed, tag); }

corpus::DatasetManifest slice(const corpus::DatasetManifest& m, std::size_t begin, std::size_t count) {
  std::vector<std::size_t> idx(count);
  for (std::size_t i = 0; i < count; ++i) idx[i] = begin + i;
  return m.subset(idx);
}

corpus::DatasetManifest join(const corpus::DatasetManifest& a, const corpus::DatasetManifest& b) {
  const corpus::DatasetManifest parts[] = {a, b};
  return corpus::concat(parts);
}

ResultRow row_from(const std::string& kind, const std::string& grid, const evalkit::EvalReport& r,
                   std::uint64_t seed, double wall) {
  return {kind, grid, r.split_name, r.wer, r.overall_phoneme_accuracy, r.mean_pair_confusion, seed, wall};
}

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

}  // namespace

BenchmarkConfig::BenchmarkConfig() {
  profile.generator_bias = 0.2;
  profile.speaker_spread = 0.4;
  model.hidden_dim = 32;
  model.ffn_dim = 64;
  model.n_sessions = profile.n_sessions;
  model.channels = profile.channels;
  model.n_coeffs = profile.n_coeffs;
  teacher_train.epochs = 30;
  continue_train.epochs = 10;
  scratch_train.epochs = 30;
}

void BenchmarkConfig::validate() const {
  model.validate();
  teacher_train.validate();
  continue_train.validate();
  scratch_train.validate();
  selection.validate();
  for (const auto& t : thresholds) t.validate();
  if (real_train == 0 || real_test == 0 || synthetic_pool == 0 || synthetic_test == 0)
    fail(ErrorKind::config, "benchmark splits must be non-empty");
  if (synthetic_test_pool < synthetic_test)
    fail(ErrorKind::config, "synthetic_test_pool must hold at least synthetic_test candidates");
  if (thresholds.empty() || ratios.empty() || scales.empty()) fail(ErrorKind::config, "sweep grids must be non-empty");
  for (double r : ratios)
    if (!(r >= 0.0 && r <= 1.0)) fail(ErrorKind::config, "ratio grid values must lie in [0, 1]");
  for (double s : scales)
    if (!(s > 0.0)) fail(ErrorKind::config, "scale grid values must be positive");
  if (model.channels != profile.channels || model.n_sessions < profile.n_sessions ||
      model.n_coeffs != profile.n_coeffs)
    fail(ErrorKind::config, "model config does not match the simulator profile");
  if (model.sample_rate % 100 != 0 || model.sample_rate / 100 != model.total_downsample())
    fail(ErrorKind::config, "model sample_rate must equal 100 frames/s times the total downsampling");
}

simgen::SimProfile benchmark_profile(const BenchmarkConfig& config,
                                     const phonemics::PhonemeInventory& inventory) {
  return simgen::make_profile(sub(config.seed, kProfileStream), inventory, config.profile);
}

simgen::SynthSpec real_corpus_spec(const BenchmarkConfig& config, std::size_t n_utterances) {
  simgen::SynthSpec spec;
  spec.n_utterances = n_utterances;
  spec.min_words = config.min_words;
  spec.max_words = config.max_words;
  spec.noise_sigma = config.real_noise;
  spec.n_sessions = config.profile.n_sessions;
  spec.domain = simgen::Domain::raw_units;
  spec.emg_rate = config.model.sample_rate;
  spec.source = corpus::Source::real;
  spec.id_prefix = "real";
  spec.seed = sub(config.seed, kRealStream);
  return spec;
}

simgen::SynthSpec synthetic_corpus_spec(const BenchmarkConfig& config, std::size_t n_utterances) {
  simgen::SynthSpec spec;
  spec.n_utterances = n_utterances;
  spec.min_words = config.min_words;
  spec.max_words = config.max_words;
  spec.noise_mixture = config.synthetic_mixture;
  spec.n_sessions = config.profile.n_sessions;
  spec.domain = simgen::Domain::tanh_domain;
  spec.source = corpus::Source::synthetic;
  spec.id_prefix = "syn";
  spec.seed = sub(config.seed, kSyntheticStream);
  return spec;
}

Benchmark build_benchmark(const BenchmarkConfig& config) {
  config.validate();
  const auto inventory = phonemics::PhonemeInventory::desk_default();
  if (config.model.n_phonemes != inventory.size())
    fail(ErrorKind::config, "model n_phonemes does not match the desk inventory");
  const std::uint64_t seed = config.seed;
  auto profile = benchmark_profile(config, inventory);
  const auto real = simgen::synth_corpus(
      profile, real_corpus_spec(config, config.real_train + config.real_validation + config.real_test));
  const auto generated = simgen::synth_generated_corpus(
      profile, synthetic_corpus_spec(config, config.synthetic_pool + config.synthetic_test_pool));

  corpus::UtteranceStore store;
  real.add_to(store);
  simgen::GeneratedCorpus restored;
  for (const auto& u : generated.utterances)
    restored.utterances.push_back(emgsig::prepare_generated(u, config.model.sample_rate));
  restored.component = generated.component;
  restored.add_to(store);

  const auto real_all = real.manifest();
  const auto syn_all = restored.manifest();
  auto real_train = slice(real_all, 0, config.real_train);
  auto real_validation = slice(real_all, config.real_train, config.real_validation);
  auto real_test = slice(real_all, config.real_train + config.real_validation, config.real_test);
  auto synthetic_pool = slice(syn_all, 0, config.synthetic_pool);
  auto synthetic_test_pool = slice(syn_all, config.synthetic_pool, config.synthetic_test_pool);

  auto tc = config.teacher_train;
  tc.seed = sub(seed, kTeacherTrainStream);
  auto mc = config.model;
  mc.seed = sub(seed, kTeacherInitStream);
  auto teacher = transduce::train(nullptr, real_train, store, tc, mc,
                                  real_validation.empty() ? nullptr : &real_validation)
                     .model;
  auto pool_scores = selftrain::score_confidence(teacher, synthetic_pool, store);
  auto test_scores = selftrain::score_confidence(teacher, synthetic_test_pool, store);

  Benchmark b{config,
              std::move(profile),
              std::move(store),
              std::move(real_train),
              std::move(real_validation),
              std::move(real_test),
              std::move(synthetic_pool),
              std::move(synthetic_test_pool),
              {},
              std::move(teacher),
              std::move(pool_scores),
              std::move(test_scores)};
  b.synthetic_test = filtered_test(b, config.selection);
  return b;
}

corpus::DatasetManifest filtered_pool(const Benchmark& b, const selftrain::FilterSpec& fs) {
  return selftrain::filter_by_threshold(b.pool_scores, fs, b.synthetic_pool);
}

corpus::DatasetManifest filtered_test(const Benchmark& b, const selftrain::FilterSpec& fs) {
  const auto passing = selftrain::filter_by_threshold(b.test_scores, fs, b.synthetic_test_pool);
  if (passing.empty())
    fail(ErrorKind::insufficient_data, "no synthetic test candidate passes filter " + fs.label());
  return slice(passing, 0, std::min(passing.size(), b.config.synthetic_test));
}

std::vector<evalkit::EvalReport> evaluate_splits(const Benchmark& b, const transduce::Model& model) {
  const auto& inv = b.profile.inventory;
  auto real = evalkit::evaluate_model(model, b.real_test, b.store, b.profile.lexicon, inv, "real");
  auto syn = evalkit::evaluate_model(model, b.synthetic_test, b.store, b.profile.lexicon, inv, "synthetic");
  auto combined = evalkit::merge_reports(real, syn, "combined");
  return {std::move(combined), std::move(real), std::move(syn)};
}

void run_parallel(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)>& task) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n_tasks));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n_tasks; ++i) task(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> threads;
  for (std::size_t j = 0; j < jobs; ++j)
    threads.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n_tasks;) {
        try {
          task(i);
        } catch (...) {
          std::lock_guard lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  for (auto& t : threads) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

std::string format_grid_value(double v) {
  std::ostringstream s;
  s << v;
  return s.str();
}

double median(std::vector<double> values) {
  if (values.empty()) fail(ErrorKind::validation, "median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<ResultRow> sweep_threshold(const Benchmark& b, const SweepOptions& opts) {
  const auto& cfg = b.config;
  std::vector<corpus::DatasetManifest> tests;
  std::vector<std::string> names;
  for (const auto& fs : cfg.thresholds) {
    tests.push_back(filtered_test(b, fs));
    names.push_back("synthetic_" + fs.label());
  }
  auto tc = cfg.continue_train;
  tc.seed = sub(cfg.seed, kThresholdStream);

  std::vector<std::vector<ResultRow>> slots(cfg.thresholds.size());
  run_parallel(slots.size(), opts.jobs, [&](std::size_t g) {
    const Stopwatch watch;
    const auto& fs = cfg.thresholds[g];
    const auto train_set = join(b.real_train, filtered_pool(b, fs));
    for (const auto& t : tests) selftrain::check_disjoint(train_set, t);
    const auto model = selftrain::run_self_training(b.teacher, train_set, b.store, tc).model;
    std::vector<evalkit::EvalReport> reports;
    for (std::size_t s = 0; s < tests.size(); ++s)
      reports.push_back(
          evalkit::evaluate_model(model, tests[s], b.store, b.profile.lexicon, b.profile.inventory, names[s]));
    const double wall = opts.record_timing ? watch.seconds() : 0.0;
    for (const auto& r : reports) slots[g].push_back(row_from("threshold", fs.label(), r, cfg.seed, wall));
  });
  std::vector<ResultRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

std::vector<ResultRow> sweep_ratio(const Benchmark& b, const SweepOptions& opts) {
  const auto& cfg = b.config;
  const auto pool = filtered_pool(b, cfg.selection);
  auto tc = cfg.continue_train;
  tc.seed = sub(cfg.seed, kRatioStream);

  std::vector<std::vector<ResultRow>> slots(cfg.ratios.size());
  run_parallel(slots.size(), opts.jobs, [&](std::size_t g) {
    const Stopwatch watch;
    const selftrain::MixSpec ms{cfg.ratios[g], cfg.ratio_total, tc.seed};
    const auto mixed = selftrain::mix_datasets(b.real_train, pool, ms);
    selftrain::check_disjoint(mixed, b.real_test);
    selftrain::check_disjoint(mixed, b.synthetic_test);
    const auto model = selftrain::run_self_training(b.teacher, mixed, b.store, tc).model;
    const auto reports = evaluate_splits(b, model);
    const double wall = opts.record_timing ? watch.seconds() : 0.0;
    for (const auto& r : reports)
      slots[g].push_back(row_from("ratio", format_grid_value(cfg.ratios[g]), r, cfg.seed, wall));
  });
  std::vector<ResultRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

std::vector<ResultRow> sweep_scale(const Benchmark& b, const SweepOptions& opts) {
  const auto& cfg = b.config;
  const auto pool = filtered_pool(b, cfg.selection);
  auto tc = cfg.scratch_train;
  tc.seed = sub(cfg.seed, kScaleStream);
  auto mc = cfg.model;
  mc.seed = sub(cfg.seed, kScaleStream + 0x100);

  std::vector<std::vector<ResultRow>> slots(cfg.scales.size());
  run_parallel(slots.size(), opts.jobs, [&](std::size_t g) {
    const Stopwatch watch;
    const auto total = static_cast<std::size_t>(std::llround(static_cast<double>(cfg.scale_base) * cfg.scales[g]));
    const selftrain::MixSpec ms{0.5, total, tc.seed};
    const auto mixed = selftrain::mix_datasets(b.real_train, pool, ms);
    selftrain::check_disjoint(mixed, b.real_test);
    selftrain::check_disjoint(mixed, b.synthetic_test);
    const auto model = selftrain::run_scratch_training(mixed, b.store, tc, mc).model;
    const auto reports = evaluate_splits(b, model);
    const double wall = opts.record_timing ? watch.seconds() : 0.0;
    for (const auto& r : reports)
      slots[g].push_back(row_from("scale", format_grid_value(cfg.scales[g]), r, cfg.seed, wall));
  });
  std::vector<ResultRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

std::vector<ResultRow> compare_scratch(const Benchmark& b, const SweepOptions& opts) {
  const auto& cfg = b.config;
  const auto pool = filtered_pool(b, cfg.selection);
  auto tc = cfg.scratch_train;
  tc.seed = sub(cfg.seed, kScratchStream);
  auto mc = cfg.model;
  mc.seed = sub(cfg.seed, kScratchStream + 0x100);
  const std::string names[] = {"real_only", "mixed_1:1"};

  std::vector<std::vector<ResultRow>> slots(2);
  run_parallel(2, opts.jobs, [&](std::size_t g) {
    const Stopwatch watch;
    const auto n_real = b.real_train.size();
    const selftrain::MixSpec ms{g == 0 ? 1.0 : 0.5, g == 0 ? n_real : 2 * n_real, tc.seed};
    const auto mixed = selftrain::mix_datasets(b.real_train, pool, ms);
    selftrain::check_disjoint(mixed, b.real_test);
    selftrain::check_disjoint(mixed, b.synthetic_test);
    const auto model = selftrain::run_scratch_training(mixed, b.store, tc, mc).model;
    const auto reports = evaluate_splits(b, model);
    const double wall = opts.record_timing ? watch.seconds() : 0.0;
    for (const auto& r : reports) slots[g].push_back(row_from("scratch", names[g], r, cfg.seed, wall));
  });
  std::vector<ResultRow> rows;
  for (auto& s : slots) rows.insert(rows.end(), s.begin(), s.end());
  return rows;
}

void write_results_csv(std::span<const ResultRow> rows, std::ostream& out) {
  std::ostringstream text;
  text.precision(12);
  text << "kind,grid_value,test_split,wer,phoneme_accuracy,mean_pair_confusion,seed,wall_seconds\n";
  for (const auto& r : rows)
    text << r.kind << ',' << r.grid_value << ',' << r.test_split << ',' << r.wer << ',' << r.phoneme_accuracy
         << ',' << r.mean_pair_confusion << ',' << r.seed << ',' << r.wall_seconds << '\n';
  out << text.str();
}

std::vector<ResultRow> read_results_csv(std::istream& in) {
  std::string line;
  std::getline(in, line);
  if (line != "kind,grid_value,test_split,wer,phoneme_accuracy,mean_pair_confusion,seed,wall_seconds")
    fail(ErrorKind::parse, "not a sweep results CSV (unexpected header)");
  std::vector<ResultRow> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 8) fail(ErrorKind::parse, "results line " + std::to_string(lineno) + ": expected 8 fields");
    try {
      rows.push_back({f[0], f[1], f[2], std::stod(f[3]), std::stod(f[4]), std::stod(f[5]),
                      std::stoull(f[6]), std::stod(f[7])});
    } catch (const std::logic_error&) {
      fail(ErrorKind::parse, "results line " + std::to_string(lineno) + ": bad number");
    }
  }
  return rows;
}

std::vector<SummaryRow> summarize(std::span<const ResultRow> rows) {
  std::vector<SummaryRow> out;
  std::vector<std::array<std::vector<double>, 3>> values;
  for (const auto& r : rows) {
    auto it = std::find_if(out.begin(), out.end(), [&](const SummaryRow& s) {
      return s.kind == r.kind && s.grid_value == r.grid_value && s.test_split == r.test_split;
    });
    if (it == out.end()) {
      out.push_back({r.kind, r.grid_value, r.test_split, 0, 0.0, 0.0, 0.0});
      values.emplace_back();
      it = out.end() - 1;
    }
    auto& v = values[static_cast<std::size_t>(it - out.begin())];
    v[0].push_back(r.wer);
    v[1].push_back(r.phoneme_accuracy);
    v[2].push_back(r.mean_pair_confusion);
    ++it->n_seeds;
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].median_wer = median(values[i][0]);
    out[i].median_phoneme_accuracy = median(values[i][1]);
    out[i].median_mean_pair_confusion = median(values[i][2]);
  }
  return out;
}

void write_summary_csv(std::span<const SummaryRow> rows, std::ostream& out) {
  std::ostringstream text;
  text.precision(12);
  text << "kind,grid_value,test_split,n_seeds,median_wer,median_phoneme_accuracy,median_mean_pair_confusion\n";
  for (const auto& r : rows)
    text << r.kind << ',' << r.grid_value << ',' << r.test_split << ',' << r.n_seeds << ',' << r.median_wer << ','
         << r.median_phoneme_accuracy << ',' << r.median_mean_pair_confusion << '\n';
  out << text.str();
}

void write_heatmap_csv(std::span<const ResultRow> rows, std::ostream& out) {
  std::vector<std::string> train_values, splits;
  auto add_unique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  for (const auto& r : rows) {
    add_unique(train_values, r.grid_value);
    add_unique(splits, r.test_split);
  }
  std::ostringstream text;
  text.precision(12);
  text << "train_threshold";
  for (const auto& s : splits) text << ',' << s;
  text << '\n';
  for (const auto& g : train_values) {
    text << g;
    for (const auto& s : splits) {
      text << ',';
      std::vector<double> wers;
      for (const auto& r : rows)
        if (r.grid_value == g && r.test_split == s) wers.push_back(r.wer);
      if (!wers.empty()) text << median(wers);
    }
    text << '\n';
  }
  out << text.str();
}

}  // namespace com2s::sweep
