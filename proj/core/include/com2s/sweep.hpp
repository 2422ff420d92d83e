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
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "com2s/corpus.hpp"
#include "com2s/evalkit.hpp"
#include "com2s/selftrain.hpp"
#include "com2s/simgen.hpp"
#include "com2s/transduce.hpp"

namespace com2s::sweep {

/// Everything needed to rebuild the desk benchmark from one seed.
struct BenchmarkConfig {
  std::uint64_t seed = 1;
  simgen::ProfileOptions profile;

  std::size_t real_train = 160;
  std::size_t real_validation = 20;
  std::size_t real_test = 60;
  double real_noise = 1.0;
  std::size_t min_words = 2;
  std::size_t max_words = 3;

  std::size_t synthetic_pool = 400;
  std::size_t synthetic_test_pool = 240;
  std::size_t synthetic_test = 60;
  std::vector<simgen::NoiseComponent> synthetic_mixture = {
      {0.5, 0.3, 0.0}, {0.3, 0.5, 0.2}, {0.2, 0.8, 0.6}};

  transduce::ModelConfig model;
  transduce::TrainConfig teacher_train;
  transduce::TrainConfig continue_train;
  transduce::TrainConfig scratch_train;

  /// Filter used to build the synthetic test split and the ratio/scale/scratch pools.
  selftrain::FilterSpec selection = selftrain::FilterSpec::below(0.5);
  std::vector<selftrain::FilterSpec> thresholds = {selftrain::FilterSpec::raw(),
                                                   selftrain::FilterSpec::below(0.8),
                                                   selftrain::FilterSpec::below(0.5)};
  std::vector<double> ratios = {1.0, 0.75, 0.5, 0.25, 0.0};
  std::size_t ratio_total = 120;
  std::vector<double> scales = {1.0, 2.0, 5.0};
  std::size_t scale_base = 40;

  BenchmarkConfig();
  void validate() const;
};

struct Benchmark {
  BenchmarkConfig config;
  simgen::SimProfile profile;
  corpus::UtteranceStore store;
  corpus::DatasetManifest real_train;
  corpus::DatasetManifest real_validation;
  corpus::DatasetManifest real_test;
  corpus::DatasetManifest synthetic_pool;       // restored to the model rate
  corpus::DatasetManifest synthetic_test_pool;  // unfiltered candidates
  corpus::DatasetManifest synthetic_test;       // selection-filtered, truncated
  transduce::Model teacher;
  std::vector<selftrain::ConfidenceRecord> pool_scores;
  std::vector<selftrain::ConfidenceRecord> test_scores;
};

Benchmark build_benchmark(const BenchmarkConfig& config);

/// The pieces build_benchmark uses, exposed so the CLI can emit the same corpora stage by stage.
simgen::SimProfile benchmark_profile(const BenchmarkConfig& config,
                                     const phonemics::PhonemeInventory& inventory);
simgen::SynthSpec real_corpus_spec(const BenchmarkConfig& config, std::size_t n_utterances);
simgen::SynthSpec synthetic_corpus_spec(const BenchmarkConfig& config, std::size_t n_utterances);

/// Teacher-scored pool entries passing fs, in pool order.
corpus::DatasetManifest filtered_pool(const Benchmark& b, const selftrain::FilterSpec& fs);
/// First `limit` synthetic test candidates passing fs; insufficient_data if none pass.
corpus::DatasetManifest filtered_test(const Benchmark& b, const selftrain::FilterSpec& fs);

struct ResultRow {
  std::string kind;
  std::string grid_value;
  std::string test_split;
  double wer = 0.0;
  double phoneme_accuracy = 0.0;
  double mean_pair_confusion = 0.0;
  std::uint64_t seed = 0;
  double wall_seconds = 0.0;

  bool operator==(const ResultRow&) const = default;
};

struct SweepOptions {
  std::size_t jobs = 1;
  // Wall time is nondeterministic; rows carry 0 unless asked.
  bool record_timing = false;
};

/// Continues the teacher on real + each filtered pool; evaluates on the
/// synthetic test candidates filtered at every grid threshold.
std::vector<ResultRow> sweep_threshold(const Benchmark& b, const SweepOptions& opts = {});
/// Continues the teacher on ratio_total-sized mixes; combined/real/synthetic test splits.
std::vector<ResultRow> sweep_ratio(const Benchmark& b, const SweepOptions& opts = {});
/// From-scratch 1:1 mixes of scale_base * grid utterances.
std::vector<ResultRow> sweep_scale(const Benchmark& b, const SweepOptions& opts = {});
/// From-scratch real-only vs all real + equal count of selection-filtered synthetic.
std::vector<ResultRow> compare_scratch(const Benchmark& b, const SweepOptions& opts = {});

/// Evaluates a model on the combined, real and synthetic test splits.
std::vector<evalkit::EvalReport> evaluate_splits(const Benchmark& b, const transduce::Model& model);

void write_results_csv(std::span<const ResultRow> rows, std::ostream& out);
std::vector<ResultRow> read_results_csv(std::istream& in);

/// Median over seeds per (kind, grid_value, test_split), first-seen order.
struct SummaryRow {
  std::string kind;
  std::string grid_value;
  std::string test_split;
  std::size_t n_seeds = 0;
  double median_wer = 0.0;
  double median_phoneme_accuracy = 0.0;
  double median_mean_pair_confusion = 0.0;
};
std::vector<SummaryRow> summarize(std::span<const ResultRow> rows);
void write_summary_csv(std::span<const SummaryRow> rows, std::ostream& out);
double median(std::vector<double> values);
/// WER matrix (median over seeds): one row per train grid value, one column per
/// test split, first-seen order.
void write_heatmap_csv(std::span<const ResultRow> rows, std::ostream& out);

/// Runs tasks on up to `jobs` threads; each task writes only its own slot.
void run_parallel(std::size_t n_tasks, std::size_t jobs, const std::function<void(std::size_t)>& task);

std::string format_grid_value(double v);

}  // namespace com2s::sweep
