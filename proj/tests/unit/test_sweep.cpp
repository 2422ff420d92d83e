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
#include <atomic>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"

#include "com2s/sweep.hpp"
#include "test_support.hpp"

using namespace com2s;
using namespace com2s::sweep;
using com2s::testing::error_kind;

namespace {

// Small enough to run every sweep in a few seconds; trends are not checked here.
BenchmarkConfig small_config() {
  BenchmarkConfig c;
  c.seed = 5;
  c.real_train = 16;
  c.real_validation = 4;
  c.real_test = 4;
  c.synthetic_pool = 30;
  c.synthetic_test_pool = 12;
  c.synthetic_test = 4;
  c.model.hidden_dim = 16;
  c.model.heads = 2;
  c.model.ffn_dim = 32;
  c.model.attention_layers = 1;
  c.teacher_train.epochs = 20;
  c.teacher_train.learning_rate = 3e-3;
  c.continue_train.epochs = 1;
  c.scratch_train.epochs = 2;
  c.selection = selftrain::FilterSpec::raw();
  c.thresholds = {selftrain::FilterSpec::raw(), selftrain::FilterSpec::below(4.0),
                  selftrain::FilterSpec::below(3.0)};
  c.ratio_total = 10;
  c.scale_base = 4;
  return c;
}

const Benchmark& small_benchmark() {
  static const Benchmark b = build_benchmark(small_config());
  return b;
}

std::string csv(const std::vector<ResultRow>& rows) {
  std::ostringstream out;
  write_results_csv(rows, out);
  return out.str();
}

std::vector<std::string> column(const std::vector<ResultRow>& rows, std::string ResultRow::*field) {
  std::vector<std::string> out;
  for (const auto& r : rows) out.push_back(r.*field);
  return out;
}

}  // namespace

TEST_CASE("benchmark splits are disjoint and sized") {
  const auto& b = small_benchmark();
  CHECK(b.real_train.size() == 16);
  CHECK(b.real_test.size() == 4);
  CHECK(b.synthetic_pool.size() == 30);
  CHECK(b.synthetic_test.size() == 4);
  CHECK(b.pool_scores.size() == 30);
  CHECK_NOTHROW(selftrain::check_disjoint(b.real_train, b.real_test));
  CHECK_NOTHROW(selftrain::check_disjoint(b.synthetic_pool, b.synthetic_test));
  for (const auto& e : b.synthetic_pool.entries()) {
    CHECK(e.source == corpus::Source::synthetic);
    CHECK(b.store.get(e.id).emg.sample_rate == b.config.model.sample_rate);
  }
}

TEST_CASE("threshold sweep yields the train-by-test matrix") {
  const auto& b = small_benchmark();
  const auto rows = sweep_threshold(b);
  REQUIRE(rows.size() == 9);
  const std::vector<std::string> grid = {"raw", "raw", "raw", "4", "4", "4", "3", "3", "3"};
  CHECK(column(rows, &ResultRow::grid_value) == grid);
  CHECK(std::set<std::string>{rows[0].test_split, rows[1].test_split, rows[2].test_split} ==
        std::set<std::string>{"synthetic_raw", "synthetic_4", "synthetic_3"});
  for (const auto& r : rows) {
    CHECK(r.kind == "threshold");
    CHECK(r.seed == 5);
    CHECK(r.wall_seconds == 0.0);
    CHECK(r.wer >= 0.0);
  }
  std::ostringstream heat;
  write_heatmap_csv(rows, heat);
  std::istringstream lines(heat.str());
  std::string line;
  std::vector<std::string> all;
  while (std::getline(lines, line)) all.push_back(line);
  REQUIRE(all.size() == 4);
  CHECK(all[0].rfind("train_threshold,", 0) == 0);
  for (const auto& l : all) CHECK(std::count(l.begin(), l.end(), ',') == 3);
}

TEST_CASE("ratio sweep emits five rows per test split") {
  const auto& b = small_benchmark();
  const auto rows = sweep_ratio(b);
  REQUIRE(rows.size() == 15);
  for (const std::string split : {"combined", "real", "synthetic"}) {
    std::vector<std::string> grid;
    for (const auto& r : rows) {
      if (r.test_split == split) grid.push_back(r.grid_value);
    }
    CHECK(grid == std::vector<std::string>{"1", "0.75", "0.5", "0.25", "0"});
  }
}

TEST_CASE("scale sweep and scratch comparison shapes") {
  const auto& b = small_benchmark();
  const auto scale = sweep_scale(b);
  REQUIRE(scale.size() == 9);
  CHECK(scale.front().grid_value == "1");
  CHECK(scale.back().grid_value == "5");
  const auto scratch = compare_scratch(b);
  REQUIRE(scratch.size() == 6);
  CHECK(scratch.front().kind == "scratch");
  CHECK(scratch.front().grid_value == "real_only");
  CHECK(scratch.back().grid_value == "mixed_1:1");
}

TEST_CASE("parallel sweeps match serial sweeps byte for byte") {
  const auto& b = small_benchmark();
  CHECK(csv(sweep_ratio(b, {2, false})) == csv(sweep_ratio(b, {1, false})));
}

TEST_CASE("results csv round-trips") {
  const std::vector<ResultRow> rows = {{"ratio", "0.5", "real", 0.25, 0.9, 0.01, 3, 0.0},
                                       {"ratio", "1", "combined", 1.0 / 3.0, 0.5, 0.2, 3, 0.0}};
  const auto text = csv(rows);
  CHECK(text.rfind("kind,grid_value,test_split,wer,phoneme_accuracy,mean_pair_confusion,seed,wall_seconds\n", 0) == 0);
  std::istringstream in(text);
  const auto back = read_results_csv(in);
  REQUIRE(back.size() == 2);
  CHECK(back[0] == rows[0]);
  CHECK(csv(back) == text);
  std::istringstream bad("not,a,header\n");
  CHECK(error_kind([&] { read_results_csv(bad); }) == ErrorKind::parse);
}

TEST_CASE("summaries take medians across seeds") {
  const std::vector<ResultRow> rows = {{"scale", "1", "real", 0.3, 0.8, 0.1, 1, 0},
                                       {"scale", "1", "real", 0.1, 0.9, 0.3, 2, 0},
                                       {"scale", "1", "real", 0.2, 0.7, 0.2, 3, 0},
                                       {"scale", "2", "real", 0.4, 0.6, 0.5, 1, 0},
                                       {"scale", "2", "real", 0.2, 0.5, 0.1, 2, 0}};
  const auto s = summarize(rows);
  REQUIRE(s.size() == 2);
  CHECK(s[0].n_seeds == 3);
  CHECK(s[0].median_wer == 0.2);
  CHECK(s[0].median_phoneme_accuracy == 0.8);
  CHECK(s[1].median_wer == doctest::Approx(0.3));
  CHECK(error_kind([] { median({}); }) == ErrorKind::validation);
  CHECK(median({4.0, 1.0, 3.0}) == 3.0);
  CHECK(format_grid_value(0.75) == "0.75");
  CHECK(format_grid_value(1.0) == "1");
}

TEST_CASE("parallel runner covers every task and rethrows") {
  std::vector<std::atomic<int>> hits(17);
  run_parallel(17, 4, [&](std::size_t i) { ++hits[i]; });
  for (const auto& h : hits) CHECK(h.load() == 1);
  CHECK_THROWS_AS(run_parallel(5, 2, [](std::size_t i) {
                    if (i == 3) throw std::runtime_error("boom");
                  }),
                  std::runtime_error);
}

TEST_CASE("benchmark config validation") {
  auto c = small_config();
  c.ratios = {1.5};
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::config);
  c = small_config();
  c.model.sample_rate = 400;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::config);
  c = small_config();
  c.synthetic_test_pool = 2;
  CHECK(error_kind([&] { c.validate(); }) == ErrorKind::config);
}
