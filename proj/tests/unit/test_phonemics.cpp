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
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"

#include "com2s/phonemics.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace com2s;
using namespace com2s::phonemics;
using com2s::testing::error_kind;

namespace {

PhonemePosteriors to_posteriors(const oracle::Grid& g) {
  PhonemePosteriors p;
  p.probs.resize(static_cast<Eigen::Index>(g.size()), static_cast<Eigen::Index>(g[0].size()));
  for (std::size_t t = 0; t < g.size(); ++t) {
    for (std::size_t c = 0; c < g[t].size(); ++c) p.probs(t, c) = g[t][c];
  }
  return p;
}

}  // namespace

TEST_CASE("inventory maps symbols and indices both ways") {
  const auto inv = PhonemeInventory::desk_default();
  CHECK(inv.size() == 12);
  CHECK(inv.symbol(inv.silence_index()) == "sil");
  for (std::size_t i = 0; i < inv.size(); ++i) {
    CHECK(inv.index(inv.symbol(static_cast<int>(i))) == static_cast<int>(i));
  }
  CHECK(PhonemeInventory::arpabet().size() == 40);
  CHECK(error_kind([&] { inv.index("ZZ"); }) == ErrorKind::validation);
  CHECK(error_kind([] { PhonemeInventory({"a", "a", "sil"}); }) == ErrorKind::config);
  CHECK(error_kind([] { PhonemeInventory({"a", "b"}); }) == ErrorKind::config);
}

TEST_CASE("phoneme loss of a perfect prediction is zero") {
  PhonemePosteriors p;
  p.probs = Eigen::MatrixXd::Zero(3, 4);
  const std::vector<int> truth = {2, 0, 3};
  for (int t = 0; t < 3; ++t) p.probs(t, truth[t]) = 1.0;
  const auto loss = phoneme_loss(p, truth);
  CHECK(loss.total == 0.0);
  CHECK(loss.per_frame == 0.0);
}

TEST_CASE("uniform posteriors give ln C per frame") {
  PhonemePosteriors p;
  p.probs = Eigen::MatrixXd::Constant(3, 4, 0.25);
  const auto loss = phoneme_loss(p, std::vector<int>{0, 1, 2});
  CHECK(loss.total == doctest::Approx(4.15888).epsilon(1e-5));
  CHECK(loss.per_frame == doctest::Approx(1.38629).epsilon(1e-5));
  CHECK(loss.frames == 3);
}

TEST_CASE("phoneme loss matches the elementwise double sum") {
  std::mt19937_64 rng(11);
  const auto g = oracle::random_posteriors(rng, 7, 5);
  const auto labels = oracle::random_labels(rng, 7, 5);
  const auto loss = phoneme_loss(to_posteriors(g), labels);
  CHECK(std::abs(loss.total - oracle::cross_entropy_double_sum(g, labels)) <= 1e-10);
  CHECK(loss.per_frame == doctest::Approx(loss.total / 7.0));
}

TEST_CASE("phoneme loss floors zero probabilities") {
  PhonemePosteriors p;
  p.probs = Eigen::MatrixXd::Zero(1, 2);
  p.probs(0, 1) = 1.0;
  const auto loss = phoneme_loss(p, std::vector<int>{0});
  CHECK(std::isfinite(loss.total));
  CHECK(loss.total == doctest::Approx(-std::log(kProbabilityFloor)));
}

TEST_CASE("phoneme loss rejects bad shapes") {
  PhonemePosteriors p;
  p.probs = Eigen::MatrixXd::Constant(2, 2, 0.5);
  CHECK(error_kind([&] { phoneme_loss(p, std::vector<int>{0}); }) == ErrorKind::validation);
  PhonemePosteriors empty;
  empty.probs.resize(0, 2);
  CHECK(error_kind([&] { phoneme_loss(empty, std::vector<int>{}); }) == ErrorKind::validation);
}

TEST_CASE("phoneme loss is additive over concatenation") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto a = oracle::random_posteriors(rng, 4, 3);
    const auto b = oracle::random_posteriors(rng, 6, 3);
    const auto la = oracle::random_labels(rng, 4, 3);
    const auto lb = oracle::random_labels(rng, 6, 3);
    auto ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    auto lab = la;
    lab.insert(lab.end(), lb.begin(), lb.end());
    const auto x = phoneme_loss(to_posteriors(a), la);
    const auto y = phoneme_loss(to_posteriors(b), lb);
    const auto xy = phoneme_loss(to_posteriors(ab), lab);
    CHECK(xy.total == doctest::Approx(x.total + y.total).epsilon(1e-12));
    CHECK(xy.per_frame == doctest::Approx((4 * x.per_frame + 6 * y.per_frame) / 10).epsilon(1e-12));
    CHECK(xy.total >= 0.0);
  }
}

TEST_CASE("confusion counts from the hand example") {
  // A = 0, B = 1
  const std::vector<int> truth = {0, 0, 1};
  const std::vector<int> pred = {0, 1, 1};
  const auto cc = confusion_counts(pred, truth, 2);
  CHECK(cc.e(0, 0) == 1);
  CHECK(cc.e(0, 1) == 1);
  CHECK(cc.e(1, 1) == 1);
  CHECK(cc.e(1, 0) == 0);
  CHECK(cc.f(0) == 2);
  CHECK(cc.f(1) == 1);
  const auto pm = pair_metrics(cc, 0, 1);
  CHECK(pm.confusion == doctest::Approx(1.0 / 3.0));
  CHECK(pm.accuracy == doctest::Approx(2.0 / 3.0));
  CHECK(overall_accuracy(cc) == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("perfect predictions give a diagonal matrix") {
  const std::vector<int> s = {0, 2, 2, 1, 3, 0};
  const auto cc = confusion_counts(s, s, 4);
  std::int64_t trace = 0;
  for (int p = 0; p < 4; ++p) trace += cc.e(p, p);
  CHECK(trace == 6);
  CHECK(overall_accuracy(cc) == 1.0);
  for (int p1 = 0; p1 < 4; ++p1) {
    for (int p2 = p1 + 1; p2 < 4; ++p2) {
      if (cc.f(p1) + cc.f(p2) == 0) continue;
      const auto pm = pair_metrics(cc, p1, p2);
      CHECK(pm.confusion == 0.0);
      CHECK(pm.accuracy == 1.0);
    }
  }
}

TEST_CASE("confusion counts agree with the per-cell recount on random streams") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 50; ++trial) {
    const int classes = 2 + trial % 5;
    const auto truth = oracle::random_labels(rng, 40, classes);
    const auto pred = oracle::random_labels(rng, 40, classes);
    const auto cc = confusion_counts(pred, truth, classes);
    const auto e = oracle::hand_counts(pred, truth, classes);
    long matches = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) matches += pred[i] == truth[i];
    CHECK(overall_accuracy(cc) == doctest::Approx(static_cast<double>(matches) / 40.0));
    std::int64_t total_f = 0;
    for (int p = 0; p < classes; ++p) {
      std::int64_t row = 0;
      for (int q = 0; q < classes; ++q) {
        CHECK(cc.e(p, q) == e[p][q]);
        row += cc.e(p, q);
      }
      CHECK(cc.f(p) == oracle::hand_frequency(truth, p));
      CHECK(cc.f(p) == row);
      total_f += cc.f(p);
    }
    CHECK(total_f == 40);
    for (int p1 = 0; p1 < classes; ++p1) {
      for (int p2 = 0; p2 < classes; ++p2) {
        const long support = oracle::hand_frequency(truth, p1) + oracle::hand_frequency(truth, p2);
        if (p1 == p2 || support == 0) continue;
        const auto pm = pair_metrics(cc, p1, p2);
        CHECK(pm.confusion == static_cast<double>(e[p1][p2] + e[p2][p1]) / support);
        CHECK(pm.accuracy == static_cast<double>(e[p1][p1] + e[p2][p2]) / support);
        CHECK(pm.confusion == pair_metrics(cc, p2, p1).confusion);
      }
    }
  }
}

TEST_CASE("confusion counts are additive over concatenated streams") {
  std::mt19937_64 rng(31);
  const auto t1 = oracle::random_labels(rng, 15, 4);
  const auto p1 = oracle::random_labels(rng, 15, 4);
  const auto t2 = oracle::random_labels(rng, 9, 4);
  const auto p2 = oracle::random_labels(rng, 9, 4);
  auto merged = confusion_counts(p1, t1, 4);
  merged.merge(confusion_counts(p2, t2, 4));
  auto t = t1;
  t.insert(t.end(), t2.begin(), t2.end());
  auto p = p1;
  p.insert(p.end(), p2.begin(), p2.end());
  CHECK(merged == confusion_counts(p, t, 4));
}

TEST_CASE("pair confusion plus accuracy is at most one inside the pair") {
  // every frame of classes 0 and 1 predicted as 0 or 1
  const std::vector<int> truth = {0, 0, 1, 1, 1, 2};
  const std::vector<int> pred = {0, 1, 0, 1, 1, 0};
  const auto pm = pair_metrics(confusion_counts(pred, truth, 3), 0, 1);
  CHECK(pm.confusion + pm.accuracy <= 1.0 + 1e-15);
}

TEST_CASE("undefined metrics raise") {
  const auto cc = confusion_counts(std::vector<int>{0}, std::vector<int>{0}, 3);
  CHECK(error_kind([&] { pair_metrics(cc, 1, 2); }) == ErrorKind::undefined);
  CHECK(error_kind([] { overall_accuracy(ConfusionCounts(3)); }) == ErrorKind::undefined);
  CHECK(error_kind([] { confusion_counts(std::vector<int>{0}, std::vector<int>{0, 1}, 2); }) ==
        ErrorKind::validation);
}

TEST_CASE("mean pair confusion averages over supported pairs") {
  const std::vector<int> truth = {0, 0, 1};
  const std::vector<int> pred = {0, 1, 1};
  const auto cc = confusion_counts(pred, truth, 3);
  // pairs (0,1) 1/3, (0,2) 0/2, (1,2) 0/1
  CHECK(mean_pair_confusion(cc) == doctest::Approx((1.0 / 3.0) / 3.0));
}

TEST_CASE("alignment and lexicon files round-trip") {
  com2s::testing::TempDir dir("phon");
  const auto inv = PhonemeInventory::desk_default();
  const FrameLabels labels = {0, 3, 3, 5, 0};
  write_alignment(dir / "a.phn", labels, inv);
  CHECK(read_alignment(dir / "a.phn", inv) == labels);

  Lexicon lex = {{"cat", {1, 2, 3}}, {"to", {4, 5}}};
  write_lexicon(dir / "lex.json", lex, inv);
  CHECK(read_lexicon(dir / "lex.json", inv) == lex);

  com2s::testing::spit(dir / "bad.phn", "sil\nQQ\n");
  CHECK(error_kind([&] { read_alignment(dir / "bad.phn", inv); }) == ErrorKind::parse);
}

TEST_CASE("confusion csv has a symbol header") {
  const auto inv = PhonemeInventory::desk_default();
  std::ostringstream out;
  write_confusion_csv(ConfusionCounts(inv.size()), inv, out);
  const auto first = out.str().substr(0, out.str().find('\n'));
  CHECK(first.find("sil") != std::string::npos);
}
