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
#include <cstring>
#include <random>
#include <vector>

#include "doctest.h"

#include "com2s/emgsig.hpp"
#include "com2s/transduce.hpp"
#include "test_support.hpp"

using namespace com2s;
using namespace com2s::transduce;
using com2s::testing::error_kind;
using com2s::testing::make_tiny_corpus;

namespace {

Eigen::MatrixXd random_emg(std::size_t channels, std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d(0.0, 1.0);
  Eigen::MatrixXd x(static_cast<Eigen::Index>(channels), static_cast<Eigen::Index>(n));
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = d(rng);
  return x;
}

std::vector<double> tensor_values(const Model& m, std::span<const double> all, const std::string& name) {
  const auto& t = m.tensor(name);
  return {all.begin() + static_cast<std::ptrdiff_t>(t.offset),
          all.begin() + static_cast<std::ptrdiff_t>(t.offset + t.size())};
}

// Trainable model whose normalization matches what train() would pick.
Model normalized_model(const com2s::testing::TinyCorpus& t) {
  Model m(t.model);
  emgsig::ChannelStatsAccumulator acc(t.model.channels);
  for (const auto& u : t.generated.utterances) acc.add(u.emg.as_double());
  const auto stats = acc.finish();
  m.set_input_normalization(stats.mean, stats.stddev);
  m.round_to_float();
  return m;
}

}  // namespace

TEST_CASE("forward output shapes and normalization") {
  ModelConfig mc;
  mc.hidden_dim = 16;
  mc.heads = 2;
  mc.ffn_dim = 32;
  const Model m(mc);
  CHECK(mc.total_downsample() == 8);
  const auto out = m.forward(random_emg(8, 64, 1), 0);
  CHECK(out.acoustic.rows() == 8);
  CHECK(out.acoustic.cols() == 13);
  CHECK(out.posteriors.frames() == 8);
  CHECK(out.posteriors.classes() == 12);
  for (Eigen::Index t = 0; t < 8; ++t) CHECK(std::abs(out.posteriors.probs.row(t).sum() - 1.0) <= 1e-6);
  CHECK(m.forward(random_emg(8, 70, 2), 1).acoustic.rows() == 8);
}

TEST_CASE("forward is deterministic and session-sensitive") {
  ModelConfig mc;
  mc.hidden_dim = 16;
  mc.heads = 2;
  mc.ffn_dim = 32;
  const Model m(mc);
  const auto x = random_emg(8, 96, 3);
  const auto a = m.forward(x, 1);
  const auto b = m.forward(x, 1);
  CHECK(a.acoustic == b.acoustic);
  CHECK(a.posteriors.probs == b.posteriors.probs);
  const auto c = m.forward(x, 2);
  CHECK((a.acoustic - c.acoustic).cwiseAbs().maxCoeff() > 0.0);
  CHECK(error_kind([&] { m.forward(x, 4); }) == ErrorKind::validation);
  CHECK(error_kind([&] { m.forward(random_emg(8, 7, 1), 0); }) == ErrorKind::validation);
  CHECK(error_kind([&] { m.forward(random_emg(7, 64, 1), 0); }) == ErrorKind::validation);
}

TEST_CASE("model config validation") {
  ModelConfig mc;
  mc.hidden_dim = 30;
  CHECK(error_kind([&] { Model{mc}; }) == ErrorKind::config);
  mc = {};
  mc.kernel_size = 4;
  CHECK(error_kind([&] { Model{mc}; }) == ErrorKind::config);
  TrainConfig tc;
  tc.learning_rate = 0.0;
  CHECK(error_kind([&] { tc.validate(); }) == ErrorKind::config);
}

TEST_CASE("mixed loss reduces to each head at the boundaries") {
  const LossSums s{26.0, 3.0, 2};
  CHECK(mixed_loss(s, 13, 0.0) == 1.0);
  CHECK(mixed_loss(s, 13, 1.0) == 1.5);
  CHECK(mixed_loss(s, 13, 0.5) == 1.25);
  CHECK(error_kind([] { mixed_loss(LossSums{}, 13, 0.5); }) == ErrorKind::validation);
}

TEST_CASE("gradient check on a fresh model") {
  auto t = make_tiny_corpus(2, 0.1);
  const Model m = normalized_model(t);
  const auto r = grad_check(m, t.generated.utterances[0]);
  CHECK(r.finite);
  CHECK(r.checked >= 100);
  CHECK(r.max_relative_error < 1e-3);
  for (double lambda : {0.0, 1.0}) CHECK(grad_check(m, t.generated.utterances[1], lambda).max_relative_error < 1e-3);
}

TEST_CASE("gradient check after ten training steps") {
  auto t = make_tiny_corpus(10, 0.1);
  TrainConfig tc;
  tc.batch_size = 1;
  tc.epochs = 1;
  tc.learning_rate = 3e-3;
  const auto trained = train(nullptr, t.manifest, t.store, tc, t.model).model;
  const auto r = grad_check(trained, t.generated.utterances[3], 0.5, 128, 5);
  CHECK(r.finite);
  CHECK(r.checked >= 100);
  CHECK(r.max_relative_error < 1e-3);
}

TEST_CASE("zero input gives finite gradients") {
  auto t = make_tiny_corpus(1, 0.0);
  auto u = t.generated.utterances[0];
  u.emg.samples.setZero();
  const auto r = grad_check(Model(t.model), u);
  CHECK(r.finite);
}

TEST_CASE("doubling the acoustic weight doubles the acoustic-head gradient") {
  auto t = make_tiny_corpus(1, 0.1);
  const Model m = normalized_model(t);
  const auto& u = t.generated.utterances[0];
  const auto x = u.emg.as_double();
  std::vector<double> g1(m.parameter_count(), 0.0), g2(m.parameter_count(), 0.0);
  m.accumulate_gradient(x, u.emg.session_id, u.phoneme_alignment, u.acoustic_target, 0.01, 0.02, g1);
  m.accumulate_gradient(x, u.emg.session_id, u.phoneme_alignment, u.acoustic_target, 0.02, 0.02, g2);
  for (const char* name : {"acoustic_head.weight", "acoustic_head.bias"}) {
    const auto a = tensor_values(m, g1, name);
    const auto b = tensor_values(m, g2, name);
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(b[i] - 2.0 * a[i]) <= 1e-6 * (1.0 + std::abs(b[i])));
  }
  // with no phoneme weight the phoneme head receives nothing
  std::vector<double> g3(m.parameter_count(), 0.0);
  m.accumulate_gradient(x, u.emg.session_id, u.phoneme_alignment, u.acoustic_target, 0.01, 0.0, g3);
  for (double v : tensor_values(m, g3, "phoneme_head.weight")) CHECK(v == 0.0);
}

TEST_CASE("loss weight zero makes training blind to the phoneme head") {
  auto t = make_tiny_corpus(6, 0.1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.loss_mix_lambda = 0.0;
  const Model base = normalized_model(t);
  Model other = base;
  const auto& head = other.tensor("phoneme_head.weight");
  for (std::size_t i = 0; i < head.size(); ++i) other.parameters()[head.offset + i] += 0.5;
  const auto a = train(&base, t.manifest, t.store, tc, t.model);
  const auto b = train(&other, t.manifest, t.store, tc, t.model);
  CHECK(a.loss_history == b.loss_history);

  tc.loss_mix_lambda = 1.0;
  Model third = base;
  const auto& ac = third.tensor("acoustic_head.weight");
  for (std::size_t i = 0; i < ac.size(); ++i) third.parameters()[ac.offset + i] -= 0.25;
  CHECK(train(&base, t.manifest, t.store, tc, t.model).loss_history ==
        train(&third, t.manifest, t.store, tc, t.model).loss_history);
}

TEST_CASE("training overfits a tiny noiseless corpus") {
  auto t = make_tiny_corpus(4, 0.0);
  TrainConfig tc;
  tc.epochs = 200;
  tc.batch_size = 1;
  tc.learning_rate = 3e-3;
  const auto r = train(nullptr, t.manifest, t.store, tc, t.model);
  REQUIRE(r.loss_history.size() == 200);
  CHECK(r.loss_history.back() < 0.1 * r.loss_history.front());
  for (double v : r.loss_history) CHECK(v >= 0.0);
}

TEST_CASE("training is deterministic and order-independent") {
  auto t = make_tiny_corpus(6, 0.1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 2;
  tc.seed = 9;
  const auto a = train(nullptr, t.manifest, t.store, tc, t.model);
  const auto b = train(nullptr, t.manifest, t.store, tc, t.model);
  CHECK(a.loss_history == b.loss_history);
  CHECK(a.model.same_weights(b.model));
  auto entries = t.manifest.entries();
  std::reverse(entries.begin(), entries.end());
  const auto c = train(nullptr, corpus::DatasetManifest(entries), t.store, tc, t.model);
  CHECK(c.model.same_weights(a.model));
  tc.epochs = 0;
  const auto none = train(&a.model, t.manifest, t.store, tc, t.model);
  CHECK(none.model.same_weights(a.model));
  CHECK(none.loss_history.empty());
}

TEST_CASE("training input validation") {
  auto t = make_tiny_corpus(2, 0.1);
  TrainConfig tc;
  tc.epochs = 1;
  CHECK(error_kind([&] { train(nullptr, corpus::DatasetManifest{}, t.store, tc, t.model); }) ==
        ErrorKind::validation);
  auto other = t.model;
  other.hidden_dim = 32;
  const Model wrong(other);
  CHECK(error_kind([&] { train(&wrong, t.manifest, t.store, tc, t.model); }) == ErrorKind::validation);
  auto rate = t.model;
  rate.sample_rate = 400;
  CHECK(error_kind([&] { train(nullptr, t.manifest, t.store, tc, rate); }) == ErrorKind::validation);
}

TEST_CASE("validation loss is tracked per epoch") {
  auto t = make_tiny_corpus(6, 0.1);
  TrainConfig tc;
  tc.epochs = 2;
  const auto r = train(nullptr, t.manifest, t.store, tc, t.model, &t.manifest);
  REQUIRE(r.validation_history.size() == 2);
  CHECK(r.validation_history.back() == doctest::Approx(dataset_loss(r.model, t.manifest, t.store, 0.5)));
}

TEST_CASE("checkpoints round-trip exactly") {
  auto t = make_tiny_corpus(3, 0.1);
  TrainConfig tc;
  tc.epochs = 2;
  const auto m = train(nullptr, t.manifest, t.store, tc, t.model).model;
  const auto bytes = encode_model(m);
  REQUIRE(bytes.size() > 8);
  CHECK(std::memcmp(bytes.data(), "CM2S", 4) == 0);
  CHECK(bytes[4] == 1);
  const std::size_t expected = 4 + 4 + 13 * 4 + 8 + 2 * 4 * m.config().channels + 8 + 4 * m.parameter_count();
  CHECK(bytes.size() == expected);
  const auto back = decode_model(bytes);
  CHECK(back.same_weights(m));
  CHECK(encode_model(back) == bytes);

  com2s::testing::TempDir dir("ckpt");
  save_model(m, dir / "m.bin");
  CHECK(load_model(dir / "m.bin").same_weights(m));
  CHECK(load_model(dir / "m.bin", m.config()).same_weights(m));
  auto other = m.config();
  other.attention_layers = 2;
  CHECK(error_kind([&] { load_model(dir / "m.bin", other); }) == ErrorKind::config);
  const auto x = t.generated.utterances[0].emg.as_double();
  CHECK(back.forward(x, 0).acoustic == m.forward(x, 0).acoustic);
}

TEST_CASE("corrupt checkpoints are rejected") {
  ModelConfig mc;
  mc.hidden_dim = 8;
  mc.heads = 2;
  mc.ffn_dim = 8;
  const auto bytes = encode_model(Model(mc));
  auto magic = bytes;
  magic[0] = 'X';
  CHECK(error_kind([&] { decode_model(magic); }) == ErrorKind::format);
  auto version = bytes;
  version[4] = 9;
  CHECK(error_kind([&] { decode_model(version); }) == ErrorKind::unsupported_format);
  auto truncated = bytes;
  truncated.pop_back();
  CHECK(error_kind([&] { decode_model(truncated); }) == ErrorKind::length);
  CHECK(error_kind([&] { decode_model(std::vector<std::uint8_t>(bytes.begin(), bytes.begin() + 10)); }) ==
        ErrorKind::length);
}
