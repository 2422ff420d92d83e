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

#include "config.hpp"

#include <charconv>
#include <fstream>
#include <set>

#include "com2s/error.hpp"

namespace com2s::cli {

namespace {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

// Reads fields from one JSON object and rejects keys nobody asked for.
class Fields {
 public:
  Fields(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) fail(ErrorKind::config, where_ + " must be a JSON object");
  }
  void done() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) fail(ErrorKind::config, "unknown key '" + where_ + "." + key + "'");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      fail(ErrorKind::config, where_ + "." + key + ": " + e.what());
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

ojson model_json(const transduce::ModelConfig& m) {
  return {{"channels", m.channels},
          {"conv_blocks", m.conv_blocks},
          {"downsample_per_block", m.downsample_per_block},
          {"kernel_size", m.kernel_size},
          {"attention_layers", m.attention_layers},
          {"hidden_dim", m.hidden_dim},
          {"heads", m.heads},
          {"ffn_dim", m.ffn_dim},
          {"n_sessions", m.n_sessions},
          {"session_dim", m.session_dim},
          {"n_coeffs", m.n_coeffs},
          {"n_phonemes", m.n_phonemes},
          {"sample_rate", m.sample_rate},
          {"seed", m.seed}};
}

void read_model(const json& j, transduce::ModelConfig& m) {
  Fields f(j, "model");
  f.get("channels", m.channels);
  f.get("conv_blocks", m.conv_blocks);
  f.get("downsample_per_block", m.downsample_per_block);
  f.get("kernel_size", m.kernel_size);
  f.get("attention_layers", m.attention_layers);
  f.get("hidden_dim", m.hidden_dim);
  f.get("heads", m.heads);
  f.get("ffn_dim", m.ffn_dim);
  f.get("n_sessions", m.n_sessions);
  f.get("session_dim", m.session_dim);
  f.get("n_coeffs", m.n_coeffs);
  f.get("n_phonemes", m.n_phonemes);
  f.get("sample_rate", m.sample_rate);
  f.get("seed", m.seed);
  f.done();
}

ojson train_json(const transduce::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"epochs", t.epochs},               {"loss_mix_lambda", t.loss_mix_lambda},
          {"beta1", t.beta1},                 {"beta2", t.beta2},
          {"epsilon", t.epsilon},             {"seed", t.seed}};
}

void read_train(const json& j, transduce::TrainConfig& t, const std::string& where) {
  Fields f(j, where);
  f.get("learning_rate", t.learning_rate);
  f.get("batch_size", t.batch_size);
  f.get("epochs", t.epochs);
  f.get("loss_mix_lambda", t.loss_mix_lambda);
  f.get("beta1", t.beta1);
  f.get("beta2", t.beta2);
  f.get("epsilon", t.epsilon);
  f.get("seed", t.seed);
  f.done();
}

ojson filter_json(const selftrain::FilterSpec& fs) {
  return fs.is_raw() ? ojson("raw") : ojson(*fs.threshold);
}

selftrain::FilterSpec read_filter(const json& j) {
  if (j.is_string()) return parse_filter(j.get<std::string>());
  if (j.is_number()) return selftrain::FilterSpec::below(j.get<double>());
  if (j.is_null()) return selftrain::FilterSpec::raw();
  fail(ErrorKind::config, "filter threshold must be a number or \"raw\"");
}

}  // namespace

selftrain::FilterSpec parse_filter(const std::string& text) {
  if (text == "raw" || text == "none") return selftrain::FilterSpec::raw();
  double value = 0.0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc() || ptr != end) fail(ErrorKind::validation, "threshold '" + text + "' is not a number or 'raw'");
  auto fs = selftrain::FilterSpec::below(value);
  fs.validate();
  return fs;
}

phonemics::PhonemeInventory RunConfig::make_inventory() const {
  if (inventory == "desk") return phonemics::PhonemeInventory::desk_default();
  if (inventory == "arpabet") return phonemics::PhonemeInventory::arpabet();
  fail(ErrorKind::config, "inventory must be 'desk' or 'arpabet', got '" + inventory + "'");
}

void RunConfig::validate() const {
  const auto inv = make_inventory();
  if (bench.model.n_phonemes != inv.size())
    fail(ErrorKind::config, "model.n_phonemes (" + std::to_string(bench.model.n_phonemes) +
                                ") does not match the inventory size (" + std::to_string(inv.size()) + ")");
  bench.validate();
  restore.validate();
  filter.validate();
  mix.validate();
  if (bench.min_words == 0 || bench.min_words > bench.max_words) fail(ErrorKind::config, "need 0 < min_words <= max_words");
  if (restore_rate == 0) fail(ErrorKind::config, "restore_rate must be positive");
  if (sweep_seeds.empty()) fail(ErrorKind::config, "sweep_seeds must not be empty");
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  const auto& b = c.bench;
  const auto& p = b.profile;
  ojson j;
  j["seed"] = b.seed;
  j["inventory"] = c.inventory;
  j["profile"] = {{"channels", p.channels},
                  {"n_sessions", p.n_sessions},
                  {"lexicon_size", p.lexicon_size},
                  {"n_coeffs", p.n_coeffs},
                  {"min_word_phonemes", p.min_word_phonemes},
                  {"max_word_phonemes", p.max_word_phonemes},
                  {"n_speakers", p.n_speakers},
                  {"amplitude", p.amplitude},
                  {"session_spread", p.session_spread},
                  {"generator_bias", p.generator_bias},
                  {"speaker_spread", p.speaker_spread}};
  auto mixture = ojson::array();
  for (const auto& m : b.synthetic_mixture)
    mixture.push_back({{"weight", m.weight}, {"noise_sigma", m.noise_sigma}, {"substitution_rate", m.substitution_rate}});
  j["corpus"] = {{"real_utterances", c.gen_real_utterances},
                 {"synthetic_utterances", c.gen_synthetic_utterances},
                 {"min_words", b.min_words},
                 {"max_words", b.max_words},
                 {"real_noise", b.real_noise},
                 {"synthetic_mixture", mixture}};
  j["restore"] = {{"clip_epsilon", c.restore.clip_epsilon}, {"scale", c.restore.scale}, {"target_rate", c.restore_rate}};
  j["model"] = model_json(b.model);
  j["train"] = train_json(b.teacher_train);
  j["continue_train"] = train_json(b.continue_train);
  j["scratch_train"] = train_json(b.scratch_train);
  j["filter"] = {{"threshold", filter_json(c.filter)}};
  j["mix"] = {{"real_fraction", c.mix.real_fraction}, {"total_utterances", c.mix.total_utterances}, {"seed", c.mix.seed}};
  j["benchmark"] = {{"real_train", b.real_train},
                    {"real_validation", b.real_validation},
                    {"real_test", b.real_test},
                    {"synthetic_pool", b.synthetic_pool},
                    {"synthetic_test_pool", b.synthetic_test_pool},
                    {"synthetic_test", b.synthetic_test},
                    {"selection", filter_json(b.selection)},
                    {"ratio_total", b.ratio_total},
                    {"scale_base", b.scale_base}};
  auto thresholds = ojson::array();
  for (const auto& t : b.thresholds) thresholds.push_back(filter_json(t));
  j["grids"] = {{"thresholds", thresholds}, {"ratios", b.ratios}, {"scales", b.scales}};
  j["sweep_seeds"] = c.sweep_seeds;
  return j;
}

RunConfig from_json(const nlohmann::json& j) {
  RunConfig c;
  auto& b = c.bench;
  Fields top(j, "config");
  top.get("seed", b.seed);
  top.get("inventory", c.inventory);
  if (c.inventory == "arpabet") b.model.n_phonemes = phonemics::PhonemeInventory::arpabet().size();
  if (const auto* p = top.child("profile")) {
    Fields f(*p, "profile");
    f.get("channels", b.profile.channels);
    f.get("n_sessions", b.profile.n_sessions);
    f.get("lexicon_size", b.profile.lexicon_size);
    f.get("n_coeffs", b.profile.n_coeffs);
    f.get("min_word_phonemes", b.profile.min_word_phonemes);
    f.get("max_word_phonemes", b.profile.max_word_phonemes);
    f.get("n_speakers", b.profile.n_speakers);
    f.get("amplitude", b.profile.amplitude);
    f.get("session_spread", b.profile.session_spread);
    f.get("generator_bias", b.profile.generator_bias);
    f.get("speaker_spread", b.profile.speaker_spread);
    f.done();
    // Keep the model input shape in step with the simulator unless model overrides it.
    b.model.channels = b.profile.channels;
    b.model.n_sessions = b.profile.n_sessions;
    b.model.n_coeffs = b.profile.n_coeffs;
  }
  if (const auto* p = top.child("corpus")) {
    Fields f(*p, "corpus");
    f.get("real_utterances", c.gen_real_utterances);
    f.get("synthetic_utterances", c.gen_synthetic_utterances);
    f.get("min_words", b.min_words);
    f.get("max_words", b.max_words);
    f.get("real_noise", b.real_noise);
    if (const auto* m = f.child("synthetic_mixture")) {
      if (!m->is_array()) fail(ErrorKind::config, "corpus.synthetic_mixture must be an array");
      b.synthetic_mixture.clear();
      for (const auto& item : *m) {
        simgen::NoiseComponent comp;
        Fields cf(item, "corpus.synthetic_mixture[]");
        cf.get("weight", comp.weight);
        cf.get("noise_sigma", comp.noise_sigma);
        cf.get("substitution_rate", comp.substitution_rate);
        cf.done();
        b.synthetic_mixture.push_back(comp);
      }
    }
    f.done();
  }
  if (const auto* p = top.child("restore")) {
    Fields f(*p, "restore");
    f.get("clip_epsilon", c.restore.clip_epsilon);
    f.get("scale", c.restore.scale);
    f.get("target_rate", c.restore_rate);
    f.done();
  }
  if (const auto* p = top.child("model")) read_model(*p, b.model);
  if (const auto* p = top.child("train")) read_train(*p, b.teacher_train, "train");
  if (const auto* p = top.child("continue_train")) read_train(*p, b.continue_train, "continue_train");
  if (const auto* p = top.child("scratch_train")) read_train(*p, b.scratch_train, "scratch_train");
  if (const auto* p = top.child("filter")) {
    Fields f(*p, "filter");
    if (const auto* t = f.child("threshold")) c.filter = read_filter(*t);
    f.done();
  }
  if (const auto* p = top.child("mix")) {
    Fields f(*p, "mix");
    f.get("real_fraction", c.mix.real_fraction);
    f.get("total_utterances", c.mix.total_utterances);
    f.get("seed", c.mix.seed);
    f.done();
  }
  if (const auto* p = top.child("benchmark")) {
    Fields f(*p, "benchmark");
    f.get("real_train", b.real_train);
    f.get("real_validation", b.real_validation);
    f.get("real_test", b.real_test);
    f.get("synthetic_pool", b.synthetic_pool);
    f.get("synthetic_test_pool", b.synthetic_test_pool);
    f.get("synthetic_test", b.synthetic_test);
    if (const auto* s = f.child("selection")) b.selection = read_filter(*s);
    f.get("ratio_total", b.ratio_total);
    f.get("scale_base", b.scale_base);
    f.done();
  }
  if (const auto* p = top.child("grids")) {
    Fields f(*p, "grids");
    if (const auto* t = f.child("thresholds")) {
      if (!t->is_array()) fail(ErrorKind::config, "grids.thresholds must be an array");
      b.thresholds.clear();
      for (const auto& item : *t) b.thresholds.push_back(read_filter(item));
    }
    f.get("ratios", b.ratios);
    f.get("scales", b.scales);
    f.done();
  }
  top.get("sweep_seeds", c.sweep_seeds);
  top.done();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::validation, "cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::parse, path.string() + ": " + e.what());
  }
  return from_json(j);
}

}  // namespace com2s::cli
