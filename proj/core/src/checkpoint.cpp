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

#include <bit>
#include <cstring>

#include "binary_io.hpp"
#include "com2s/error.hpp"
#include "com2s/transduce.hpp"

namespace com2s::transduce {

namespace {

constexpr char kMagic[4] = {'C', 'M', '2', 'S'};
constexpr std::uint32_t kVersion = 1;
constexpr std::size_t kConfigFields = 13;
constexpr std::size_t kHeaderBytes = 4 + 4 + 4 * kConfigFields + 8;

std::vector<std::uint32_t> config_fields(const ModelConfig& c) {
  auto u = [](std::size_t v) {
    if (v > 0xFFFFFFFFu) fail(ErrorKind::config, "model dimension does not fit in 32 bits");
    return static_cast<std::uint32_t>(v);
  };
  return {u(c.channels),   u(c.conv_blocks), u(c.downsample_per_block), u(c.kernel_size),
          u(c.attention_layers), u(c.hidden_dim), u(c.heads), u(c.ffn_dim),
          u(c.n_sessions), u(c.session_dim), u(c.n_coeffs), u(c.n_phonemes), c.sample_rate};
}

ModelConfig config_from(const std::vector<std::uint32_t>& f, std::uint64_t seed) {
  ModelConfig c;
  c.channels = f[0];
  c.conv_blocks = f[1];
  c.downsample_per_block = f[2];
  c.kernel_size = f[3];
  c.attention_layers = f[4];
  c.hidden_dim = f[5];
  c.heads = f[6];
  c.ffn_dim = f[7];
  c.n_sessions = f[8];
  c.session_dim = f[9];
  c.n_coeffs = f[10];
  c.n_phonemes = f[11];
  c.sample_rate = f[12];
  c.seed = seed;
  return c;
}

void put_f32(std::vector<std::uint8_t>& out, double v) {
  detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
}

double get_f32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  return static_cast<double>(std::bit_cast<float>(detail::get_u32(bytes, offset)));
}

}  // namespace

std::vector<std::uint8_t> encode_model(const Model& model) {
  const auto& c = model.config();
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 8 * c.channels + 8 + 4 * model.parameter_count());
  out.insert(out.end(), kMagic, kMagic + 4);
  detail::put_u32(out, kVersion);
  for (auto f : config_fields(c)) detail::put_u32(out, f);
  detail::put_u64(out, c.seed);
  for (Eigen::Index i = 0; i < model.input_mean().size(); ++i) put_f32(out, model.input_mean()(i));
  for (Eigen::Index i = 0; i < model.input_std().size(); ++i) put_f32(out, model.input_std()(i));
  detail::put_u64(out, model.parameter_count());
  for (double p : model.parameters()) put_f32(out, p);
  return out;
}

Model decode_model(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) fail(ErrorKind::length, "truncated checkpoint header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) fail(ErrorKind::format, "not a model checkpoint (bad magic)");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kVersion)
    fail(ErrorKind::unsupported_format, "checkpoint version " + std::to_string(version) + " is not supported");
  std::vector<std::uint32_t> fields(kConfigFields);
  for (std::size_t i = 0; i < kConfigFields; ++i) fields[i] = detail::get_u32(bytes, 8 + 4 * i);
  const std::uint64_t seed = detail::get_u64(bytes, 8 + 4 * kConfigFields);
  const ModelConfig config = config_from(fields, seed);
  config.validate();

  std::size_t pos = kHeaderBytes;
  const std::size_t channels = config.channels;
  if (bytes.size() < pos + 8 * channels + 8) fail(ErrorKind::length, "truncated checkpoint normalization");
  Eigen::VectorXd mean(static_cast<Eigen::Index>(channels)), stddev(static_cast<Eigen::Index>(channels));
  for (std::size_t i = 0; i < channels; ++i, pos += 4) mean(static_cast<Eigen::Index>(i)) = get_f32(bytes, pos);
  for (std::size_t i = 0; i < channels; ++i, pos += 4) stddev(static_cast<Eigen::Index>(i)) = get_f32(bytes, pos);
  const std::uint64_t count = detail::get_u64(bytes, pos);
  pos += 8;

  Model model(config);
  if (count != model.parameter_count())
    fail(ErrorKind::format, "checkpoint holds " + std::to_string(count) + " parameters, config implies " +
                                std::to_string(model.parameter_count()));
  if (bytes.size() != pos + 4 * count)
    fail(ErrorKind::length, "checkpoint parameter payload has the wrong size");
  auto params = model.parameters();
  for (std::size_t i = 0; i < count; ++i, pos += 4) params[i] = get_f32(bytes, pos);
  model.set_input_normalization(mean, stddev);
  return model;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  detail::write_all(path, encode_model(model));
}

Model load_model(const std::filesystem::path& path) { return decode_model(detail::read_all(path)); }

Model load_model(const std::filesystem::path& path, const ModelConfig& expected) {
  Model model = load_model(path);
  if (!(model.config() == expected))
    fail(ErrorKind::config, "checkpoint " + path.string() + " was built with a different model config");
  return model;
}

}  // namespace com2s::transduce
