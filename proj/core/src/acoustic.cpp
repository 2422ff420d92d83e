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

#include "com2s/acoustic.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <iterator>
#include <numbers>
#include <string>

#include <unsupported/Eigen/FFT>

#include "com2s/error.hpp"

namespace com2s::acoustic {

std::size_t AcousticConfig::window_samples() const {
  return static_cast<std::size_t>(std::llround(window_s * sample_rate));
}

std::size_t AcousticConfig::hop_samples() const {
  return static_cast<std::size_t>(std::llround(hop_s * sample_rate));
}

void AcousticConfig::validate() const {
  if (!(sample_rate > 0.0)) fail(ErrorKind::config, "sample_rate must be positive");
  if (!(hop_s > 0.0) || hop_s > window_s) fail(ErrorKind::config, "need 0 < hop_s <= window_s");
  if (hop_samples() == 0) fail(ErrorKind::config, "hop is shorter than one sample");
  if (n_mels == 0 || n_coeffs == 0 || n_coeffs > n_mels)
    fail(ErrorKind::config, "need 0 < n_coeffs <= n_mels");
  if (!(log_floor > 0.0)) fail(ErrorKind::config, "log_floor must be positive");
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::size_t fft_size_for(const AcousticConfig& cfg) {
  std::size_t n = 1;
  while (n < cfg.window_samples()) n <<= 1;
  return n;
}

namespace {

std::vector<double> mel_edges(const AcousticConfig& cfg) {
  const double top = hz_to_mel(cfg.sample_rate / 2.0);
  std::vector<double> edges(cfg.n_mels + 2);
  for (std::size_t i = 0; i < edges.size(); ++i)
    edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(cfg.n_mels + 1));
  return edges;
}

}  // namespace

std::vector<double> mel_center_frequencies(const AcousticConfig& cfg) {
  auto edges = mel_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

Eigen::MatrixXd mel_filterbank(const AcousticConfig& cfg, std::size_t n_fft) {
  cfg.validate();
  if (n_fft == 0 || (n_fft & (n_fft - 1)) != 0)
    fail(ErrorKind::config, "n_fft must be a power of two");
  if (n_fft < cfg.window_samples()) fail(ErrorKind::config, "n_fft shorter than the window");

  const auto edges = mel_edges(cfg);
  const std::size_t bins = n_fft / 2 + 1;
  Eigen::MatrixXd fb = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.n_mels),
                                             static_cast<Eigen::Index>(bins));
  for (std::size_t m = 0; m < cfg.n_mels; ++m) {
    const double lo = edges[m], centre = edges[m + 1], hi = edges[m + 2];
    for (std::size_t k = 0; k < bins; ++k) {
      const double f = static_cast<double>(k) * cfg.sample_rate / static_cast<double>(n_fft);
      const double w = std::min((f - lo) / (centre - lo), (hi - f) / (hi - centre));
      if (w > 0.0) fb(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(k)) = w;
    }
    if (!(fb.row(static_cast<Eigen::Index>(m)).sum() > 0.0))
      fail(ErrorKind::config, "mel filter " + std::to_string(m) +
                                  " covers no FFT bin; too many mel bands for n_fft " +
                                  std::to_string(n_fft));
  }
  return fb;
}

Eigen::MatrixXd dct_matrix(std::size_t n_out, std::size_t n_in) {
  Eigen::MatrixXd d(static_cast<Eigen::Index>(n_out), static_cast<Eigen::Index>(n_in));
  const double n = static_cast<double>(n_in);
  for (std::size_t k = 0; k < n_out; ++k) {
    const double s = k == 0 ? std::sqrt(1.0 / n) : std::sqrt(2.0 / n);
    for (std::size_t i = 0; i < n_in; ++i)
      d(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          s * std::cos(std::numbers::pi * static_cast<double>(k) *
                       (2.0 * static_cast<double>(i) + 1.0) / (2.0 * n));
  }
  return d;
}

Eigen::VectorXd hann_window(std::size_t length) {
  Eigen::VectorXd w(static_cast<Eigen::Index>(length));
  if (length == 1) {
    w(0) = 1.0;
    return w;
  }
  for (std::size_t i = 0; i < length; ++i)
    w(static_cast<Eigen::Index>(i)) =
        0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                             static_cast<double>(length - 1));
  return w;
}

Eigen::VectorXd power_spectrum(std::span<const double> frame, std::size_t n_fft) {
  if (frame.size() > n_fft) fail(ErrorKind::validation, "frame longer than n_fft");
  std::vector<double> padded(n_fft, 0.0);
  std::copy(frame.begin(), frame.end(), padded.begin());
  Eigen::FFT<double> fft;
  fft.SetFlag(Eigen::FFT<double>::HalfSpectrum);
  std::vector<std::complex<double>> spectrum;
  fft.fwd(spectrum, padded);
  Eigen::VectorXd power(static_cast<Eigen::Index>(n_fft / 2 + 1));
  for (Eigen::Index k = 0; k < power.size(); ++k)
    power(k) = std::norm(spectrum[static_cast<std::size_t>(k)]);
  return power;
}

Eigen::MatrixXd mfcc(std::span<const double> audio, const AcousticConfig& cfg) {
  cfg.validate();
  const std::size_t window = cfg.window_samples();
  const std::size_t hop = cfg.hop_samples();
  if (audio.size() < window)
    fail(ErrorKind::validation, "audio shorter than one analysis window");

  const std::size_t n_fft = fft_size_for(cfg);
  const Eigen::MatrixXd fb = mel_filterbank(cfg, n_fft);
  const Eigen::MatrixXd dct = dct_matrix(cfg.n_coeffs, cfg.n_mels);
  const Eigen::VectorXd hann = hann_window(window);

  const std::size_t frames = 1 + (audio.size() - window) / hop;
  Eigen::MatrixXd out(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(cfg.n_coeffs));
  std::vector<double> frame(window);
  for (std::size_t t = 0; t < frames; ++t) {
    for (std::size_t i = 0; i < window; ++i)
      frame[i] = audio[t * hop + i] * hann(static_cast<Eigen::Index>(i));
    const Eigen::VectorXd energies = fb * power_spectrum(frame, n_fft);
    const Eigen::VectorXd log_mel =
        energies.unaryExpr([&](double e) { return std::log(std::max(e, cfg.log_floor)); });
    out.row(static_cast<Eigen::Index>(t)) = (dct * log_mel).transpose();
  }
  return out;
}

namespace {

std::uint32_t le32(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint32_t>(b[at]) | static_cast<std::uint32_t>(b[at + 1]) << 8 |
         static_cast<std::uint32_t>(b[at + 2]) << 16 | static_cast<std::uint32_t>(b[at + 3]) << 24;
}

std::uint16_t le16(const std::vector<std::uint8_t>& b, std::size_t at) {
  return static_cast<std::uint16_t>(b[at] | b[at + 1] << 8);
}

void put32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put16(std::vector<std::uint8_t>& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

}  // namespace

WavAudio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::validation, "cannot open " + path.string());
  const std::vector<std::uint8_t> b{std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>()};
  auto tag = [&](std::size_t at, const char* s) {
    return at + 4 <= b.size() && std::equal(s, s + 4, b.begin() + static_cast<long>(at),
                                            [](char c, std::uint8_t u) {
                                              return static_cast<std::uint8_t>(c) == u;
                                            });
  };
  if (!tag(0, "RIFF") || !tag(8, "WAVE")) fail(ErrorKind::unsupported_format, "not a RIFF/WAVE file");

  WavAudio audio;
  bool have_fmt = false;
  std::size_t at = 12;
  while (at + 8 <= b.size()) {
    const std::uint32_t size = le32(b, at + 4);
    const std::size_t body = at + 8;
    if (body + size > b.size()) fail(ErrorKind::length, "truncated WAV chunk");
    if (tag(at, "fmt ")) {
      if (size < 16) fail(ErrorKind::unsupported_format, "short fmt chunk");
      const std::uint16_t format = le16(b, body);
      const std::uint16_t channels = le16(b, body + 2);
      const std::uint16_t bits = le16(b, body + 14);
      if (format != 1 || channels != 1 || bits != 16)
        fail(ErrorKind::unsupported_format, "only 16-bit PCM mono WAV is supported");
      audio.sample_rate = le32(b, body + 4);
      have_fmt = true;
    } else if (tag(at, "data")) {
      if (!have_fmt) fail(ErrorKind::unsupported_format, "data chunk before fmt chunk");
      audio.samples.resize(size / 2);
      for (std::size_t i = 0; i < audio.samples.size(); ++i)
        audio.samples[i] = static_cast<std::int16_t>(le16(b, body + 2 * i)) / 32768.0;
      return audio;
    }
    at = body + size + (size & 1u);
  }
  fail(ErrorKind::unsupported_format, "WAV file has no data chunk");
}

void write_wav(const std::filesystem::path& path, const WavAudio& audio) {
  std::vector<std::uint8_t> b;
  const auto data_bytes = static_cast<std::uint32_t>(audio.samples.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, 1);
  put16(b, 1);
  put32(b, audio.sample_rate);
  put32(b, audio.sample_rate * 2);
  put16(b, 2);
  put16(b, 16);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_bytes);
  for (double s : audio.samples) {
    const long q = std::lround(std::clamp(s, -1.0, 32767.0 / 32768.0) * 32768.0);
    put16(b, static_cast<std::uint16_t>(static_cast<std::int16_t>(q)));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorKind::io, "cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace com2s::acoustic
