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
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace com2s::acoustic {

struct AcousticConfig {
  double sample_rate = 16000.0;
  double window_s = 0.025;
  double hop_s = 0.010;
  std::size_t n_mels = 26;
  std::size_t n_coeffs = 13;
  double log_floor = 1e-10;

  std::size_t window_samples() const;
  std::size_t hop_samples() const;
  void validate() const;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Smallest power of two holding one analysis window.
std::size_t fft_size_for(const AcousticConfig& cfg);

/// Centre frequency (Hz) of every triangular filter, in filter order.
std::vector<double> mel_center_frequencies(const AcousticConfig& cfg);

/// n_mels x (n_fft / 2 + 1) triangular filters, unit peak, mel-spaced between
/// 0 Hz and Nyquist.
Eigen::MatrixXd mel_filterbank(const AcousticConfig& cfg, std::size_t n_fft);

/// Orthonormal DCT-II basis, n_out x n_in.
Eigen::MatrixXd dct_matrix(std::size_t n_out, std::size_t n_in);

/// Hann window of the given length (symmetric).
Eigen::VectorXd hann_window(std::size_t length);

/// |X_k|^2 for k = 0 .. n_fft/2 of a zero-padded real frame.
Eigen::VectorXd power_spectrum(std::span<const double> frame, std::size_t n_fft);

/// n_frames x n_coeffs with n_frames = 1 + floor((len - window) / hop).
Eigen::MatrixXd mfcc(std::span<const double> audio, const AcousticConfig& cfg);

struct WavAudio {
  std::uint32_t sample_rate = 0;
  std::vector<double> samples;  // scaled to [-1, 1)
};

/// PCM 16-bit little-endian mono only.
WavAudio read_wav(const std::filesystem::path& path);
void write_wav(const std::filesystem::path& path, const WavAudio& audio);

}  // namespace com2s::acoustic
