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
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "com2s/corpus.hpp"
#include "com2s/phonemics.hpp"

namespace com2s::transduce {

/// Shape of the transduction network: conv blocks that downsample the EMG to
/// the acoustic frame rate, a session embedding, pre-norm self-attention
/// layers, and two linear heads (acoustic features, phoneme posteriors).
struct ModelConfig {
  std::size_t channels = 8;
  std::size_t conv_blocks = 3;
  std::size_t downsample_per_block = 2;
  std::size_t kernel_size = 5;
  std::size_t attention_layers = 2;
  std::size_t hidden_dim = 64;
  std::size_t heads = 4;
  std::size_t ffn_dim = 128;
  std::size_t n_sessions = 4;
  std::size_t session_dim = 8;
  std::size_t n_coeffs = 13;
  std::size_t n_phonemes = 12;
  std::uint32_t sample_rate = 800;  // EMG rate the model expects
  std::uint64_t seed = 0;

  std::size_t total_downsample() const;
  void validate() const;
  bool operator==(const ModelConfig&) const = default;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 8;
  std::size_t epochs = 10;
  double loss_mix_lambda = 0.5;  // weight of the phoneme cross-entropy
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ForwardOutput {
  Eigen::MatrixXd acoustic;  // frames x n_coeffs
  phonemics::PhonemePosteriors posteriors;
};

/// Raw per-utterance sums; callers turn them into means.
struct LossSums {
  double squared_error = 0.0;  // over frames and coefficients
  double cross_entropy = 0.0;  // over frames
  std::size_t frames = 0;
};

class Model {
 public:
  explicit Model(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  std::span<const double> parameters() const { return params_; }
  std::span<double> parameters() { return params_; }
  std::size_t parameter_count() const { return params_.size(); }

  /// Per-channel statistics applied to the EMG before the first conv block.
  const Eigen::VectorXd& input_mean() const { return input_mean_; }
  const Eigen::VectorXd& input_std() const { return input_std_; }
  void set_input_normalization(const Eigen::VectorXd& mean, const Eigen::VectorXd& stddev);

  /// emg is channels x n_samples at config().sample_rate.
  ForwardOutput forward(const Eigen::MatrixXd& emg, std::uint32_t session) const;

  /// Adds d(w_acoustic * SSE + w_phoneme * CE)/d(theta) into grad and
  /// returns the unweighted sums.
  LossSums accumulate_gradient(const Eigen::MatrixXd& emg, std::uint32_t session,
                               std::span<const int> labels, const corpus::FeatureMatrix& target,
                               double w_acoustic, double w_phoneme, std::span<double> grad) const;

  /// Loss sums without gradient.
  LossSums evaluate(const Eigen::MatrixXd& emg, std::uint32_t session, std::span<const int> labels,
                    const corpus::FeatureMatrix& target) const;

  /// Rounds parameters and normalization to binary32 so checkpoints round-trip exactly.
  void round_to_float();

  struct TensorInfo {
    std::string name;
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::size_t size() const { return rows * cols; }
  };
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  const TensorInfo& tensor(const std::string& name) const;

  bool same_weights(const Model& other) const;

 private:
  struct Cache;

  void build_layout();
  void initialize();
  void run(const Eigen::MatrixXd& emg, std::uint32_t session, Cache& cache) const;
  void check_input(const Eigen::MatrixXd& emg, std::uint32_t session) const;

  ModelConfig config_;
  std::vector<double> params_;
  std::vector<TensorInfo> tensors_;
  Eigen::VectorXd input_mean_;
  Eigen::VectorXd input_std_;
};

struct TrainResult {
  Model model;
  std::vector<double> loss_history;        // mean batch loss per epoch
  std::vector<double> validation_history;  // per epoch, when a validation set is given
};

/// Mixed objective (1 - lambda) * MSE + lambda * mean frame cross-entropy.
double mixed_loss(const LossSums& sums, std::size_t n_coeffs, double lambda);

/// Trains from scratch when init is null, otherwise continues from a copy of
/// *init with a fresh optimizer. Shuffling is seeded by tc.seed; batches are
/// processed serially so the result is deterministic.
TrainResult train(const Model* init, const corpus::DatasetManifest& manifest,
                  const corpus::UtteranceStore& store, const TrainConfig& tc,
                  const ModelConfig& mc, const corpus::DatasetManifest* validation = nullptr);

/// Mixed loss of a model over a manifest (frame-weighted).
double dataset_loss(const Model& model, const corpus::DatasetManifest& manifest,
                    const corpus::UtteranceStore& store, double lambda);

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  bool finite = true;
};

/// Central differences on a stratified random subset of at least n_params
/// parameters; relative error uses max(|a|, |g|, 1e-8) as denominator.
GradCheckResult grad_check(const Model& model, const corpus::Utterance& utterance,
                           double lambda = 0.5, std::size_t n_params = 128,
                           std::uint64_t seed = 0, double step = 1e-4);

// "CM2S" | u32 version | config block | normalization | u64 count | f32 params, all LE.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path, const ModelConfig& expected);
std::vector<std::uint8_t> encode_model(const Model& model);
Model decode_model(std::span<const std::uint8_t> bytes);

}  // namespace com2s::transduce
