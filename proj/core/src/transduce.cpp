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

#include "com2s/transduce.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "com2s/emgsig.hpp"
#include "com2s/error.hpp"

namespace com2s::transduce {

namespace {

using Mat = Eigen::MatrixXd;
using CMap = Eigen::Map<const Mat>;
using MMap = Eigen::Map<Mat>;

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)
constexpr double kGeluA = 0.044715;
constexpr double kLayerNormEps = 1e-5;
constexpr std::size_t kTensorsPerLayer = 16;

double gelu(double z) { return 0.5 * z * (1.0 + std::tanh(kGeluC * (z + kGeluA * z * z * z))); }

double gelu_grad(double z) {
  const double t = std::tanh(kGeluC * (z + kGeluA * z * z * z));
  return 0.5 * (1.0 + t) + 0.5 * z * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * z * z);
}

struct LnCache {
  Mat xhat;
  Eigen::VectorXd inv_std;
};

Mat layer_norm(const Mat& x, const CMap& gain, const CMap& bias, LnCache& cache) {
  const Eigen::VectorXd mean = x.rowwise().mean();
  Mat centered = x.colwise() - mean;
  const Eigen::VectorXd var = centered.array().square().rowwise().mean();
  cache.inv_std = (var.array() + kLayerNormEps).rsqrt();
  cache.xhat = centered.array().colwise() * cache.inv_std.array();
  Mat y = cache.xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

Mat layer_norm_backward(const Mat& dy, const CMap& gain, const LnCache& cache, MMap dgain,
                        MMap dbias) {
  dgain.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias.row(0) += dy.colwise().sum();
  const Mat du = dy.array().rowwise() * gain.row(0).array();
  const Eigen::VectorXd mean_du = du.rowwise().mean();
  const Eigen::VectorXd mean_du_xhat = (du.array() * cache.xhat.array()).rowwise().mean();
  Mat dx = du.colwise() - mean_du;
  dx -= (cache.xhat.array().colwise() * mean_du_xhat.array()).matrix();
  return dx.array().colwise() * cache.inv_std.array();
}

void softmax_rows(Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const double top = m.row(r).maxCoeff();
    m.row(r) = (m.row(r).array() - top).exp();
    m.row(r) /= m.row(r).sum();
  }
}

// Same-padded im2col: row t holds input rows t - pad .. t + pad side by side.
Mat im2col(const Mat& a, std::size_t kernel) {
  const Eigen::Index n = a.rows(), c = a.cols();
  const auto pad = static_cast<Eigen::Index>(kernel / 2);
  Mat col = Mat::Zero(n, static_cast<Eigen::Index>(kernel) * c);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(kernel); ++j) {
    const Eigen::Index shift = j - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(n, n - shift);
    if (t1 > t0) col.block(t0, j * c, t1 - t0, c) = a.block(t0 + shift, 0, t1 - t0, c);
  }
  return col;
}

Mat col2im(const Mat& dcol, std::size_t kernel, Eigen::Index channels) {
  const Eigen::Index n = dcol.rows();
  const auto pad = static_cast<Eigen::Index>(kernel / 2);
  Mat da = Mat::Zero(n, channels);
  for (Eigen::Index j = 0; j < static_cast<Eigen::Index>(kernel); ++j) {
    const Eigen::Index shift = j - pad;
    const Eigen::Index t0 = std::max<Eigen::Index>(0, -shift);
    const Eigen::Index t1 = std::min<Eigen::Index>(n, n - shift);
    if (t1 > t0) da.block(t0 + shift, 0, t1 - t0, channels) += dcol.block(t0, j * channels, t1 - t0, channels);
  }
  return da;
}

Mat avg_pool(const Mat& h, std::size_t factor) {
  const auto f = static_cast<Eigen::Index>(factor);
  const Eigen::Index m = h.rows() / f;
  Mat out(m, h.cols());
  for (Eigen::Index t = 0; t < m; ++t) out.row(t) = h.middleRows(t * f, f).colwise().mean();
  return out;
}

Mat avg_pool_backward(const Mat& dout, std::size_t factor, Eigen::Index rows) {
  const auto f = static_cast<Eigen::Index>(factor);
  Mat dh = Mat::Zero(rows, dout.cols());
  for (Eigen::Index t = 0; t < dout.rows(); ++t)
    for (Eigen::Index i = 0; i < f; ++i) dh.row(t * f + i) = dout.row(t) / static_cast<double>(f);
  return dh;
}

// Tensor positions in the flat layout.
std::size_t conv_w(std::size_t b) { return 2 * b; }
std::size_t conv_b(std::size_t b) { return 2 * b + 1; }
std::size_t session_table(const ModelConfig& c) { return 2 * c.conv_blocks; }
std::size_t session_proj(const ModelConfig& c) { return 2 * c.conv_blocks + 1; }
std::size_t layer_base(const ModelConfig& c, std::size_t l) {
  return 2 * c.conv_blocks + 2 + kTensorsPerLayer * l;
}
enum LayerSlot { kLn1G, kLn1B, kWq, kBq, kWk, kBk, kWv, kBv, kWo, kBo, kLn2G, kLn2B, kW1, kB1, kW2, kB2 };
std::size_t head_base(const ModelConfig& c) { return layer_base(c, c.attention_layers); }
enum HeadSlot { kLnfG, kLnfB, kWa, kBa, kWp, kBp };

}  // namespace

std::size_t ModelConfig::total_downsample() const {
  std::size_t total = 1;
  for (std::size_t b = 0; b < conv_blocks; ++b) total *= downsample_per_block;
  return total;
}

void ModelConfig::validate() const {
  if (channels == 0) fail(ErrorKind::config, "model needs at least one input channel");
  if (downsample_per_block == 0) fail(ErrorKind::config, "downsample factor must be positive");
  if (kernel_size == 0 || kernel_size % 2 == 0) fail(ErrorKind::config, "kernel_size must be odd");
  if (hidden_dim == 0 || heads == 0 || hidden_dim % heads != 0)
    fail(ErrorKind::config, "hidden_dim must be divisible by the head count");
  if (ffn_dim == 0 || session_dim == 0) fail(ErrorKind::config, "ffn_dim and session_dim must be positive");
  if (n_sessions == 0) fail(ErrorKind::config, "need at least one session");
  if (n_coeffs == 0 || n_phonemes < 2) fail(ErrorKind::config, "need acoustic coefficients and >= 2 phonemes");
  if (sample_rate == 0) fail(ErrorKind::config, "sample_rate must be positive");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) fail(ErrorKind::config, "learning_rate must be positive");
  if (batch_size == 0) fail(ErrorKind::config, "batch_size must be positive");
  if (!(loss_mix_lambda >= 0.0 && loss_mix_lambda <= 1.0))
    fail(ErrorKind::config, "loss_mix_lambda must lie in [0, 1]");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) || !(epsilon > 0.0))
    fail(ErrorKind::config, "invalid Adam hyperparameters");
}

struct Model::Cache {
  std::vector<Mat> conv_col;
  std::vector<Mat> conv_z;
  std::vector<Eigen::Index> conv_rows;
  struct Layer {
    LnCache ln1;
    Mat u, q, k, v;
    std::vector<Mat> attn;
    Mat o;
    LnCache ln2;
    Mat u2, f1, g;
  };
  std::vector<Layer> layers;
  LnCache lnf;
  Mat uf;
  Mat acoustic;
  Mat logits;
  Mat probs;
};

Model::Model(const ModelConfig& config) : config_(config) {
  config_.validate();
  build_layout();
  initialize();
}

void Model::build_layout() {
  const auto& c = config_;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    tensors_.push_back({std::move(name), offset, rows, cols});
    offset += rows * cols;
  };
  for (std::size_t b = 0; b < c.conv_blocks; ++b) {
    const std::size_t in = b == 0 ? c.channels : c.hidden_dim;
    add("conv" + std::to_string(b) + ".weight", c.kernel_size * in, c.hidden_dim);
    add("conv" + std::to_string(b) + ".bias", 1, c.hidden_dim);
  }
  add("session.table", c.n_sessions, c.session_dim);
  add("session.proj", c.session_dim, c.hidden_dim);
  const std::size_t h = c.hidden_dim, f = c.ffn_dim;
  for (std::size_t l = 0; l < c.attention_layers; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    add(p + "ln1.gain", 1, h);
    add(p + "ln1.bias", 1, h);
    add(p + "attn.wq", h, h);
    add(p + "attn.bq", 1, h);
    add(p + "attn.wk", h, h);
    add(p + "attn.bk", 1, h);
    add(p + "attn.wv", h, h);
    add(p + "attn.bv", 1, h);
    add(p + "attn.wo", h, h);
    add(p + "attn.bo", 1, h);
    add(p + "ln2.gain", 1, h);
    add(p + "ln2.bias", 1, h);
    add(p + "ffn.w1", h, f);
    add(p + "ffn.b1", 1, f);
    add(p + "ffn.w2", f, h);
    add(p + "ffn.b2", 1, h);
  }
  add("final_ln.gain", 1, h);
  add("final_ln.bias", 1, h);
  add("acoustic_head.weight", h, c.n_coeffs);
  add("acoustic_head.bias", 1, c.n_coeffs);
  add("phoneme_head.weight", h, c.n_phonemes);
  add("phoneme_head.bias", 1, c.n_phonemes);
  params_.assign(offset, 0.0);
}

void Model::initialize() {
  std::mt19937_64 rng(config_.seed);
  for (const auto& t : tensors_) {
    const bool is_bias = t.rows == 1;
    const bool is_gain = t.name.ends_with(".gain");
    for (std::size_t i = 0; i < t.size(); ++i) {
      double v = 0.0;
      if (is_gain) {
        v = 1.0;
      } else if (!is_bias) {
        const double limit = std::sqrt(6.0 / static_cast<double>(t.rows + t.cols));
        v = std::uniform_real_distribution<double>(-limit, limit)(rng);
      }
      params_[t.offset + i] = v;
    }
  }
  input_mean_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(config_.channels));
  input_std_ = Eigen::VectorXd::Ones(static_cast<Eigen::Index>(config_.channels));
  round_to_float();
}

const Model::TensorInfo& Model::tensor(const std::string& name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  fail(ErrorKind::validation, "no tensor named '" + name + "'");
}

void Model::set_input_normalization(const Eigen::VectorXd& mean, const Eigen::VectorXd& stddev) {
  if (mean.size() != static_cast<Eigen::Index>(config_.channels) || stddev.size() != mean.size())
    fail(ErrorKind::validation, "normalization size does not match channel count");
  for (Eigen::Index c = 0; c < stddev.size(); ++c)
    if (!(stddev(c) > 0.0))
      fail(ErrorKind::degenerate_channel, "channel " + std::to_string(c) + " has zero variance");
  input_mean_ = mean;
  input_std_ = stddev;
}

void Model::round_to_float() {
  auto snap = [](double v) { return static_cast<double>(static_cast<float>(v)); };
  for (auto& p : params_) p = snap(p);
  input_mean_ = input_mean_.unaryExpr(snap);
  input_std_ = input_std_.unaryExpr(snap);
}

bool Model::same_weights(const Model& other) const {
  return config_ == other.config_ && params_ == other.params_ &&
         input_mean_ == other.input_mean_ && input_std_ == other.input_std_;
}

void Model::check_input(const Eigen::MatrixXd& emg, std::uint32_t session) const {
  if (session >= config_.n_sessions)
    fail(ErrorKind::validation, "session " + std::to_string(session) + " unknown to the model");
  if (emg.rows() != static_cast<Eigen::Index>(config_.channels))
    fail(ErrorKind::validation, "EMG has " + std::to_string(emg.rows()) + " channels, model expects " +
                                    std::to_string(config_.channels));
  if (static_cast<std::size_t>(emg.cols()) < config_.total_downsample())
    fail(ErrorKind::validation, "EMG shorter than the total downsampling factor");
}

void Model::run(const Eigen::MatrixXd& emg, std::uint32_t session, Cache& cache) const {
  check_input(emg, session);
  const auto& c = config_;
  const double* base = params_.data();
  auto view = [&](std::size_t i) {
    const auto& t = tensors_[i];
    return CMap(base + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  };

  Mat a = ((emg.colwise() - input_mean_).array().colwise() / input_std_.array()).matrix().transpose();
  cache.conv_col.resize(c.conv_blocks);
  cache.conv_z.resize(c.conv_blocks);
  cache.conv_rows.resize(c.conv_blocks);
  for (std::size_t b = 0; b < c.conv_blocks; ++b) {
    cache.conv_rows[b] = a.rows();
    cache.conv_col[b] = im2col(a, c.kernel_size);
    Mat z = cache.conv_col[b] * view(conv_w(b));
    z.rowwise() += view(conv_b(b)).row(0);
    cache.conv_z[b] = z;
    a = avg_pool(z.unaryExpr(&gelu), c.downsample_per_block);
  }

  const Eigen::RowVectorXd session_vec =
      view(session_table(c)).row(static_cast<Eigen::Index>(session)) * view(session_proj(c));
  Mat x = a;
  x.rowwise() += session_vec;

  const std::size_t dh = c.hidden_dim / c.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  cache.layers.resize(c.attention_layers);
  for (std::size_t l = 0; l < c.attention_layers; ++l) {
    auto& lc = cache.layers[l];
    const std::size_t lb = layer_base(c, l);
    lc.u = layer_norm(x, view(lb + kLn1G), view(lb + kLn1B), lc.ln1);
    lc.q = lc.u * view(lb + kWq);
    lc.q.rowwise() += view(lb + kBq).row(0);
    lc.k = lc.u * view(lb + kWk);
    lc.k.rowwise() += view(lb + kBk).row(0);
    lc.v = lc.u * view(lb + kWv);
    lc.v.rowwise() += view(lb + kBv).row(0);
    lc.o.resize(x.rows(), static_cast<Eigen::Index>(c.hidden_dim));
    lc.attn.resize(c.heads);
    for (std::size_t h = 0; h < c.heads; ++h) {
      const auto col0 = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      Mat s = (lc.q.middleCols(col0, w) * lc.k.middleCols(col0, w).transpose()) * scale;
      softmax_rows(s);
      lc.o.middleCols(col0, w) = s * lc.v.middleCols(col0, w);
      lc.attn[h] = std::move(s);
    }
    Mat x1 = x + lc.o * view(lb + kWo);
    x1.rowwise() += view(lb + kBo).row(0);
    lc.u2 = layer_norm(x1, view(lb + kLn2G), view(lb + kLn2B), lc.ln2);
    lc.f1 = lc.u2 * view(lb + kW1);
    lc.f1.rowwise() += view(lb + kB1).row(0);
    lc.g = lc.f1.unaryExpr(&gelu);
    x = x1 + lc.g * view(lb + kW2);
    x.rowwise() += view(lb + kB2).row(0);
  }

  const std::size_t hb = head_base(c);
  cache.uf = layer_norm(x, view(hb + kLnfG), view(hb + kLnfB), cache.lnf);
  cache.acoustic = cache.uf * view(hb + kWa);
  cache.acoustic.rowwise() += view(hb + kBa).row(0);
  cache.logits = cache.uf * view(hb + kWp);
  cache.logits.rowwise() += view(hb + kBp).row(0);
  cache.probs = cache.logits;
  softmax_rows(cache.probs);
}

ForwardOutput Model::forward(const Eigen::MatrixXd& emg, std::uint32_t session) const {
  Cache cache;
  run(emg, session, cache);
  return {std::move(cache.acoustic), phonemics::PhonemePosteriors{std::move(cache.probs)}};
}

namespace {

LossSums loss_sums(const Mat& acoustic, const Mat& logits, std::span<const int> labels,
                   const corpus::FeatureMatrix& target) {
  const Eigen::Index frames = acoustic.rows();
  if (static_cast<Eigen::Index>(labels.size()) != frames || target.rows() != frames ||
      target.cols() != acoustic.cols())
    fail(ErrorKind::validation, "targets have " + std::to_string(labels.size()) +
                                    " frames but the model produced " + std::to_string(frames));
  LossSums sums;
  sums.frames = static_cast<std::size_t>(frames);
  sums.squared_error = (acoustic - target.cast<double>()).squaredNorm();
  for (Eigen::Index t = 0; t < frames; ++t) {
    const int y = labels[static_cast<std::size_t>(t)];
    if (y < 0 || y >= logits.cols()) fail(ErrorKind::validation, "phoneme label out of range");
    const double top = logits.row(t).maxCoeff();
    const double lse = top + std::log((logits.row(t).array() - top).exp().sum());
    sums.cross_entropy += lse - logits(t, y);
  }
  return sums;
}

}  // namespace

LossSums Model::evaluate(const Eigen::MatrixXd& emg, std::uint32_t session,
                         std::span<const int> labels, const corpus::FeatureMatrix& target) const {
  Cache cache;
  run(emg, session, cache);
  return loss_sums(cache.acoustic, cache.logits, labels, target);
}

LossSums Model::accumulate_gradient(const Eigen::MatrixXd& emg, std::uint32_t session,
                                    std::span<const int> labels, const corpus::FeatureMatrix& target,
                                    double w_acoustic, double w_phoneme, std::span<double> grad) const {
  if (grad.size() != params_.size()) fail(ErrorKind::validation, "gradient buffer size mismatch");
  Cache cache;
  run(emg, session, cache);
  const LossSums sums = loss_sums(cache.acoustic, cache.logits, labels, target);

  const auto& c = config_;
  const double* base = params_.data();
  auto view = [&](std::size_t i) {
    const auto& t = tensors_[i];
    return CMap(base + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  };
  auto gview = [&](std::size_t i) {
    const auto& t = tensors_[i];
    return MMap(grad.data() + t.offset, static_cast<Eigen::Index>(t.rows), static_cast<Eigen::Index>(t.cols));
  };

  const Mat d_acoustic = (2.0 * w_acoustic) * (cache.acoustic - target.cast<double>());
  Mat d_logits = cache.probs;
  for (Eigen::Index t = 0; t < d_logits.rows(); ++t) d_logits(t, labels[static_cast<std::size_t>(t)]) -= 1.0;
  d_logits *= w_phoneme;

  const std::size_t hb = head_base(c);
  gview(hb + kWa).noalias() += cache.uf.transpose() * d_acoustic;
  gview(hb + kBa).row(0) += d_acoustic.colwise().sum();
  gview(hb + kWp).noalias() += cache.uf.transpose() * d_logits;
  gview(hb + kBp).row(0) += d_logits.colwise().sum();
  Mat d_uf = d_acoustic * view(hb + kWa).transpose() + d_logits * view(hb + kWp).transpose();
  Mat dx = layer_norm_backward(d_uf, view(hb + kLnfG), cache.lnf, gview(hb + kLnfG), gview(hb + kLnfB));

  const std::size_t dh = c.hidden_dim / c.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  for (std::size_t li = c.attention_layers; li-- > 0;) {
    const auto& lc = cache.layers[li];
    const std::size_t lb = layer_base(c, li);

    // Feed-forward residual branch.
    gview(lb + kW2).noalias() += lc.g.transpose() * dx;
    gview(lb + kB2).row(0) += dx.colwise().sum();
    const Mat d_g = dx * view(lb + kW2).transpose();
    const Mat d_f1 = d_g.array() * lc.f1.unaryExpr(&gelu_grad).array();
    gview(lb + kW1).noalias() += lc.u2.transpose() * d_f1;
    gview(lb + kB1).row(0) += d_f1.colwise().sum();
    const Mat d_u2 = d_f1 * view(lb + kW1).transpose();
    const Mat dx1 = dx + layer_norm_backward(d_u2, view(lb + kLn2G), lc.ln2, gview(lb + kLn2G),
                                             gview(lb + kLn2B));

    // Attention residual branch.
    gview(lb + kWo).noalias() += lc.o.transpose() * dx1;
    gview(lb + kBo).row(0) += dx1.colwise().sum();
    const Mat d_o = dx1 * view(lb + kWo).transpose();
    Mat d_q(lc.q.rows(), lc.q.cols()), d_k(lc.k.rows(), lc.k.cols()), d_v(lc.v.rows(), lc.v.cols());
    for (std::size_t h = 0; h < c.heads; ++h) {
      const auto col0 = static_cast<Eigen::Index>(h * dh);
      const auto w = static_cast<Eigen::Index>(dh);
      const Mat& p = lc.attn[h];
      const Mat d_oh = d_o.middleCols(col0, w);
      const Mat d_p = d_oh * lc.v.middleCols(col0, w).transpose();
      d_v.middleCols(col0, w) = p.transpose() * d_oh;
      const Eigen::VectorXd row_dot = (d_p.array() * p.array()).rowwise().sum();
      const Mat d_s = (p.array() * (d_p.colwise() - row_dot).array()).matrix() * scale;
      d_q.middleCols(col0, w) = d_s * lc.k.middleCols(col0, w);
      d_k.middleCols(col0, w) = d_s.transpose() * lc.q.middleCols(col0, w);
    }
    gview(lb + kWq).noalias() += lc.u.transpose() * d_q;
    gview(lb + kBq).row(0) += d_q.colwise().sum();
    gview(lb + kWk).noalias() += lc.u.transpose() * d_k;
    gview(lb + kBk).row(0) += d_k.colwise().sum();
    gview(lb + kWv).noalias() += lc.u.transpose() * d_v;
    gview(lb + kBv).row(0) += d_v.colwise().sum();
    const Mat d_u = d_q * view(lb + kWq).transpose() + d_k * view(lb + kWk).transpose() +
                    d_v * view(lb + kWv).transpose();
    dx = dx1 + layer_norm_backward(d_u, view(lb + kLn1G), lc.ln1, gview(lb + kLn1G), gview(lb + kLn1B));
  }

  // Session embedding was broadcast over frames.
  const Eigen::RowVectorXd d_session = dx.colwise().sum();
  const auto s = static_cast<Eigen::Index>(session);
  gview(session_proj(c)).noalias() +=
      view(session_table(c)).row(s).transpose() * d_session;
  gview(session_table(c)).row(s) += d_session * view(session_proj(c)).transpose();

  Mat da = dx;
  for (std::size_t b = c.conv_blocks; b-- > 0;) {
    const Mat d_h = avg_pool_backward(da, c.downsample_per_block, cache.conv_rows[b]);
    const Mat d_z = d_h.array() * cache.conv_z[b].unaryExpr(&gelu_grad).array();
    gview(conv_w(b)).noalias() += cache.conv_col[b].transpose() * d_z;
    gview(conv_b(b)).row(0) += d_z.colwise().sum();
    if (b > 0) {
      const Mat d_col = d_z * view(conv_w(b)).transpose();
      da = col2im(d_col, c.kernel_size, static_cast<Eigen::Index>(c.hidden_dim));
    }
  }
  return sums;
}

double mixed_loss(const LossSums& sums, std::size_t n_coeffs, double lambda) {
  if (sums.frames == 0) fail(ErrorKind::validation, "loss over zero frames");
  const double frames = static_cast<double>(sums.frames);
  const double mse = sums.squared_error / (frames * static_cast<double>(n_coeffs));
  const double ce = sums.cross_entropy / frames;
  return (1.0 - lambda) * mse + lambda * ce;
}

namespace {

struct Sample {
  const corpus::Utterance* utterance;
  Mat emg;
};

std::vector<Sample> collect(const corpus::DatasetManifest& manifest, const corpus::UtteranceStore& store,
                            const ModelConfig& mc) {
  // Id order, so training sees the utterance set rather than the manifest order.
  std::vector<const corpus::ManifestEntry*> entries;
  for (const auto& e : manifest.entries()) entries.push_back(&e);
  std::sort(entries.begin(), entries.end(), [](const auto* a, const auto* b) { return a->id < b->id; });
  std::vector<Sample> samples;
  samples.reserve(manifest.size());
  for (const auto* ep : entries) {
    const auto& e = *ep;
    const auto& u = store.get(e.id);
    if (u.emg.sample_rate != mc.sample_rate)
      fail(ErrorKind::validation, u.id + ": EMG at " + std::to_string(u.emg.sample_rate) +
                                      " Hz but the model expects " + std::to_string(mc.sample_rate) + " Hz");
    if (u.emg.n_samples() / mc.total_downsample() != u.n_frames())
      fail(ErrorKind::validation, u.id + ": frame count does not match the model frame rate");
    if (u.acoustic_target.rows() == 0 || u.phoneme_alignment.empty())
      fail(ErrorKind::validation, u.id + ": missing acoustic target or alignment");
    samples.push_back({&u, u.emg.as_double()});
  }
  return samples;
}

}  // namespace

double dataset_loss(const Model& model, const corpus::DatasetManifest& manifest,
                    const corpus::UtteranceStore& store, double lambda) {
  LossSums total;
  for (const auto& s : collect(manifest, store, model.config())) {
    const auto sums = model.evaluate(s.emg, s.utterance->emg.session_id, s.utterance->phoneme_alignment,
                                     s.utterance->acoustic_target);
    total.squared_error += sums.squared_error;
    total.cross_entropy += sums.cross_entropy;
    total.frames += sums.frames;
  }
  return mixed_loss(total, model.config().n_coeffs, lambda);
}

TrainResult train(const Model* init, const corpus::DatasetManifest& manifest,
                  const corpus::UtteranceStore& store, const TrainConfig& tc, const ModelConfig& mc,
                  const corpus::DatasetManifest* validation) {
  tc.validate();
  mc.validate();
  if (manifest.empty()) fail(ErrorKind::validation, "training manifest is empty");
  if (init && !(init->config() == mc))
    fail(ErrorKind::validation, "continuation model config does not match the requested config");

  const auto samples = collect(manifest, store, mc);
  TrainResult result{init ? *init : Model(mc), {}, {}};
  Model& model = result.model;
  if (!init) {
    emgsig::ChannelStatsAccumulator acc(mc.channels);
    for (const auto& s : samples) acc.add(s.emg);
    const auto stats = acc.finish();
    model.set_input_normalization(stats.mean, stats.stddev);
    model.round_to_float();
  }

  const std::size_t n = model.parameter_count();
  std::vector<double> grad(n), m(n, 0.0), v(n, 0.0);
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(tc.seed);
  const double lambda = tc.loss_mix_lambda;
  const auto n_coeffs = static_cast<double>(mc.n_coeffs);
  std::size_t step = 0;

  for (std::size_t epoch = 0; epoch < tc.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
      const std::size_t stop = std::min(order.size(), start + tc.batch_size);
      std::size_t frames = 0;
      for (std::size_t i = start; i < stop; ++i) frames += samples[order[i]].utterance->n_frames();
      const double w_acoustic = (1.0 - lambda) / (static_cast<double>(frames) * n_coeffs);
      const double w_phoneme = lambda / static_cast<double>(frames);

      std::fill(grad.begin(), grad.end(), 0.0);
      LossSums batch;
      for (std::size_t i = start; i < stop; ++i) {
        const auto& s = samples[order[i]];
        const auto sums = model.accumulate_gradient(s.emg, s.utterance->emg.session_id,
                                                    s.utterance->phoneme_alignment,
                                                    s.utterance->acoustic_target, w_acoustic, w_phoneme, grad);
        batch.squared_error += sums.squared_error;
        batch.cross_entropy += sums.cross_entropy;
        batch.frames += sums.frames;
      }
      epoch_loss += mixed_loss(batch, mc.n_coeffs, lambda);
      ++batches;

      ++step;
      const double c1 = 1.0 - std::pow(tc.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(tc.beta2, static_cast<double>(step));
      auto params = model.parameters();
      for (std::size_t j = 0; j < n; ++j) {
        m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * grad[j];
        v[j] = tc.beta2 * v[j] + (1.0 - tc.beta2) * grad[j] * grad[j];
        params[j] -= tc.learning_rate * (m[j] / c1) / (std::sqrt(v[j] / c2) + tc.epsilon);
      }
    }
    result.loss_history.push_back(epoch_loss / static_cast<double>(batches));
    if (validation && !validation->empty())
      result.validation_history.push_back(dataset_loss(model, *validation, store, lambda));
  }
  model.round_to_float();
  return result;
}

GradCheckResult grad_check(const Model& model, const corpus::Utterance& utterance, double lambda,
                           std::size_t n_params, std::uint64_t seed, double step) {
  const auto& c = model.config();
  const Mat emg = utterance.emg.as_double();
  const std::uint32_t session = utterance.emg.session_id;
  const auto& labels = utterance.phoneme_alignment;
  const auto& target = utterance.acoustic_target;

  const auto frames = static_cast<double>(labels.size());
  const double w_acoustic = (1.0 - lambda) / (frames * static_cast<double>(c.n_coeffs));
  const double w_phoneme = lambda / frames;
  std::vector<double> analytic(model.parameter_count(), 0.0);
  model.accumulate_gradient(emg, session, labels, target, w_acoustic, w_phoneme, analytic);

  GradCheckResult result;
  for (double g : analytic) result.finite = result.finite && std::isfinite(g);

  // Stratified so every tensor contributes.
  std::mt19937_64 rng(seed);
  const auto& tensors = model.tensors();
  const std::size_t per_tensor = (n_params + tensors.size() - 1) / tensors.size();
  std::vector<std::size_t> picks;
  for (const auto& t : tensors) {
    std::vector<std::size_t> idx(t.size());
    std::iota(idx.begin(), idx.end(), t.offset);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_tensor, idx.size()));
    picks.insert(picks.end(), idx.begin(), idx.end());
  }

  Model probe = model;
  auto params = probe.parameters();
  auto loss = [&] { return mixed_loss(probe.evaluate(emg, session, labels, target), c.n_coeffs, lambda); };
  for (std::size_t j : picks) {
    const double original = params[j];
    params[j] = original + step;
    const double plus = loss();
    params[j] = original - step;
    const double minus = loss();
    params[j] = original;
    const double numeric = (plus - minus) / (2.0 * step);
    const double a = analytic[j];
    const double denom = std::max({std::abs(a), std::abs(numeric), 1e-8});
    const double rel = std::abs(a - numeric) / denom;
    if (!std::isfinite(rel)) result.finite = false;
    result.max_relative_error = std::max(result.max_relative_error, rel);
    ++result.checked;
  }
  return result;
}

}  // namespace com2s::transduce
