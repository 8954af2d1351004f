// Copyright 2026 The veilvec Authors
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

// Adversarial disentangling autoencoder.
//
//   encoder    z  = BN(ReLU(W_E x + b_E))                      (128 units)
//   decoder    x^ = length_normalize(tanh(W_D [z; w] + b_D))
//   adversary  y1 = sigmoid(W_2 ReLU(W_1 z + b_1) + b_2)       (64 hidden)
//
// Training alternates, on every mini-batch, a momentum-SGD step of the
// adversary on
//   L_adv = -(1/m) sum log q_i
// with the encoder frozen, then a momentum-SGD step of encoder+decoder on
//   L_ae  = (1/m) sum [ r(x^_i, x_i) - log(1 - q_i) ]
// with the adversary frozen. q_i is the adversary's probability of the TRUE
// class of item i, r is one minus cosine similarity, and the decoder is
// conditioned on the calibrated soft label w = y~. Protection decodes with a
// constant w (0.5 by default).
//
// Gradients are written out by hand and checked against central finite
// differences in the tests.

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "veilvec/common.hpp"
#include "veilvec/corpus.hpp"
#include "veilvec/preprocess.hpp"
#include "veilvec/privacy_metrics.hpp"
#include "veilvec/scores.hpp"

namespace veilvec {

inline constexpr Eigen::Index kLatentDim = 128;
inline constexpr Eigen::Index kAdversaryHidden = 64;
inline constexpr double kBnEpsilon = 1e-5;
inline constexpr double kProbClamp = 1e-7;

struct AeTrainConfig {
  double lr = 1e-4;
  // Per-group overrides of lr. The encoder sits behind batch normalization
  // of very small pre-activations (unit-length inputs), which multiplies its
  // effective step size by roughly 1/var(pre); a shared rate that lets the
  // decoder learn makes the encoder unstable against the adversary.
  std::optional<double> encoder_lr;
  std::optional<double> decoder_lr;
  std::optional<double> adversary_lr;
  double momentum = 0.9;
  int batch_size = 256;
  int epochs = 50;
  std::uint64_t seed = 1;
  double bn_momentum = 0.1;

  double lr_encoder() const { return encoder_lr.value_or(lr); }
  double lr_decoder() const { return decoder_lr.value_or(lr); }
  double lr_adversary() const { return adversary_lr.value_or(lr); }

  void validate() const {
    for (double v : {lr, lr_encoder(), lr_decoder(), lr_adversary()}) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("ae learning rates must be finite and >= 0");
    }
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("ae momentum must be in [0,1)");
    if (batch_size < 2) throw ConfigError("ae batch_size must be >= 2");
    if (epochs < 0) throw ConfigError("ae epochs must be >= 0");
    if (!(bn_momentum >= 0.0 && bn_momentum <= 1.0)) throw ConfigError("bn_momentum must be in [0,1]");
  }
};

/// Trainable tensors. Also used for gradients and momentum buffers.
struct AeParams {
  Matrix enc_w;     // 128 x d
  Vector enc_b;     // 128
  Vector bn_gamma;  // 128
  Vector bn_beta;   // 128
  Matrix dec_w;     // d x 129, last column multiplies w
  Vector dec_b;     // d
  Matrix adv_w1;    // 64 x 128
  Vector adv_b1;    // 64
  RowVector adv_w2;  // 1 x 64
  Vector adv_b2;    // 1
};

/// Calls fn(name, tensor_of_each_argument...) for every encoder tensor.
template <typename Fn, typename... P>
void visit_encoder(Fn&& fn, P&... p) {
  fn("enc_w", p.enc_w...);
  fn("enc_b", p.enc_b...);
  fn("bn_gamma", p.bn_gamma...);
  fn("bn_beta", p.bn_beta...);
}

template <typename Fn, typename... P>
void visit_decoder(Fn&& fn, P&... p) {
  fn("dec_w", p.dec_w...);
  fn("dec_b", p.dec_b...);
}

template <typename Fn, typename... P>
void visit_encoder_decoder(Fn&& fn, P&... p) {
  visit_encoder(fn, p...);
  visit_decoder(fn, p...);
}

template <typename Fn, typename... P>
void visit_adversary(Fn&& fn, P&... p) {
  fn("adv_w1", p.adv_w1...);
  fn("adv_b1", p.adv_b1...);
  fn("adv_w2", p.adv_w2...);
  fn("adv_b2", p.adv_b2...);
}

template <typename Fn, typename... P>
void visit_params(Fn&& fn, P&... p) {
  visit_encoder_decoder(fn, p...);
  visit_adversary(fn, p...);
}

inline AeParams zeros_like(const AeParams& p) {
  AeParams z = p;
  visit_params([](std::string_view, auto& t) { t.setZero(); }, z);
  return z;
}

struct AeModel {
  AeParams params;
  Vector bn_running_mean;  // 128
  Vector bn_running_var;   // 128, entries >= kBnEpsilon
  StandardizerStats preprocess;
  AeTrainConfig config;  // echo of the training configuration

  std::size_t input_dim() const noexcept { return static_cast<std::size_t>(params.enc_w.cols()); }
};

/// Fan-in scaled uniform initialisation (bound 1/sqrt(fan_in)), BN at
/// identity, identity preprocessing.
inline AeModel init_model(std::size_t input_dim, std::uint64_t seed) {
  if (input_dim < 1) throw ConfigError("init_model: input_dim must be positive");
  const auto d = static_cast<Eigen::Index>(input_dim);
  std::mt19937_64 rng(seed);
  auto uniform = [&](Eigen::Index rows, Eigen::Index cols, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    Matrix m(rows, cols);
    for (Eigen::Index c = 0; c < cols; ++c) {
      for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    }
    return m;
  };
  AeModel m;
  auto& p = m.params;
  p.enc_w = uniform(kLatentDim, d, static_cast<double>(d));
  p.enc_b = uniform(kLatentDim, 1, static_cast<double>(d));
  p.bn_gamma = Vector::Ones(kLatentDim);
  p.bn_beta = Vector::Zero(kLatentDim);
  p.dec_w = uniform(d, kLatentDim + 1, static_cast<double>(kLatentDim + 1));
  p.dec_b = uniform(d, 1, static_cast<double>(kLatentDim + 1));
  p.adv_w1 = uniform(kAdversaryHidden, kLatentDim, static_cast<double>(kLatentDim));
  p.adv_b1 = uniform(kAdversaryHidden, 1, static_cast<double>(kLatentDim));
  p.adv_w2 = uniform(1, kAdversaryHidden, static_cast<double>(kAdversaryHidden));
  p.adv_b2 = uniform(1, 1, static_cast<double>(kAdversaryHidden));
  m.bn_running_mean = Vector::Zero(kLatentDim);
  m.bn_running_var = Vector::Ones(kLatentDim);
  m.preprocess.mean = Vector::Zero(d);
  m.preprocess.stddev = Vector::Ones(d);
  return m;
}

/// Mini-batch in the preprocessed space: columns of x are items.
struct AeBatch {
  Matrix x;
  std::vector<int> labels;
  RowVector w;  // decoder condition per item
};

// ---------------------------------------------------------------------------
// Forward passes

enum class BnMode { train, infer };

struct EncoderCache {
  BnMode mode = BnMode::infer;
  Matrix x;
  Matrix pre;         // W_E x + b_E
  Matrix normalized;  // (ReLU(pre) - mean) * inv_std
  Matrix z;
  Vector batch_mean;
  Vector batch_var;
  Vector inv_std;
};

/// Pure forward pass. Train mode normalizes with (biased) batch statistics,
/// infer mode with the running statistics. Running statistics are not
/// touched here; see update_running_stats().
inline EncoderCache encoder_forward(const AeModel& m, const Matrix& x, BnMode mode) {
  require_dim(static_cast<std::size_t>(x.rows()), m.input_dim(), "encode");
  const auto& p = m.params;
  EncoderCache c;
  c.mode = mode;
  c.x = x;
  c.pre = (p.enc_w * x).colwise() + p.enc_b;
  const Matrix act = c.pre.cwiseMax(0.0);
  if (mode == BnMode::train) {
    if (x.cols() < 2) throw DataError("encode: train-mode batch normalization needs at least 2 items");
    c.batch_mean = act.rowwise().mean();
    c.batch_var = (act.colwise() - c.batch_mean).array().square().rowwise().mean();
    c.inv_std = (c.batch_var.array() + kBnEpsilon).rsqrt();
    c.normalized = (act.colwise() - c.batch_mean).array().colwise() * c.inv_std.array();
  } else {
    c.inv_std = (m.bn_running_var.array() + kBnEpsilon).rsqrt();
    c.normalized = (act.colwise() - m.bn_running_mean).array().colwise() * c.inv_std.array();
  }
  c.z = (c.normalized.array().colwise() * p.bn_gamma.array()).matrix().colwise() + p.bn_beta;
  return c;
}

inline void update_running_stats(AeModel& m, const EncoderCache& c, double bn_momentum) {
  if (c.mode != BnMode::train) return;
  m.bn_running_mean = (1.0 - bn_momentum) * m.bn_running_mean + bn_momentum * c.batch_mean;
  m.bn_running_var = ((1.0 - bn_momentum) * m.bn_running_var + bn_momentum * c.batch_var).cwiseMax(kBnEpsilon);
}

struct DecoderCache {
  Matrix input;  // [z; w]
  Matrix act;    // tanh(W_D input + b_D)
  RowVector norms;
  Matrix out;    // act / norms
};

inline DecoderCache decoder_forward(const AeParams& p, const Matrix& z, const RowVector& w) {
  require_dim(static_cast<std::size_t>(z.rows()), static_cast<std::size_t>(kLatentDim), "decode");
  require_dim(static_cast<std::size_t>(w.size()), static_cast<std::size_t>(z.cols()), "decode condition");
  DecoderCache c;
  c.input.resize(kLatentDim + 1, z.cols());
  c.input.topRows(kLatentDim) = z;
  c.input.row(kLatentDim) = w;
  c.act = ((p.dec_w * c.input).colwise() + p.dec_b).array().tanh();
  c.norms = c.act.colwise().norm();
  for (Eigen::Index i = 0; i < c.norms.size(); ++i) {
    if (!(c.norms(i) > 0.0)) throw NumericalError("decode: zero vector before length normalization");
  }
  c.out = c.act.array().rowwise() / c.norms.array();
  return c;
}

struct AdversaryCache {
  Matrix pre;     // W_1 z + b_1
  Matrix hidden;  // ReLU(pre)
  RowVector logit;
  RowVector prob;  // probability of class 1
};

inline AdversaryCache adversary_forward(const AeParams& p, const Matrix& z) {
  require_dim(static_cast<std::size_t>(z.rows()), static_cast<std::size_t>(kLatentDim), "adversary");
  AdversaryCache c;
  c.pre = (p.adv_w1 * z).colwise() + p.adv_b1;
  c.hidden = c.pre.cwiseMax(0.0);
  c.logit = (p.adv_w2 * c.hidden).array() + p.adv_b2(0);
  c.prob = c.logit.unaryExpr([](double l) { return sigmoid(l); });
  return c;
}

// Single-vector conveniences (inference mode).

inline Vector encode(const AeModel& m, const Vector& x) { return encoder_forward(m, x, BnMode::infer).z.col(0); }

inline Vector decode(const AeModel& m, const Vector& z, double w) {
  RowVector cond(1);
  cond(0) = w;
  return decoder_forward(m.params, z, cond).out.col(0);
}

inline double adversary_predict(const AeModel& m, const Vector& z) { return adversary_forward(m.params, z).prob(0); }

// ---------------------------------------------------------------------------
// Losses

/// 1 - cosine similarity.
inline double reconstruction_error(const Vector& xhat, const Vector& x) {
  require_dim(static_cast<std::size_t>(xhat.size()), static_cast<std::size_t>(x.size()), "reconstruction_error");
  const double nh = xhat.norm(), nx = x.norm();
  if (!(nh > 0.0) || !(nx > 0.0)) throw DataError("reconstruction_error: zero-norm input");
  return 1.0 - xhat.dot(x) / (nh * nx);
}

/// Unclamped probability of the true class.
inline double true_class_prob(double p1, int label) { return label ? p1 : 1.0 - p1; }

inline double clamp_prob(double q) { return std::clamp(q, kProbClamp, 1.0 - kProbClamp); }

inline double adversary_loss(const RowVector& prob, const std::vector<int>& labels) {
  require_dim(labels.size(), static_cast<std::size_t>(prob.size()), "adversary_loss");
  if (labels.empty()) throw DataError("adversary_loss: empty batch");
  double total = 0.0;
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    total -= std::log(clamp_prob(true_class_prob(prob(i), labels[static_cast<std::size_t>(i)])));
  }
  return total / static_cast<double>(prob.size());
}

struct AeLoss {
  double total = 0.0;
  double reconstruction = 0.0;  // mean r
  double fooling = 0.0;         // mean -log(1 - q)
};

inline AeLoss autoencoder_loss(const Matrix& xhat, const Matrix& x, const RowVector& prob,
                               const std::vector<int>& labels) {
  require_dim(labels.size(), static_cast<std::size_t>(prob.size()), "autoencoder_loss");
  if (labels.empty()) throw DataError("autoencoder_loss: empty batch");
  AeLoss l;
  const auto m = static_cast<double>(labels.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) {
    l.reconstruction += reconstruction_error(xhat.col(i), x.col(i));
    l.fooling -= std::log(1.0 - clamp_prob(true_class_prob(prob(i), labels[static_cast<std::size_t>(i)])));
  }
  l.reconstruction /= m;
  l.fooling /= m;
  l.total = l.reconstruction + l.fooling;
  return l;
}

inline void require_batch(const AeBatch& b, const AeModel& m) {
  require_dim(static_cast<std::size_t>(b.x.rows()), m.input_dim(), "ae batch");
  require_dim(b.labels.size(), static_cast<std::size_t>(b.x.cols()), "ae batch labels");
  require_dim(static_cast<std::size_t>(b.w.size()), static_cast<std::size_t>(b.x.cols()), "ae batch conditions");
  if (b.x.cols() < 2) throw DataError("ae batch: at least 2 items required");
}

/// Adversary objective on a batch, encoder in train mode (batch statistics).
inline double adversary_loss(const AeModel& m, const AeBatch& b) {
  require_batch(b, m);
  const auto enc = encoder_forward(m, b.x, BnMode::train);
  return adversary_loss(adversary_forward(m.params, enc.z).prob, b.labels);
}

/// Encoder-decoder objective on a batch, encoder in train mode.
inline AeLoss autoencoder_loss(const AeModel& m, const AeBatch& b) {
  require_batch(b, m);
  const auto enc = encoder_forward(m, b.x, BnMode::train);
  const auto dec = decoder_forward(m.params, enc.z, b.w);
  return autoencoder_loss(dec.out, b.x, adversary_forward(m.params, enc.z).prob, b.labels);
}

// ---------------------------------------------------------------------------
// Backward passes. Each accumulates parameter gradients into `g` and
// returns the gradient with respect to its input.

/// Gradients of both objectives with respect to the adversary logit. The
/// probability clamp only bounds the reported loss values: the gradient is
/// the logit-space form (p - target)/m, which equals the derivative of the
/// clamped loss wherever the clamp is inactive. Differentiating the clamp
/// itself would zero the gradient of every confidently wrong item, and the
/// fooling term drives the adversary into exactly that region.
inline RowVector adversary_loss_dlogit(const RowVector& prob, const std::vector<int>& labels) {
  const auto m = static_cast<double>(prob.size());
  RowVector d(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) d(i) = (prob(i) - labels[static_cast<std::size_t>(i)]) / m;
  return d;
}

/// Cross-entropy towards the flipped label.
inline RowVector fooling_dlogit(const RowVector& prob, const std::vector<int>& labels) {
  const auto m = static_cast<double>(prob.size());
  RowVector d(prob.size());
  for (Eigen::Index i = 0; i < prob.size(); ++i) d(i) = (prob(i) - (1 - labels[static_cast<std::size_t>(i)])) / m;
  return d;
}

inline Matrix adversary_backward(const AeParams& p, const Matrix& z, const AdversaryCache& c, const RowVector& dlogit,
                                 AeParams& g) {
  g.adv_w2.noalias() += dlogit * c.hidden.transpose();
  g.adv_b2(0) += dlogit.sum();
  const Matrix dpre = ((p.adv_w2.transpose() * dlogit).array() * (c.pre.array() > 0.0).cast<double>()).matrix();
  g.adv_w1.noalias() += dpre * z.transpose();
  g.adv_b1 += dpre.rowwise().sum();
  return p.adv_w1.transpose() * dpre;
}

/// d(mean r)/d out for r = 1 - <xhat, x>/(|xhat||x|).
inline Matrix reconstruction_dout(const Matrix& xhat, const Matrix& x) {
  const auto m = static_cast<double>(x.cols());
  Matrix d(x.rows(), x.cols());
  for (Eigen::Index i = 0; i < x.cols(); ++i) {
    const double nh = xhat.col(i).norm(), nx = x.col(i).norm();
    const double cosine = xhat.col(i).dot(x.col(i)) / (nh * nx);
    d.col(i) = -(x.col(i) / (nh * nx) - cosine * xhat.col(i) / (nh * nh)) / m;
  }
  return d;
}

inline Matrix decoder_backward(const AeParams& p, const DecoderCache& c, const Matrix& dout, AeParams& g) {
  // through the length normalization: (I - o o') dout / |act|
  const RowVector radial = (c.out.array() * dout.array()).colwise().sum();
  Matrix dact = dout - (c.out.array().rowwise() * radial.array()).matrix();
  dact = dact.array().rowwise() / c.norms.array();
  const Matrix dpre = (dact.array() * (1.0 - c.act.array().square())).matrix();
  g.dec_w.noalias() += dpre * c.input.transpose();
  g.dec_b += dpre.rowwise().sum();
  return (p.dec_w.leftCols(kLatentDim).transpose() * dpre);
}

inline void encoder_backward(const AeParams& p, const EncoderCache& c, const Matrix& dz, AeParams& g) {
  g.bn_gamma += (dz.array() * c.normalized.array()).rowwise().sum().matrix();
  g.bn_beta += dz.rowwise().sum();
  const Matrix dnorm = dz.array().colwise() * p.bn_gamma.array();
  Matrix dact;
  if (c.mode == BnMode::train) {
    const auto m = static_cast<double>(dz.cols());
    const Vector sum_dnorm = dnorm.rowwise().sum();
    const Vector sum_dnorm_norm = (dnorm.array() * c.normalized.array()).rowwise().sum();
    dact = (m * dnorm.array()).colwise() - sum_dnorm.array();
    dact -= (c.normalized.array().colwise() * sum_dnorm_norm.array()).matrix();
    dact = dact.array().colwise() * (c.inv_std.array() / m);
  } else {
    dact = dnorm.array().colwise() * c.inv_std.array();
  }
  const Matrix dpre = (dact.array() * (c.pre.array() > 0.0).cast<double>()).matrix();
  g.enc_w.noalias() += dpre * c.x.transpose();
  g.enc_b += dpre.rowwise().sum();
}

struct AdversaryGradient {
  double loss = 0.0;
  AeParams grad;  // only adversary tensors are non-zero
};

inline AdversaryGradient adversary_gradient(const AeModel& m, const AeBatch& b) {
  require_batch(b, m);
  const auto enc = encoder_forward(m, b.x, BnMode::train);
  const auto adv = adversary_forward(m.params, enc.z);
  AdversaryGradient out{adversary_loss(adv.prob, b.labels), zeros_like(m.params)};
  adversary_backward(m.params, enc.z, adv, adversary_loss_dlogit(adv.prob, b.labels), out.grad);
  return out;
}

struct AutoencoderGradient {
  AeLoss loss;
  AeParams grad;  // only encoder/decoder tensors are non-zero
};

namespace detail {

inline AutoencoderGradient autoencoder_gradient(const AeParams& p, const EncoderCache& enc, const AeBatch& b) {
  const auto dec = decoder_forward(p, enc.z, b.w);
  const auto adv = adversary_forward(p, enc.z);
  AutoencoderGradient out{autoencoder_loss(dec.out, b.x, adv.prob, b.labels), zeros_like(p)};
  AeParams scratch = zeros_like(p);  // adversary gradients are discarded: adversary frozen
  Matrix dz = adversary_backward(p, enc.z, adv, fooling_dlogit(adv.prob, b.labels), scratch);
  dz += decoder_backward(p, dec, reconstruction_dout(dec.out, b.x), out.grad);
  encoder_backward(p, enc, dz, out.grad);
  return out;
}

}  // namespace detail

inline AutoencoderGradient autoencoder_gradient(const AeModel& m, const AeBatch& b) {
  require_batch(b, m);
  return detail::autoencoder_gradient(m.params, encoder_forward(m, b.x, BnMode::train), b);
}

// ---------------------------------------------------------------------------
// Optimisation

/// Momentum buffers for both optimisers (adversary tensors belong to the
/// first, encoder/decoder tensors to the second).
struct MomentumState {
  AeParams velocity;

  static MomentumState for_model(const AeModel& m) { return {zeros_like(m.params)}; }
};

struct StepLosses {
  double adversary = 0.0;    // L_adv before the adversary update
  AeLoss autoencoder;        // L_ae with the updated adversary, before the encoder/decoder update
};

namespace detail {

template <typename Visit>
void momentum_update(Visit visit, AeParams& params, AeParams& velocity, const AeParams& grad, double lr,
                     double momentum) {
  visit(
      [&](std::string_view, auto& theta, auto& v, const auto& g) {
        v = momentum * v + g;
        theta -= lr * v;
      },
      params, velocity, grad);
}

inline bool all_finite(const AeParams& p) {
  bool ok = true;
  visit_params([&](std::string_view, const auto& t) { ok = ok && t.allFinite(); }, p);
  return ok;
}

}  // namespace detail

/// One adversarial step on a mini-batch: adversary first (encoder frozen),
/// then encoder and decoder jointly (adversary frozen), same batch.
inline StepLosses train_step(AeModel& m, const AeBatch& b, MomentumState& opt, const AeTrainConfig& cfg) {
  require_batch(b, m);
  const auto enc = encoder_forward(m, b.x, BnMode::train);
  update_running_stats(m, enc, cfg.bn_momentum);

  StepLosses losses;
  {
    const auto adv = adversary_forward(m.params, enc.z);
    losses.adversary = adversary_loss(adv.prob, b.labels);
    AeParams grad = zeros_like(m.params);
    adversary_backward(m.params, enc.z, adv, adversary_loss_dlogit(adv.prob, b.labels), grad);
    detail::momentum_update([](auto&& fn, auto&... p) { visit_adversary(fn, p...); }, m.params, opt.velocity, grad,
                            cfg.lr_adversary(), cfg.momentum);
  }
  {
    const auto g = detail::autoencoder_gradient(m.params, enc, b);
    losses.autoencoder = g.loss;
    detail::momentum_update([](auto&& fn, auto&... p) { visit_encoder(fn, p...); }, m.params, opt.velocity, g.grad,
                            cfg.lr_encoder(), cfg.momentum);
    detail::momentum_update([](auto&& fn, auto&... p) { visit_decoder(fn, p...); }, m.params, opt.velocity, g.grad,
                            cfg.lr_decoder(), cfg.momentum);
  }
  if (!std::isfinite(losses.adversary) || !std::isfinite(losses.autoencoder.total) || !detail::all_finite(m.params)) {
    throw NumericalError("train_step: non-finite state (adversary loss " + format_double(losses.adversary) +
                         ", autoencoder loss " + format_double(losses.autoencoder.total) +
                         ", reconstruction " + format_double(losses.autoencoder.reconstruction) + ")");
  }
  return losses;
}

struct EpochLog {
  int epoch = 0;
  double adversary_loss = 0.0;
  double autoencoder_loss = 0.0;
  double reconstruction = 0.0;
  std::optional<double> heldout_adversary_auc;
};

struct AeTrainResult {
  AeModel model;
  std::vector<EpochLog> log;
};

namespace detail {

inline AeBatch make_batch(const Matrix& x, const std::vector<int>& labels, const std::vector<double>& w,
                          std::span<const std::size_t> idx) {
  AeBatch b;
  b.x.resize(x.rows(), static_cast<Eigen::Index>(idx.size()));
  b.w.resize(static_cast<Eigen::Index>(idx.size()));
  b.labels.reserve(idx.size());
  for (std::size_t k = 0; k < idx.size(); ++k) {
    b.x.col(static_cast<Eigen::Index>(k)) = x.col(static_cast<Eigen::Index>(idx[k]));
    b.w(static_cast<Eigen::Index>(k)) = w[idx[k]];
    b.labels.push_back(labels[idx[k]]);
  }
  return b;
}

inline std::vector<double> require_posteriors(const Corpus& c) {
  std::vector<double> w;
  w.reserve(c.size());
  for (const auto& e : c.items()) {
    if (!e.posterior) throw DataError("ae training: item '" + e.segment_id + "' has no soft posterior");
    w.push_back(*e.posterior);
  }
  return w;
}

}  // namespace detail

/// AUC of the adversary's class-1 probability on inference-mode codes.
inline double adversary_auc(const AeModel& m, const Corpus& raw) {
  const Matrix x = preprocess(m.preprocess, raw.matrix());
  const auto enc = encoder_forward(m, x, BnMode::infer);
  const auto adv = adversary_forward(m.params, enc.z);
  std::vector<double> p(adv.prob.data(), adv.prob.data() + adv.prob.size());
  return auc(ScoreSet::from_labels(p, raw.labels()));
}

/// Trains on raw (original-space) vectors carrying soft posteriors.
/// Preprocessing statistics are fit on this corpus and stored in the model.
/// A trailing batch with fewer than 2 items is dropped.
inline AeTrainResult train_autoencoder(const Corpus& corpus, const AeTrainConfig& cfg,
                                       const Corpus* heldout = nullptr) {
  cfg.validate();
  if (!corpus.has_both_labels()) throw DataError("ae training: both labels must be present");
  const std::vector<double> w = detail::require_posteriors(corpus);
  const std::vector<int> labels = corpus.labels();

  AeTrainResult res;
  res.model = init_model(corpus.dim(), stage_seed(cfg.seed, "ae-init"));
  res.model.preprocess = fit_standardizer(corpus);
  res.model.config = cfg;
  const Matrix x = preprocess(res.model.preprocess, corpus.matrix());

  MomentumState opt = MomentumState::for_model(res.model);
  std::mt19937_64 rng(stage_seed(cfg.seed, "ae-shuffle"));
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto bs = static_cast<std::size_t>(cfg.batch_size);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    EpochLog log;
    log.epoch = epoch + 1;
    std::size_t steps = 0;
    for (std::size_t start = 0; start + 2 <= order.size(); start += bs) {
      const std::size_t len = std::min(bs, order.size() - start);
      if (len < 2) break;
      const auto batch = detail::make_batch(x, labels, w, std::span(order).subspan(start, len));
      const auto l = train_step(res.model, batch, opt, cfg);
      log.adversary_loss += l.adversary;
      log.autoencoder_loss += l.autoencoder.total;
      log.reconstruction += l.autoencoder.reconstruction;
      ++steps;
    }
    if (steps > 0) {
      log.adversary_loss /= static_cast<double>(steps);
      log.autoencoder_loss /= static_cast<double>(steps);
      log.reconstruction /= static_cast<double>(steps);
    }
    if (heldout && !heldout->empty() && heldout->has_both_labels()) {
      log.heldout_adversary_auc = adversary_auc(res.model, *heldout);
    }
    res.log.push_back(log);
  }
  return res;
}

// ---------------------------------------------------------------------------
// Protection

inline constexpr double kNeutralCondition = 0.5;

/// Protected versions of raw (original-space) column vectors, decoded with
/// per-item conditions `w`. Output columns are unit vectors in the
/// preprocessed space.
inline Matrix protect(const AeModel& m, const Matrix& raw_columns, const RowVector& w) {
  require_dim(static_cast<std::size_t>(raw_columns.rows()), m.input_dim(), "protect");
  for (Eigen::Index i = 0; i < w.size(); ++i) {
    if (!(w(i) >= 0.0 && w(i) <= 1.0)) throw ConfigError("protect: w must be in [0,1]");
  }
  const auto enc = encoder_forward(m, preprocess(m.preprocess, raw_columns), BnMode::infer);
  return decoder_forward(m.params, enc.z, w).out;
}

inline Vector protect(const AeModel& m, const Vector& raw, double w = kNeutralCondition) {
  RowVector cond(1);
  cond(0) = w;
  return protect(m, Matrix(raw), cond).col(0);
}

inline Corpus protect(const AeModel& m, const Corpus& raw, double w = kNeutralCondition) {
  return raw.with_vectors(protect(m, raw.matrix(), RowVector::Constant(static_cast<Eigen::Index>(raw.size()), w)));
}

// ---------------------------------------------------------------------------
// Model file:
//   veilvec-ae v1
//   input_dim <d>
//   config lr <v> momentum <v> batch_size <n> epochs <n> seed <n> bn_momentum <v>
//   tensor <name> <rows> <cols>
//   <row 0 values>
//   ...

namespace detail {

template <typename T>
void write_tensor(std::ostream& out, std::string_view name, const T& t) {
  out << "tensor " << name << ' ' << t.rows() << ' ' << t.cols() << '\n';
  for (Eigen::Index r = 0; r < t.rows(); ++r) {
    for (Eigen::Index c = 0; c < t.cols(); ++c) out << (c ? " " : "") << format_double(t(r, c));
    out << '\n';
  }
}

}  // namespace detail

inline void save(const AeModel& m, const std::string& path) {
  auto out = open_output(path);
  const auto& c = m.config;
  out << "veilvec-ae v1\n"
      << "input_dim " << m.input_dim() << '\n'
      << "config lr " << format_double(c.lr) << " encoder_lr " << format_double(c.lr_encoder()) << " decoder_lr "
      << format_double(c.lr_decoder()) << " adversary_lr " << format_double(c.lr_adversary()) << " momentum " << format_double(c.momentum) << " batch_size "
      << c.batch_size << " epochs " << c.epochs << " seed " << c.seed << " bn_momentum "
      << format_double(c.bn_momentum) << '\n';
  visit_params([&](std::string_view name, const auto& t) { detail::write_tensor(out, name, t); }, m.params);
  detail::write_tensor(out, "bn_running_mean", m.bn_running_mean);
  detail::write_tensor(out, "bn_running_var", m.bn_running_var);
  detail::write_tensor(out, "preprocess_mean", m.preprocess.mean);
  detail::write_tensor(out, "preprocess_stddev", m.preprocess.stddev);
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline AeModel load_autoencoder(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    while (std::getline(in, line)) {
      ++lineno;
      auto tok = split_ws(line);
      if (!tok.empty()) return tok;
    }
    return {};
  };
  auto tok = next();
  if (tok != std::vector<std::string_view>{"veilvec-ae", "v1"}) throw ParseError(path, lineno, "bad header");
  std::uint64_t dim = 0;
  tok = next();
  if (tok.size() != 2 || tok[0] != "input_dim" || !parse_u64(tok[1], dim) || dim == 0) {
    throw ParseError(path, lineno, "bad input_dim");
  }
  AeModel m = init_model(dim, 0);
  tok = next();
  if (tok.size() != 19 || tok[0] != "config") throw ParseError(path, lineno, "bad config line");
  {
    std::map<std::string, std::string_view, std::less<>> kv;
    for (std::size_t i = 1; i + 1 < tok.size(); i += 2) kv[std::string(tok[i])] = tok[i + 1];
    std::uint64_t bs = 0, ep = 0;
    auto& c = m.config;
    if (!kv.count("lr") || !parse_double(kv["lr"], c.lr) || !kv.count("momentum") ||
        !parse_double(kv["momentum"], c.momentum) || !kv.count("batch_size") || !parse_u64(kv["batch_size"], bs) ||
        !kv.count("epochs") || !parse_u64(kv["epochs"], ep) || !kv.count("seed") || !parse_u64(kv["seed"], c.seed) ||
        !kv.count("bn_momentum") || !parse_double(kv["bn_momentum"], c.bn_momentum)) {
      throw ParseError(path, lineno, "bad config line");
    }
    double elr = 0.0, dlr = 0.0, alr = 0.0;
    if (!kv.count("encoder_lr") || !parse_double(kv["encoder_lr"], elr) || !kv.count("decoder_lr") ||
        !parse_double(kv["decoder_lr"], dlr) || !kv.count("adversary_lr") || !parse_double(kv["adversary_lr"], alr)) {
      throw ParseError(path, lineno, "bad config line");
    }
    c.encoder_lr = elr;
    c.decoder_lr = dlr;
    c.adversary_lr = alr;
    c.batch_size = static_cast<int>(bs);
    c.epochs = static_cast<int>(ep);
  }
  std::map<std::string, Matrix, std::less<>> tensors;
  while (!(tok = next()).empty()) {
    std::uint64_t rows = 0, cols = 0;
    if (tok.size() != 4 || tok[0] != "tensor" || !parse_u64(tok[2], rows) || !parse_u64(tok[3], cols)) {
      throw ParseError(path, lineno, "expected 'tensor <name> <rows> <cols>'");
    }
    const std::string name(tok[1]);
    Matrix t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::uint64_t r = 0; r < rows; ++r) {
      tok = next();
      if (tok.size() != cols) throw ParseError(path, lineno, "tensor '" + name + "': wrong row length");
      for (std::uint64_t c = 0; c < cols; ++c) {
        if (!parse_double(tok[c], t(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)))) {
          throw ParseError(path, lineno, "tensor '" + name + "': bad number");
        }
      }
    }
    tensors[name] = std::move(t);
  }
  auto take = [&](std::string_view name, auto& dst) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ParseError(path, lineno, "missing tensor '" + std::string(name) + "'");
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
      throw ParseError(path, lineno, "tensor '" + std::string(name) + "' has the wrong shape");
    }
    dst = it->second;
  };
  visit_params(take, m.params);
  take("bn_running_mean", m.bn_running_mean);
  take("bn_running_var", m.bn_running_var);
  take("preprocess_mean", m.preprocess.mean);
  take("preprocess_stddev", m.preprocess.stddev);
  return m;
}

}  // namespace veilvec
