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

#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "veilvec/common.hpp"
#include "veilvec/corpus.hpp"

namespace veilvec {

/// Single-layer perceptron with sigmoid output. Raw outputs are not
/// calibrated posteriors; see calibration.hpp.
struct LinearClassifier {
  Vector weights;
  double bias = 0.0;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(weights.size()); }
};

struct ClassifierTrainConfig {
  int epochs = 20;
  double lr = 1e-2;
  int batch_size = 256;
  std::uint64_t seed = 1;
};

inline double classifier_logit(const LinearClassifier& clf, const Vector& v) {
  require_dim(static_cast<std::size_t>(v.size()), clf.dim(), "classifier score");
  return clf.weights.dot(v) + clf.bias;
}

inline double score(const LinearClassifier& clf, const Vector& v) { return sigmoid(classifier_logit(clf, v)); }

inline std::vector<double> score_all(const LinearClassifier& clf, const Matrix& columns) {
  require_dim(static_cast<std::size_t>(columns.rows()), clf.dim(), "classifier score");
  const RowVector logits = (clf.weights.transpose() * columns).array() + clf.bias;
  std::vector<double> out(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index i = 0; i < logits.size(); ++i) out[static_cast<std::size_t>(i)] = sigmoid(logits(i));
  return out;
}

/// Mean binary cross-entropy (nats).
inline double classifier_loss(const LinearClassifier& clf, const Matrix& columns, const std::vector<int>& labels) {
  const RowVector logits = (clf.weights.transpose() * columns).array() + clf.bias;
  double total = 0.0;
  for (Eigen::Index i = 0; i < logits.size(); ++i) {
    // -log sigmoid(l) = softplus(-l), -log(1 - sigmoid(l)) = softplus(l)
    total += labels[static_cast<std::size_t>(i)] ? softplus(-logits(i)) : softplus(logits(i));
  }
  return total / static_cast<double>(logits.size());
}

/// Mini-batch gradient descent on mean binary cross-entropy. Inputs must
/// already be preprocessed. Parameters start at zero; the seed drives the
/// per-epoch shuffle.
inline LinearClassifier train(const Corpus& corpus, const ClassifierTrainConfig& cfg,
                              std::vector<double>* epoch_losses = nullptr) {
  if (!corpus.has_both_labels()) throw DataError("classifier training needs both labels present");
  if (cfg.epochs < 0 || cfg.batch_size < 1 || !(cfg.lr >= 0.0)) throw ConfigError("invalid classifier training config");

  const Matrix x = corpus.matrix();
  const std::vector<int> y = corpus.labels();
  const Eigen::Index n = x.cols();

  LinearClassifier clf{Vector::Zero(x.rows()), 0.0};
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::mt19937_64 rng(cfg.seed);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += cfg.batch_size) {
      const Eigen::Index m = std::min<Eigen::Index>(cfg.batch_size, n - start);
      Vector grad_w = Vector::Zero(x.rows());
      double grad_b = 0.0;
      for (Eigen::Index k = 0; k < m; ++k) {
        const Eigen::Index i = order[static_cast<std::size_t>(start + k)];
        const double err = sigmoid(clf.weights.dot(x.col(i)) + clf.bias) - y[static_cast<std::size_t>(i)];
        grad_w.noalias() += err * x.col(i);
        grad_b += err;
      }
      clf.weights -= (cfg.lr / static_cast<double>(m)) * grad_w;
      clf.bias -= cfg.lr * grad_b / static_cast<double>(m);
    }
    if (epoch_losses) epoch_losses->push_back(classifier_loss(clf, x, y));
  }
  if (!clf.weights.allFinite() || !std::isfinite(clf.bias)) throw NumericalError("classifier training diverged");
  return clf;
}

// ---------------------------------------------------------------------------
// Model file:
//   veilvec-linclf v1
//   dim <d>
//   bias <b>
//   weights
//   <w1>
//   ...

inline void save(const LinearClassifier& clf, const std::string& path) {
  auto out = open_output(path);
  out << "veilvec-linclf v1\n"
      << "dim " << clf.dim() << '\n'
      << "bias " << format_double(clf.bias) << '\n'
      << "weights\n";
  for (Eigen::Index i = 0; i < clf.weights.size(); ++i) out << format_double(clf.weights(i)) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline LinearClassifier load_classifier(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 0;
  auto next = [&]() -> std::vector<std::string_view> {
    while (std::getline(in, line)) {
      ++lineno;
      auto tok = split_ws(line);
      if (!tok.empty()) return tok;
    }
    throw ParseError(path, lineno + 1, "unexpected end of file");
  };
  auto tok = next();
  if (tok.size() != 2 || tok[0] != "veilvec-linclf" || tok[1] != "v1") throw ParseError(path, lineno, "bad header");
  std::uint64_t dim = 0;
  tok = next();
  if (tok.size() != 2 || tok[0] != "dim" || !parse_u64(tok[1], dim) || dim == 0) throw ParseError(path, lineno, "bad dim");
  LinearClassifier clf;
  tok = next();
  if (tok.size() != 2 || tok[0] != "bias" || !parse_double(tok[1], clf.bias)) throw ParseError(path, lineno, "bad bias");
  tok = next();
  if (tok.size() != 1 || tok[0] != "weights") throw ParseError(path, lineno, "expected 'weights'");
  clf.weights.resize(static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    tok = next();
    if (tok.size() != 1 || !parse_double(tok[0], clf.weights(static_cast<Eigen::Index>(i)))) {
      throw ParseError(path, lineno, "bad weight");
    }
  }
  return clf;
}

}  // namespace veilvec
