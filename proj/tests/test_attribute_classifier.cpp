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

#include <gtest/gtest.h>

#include <random>

#include "test_util.hpp"
#include "veilvec/attribute_classifier.hpp"

namespace veilvec {
namespace {

// Two clusters in 2-D, separable by the line x0 + x1 = 0.
Corpus separable_toy() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.2, 1.0);
  std::vector<Embedding> items;
  for (int i = 0; i < 60; ++i) {
    const int label = i % 2;
    const double sign = label ? 1.0 : -1.0;
    Vector v(2);
    v << sign * u(rng), sign * u(rng);
    items.push_back({"seg" + std::to_string(i), "spk" + std::to_string(i / 4), label, std::nullopt, v});
  }
  return Corpus(2, items);
}

TEST(Classifier, SeparableToyPerfectAndLossNonIncreasing) {
  const Corpus c = separable_toy();
  ClassifierTrainConfig cfg;
  cfg.epochs = 200;
  cfg.lr = 0.1;
  cfg.batch_size = 60;  // full batch: plain gradient descent
  std::vector<double> losses;
  const LinearClassifier clf = train(c, cfg, &losses);
  int correct = 0;
  for (const auto& e : c.items()) correct += (score(clf, e.vector) > 0.5) == (e.label == 1);
  EXPECT_EQ(correct, 60);
  for (std::size_t i = 1; i < losses.size(); ++i) EXPECT_LE(losses[i], losses[i - 1] + 1e-15);
}

TEST(Classifier, ZeroModelScoresHalf) {
  const LinearClassifier clf{Vector::Zero(3), 0.0};
  EXPECT_EQ(score(clf, Vector::Constant(3, 7.0)), 0.5);
}

TEST(Classifier, ScoreMonotoneInLogit) {
  LinearClassifier clf{Vector::Ones(1), 0.0};
  double prev = 0.0;
  for (double x = -40.0; x <= 40.0; x += 0.5) {
    const double s = score(clf, Vector::Constant(1, x));
    EXPECT_GE(s, prev);
    prev = s;
  }
}

TEST(Classifier, BiasDerivativeMatchesFiniteDifference) {
  LinearClassifier clf{Vector::LinSpaced(4, -0.5, 0.7), 0.3};
  const Vector v = Vector::LinSpaced(4, 1.0, -2.0);
  const double h = 1e-6;
  const double s = score(clf, v);
  LinearClassifier up = clf, down = clf;
  up.bias += h;
  down.bias -= h;
  const double fd = (score(up, v) - score(down, v)) / (2.0 * h);
  EXPECT_NEAR(fd, s * (1.0 - s), 1e-6 * s * (1.0 - s));
}

TEST(Classifier, Errors) {
  const LinearClassifier clf{Vector::Zero(3), 0.0};
  EXPECT_THROW(score(clf, Vector::Zero(2)), DataError);
  std::vector<Embedding> one_class;
  for (int i = 0; i < 4; ++i) one_class.push_back({"s" + std::to_string(i), "a", 1, std::nullopt, Vector::Ones(2)});
  EXPECT_THROW(train(Corpus(2, one_class), {}), DataError);
}

TEST(ClassifierFile, RoundTripAndErrors) {
  testing::TempDir dir("clf");
  const LinearClassifier clf{Vector::LinSpaced(5, -1.0 / 3.0, 2.0 / 7.0), -0.1};
  save(clf, dir.file("m.txt"));
  const LinearClassifier back = load_classifier(dir.file("m.txt"));
  EXPECT_EQ(back.bias, clf.bias);
  EXPECT_EQ(back.weights, clf.weights);
  testing::write_text(dir.file("bad.txt"), "veilvec-linclf v1\ndim 2\nbias 0\nweights\n1\n");
  EXPECT_THROW(load_classifier(dir.file("bad.txt")), ParseError);
}

}  // namespace
}  // namespace veilvec
