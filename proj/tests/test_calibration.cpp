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

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "test_util.hpp"
#include "veilvec/calibration.hpp"
#include "veilvec/privacy_metrics.hpp"

namespace veilvec {
namespace {

std::vector<double> fitted(const std::vector<double>& s, const std::vector<int>& y) {
  const CalibrationMap map = pav_fit(s, y);
  std::vector<double> out;
  for (double v : s) out.push_back(apply(map, v));
  return out;
}

TEST(Pav, AlreadyIsotonic) {
  EXPECT_EQ(fitted({1, 2, 3, 4}, {0, 0, 1, 1}), (std::vector<double>{0, 0, 1, 1}));
}

TEST(Pav, MiddlePairPools) {
  const std::vector<double> s{0.1, 0.35, 0.4, 0.8};
  const std::vector<int> y{0, 1, 0, 1};
  EXPECT_EQ(fitted(s, y), (std::vector<double>{0.0, 0.5, 0.5, 1.0}));
  EXPECT_EQ(fitted(s, y), oracle::brute_force_isotonic(s, y).posterior);
  EXPECT_EQ(apply(pav_fit(s, y), 0.37), 0.5);
}

TEST(Pav, SingleClassRejected) {
  const std::vector<double> s{1, 2, 3};
  const std::vector<int> y{1, 1, 1};
  EXPECT_THROW(pav_fit(s, y), DataError);
}

TEST(Pav, ApplyOutsideRangeAndMonotone) {
  const std::vector<double> s{0.1, 0.2, 0.3, 0.5, 0.55, 0.9};
  const std::vector<int> y{0, 1, 0, 0, 1, 1};
  const CalibrationMap map = pav_fit(s, y);
  EXPECT_EQ(apply(map, -5.0), map.posteriors.front());
  EXPECT_EQ(apply(map, 5.0), map.posteriors.back());
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-0.5, 1.5);
  for (int t = 0; t < 1000; ++t) {
    double a = u(rng), b = u(rng);
    if (a > b) std::swap(a, b);
    EXPECT_LE(apply(map, a), apply(map, b));
  }
}

TEST(Pav, PerfectMapGivesZeroOrOneBySide) {
  const CalibrationMap map = pav_fit(std::vector<double>{1, 2, 3, 4}, std::vector<int>{0, 0, 1, 1});
  EXPECT_EQ(apply(map, 0.0), 0.0);
  EXPECT_EQ(apply(map, 2.0), 0.0);  // a block ends at its highest training score
  EXPECT_EQ(apply(map, 2.5), 1.0);
  EXPECT_EQ(apply(map, 10.0), 1.0);
}

TEST(Pav, ExhaustiveSmallInstancesMatchBruteForce) {
  std::size_t instances = 0;
  for (int n = 2; n <= 6; ++n) {
    for (const auto& s : oracle::tie_patterns(n)) {
      for (unsigned mask = 1; mask + 1 < (1u << n); ++mask) {
        std::vector<int> y(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) y[static_cast<std::size_t>(i)] = mask >> i & 1u;
        const auto ref = oracle::brute_force_isotonic(s, y);
        const auto got = fitted(s, y);
        for (std::size_t i = 0; i < got.size(); ++i) ASSERT_NEAR(got[i], ref.posterior[i], 1e-12);

        const ScoreSet set = ScoreSet::from_labels(s, y);
        const auto llr = oracle_llrs(set, false);
        const double c = cllr(llr.target, llr.nontarget);
        ASSERT_NEAR(c, ref.cllr_min, 1e-9);
        ASSERT_NEAR(cllr_min(set), ref.cllr_min, 1e-9);
        ++instances;
      }
    }
  }
  EXPECT_GT(instances, 300000u);
}

TEST(PosteriorToLlr, Cases) {
  EXPECT_EQ(posterior_to_llr(0.3, 0.3, 100), 0.0);
  EXPECT_NEAR(posterior_to_llr(0.9, 0.5, 100), std::log(9.0), 1e-12);
  const std::size_t n = 50;
  const double bound = std::log(2.0 * n - 1.0);  // logit(1 - 1/(2N)) at prior 1/2
  EXPECT_NEAR(posterior_to_llr(1.0, 0.5, n), bound, 1e-12);
  EXPECT_NEAR(posterior_to_llr(0.0, 0.5, n), -bound, 1e-12);
  EXPECT_THROW(posterior_to_llr(0.5, 1.0, n), DataError);
}

TEST(OracleLlrs, LaplaceGivesZeroForConstantBalancedSet) {
  const ScoreSet s{{0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}};
  const auto llr = oracle_llrs(s, true);
  for (double l : llr.target) EXPECT_EQ(l, 0.0);
  for (double l : llr.nontarget) EXPECT_EQ(l, 0.0);
  const auto raw = oracle_llrs(ScoreSet{{2.0}, {1.0}}, false);
  EXPECT_EQ(raw.target[0], std::numeric_limits<double>::infinity());
  EXPECT_EQ(raw.nontarget[0], -std::numeric_limits<double>::infinity());
}

TEST(CalibrationPlot, ConstantScores) {
  const std::vector<double> s(10, 0.5);
  std::vector<int> y(10, 0);
  for (int i = 0; i < 5; ++i) y[static_cast<std::size_t>(i)] = 1;
  const auto bins = calibration_plot(s, y, 0.02);
  ASSERT_EQ(bins.size(), 1u);
  EXPECT_NEAR(bins[0].center, 0.5, 1e-12);
  EXPECT_EQ(bins[0].proportion, 0.5);
  EXPECT_EQ(bins[0].count, 10u);
}

TEST(CalibrationPlot, CalibratedScoresTrackDiagonal) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 200000; ++i) {
    const double p = u(rng);
    s.push_back(p);
    y.push_back(u(rng) < p);
  }
  const double width = 0.05;
  for (const auto& b : calibration_plot(s, y, width)) {
    // scores inside a bin spread over +-width/2 around its center
    const double sigma = std::sqrt(0.25 / static_cast<double>(b.count));
    EXPECT_NEAR(b.proportion, b.center, 4.0 * sigma + width / 2.0) << "bin " << b.center;
  }
}

TEST(CalibrationPlot, PavOutputOnDiagonal) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> s;
  std::vector<int> y;
  for (int i = 0; i < 2000; ++i) {
    y.push_back(i % 2);
    s.push_back(normal(rng) + 1.5 * (i % 2));
  }
  const auto post = fitted(s, y);
  const double width = 0.02;
  for (const auto& b : calibration_plot(post, y, width)) {
    EXPECT_LE(std::abs(b.proportion - b.center), width / 2.0 + 1e-12) << "bin " << b.center;
  }
}

TEST(CalibrationFile, RoundTripAndErrors) {
  testing::TempDir dir("pav");
  const CalibrationMap map = pav_fit(std::vector<double>{0.1, 0.35, 0.4, 0.8}, std::vector<int>{0, 1, 0, 1});
  save(map, dir.file("m.txt"));
  const CalibrationMap back = load_calibration(dir.file("m.txt"));
  EXPECT_EQ(back.upper_bounds, map.upper_bounds);
  EXPECT_EQ(back.posteriors, map.posteriors);
  testing::write_text(dir.file("bad.txt"), "veilvec-pav v1\n0.5 0.4\n0.6 0.3\n");
  try {
    load_calibration(dir.file("bad.txt"));
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 3u);
  }
}

}  // namespace
}  // namespace veilvec
