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

#include <algorithm>
#include <numbers>
#include <numeric>
#include <string>
#include <vector>

#include "veilvec/calibration.hpp"
#include "veilvec/common.hpp"
#include "veilvec/scores.hpp"

namespace veilvec {

// ---------------------------------------------------------------------------
// Discrimination

/// Mann-Whitney AUC: P(target > non-target) + P(tie) / 2, via mid-ranks.
inline double auc(const ScoreSet& s) {
  s.require_both("auc");
  auto [scores, labels] = s.pooled();
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double target_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double mid_rank = 0.5 * static_cast<double>(i + 1 + j);  // 1-based ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) target_rank_sum += mid_rank;
    }
    i = j;
  }
  const double nt = static_cast<double>(s.target.size());
  const double nn = static_cast<double>(s.nontarget.size());
  return (target_rank_sum - nt * (nt + 1.0) / 2.0) / (nt * nn);
}

/// Equal error rate. A trial is accepted when its score exceeds the
/// threshold. ROC vertices (one per distinct score) are visited with
/// increasing threshold; the EER is read off the
/// segment on which (miss rate - false-alarm rate) changes sign, by linear
/// interpolation. Anti-correlated scores give values above 0.5; use
/// canonical_polarity() first when that is not wanted.
inline double eer(const ScoreSet& s) {
  s.require_both("eer");
  std::vector<double> tar = s.target, non = s.nontarget;
  std::sort(tar.begin(), tar.end());
  std::sort(non.begin(), non.end());
  std::vector<double> thresholds = tar;
  thresholds.insert(thresholds.end(), non.begin(), non.end());
  std::sort(thresholds.begin(), thresholds.end());
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  const double nt = static_cast<double>(tar.size());
  const double nn = static_cast<double>(non.size());
  // Threshold below everything: nothing missed, everything falsely accepted.
  double prev_miss = 0.0, prev_fa = 1.0;
  std::size_t ti = 0, ni = 0;
  for (double threshold : thresholds) {
    // accept scores strictly above `threshold`
    while (ti < tar.size() && tar[ti] <= threshold) ++ti;
    while (ni < non.size() && non[ni] <= threshold) ++ni;
    const double miss = static_cast<double>(ti) / nt;
    const double fa = static_cast<double>(non.size() - ni) / nn;
    const double diff = miss - fa;
    if (diff >= 0.0) {
      if (diff == 0.0) return miss;
      const double prev_diff = prev_miss - prev_fa;  // < 0
      const double t = -prev_diff / (diff - prev_diff);
      return prev_miss + t * (miss - prev_miss);
    }
    prev_miss = miss;
    prev_fa = fa;
  }
  return prev_miss;  // unreachable: the last vertex has miss = 1, fa = 0
}

// ---------------------------------------------------------------------------
// Calibration-sensitive costs (bits)

namespace detail {

inline double mean_softplus(std::span<const double> xs, double sign, double shift) {
  double total = 0.0;
  for (double x : xs) total += softplus(sign * x + shift);
  return total / static_cast<double>(xs.size());
}

}  // namespace detail

/// Empirical cross-entropy at prior `prior` of natural-log LLRs, in bits.
inline double ece(std::span<const double> tar_llr, std::span<const double> non_llr, double prior) {
  if (tar_llr.empty() || non_llr.empty()) throw DataError("ece: empty LLR side");
  if (!(prior >= 0.0 && prior <= 1.0)) throw DataError("ece: prior outside [0,1]");
  if (prior == 0.0 || prior == 1.0) return 0.0;
  const double log_odds = std::log(prior) - std::log1p(-prior);
  const double tar_term = detail::mean_softplus(tar_llr, -1.0, -log_odds);
  const double non_term = detail::mean_softplus(non_llr, 1.0, log_odds);
  return (prior * tar_term + (1.0 - prior) * non_term) / std::numbers::ln2;
}

/// Log-likelihood-ratio cost in bits; ece() at prior 1/2.
inline double cllr(std::span<const double> tar_llr, std::span<const double> non_llr) {
  return ece(tar_llr, non_llr, 0.5);
}

/// Cllr after oracle PAV calibration: the discrimination-only cost.
inline double cllr_min(const ScoreSet& s) {
  s.require_both("cllr_min");
  const OracleLlrs llr = oracle_llrs(s, false);
  return cllr(llr.target, llr.nontarget);
}

inline double binary_entropy_bits(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

// ---------------------------------------------------------------------------
// ZEBRA

inline constexpr int kZebraGridPoints = 1000;
inline constexpr double kMaxDece = 1.0 / (2.0 * std::numbers::ln2);

struct ZebraReport {
  double d_ece = 0.0;     // bits
  double log10_lw = 0.0;  // largest |log10 LR| among the calibrated scores
  std::string tag;        // "0", "A" ... "F"
};

/// Categorical tag of the worst-case strength of evidence.
inline std::string zebra_tag(double log10_lw) {
  if (log10_lw == 0.0) return "0";
  if (log10_lw <= 1.0) return "A";
  if (log10_lw <= 2.0) return "B";
  if (log10_lw <= 4.0) return "C";
  if (log10_lw <= 5.0) return "D";
  if (log10_lw <= 6.0) return "E";
  return "F";
}

/// Expected privacy disclosure D_ECE = integral over the prior of
/// [H(prior) - ECE_oracle(prior)], trapezoid rule on a uniform grid, and the
/// worst-case oracle LLR. Oracle LLRs use the Laplace-smoothed PAV.
inline ZebraReport zebra(const ScoreSet& s) {
  s.require_both("zebra");
  const OracleLlrs llr = oracle_llrs(s, true);
  const double h = 1.0 / static_cast<double>(kZebraGridPoints - 1);
  double integral = 0.0;
  for (int j = 0; j < kZebraGridPoints; ++j) {
    const double prior = j * h;
    const double gap = binary_entropy_bits(prior) - ece(llr.target, llr.nontarget, prior);
    integral += (j == 0 || j == kZebraGridPoints - 1) ? 0.5 * gap : gap;
  }
  ZebraReport r;
  r.d_ece = std::clamp(integral * h, 0.0, kMaxDece);
  double worst = 0.0;
  for (double l : llr.target) worst = std::max(worst, std::abs(l));
  for (double l : llr.nontarget) worst = std::max(worst, std::abs(l));
  r.log10_lw = worst / std::numbers::ln10;
  r.tag = zebra_tag(r.log10_lw);
  return r;
}

// ---------------------------------------------------------------------------
// Polarity

struct PolarityResult {
  ScoreSet scores;
  bool swapped = false;
};

/// Chooses the class-label association with the lower Cllr_min (ties keep
/// the given association).
inline PolarityResult canonical_polarity(const ScoreSet& s) {
  const ScoreSet sw = s.swapped();
  if (cllr_min(sw) < cllr_min(s)) return {sw, true};
  return {s, false};
}

// ---------------------------------------------------------------------------
// Mutual information between each vector dimension and a binary label.

namespace detail {

/// digamma at positive integers: -gamma + H_{n-1}.
class IntegerDigamma {
 public:
  explicit IntegerDigamma(std::size_t max_n) : table_(max_n + 1, 0.0) {
    constexpr double euler_gamma = 0.57721566490153286061;
    if (max_n >= 1) table_[1] = -euler_gamma;
    for (std::size_t n = 2; n <= max_n; ++n) table_[n] = table_[n - 1] + 1.0 / static_cast<double>(n - 1);
  }
  double operator()(std::size_t n) const { return table_.at(n); }

 private:
  std::vector<double> table_;
};

/// Distance from sorted[i] to its k-th nearest neighbour within `sorted`.
inline double kth_neighbor_distance(const std::vector<double>& sorted, std::size_t i, int k) {
  std::size_t left = i, right = i;  // next candidates are left-1 and right+1
  double dist = 0.0;
  for (int step = 0; step < k; ++step) {
    const bool has_left = left > 0;
    const bool has_right = right + 1 < sorted.size();
    const double dl = has_left ? sorted[i] - sorted[left - 1] : std::numeric_limits<double>::infinity();
    const double dr = has_right ? sorted[right + 1] - sorted[i] : std::numeric_limits<double>::infinity();
    if (dl <= dr) {
      dist = dl;
      --left;
    } else {
      dist = dr;
      ++right;
    }
  }
  return dist;
}

}  // namespace detail

inline constexpr int kDefaultMiNeighbors = 3;

/// Nearest-neighbour estimate of I(x_d; y) for one continuous variable and a
/// binary label, in bits, clamped at zero:
///   psi(N) - <psi(N_y)> + psi(k) - <psi(m)>
/// where m counts all other samples within the distance to the k-th
/// same-label neighbour (equal distances count as inside).
inline double mutual_information_1d(std::span<const double> values, std::span<const int> labels, int k) {
  require_dim(labels.size(), values.size(), "mutual_information");
  if (k < 1) throw ConfigError("mutual_information: k must be >= 1");
  std::vector<double> by_class[2];
  for (std::size_t i = 0; i < values.size(); ++i) by_class[labels[i] ? 1 : 0].push_back(values[i]);
  for (const auto& c : by_class) {
    if (c.size() <= static_cast<std::size_t>(k)) {
      throw DataError("mutual_information: each class needs more than k samples");
    }
  }
  std::vector<double> all(values.begin(), values.end());
  std::sort(all.begin(), all.end());
  const std::size_t n = all.size();
  detail::IntegerDigamma psi(n);

  double sum_psi_class = 0.0, sum_psi_m = 0.0;
  for (auto& c : by_class) {
    std::sort(c.begin(), c.end());
    for (std::size_t i = 0; i < c.size(); ++i) {
      const double radius = detail::kth_neighbor_distance(c, i, k);
      const auto lo = std::lower_bound(all.begin(), all.end(), c[i] - radius);
      const auto hi = std::upper_bound(all.begin(), all.end(), c[i] + radius);
      const auto m = static_cast<std::size_t>(hi - lo) - 1;  // exclude the point itself
      sum_psi_m += psi(m);
      sum_psi_class += psi(c.size());
    }
  }
  const double nats = psi(n) - sum_psi_class / static_cast<double>(n) + psi(static_cast<std::size_t>(k)) -
                      sum_psi_m / static_cast<double>(n);
  return std::max(0.0, nats / std::numbers::ln2);
}

/// Per-dimension MI averaged over the dimensions of `columns` (dim x n).
inline double mutual_information(const Matrix& columns, std::span<const int> labels, int k = kDefaultMiNeighbors) {
  require_dim(labels.size(), static_cast<std::size_t>(columns.cols()), "mutual_information");
  if (columns.rows() == 0) throw DataError("mutual_information: zero-dimensional vectors");
  double total = 0.0;
  std::vector<double> row(static_cast<std::size_t>(columns.cols()));
  for (Eigen::Index d = 0; d < columns.rows(); ++d) {
    for (Eigen::Index i = 0; i < columns.cols(); ++i) row[static_cast<std::size_t>(i)] = columns(d, i);
    total += mutual_information_1d(row, labels, k);
  }
  return total / static_cast<double>(columns.rows());
}

// ---------------------------------------------------------------------------
// Score histograms (plot data), bins aligned with calibration_plot().

struct HistogramBin {
  double center;
  std::size_t target;
  std::size_t nontarget;
};

inline std::vector<HistogramBin> score_histogram(const ScoreSet& s, double bin_width = kDefaultPlotBinWidth) {
  if (!(bin_width > 0.0)) throw ConfigError("score_histogram: bin_width must be > 0");
  const std::size_t n_bins = plot_bin(1.0, std::min(bin_width, 1.0)) + 1;
  std::vector<HistogramBin> bins(n_bins);
  for (std::size_t b = 0; b < n_bins; ++b) bins[b] = {static_cast<double>(b) * bin_width, 0, 0};
  for (double x : s.target) ++bins[plot_bin(x, bin_width)].target;
  for (double x : s.nontarget) ++bins[plot_bin(x, bin_width)].nontarget;
  return bins;
}

}  // namespace veilvec
