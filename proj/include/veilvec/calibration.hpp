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
#include <numeric>
#include <string>
#include <vector>

#include "veilvec/common.hpp"
#include "veilvec/scores.hpp"

namespace veilvec {

/// Monotone piecewise-constant map from raw score to posterior, the output
/// of pool-adjacent-violators. Block k covers raw scores in
/// (upper_bounds[k-1], upper_bounds[k]].
struct CalibrationMap {
  std::vector<double> upper_bounds;  // strictly ascending
  std::vector<double> posteriors;    // non-decreasing, in [0,1]
};

namespace detail {

struct ScoreGroup {
  double score;
  double weight;
  double positives;
};

struct PavBlock {
  std::size_t first_group;
  std::size_t last_group;
  double weight;
  double positives;

  double mean() const { return positives / weight; }
};

/// Sorts items by score and pools exact ties. `group_of[i]` receives the
/// group index of item i.
inline std::vector<ScoreGroup> group_scores(std::span<const double> scores, std::span<const int> labels,
                                            std::vector<std::size_t>& group_of) {
  require_dim(labels.size(), scores.size(), "pav");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  std::vector<ScoreGroup> groups;
  group_of.assign(scores.size(), 0);
  for (std::size_t idx : order) {
    if (std::isnan(scores[idx])) throw DataError("pav: NaN score");
    if (groups.empty() || groups.back().score != scores[idx]) groups.push_back({scores[idx], 0.0, 0.0});
    groups.back().weight += 1.0;
    groups.back().positives += labels[idx] ? 1.0 : 0.0;
    group_of[idx] = groups.size() - 1;
  }
  return groups;
}

/// Pool-adjacent-violators over ordered groups: the isotonic least-squares
/// fit of the positive rate. Adjacent blocks with equal means are pooled, so
/// the resulting means are strictly increasing.
inline std::vector<PavBlock> pav(const std::vector<ScoreGroup>& groups) {
  std::vector<PavBlock> stack;
  stack.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    stack.push_back({g, g, groups[g].weight, groups[g].positives});
    // prev.mean >= cur.mean, cross-multiplied to stay exact on counts
    while (stack.size() > 1) {
      const PavBlock& cur = stack.back();
      const PavBlock& prev = stack[stack.size() - 2];
      if (prev.positives * cur.weight < cur.positives * prev.weight) break;
      PavBlock merged{prev.first_group, cur.last_group, prev.weight + cur.weight, prev.positives + cur.positives};
      stack.pop_back();
      stack.back() = merged;
    }
  }
  return stack;
}

inline void require_two_classes(std::span<const int> labels, std::string_view what) {
  bool zero = false, one = false;
  for (int l : labels) {
    if (l != 0 && l != 1) throw DataError(std::string(what) + ": labels must be 0 or 1");
    (l ? one : zero) = true;
  }
  if (!zero || !one) throw DataError(std::string(what) + ": both classes must be present");
}

}  // namespace detail

inline CalibrationMap pav_fit(std::span<const double> scores, std::span<const int> labels) {
  detail::require_two_classes(labels, "pav_fit");
  std::vector<std::size_t> group_of;
  const auto groups = detail::group_scores(scores, labels, group_of);
  CalibrationMap map;
  for (const auto& b : detail::pav(groups)) {
    map.upper_bounds.push_back(groups[b.last_group].score);
    map.posteriors.push_back(b.mean());
  }
  return map;
}

/// Piecewise-constant lookup. Raw scores beyond either end take the end
/// block's posterior.
inline double apply(const CalibrationMap& map, double raw) {
  if (map.posteriors.empty()) throw DataError("apply: empty calibration map");
  auto it = std::lower_bound(map.upper_bounds.begin(), map.upper_bounds.end(), raw);
  if (it == map.upper_bounds.end()) return map.posteriors.back();
  return map.posteriors[static_cast<std::size_t>(it - map.upper_bounds.begin())];
}

/// In-sample PAV posteriors, aligned with the input order.
inline std::vector<double> pav_posteriors(std::span<const double> scores, std::span<const int> labels) {
  detail::require_two_classes(labels, "pav_posteriors");
  std::vector<std::size_t> group_of;
  const auto groups = detail::group_scores(scores, labels, group_of);
  const auto blocks = detail::pav(groups);
  std::vector<double> group_value(groups.size());
  for (const auto& b : blocks) {
    for (std::size_t g = b.first_group; g <= b.last_group; ++g) group_value[g] = b.mean();
  }
  std::vector<double> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = group_value[group_of[i]];
  return out;
}

/// Natural-log LLR of a posterior relative to the empirical prior. The
/// posterior is clamped into [1/(2N), 1 - 1/(2N)] so endpoint blocks give a
/// finite LLR, N being the number of calibration items.
inline double posterior_to_llr(double posterior, double prior, std::size_t n_items) {
  if (!(prior > 0.0 && prior < 1.0)) throw DataError("posterior_to_llr: prior must be in (0,1)");
  const double eps = 1.0 / (2.0 * static_cast<double>(std::max<std::size_t>(n_items, 1)));
  const double p = std::clamp(posterior, eps, 1.0 - eps);
  return logit(p) - logit(prior);
}

/// Oracle (PAV-calibrated) natural-log LLRs for every score of a set.
/// Without `laplace` pure blocks give +-inf. With `laplace`, one pseudo
/// target and one pseudo non-target are placed below the lowest and above
/// the highest score before pooling, and the prior odds include them. All
/// LLRs are then finite, and a constant, class-balanced score set maps to
/// exactly zero.
struct OracleLlrs {
  std::vector<double> target;
  std::vector<double> nontarget;
};

inline OracleLlrs oracle_llrs(const ScoreSet& set, bool laplace) {
  set.require_both("oracle_llrs");
  auto [scores, labels] = set.pooled();
  std::vector<std::size_t> group_of;
  auto groups = detail::group_scores(scores, labels, group_of);
  double n_tar = static_cast<double>(set.target.size());
  double n_non = static_cast<double>(set.nontarget.size());
  std::size_t offset = 0;
  if (laplace) {
    const double inf = std::numeric_limits<double>::infinity();
    groups.insert(groups.begin(), detail::ScoreGroup{-inf, 2.0, 1.0});
    groups.push_back({inf, 2.0, 1.0});
    offset = 1;
    n_tar += 2.0;
    n_non += 2.0;
  }
  const double log_prior_odds = std::log(n_tar) - std::log(n_non);
  std::vector<double> group_llr(groups.size());
  for (const auto& b : detail::pav(groups)) {
    const double llr = std::log(b.positives) - std::log(b.weight - b.positives) - log_prior_odds;
    for (std::size_t g = b.first_group; g <= b.last_group; ++g) group_llr[g] = llr;
  }
  OracleLlrs out;
  out.target.reserve(set.target.size());
  out.nontarget.reserve(set.nontarget.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (labels[i] ? out.target : out.nontarget).push_back(group_llr[group_of[i] + offset]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Plot data. Bins are centred on multiples of `bin_width` over [0,1]; a score
// s falls into bin round(s / bin_width).

inline constexpr double kDefaultPlotBinWidth = 0.02;

inline std::size_t plot_bin(double s, double bin_width) {
  const auto n_bins = static_cast<long>(std::llround(1.0 / bin_width));
  const long k = std::llround(std::clamp(s, 0.0, 1.0) / bin_width);
  return static_cast<std::size_t>(std::clamp(k, 0L, n_bins));
}

struct CalibrationBin {
  double center;
  double proportion;  // fraction of label-1 items in the bin
  std::size_t count;
};

inline std::vector<CalibrationBin> calibration_plot(std::span<const double> scores, std::span<const int> labels,
                                                    double bin_width = kDefaultPlotBinWidth) {
  if (!(bin_width > 0.0 && bin_width <= 1.0)) throw ConfigError("calibration_plot: bin_width must be in (0,1]");
  require_dim(labels.size(), scores.size(), "calibration_plot");
  const std::size_t n_bins = plot_bin(1.0, bin_width) + 1;
  std::vector<std::size_t> count(n_bins, 0), positives(n_bins, 0);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const std::size_t b = plot_bin(scores[i], bin_width);
    ++count[b];
    positives[b] += labels[i] ? 1 : 0;
  }
  std::vector<CalibrationBin> out;
  for (std::size_t b = 0; b < n_bins; ++b) {
    if (count[b] == 0) continue;
    out.push_back({static_cast<double>(b) * bin_width,
                   static_cast<double>(positives[b]) / static_cast<double>(count[b]), count[b]});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Map file:
//   veilvec-pav v1
//   <upper_raw_boundary> <posterior>

inline void save(const CalibrationMap& map, const std::string& path) {
  auto out = open_output(path);
  out << "veilvec-pav v1\n";
  for (std::size_t k = 0; k < map.posteriors.size(); ++k) {
    out << format_double(map.upper_bounds[k]) << ' ' << format_double(map.posteriors[k]) << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline CalibrationMap load_calibration(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || split_ws(line) != std::vector<std::string_view>{"veilvec-pav", "v1"}) {
    throw ParseError(path, 1, "malformed header, expected 'veilvec-pav v1'");
  }
  CalibrationMap map;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    double upper = 0.0, p = 0.0;
    if (tok.size() != 2 || !parse_double(tok[0], upper) || !parse_double(tok[1], p)) {
      throw ParseError(path, lineno, "expected '<upper> <posterior>'");
    }
    if (!(p >= 0.0 && p <= 1.0)) throw ParseError(path, lineno, "posterior outside [0,1]");
    if (!map.upper_bounds.empty() && !(upper > map.upper_bounds.back())) {
      throw ParseError(path, lineno, "boundaries must be strictly ascending");
    }
    if (!map.posteriors.empty() && p < map.posteriors.back()) {
      throw ParseError(path, lineno, "posteriors must be non-decreasing");
    }
    map.upper_bounds.push_back(upper);
    map.posteriors.push_back(p);
  }
  if (map.posteriors.empty()) throw ParseError(path, lineno, "no blocks");
  return map;
}

}  // namespace veilvec
