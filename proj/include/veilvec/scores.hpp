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

#include <optional>
#include <string>
#include <vector>

#include "veilvec/common.hpp"

namespace veilvec {

/// Scores of a binary detection task, split by ground truth. For the
/// attribute task "target" means label 1; for verification it means a
/// same-speaker trial.
struct ScoreSet {
  std::vector<double> target;
  std::vector<double> nontarget;

  static ScoreSet from_labels(std::span<const double> scores, std::span<const int> labels) {
    require_dim(labels.size(), scores.size(), "ScoreSet::from_labels");
    ScoreSet s;
    for (std::size_t i = 0; i < scores.size(); ++i) (labels[i] ? s.target : s.nontarget).push_back(scores[i]);
    return s;
  }

  /// Pooled scores followed by their labels (targets first).
  std::pair<std::vector<double>, std::vector<int>> pooled() const {
    std::vector<double> scores = target;
    scores.insert(scores.end(), nontarget.begin(), nontarget.end());
    std::vector<int> labels(target.size(), 1);
    labels.resize(scores.size(), 0);
    return {std::move(scores), std::move(labels)};
  }

  ScoreSet swapped() const { return ScoreSet{nontarget, target}; }

  std::size_t size() const noexcept { return target.size() + nontarget.size(); }

  void require_both(std::string_view what) const {
    if (target.empty() || nontarget.empty()) {
      throw DataError(std::string(what) + ": needs non-empty target and non-target scores");
    }
  }
};

// ---------------------------------------------------------------------------
// Score file:
//   veilvec-scores v1
//   <segment_id> <label 0|1> <raw> [<calibrated>]

struct ScoreRecord {
  std::string id;
  int label = 0;
  double raw = 0.0;
  std::optional<double> calibrated;
};

inline void save_scores(const std::vector<ScoreRecord>& records, const std::string& path) {
  auto out = open_output(path);
  out << "veilvec-scores v1\n";
  for (const auto& r : records) {
    out << r.id << ' ' << r.label << ' ' << format_double(r.raw);
    if (r.calibrated) out << ' ' << format_double(*r.calibrated);
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline std::vector<ScoreRecord> load_scores(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || split_ws(line) != std::vector<std::string_view>{"veilvec-scores", "v1"}) {
    throw ParseError(path, 1, "malformed header, expected 'veilvec-scores v1'");
  }
  std::vector<ScoreRecord> out;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3 && tok.size() != 4) throw ParseError(path, lineno, "expected 3 or 4 fields");
    ScoreRecord r;
    r.id = std::string(tok[0]);
    if (tok[1] != "0" && tok[1] != "1") throw ParseError(path, lineno, "label must be 0 or 1");
    r.label = tok[1] == "1";
    if (!parse_double(tok[2], r.raw)) throw ParseError(path, lineno, "bad raw score");
    if (tok.size() == 4) {
      double c = 0.0;
      if (!parse_double(tok[3], c)) throw ParseError(path, lineno, "bad calibrated score");
      r.calibrated = c;
    }
    out.push_back(std::move(r));
  }
  return out;
}

inline ScoreSet to_score_set(const std::vector<ScoreRecord>& records) {
  ScoreSet s;
  for (const auto& r : records) (r.label ? s.target : s.nontarget).push_back(r.raw);
  return s;
}

}  // namespace veilvec
