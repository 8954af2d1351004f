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
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "veilvec/common.hpp"

namespace veilvec {

/// One embedding vector with its identity and attribute annotations.
/// Label convention: 0 = male, 1 = female.
struct Embedding {
  std::string segment_id;
  std::string speaker_id;
  int label = 0;
  std::optional<double> posterior;  // calibrated soft label, when attached
  Vector vector;

  bool operator==(const Embedding& o) const {
    return segment_id == o.segment_id && speaker_id == o.speaker_id && label == o.label &&
           posterior == o.posterior && vector.size() == o.vector.size() &&
           (vector.array() == o.vector.array()).all();
  }
};

/// Immutable collection of same-dimension embeddings with unique segment ids.
class Corpus {
 public:
  Corpus() = default;

  Corpus(std::size_t dim, std::vector<Embedding> items) : dim_(dim), items_(std::move(items)) {
    if (dim_ == 0) throw DataError("corpus dimension must be positive");
    std::unordered_set<std::string> seen;
    seen.reserve(items_.size());
    for (const auto& e : items_) {
      require_dim(static_cast<std::size_t>(e.vector.size()), dim_, "corpus item '" + e.segment_id + "'");
      if (e.label != 0 && e.label != 1) throw DataError("label must be 0 or 1 for '" + e.segment_id + "'");
      if (e.posterior && !(*e.posterior >= 0.0 && *e.posterior <= 1.0)) {
        throw DataError("posterior outside [0,1] for '" + e.segment_id + "'");
      }
      if (!seen.insert(e.segment_id).second) throw DataError("duplicate segment id '" + e.segment_id + "'");
    }
  }

  std::size_t dim() const noexcept { return dim_; }
  std::size_t size() const noexcept { return items_.size(); }
  bool empty() const noexcept { return items_.empty(); }
  const std::vector<Embedding>& items() const noexcept { return items_; }
  const Embedding& operator[](std::size_t i) const { return items_[i]; }

  /// Column-per-item matrix (dim x size).
  Matrix matrix() const {
    Matrix m(dim_, items_.size());
    for (std::size_t i = 0; i < items_.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = items_[i].vector;
    return m;
  }

  std::vector<int> labels() const {
    std::vector<int> out;
    out.reserve(items_.size());
    for (const auto& e : items_) out.push_back(e.label);
    return out;
  }

  std::vector<std::string> speaker_ids() const {
    std::vector<std::string> out;
    out.reserve(items_.size());
    for (const auto& e : items_) out.push_back(e.speaker_id);
    return out;
  }

  /// Speakers in order of first appearance.
  std::vector<std::string> unique_speakers() const {
    std::vector<std::string> out;
    std::unordered_set<std::string> seen;
    for (const auto& e : items_) {
      if (seen.insert(e.speaker_id).second) out.push_back(e.speaker_id);
    }
    return out;
  }

  bool has_both_labels() const {
    bool zero = false, one = false;
    for (const auto& e : items_) (e.label ? one : zero) = true;
    return zero && one;
  }

  /// Same items with vectors replaced column-wise from `vectors` (any dim).
  Corpus with_vectors(const Matrix& vectors) const {
    require_dim(static_cast<std::size_t>(vectors.cols()), items_.size(), "with_vectors");
    std::vector<Embedding> out = items_;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].vector = vectors.col(static_cast<Eigen::Index>(i));
    return Corpus(static_cast<std::size_t>(vectors.rows()), std::move(out));
  }

  Corpus with_posteriors(const std::vector<double>& posteriors) const {
    require_dim(posteriors.size(), items_.size(), "with_posteriors");
    std::vector<Embedding> out = items_;
    for (std::size_t i = 0; i < out.size(); ++i) out[i].posterior = posteriors[i];
    return Corpus(dim_, std::move(out));
  }

  bool operator==(const Corpus& o) const { return dim_ == o.dim_ && items_ == o.items_; }

 private:
  std::size_t dim_ = 1;
  std::vector<Embedding> items_;
};

// ---------------------------------------------------------------------------
// Synthetic generator

struct SynthConfig {
  int n_speakers = 200;
  int segments_per_speaker = 40;
  int dim = 512;
  double attribute_shift = 2.0;   // class-mean separation along the attribute direction
  double speaker_spread = 0.25;   // per-axis std of speaker offsets inside the speaker subspace
  double within_spread = 0.07;    // per-axis std of segment noise
  int speaker_rank = 0;           // dimension of the speaker subspace; 0 = full dim
  std::uint64_t seed = 1;

  void validate() const {
    if (n_speakers < 2) throw ConfigError("n_speakers must be >= 2");
    if (segments_per_speaker < 2) throw ConfigError("segments_per_speaker must be >= 2");
    if (dim < 2) throw ConfigError("dim must be >= 2");
    if (!(attribute_shift >= 0.0) || !std::isfinite(attribute_shift)) {
      throw ConfigError("attribute_shift must be finite and >= 0");
    }
    if (!(speaker_spread > 0.0) || !std::isfinite(speaker_spread)) throw ConfigError("speaker_spread must be > 0");
    if (!(within_spread > 0.0) || !std::isfinite(within_spread)) throw ConfigError("within_spread must be > 0");
    if (speaker_rank < 0 || speaker_rank > dim) throw ConfigError("speaker_rank must be in [0, dim]");
  }
};

namespace detail {

inline std::string padded(const char* prefix, int value, int width) {
  std::string digits = std::to_string(value);
  if (static_cast<int>(digits.size()) < width) digits.insert(0, static_cast<std::size_t>(width) - digits.size(), '0');
  return prefix + digits;
}

inline Vector gaussian_vector(std::mt19937_64& rng, Eigen::Index n, double stddev) {
  std::normal_distribution<double> normal(0.0, stddev);
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = normal(rng);
  return v;
}

}  // namespace detail

/// Generates an attribute- and speaker-structured corpus. Speakers alternate
/// labels 0,1,0,1,... Segment vectors are
///   global_mean + label * shift * u + speaker_offset + noise
/// with u a random unit direction, speaker offsets spherical inside a random
/// subspace of rank `speaker_rank`, and spherical segment noise.
inline Corpus generate(const SynthConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  const Eigen::Index d = cfg.dim;

  const Vector global_mean = detail::gaussian_vector(rng, d, 1.0);
  Vector u = detail::gaussian_vector(rng, d, 1.0);
  u /= u.norm();

  const int rank = cfg.speaker_rank == 0 ? cfg.dim : cfg.speaker_rank;
  Matrix basis;
  if (rank < cfg.dim) {
    Matrix g(d, rank);
    for (Eigen::Index c = 0; c < rank; ++c) g.col(c) = detail::gaussian_vector(rng, d, 1.0);
    Eigen::HouseholderQR<Matrix> qr(g);
    basis = qr.householderQ() * Matrix::Identity(d, rank);
  }

  std::vector<Embedding> items;
  items.reserve(static_cast<std::size_t>(cfg.n_speakers) * static_cast<std::size_t>(cfg.segments_per_speaker));
  for (int s = 0; s < cfg.n_speakers; ++s) {
    const int label = s % 2;
    Vector offset = rank < cfg.dim ? Vector(basis * detail::gaussian_vector(rng, rank, cfg.speaker_spread))
                                   : detail::gaussian_vector(rng, d, cfg.speaker_spread);
    const Vector speaker_mean = global_mean + label * cfg.attribute_shift * u + offset;
    const std::string speaker = detail::padded("spk", s, 4);
    for (int k = 0; k < cfg.segments_per_speaker; ++k) {
      Embedding e;
      e.speaker_id = speaker;
      e.segment_id = speaker + "-" + detail::padded("seg", k, 3);
      e.label = label;
      e.vector = speaker_mean + detail::gaussian_vector(rng, d, cfg.within_spread);
      items.push_back(std::move(e));
    }
  }
  return Corpus(static_cast<std::size_t>(cfg.dim), std::move(items));
}

// ---------------------------------------------------------------------------
// File format:
//   veilvec-corpus v1 dim=<d>
//   <segment_id> <speaker_id> <label 0|1> <v1> ... <vd>

inline constexpr std::string_view kCorpusMagic = "veilvec-corpus";

inline void save(const Corpus& corpus, const std::string& path) {
  auto out = open_output(path);
  out << kCorpusMagic << " v1 dim=" << corpus.dim() << '\n';
  for (const auto& e : corpus.items()) {
    out << e.segment_id << ' ' << e.speaker_id << ' ' << e.label;
    for (Eigen::Index i = 0; i < e.vector.size(); ++i) out << ' ' << format_double(e.vector(i));
    out << '\n';
  }
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Corpus load(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line)) throw ParseError(path, 1, "missing header");
  const auto head = split_ws(line);
  std::uint64_t dim = 0;
  if (head.size() != 3 || head[0] != kCorpusMagic || head[1] != "v1" || head[2].substr(0, 4) != "dim=" ||
      !parse_u64(head[2].substr(4), dim) || dim == 0) {
    throw ParseError(path, 1, "malformed header, expected 'veilvec-corpus v1 dim=<d>'");
  }
  std::vector<Embedding> items;
  std::unordered_set<std::string> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3 + dim) {
      throw ParseError(path, lineno,
                       "expected " + std::to_string(3 + dim) + " fields, found " + std::to_string(tok.size()));
    }
    Embedding e;
    e.segment_id = std::string(tok[0]);
    e.speaker_id = std::string(tok[1]);
    if (tok[2] == "0") {
      e.label = 0;
    } else if (tok[2] == "1") {
      e.label = 1;
    } else {
      throw ParseError(path, lineno, "label must be 0 or 1");
    }
    e.vector.resize(static_cast<Eigen::Index>(dim));
    for (std::size_t i = 0; i < dim; ++i) {
      if (!parse_double(tok[3 + i], e.vector(static_cast<Eigen::Index>(i)))) {
        throw ParseError(path, lineno, "bad number '" + std::string(tok[3 + i]) + "'");
      }
    }
    if (!seen.insert(e.segment_id).second) throw ParseError(path, lineno, "duplicate segment id '" + e.segment_id + "'");
    items.push_back(std::move(e));
  }
  return Corpus(static_cast<std::size_t>(dim), std::move(items));
}

// ---------------------------------------------------------------------------

/// Partitions a corpus. With `by_speaker`, whole speakers are assigned to
/// partitions so no speaker spans two of them. Items keep their original
/// relative order inside each partition.
inline std::vector<Corpus> split(const Corpus& corpus, std::span<const double> fractions, std::uint64_t seed,
                                 bool by_speaker) {
  if (fractions.empty()) throw ConfigError("split: no fractions given");
  double total = 0.0;
  for (double f : fractions) {
    if (!(f > 0.0)) throw ConfigError("split: fractions must be positive");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split: fractions must sum to 1");

  const std::size_t parts = fractions.size();
  // Units are speakers or individual items.
  std::vector<std::string> units;
  if (by_speaker) {
    units = corpus.unique_speakers();
  } else {
    for (const auto& e : corpus.items()) units.push_back(e.segment_id);
  }
  if (units.size() < parts) {
    throw DataError("split: " + std::to_string(units.size()) + (by_speaker ? " speakers" : " items") +
                    " cannot fill " + std::to_string(parts) + " partitions");
  }

  std::vector<std::size_t> order(units.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);

  // Cumulative rounding, then force every partition non-empty.
  std::vector<std::size_t> bounds(parts + 1, 0);
  double cum = 0.0;
  for (std::size_t p = 0; p < parts; ++p) {
    cum += fractions[p];
    bounds[p + 1] = p + 1 == parts ? units.size()
                                   : static_cast<std::size_t>(std::llround(cum * static_cast<double>(units.size())));
  }
  for (std::size_t p = 1; p <= parts; ++p) bounds[p] = std::max(bounds[p], bounds[p - 1] + 1);
  for (std::size_t p = parts; p-- > 1;) bounds[p] = std::min(bounds[p], bounds[p + 1] - 1);

  std::unordered_map<std::string, std::size_t> assignment;
  for (std::size_t p = 0; p < parts; ++p) {
    for (std::size_t k = bounds[p]; k < bounds[p + 1]; ++k) assignment[units[order[k]]] = p;
  }

  std::vector<std::vector<Embedding>> buckets(parts);
  for (const auto& e : corpus.items()) {
    const std::size_t p = assignment.at(by_speaker ? e.speaker_id : e.segment_id);
    buckets[p].push_back(e);
  }
  std::vector<Corpus> out;
  out.reserve(parts);
  for (auto& b : buckets) out.emplace_back(corpus.dim(), std::move(b));
  return out;
}

}  // namespace veilvec
