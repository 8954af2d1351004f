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

#include "veilvec/common.hpp"
#include "veilvec/corpus.hpp"

namespace veilvec {

inline constexpr double kStddevFloor = 1e-8;

/// Per-dimension mean and (floored) population standard deviation.
struct StandardizerStats {
  Vector mean;
  Vector stddev;

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mean.size()); }
};

inline StandardizerStats fit_standardizer(const Matrix& columns) {
  if (columns.cols() == 0) throw DataError("fit_standardizer: empty corpus");
  StandardizerStats s;
  s.mean = columns.rowwise().mean();
  const Matrix centered = columns.colwise() - s.mean;
  s.stddev = (centered.array().square().rowwise().sum() / static_cast<double>(columns.cols())).sqrt().matrix();
  s.stddev = s.stddev.cwiseMax(kStddevFloor);
  return s;
}

inline StandardizerStats fit_standardizer(const Corpus& corpus) {
  if (corpus.empty()) throw DataError("fit_standardizer: empty corpus");
  return fit_standardizer(corpus.matrix());
}

inline Vector standardize(const StandardizerStats& stats, const Vector& v) {
  require_dim(static_cast<std::size_t>(v.size()), stats.dim(), "standardize");
  return ((v - stats.mean).array() / stats.stddev.array()).matrix();
}

inline Vector length_normalize(const Vector& v) {
  const double n = v.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DataError("length_normalize: zero or non-finite vector");
  return v / n;
}

/// Standardization followed by length normalization, the input transform of
/// every model in the pipeline.
inline Vector preprocess(const StandardizerStats& stats, const Vector& v) {
  return length_normalize(standardize(stats, v));
}

inline Matrix preprocess(const StandardizerStats& stats, const Matrix& columns) {
  require_dim(static_cast<std::size_t>(columns.rows()), stats.dim(), "preprocess");
  Matrix out = (columns.colwise() - stats.mean).array().colwise() / stats.stddev.array();
  for (Eigen::Index c = 0; c < out.cols(); ++c) {
    const double n = out.col(c).norm();
    if (!(n > 0.0) || !std::isfinite(n)) throw DataError("preprocess: zero or non-finite vector at column " + std::to_string(c));
    out.col(c) /= n;
  }
  return out;
}

inline Corpus preprocess(const StandardizerStats& stats, const Corpus& corpus) {
  return corpus.with_vectors(preprocess(stats, corpus.matrix()));
}

}  // namespace veilvec
