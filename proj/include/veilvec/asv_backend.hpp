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

#include <map>
#include <numbers>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "veilvec/common.hpp"
#include "veilvec/corpus.hpp"
#include "veilvec/scores.hpp"

namespace veilvec {

namespace detail {

struct SpeakerGroups {
  std::vector<std::vector<Eigen::Index>> members;  // column indices per speaker
};

inline SpeakerGroups group_by_speaker(const std::vector<std::string>& speakers) {
  std::map<std::string, std::size_t> index;
  SpeakerGroups g;
  for (std::size_t i = 0; i < speakers.size(); ++i) {
    auto [it, inserted] = index.emplace(speakers[i], g.members.size());
    if (inserted) g.members.emplace_back();
    g.members[it->second].push_back(static_cast<Eigen::Index>(i));
  }
  return g;
}

inline void require_speaker_structure(const SpeakerGroups& g, std::string_view what) {
  if (g.members.size() < 2) throw DataError(std::string(what) + ": needs at least 2 speakers");
  for (const auto& m : g.members) {
    if (m.size() < 2) throw DataError(std::string(what) + ": every speaker needs at least 2 segments");
  }
}

inline double log_det_spd(const Matrix& m, std::string_view what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix is not positive definite");
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

inline Matrix inverse_spd(const Matrix& m, std::string_view what) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success) throw NumericalError(std::string(what) + ": matrix is not positive definite");
  return llt.solve(Matrix::Identity(m.rows(), m.cols()));
}

/// Adds eps_r = 1e-6 * trace / dim to the diagonal when `m` is (numerically)
/// singular or indefinite.
inline void ridge_if_singular(Matrix& m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(m, Eigen::EigenvaluesOnly);
  const double max_ev = es.eigenvalues().maxCoeff();
  const double min_ev = es.eigenvalues().minCoeff();
  if (min_ev <= 1e-12 * std::max(max_ev, 0.0) || !(max_ev > 0.0)) {
    const double tr = m.trace();
    const double ridge = tr > 0.0 ? 1e-6 * tr / static_cast<double>(m.rows()) : 1e-6;
    m.diagonal().array() += ridge;
  }
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

}  // namespace detail

// ---------------------------------------------------------------------------
// LDA

struct LdaProjection {
  Matrix matrix;  // k x d, rows are discriminant directions
  Vector mean;    // length d

  std::size_t out_dim() const noexcept { return static_cast<std::size_t>(matrix.rows()); }

  Vector project(const Vector& v) const {
    require_dim(static_cast<std::size_t>(v.size()), static_cast<std::size_t>(mean.size()), "lda project");
    return matrix * (v - mean);
  }
  Matrix project(const Matrix& columns) const {
    require_dim(static_cast<std::size_t>(columns.rows()), static_cast<std::size_t>(mean.size()), "lda project");
    return matrix * (columns.colwise() - mean);
  }
};

struct Scatter {
  Matrix within;   // per-sample within-speaker scatter
  Matrix between;  // sample-weighted between-speaker scatter
  Vector mean;
};

inline Scatter speaker_scatter(const Matrix& x, const std::vector<std::string>& speakers) {
  require_dim(speakers.size(), static_cast<std::size_t>(x.cols()), "speaker_scatter");
  const auto groups = detail::group_by_speaker(speakers);
  Scatter s;
  s.mean = x.rowwise().mean();
  s.within = Matrix::Zero(x.rows(), x.rows());
  s.between = Matrix::Zero(x.rows(), x.rows());
  for (const auto& members : groups.members) {
    Matrix block(x.rows(), static_cast<Eigen::Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) block.col(static_cast<Eigen::Index>(j)) = x.col(members[j]);
    const Vector m = block.rowwise().mean();
    const Matrix centered = block.colwise() - m;
    s.within.noalias() += centered * centered.transpose();
    s.between.noalias() += static_cast<double>(members.size()) * (m - s.mean) * (m - s.mean).transpose();
  }
  s.within /= static_cast<double>(x.cols());
  s.between /= static_cast<double>(x.cols());
  return s;
}

/// Fisher LDA: top-k solutions of S_b v = lambda S_w v, descending lambda,
/// normalized to v' S_w v = 1, sign fixed so the first nonzero component is
/// positive.
inline LdaProjection lda_fit(const Matrix& x, const std::vector<std::string>& speakers, int k) {
  const auto groups = detail::group_by_speaker(speakers);
  detail::require_speaker_structure(groups, "lda_fit");
  const auto n_speakers = static_cast<int>(groups.members.size());
  if (k < 1 || k > n_speakers - 1 || k > x.rows()) {
    throw ConfigError("lda_fit: k=" + std::to_string(k) + " must be in [1, min(dim, n_speakers - 1)=" +
                      std::to_string(std::min<Eigen::Index>(x.rows(), n_speakers - 1)) + "]");
  }
  Scatter s = speaker_scatter(x, speakers);
  detail::ridge_if_singular(s.within);

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(detail::symmetrize(s.between), detail::symmetrize(s.within));
  if (ges.info() != Eigen::Success) throw NumericalError("lda_fit: generalized eigenproblem failed");

  LdaProjection lda;
  lda.mean = s.mean;
  lda.matrix.resize(k, x.rows());
  const Eigen::Index n = ges.eigenvalues().size();
  for (int r = 0; r < k; ++r) {
    Vector v = ges.eigenvectors().col(n - 1 - r);
    const double tol = 1e-12 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
      if (std::abs(v(i)) > tol) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    lda.matrix.row(r) = v.transpose();
  }
  return lda;
}

inline LdaProjection lda_fit(const Corpus& corpus, int k) { return lda_fit(corpus.matrix(), corpus.speaker_ids(), k); }

// ---------------------------------------------------------------------------
// Two-covariance PLDA:  x = mu + s + e,  s ~ N(0, B),  e ~ N(0, W)

struct PldaModel {
  Vector mu;
  Matrix between;  // B
  Matrix within;   // W

  std::size_t dim() const noexcept { return static_cast<std::size_t>(mu.size()); }
};

namespace detail {

struct PldaStats {
  std::vector<Vector> speaker_means;
  std::vector<double> counts;
  Matrix within_scatter;  // sum over speakers of sum_j (x_ij - mean_i)(x_ij - mean_i)'
  double n_total = 0.0;
};

inline PldaStats plda_stats(const Matrix& x, const std::vector<std::string>& speakers) {
  require_dim(speakers.size(), static_cast<std::size_t>(x.cols()), "plda");
  const auto groups = group_by_speaker(speakers);
  require_speaker_structure(groups, "plda_fit");
  PldaStats st;
  st.within_scatter = Matrix::Zero(x.rows(), x.rows());
  for (const auto& members : groups.members) {
    Matrix block(x.rows(), static_cast<Eigen::Index>(members.size()));
    for (std::size_t j = 0; j < members.size(); ++j) block.col(static_cast<Eigen::Index>(j)) = x.col(members[j]);
    const Vector m = block.rowwise().mean();
    const Matrix centered = block.colwise() - m;
    st.within_scatter.noalias() += centered * centered.transpose();
    st.speaker_means.push_back(m);
    st.counts.push_back(static_cast<double>(members.size()));
  }
  st.n_total = static_cast<double>(x.cols());
  return st;
}

/// Per-distinct-count caches of (B + W/n)^-1 and log|B + W/n|.
struct CountCache {
  std::map<double, std::pair<Matrix, double>> by_count;

  CountCache(const PldaModel& m, const std::vector<double>& counts) {
    for (double n : counts) {
      if (by_count.count(n)) continue;
      const Matrix c = m.between + m.within / n;
      by_count.emplace(n, std::make_pair(inverse_spd(c, "plda"), log_det_spd(c, "plda")));
    }
  }
};

inline double plda_log_likelihood(const PldaModel& m, const PldaStats& st) {
  const double d = static_cast<double>(m.dim());
  const Matrix w_inv = inverse_spd(m.within, "plda");
  const double logdet_w = log_det_spd(m.within, "plda");
  const CountCache cache(m, st.counts);
  double ll = -0.5 * (w_inv.cwiseProduct(st.within_scatter)).sum();
  for (std::size_t i = 0; i < st.counts.size(); ++i) {
    const double n = st.counts[i];
    const auto& [c_inv, logdet_c] = cache.by_count.at(n);
    const Vector dev = st.speaker_means[i] - m.mu;
    ll += -0.5 * n * d * std::log(2.0 * std::numbers::pi) - 0.5 * (n - 1.0) * logdet_w - 0.5 * d * std::log(n) -
          0.5 * logdet_c - 0.5 * dev.dot(c_inv * dev);
  }
  return ll;
}

}  // namespace detail

/// Exact marginal log-likelihood of speaker-labelled data under the model.
inline double plda_log_likelihood(const PldaModel& m, const Matrix& x, const std::vector<std::string>& speakers) {
  return detail::plda_log_likelihood(m, detail::plda_stats(x, speakers));
}

struct PldaFitResult {
  PldaModel model;
  std::vector<double> log_likelihood;  // initial model, then after each iteration
};

/// One EM iteration of the two-covariance model.
inline PldaModel plda_em_step(const PldaModel& m, const detail::PldaStats& st) {
  const detail::CountCache cache(m, st.counts);
  const auto s = static_cast<double>(st.counts.size());
  std::vector<Vector> post_mean(st.counts.size());
  Matrix post_cov_sum = Matrix::Zero(m.mu.size(), m.mu.size());
  Matrix post_cov_weighted = Matrix::Zero(m.mu.size(), m.mu.size());
  std::map<double, Matrix> post_cov;  // B - B (B + W/n)^-1 B, per count
  for (const auto& [n, entry] : cache.by_count) {
    post_cov.emplace(n, detail::symmetrize(m.between - m.between * entry.first * m.between));
  }
  for (std::size_t i = 0; i < st.counts.size(); ++i) {
    const double n = st.counts[i];
    const Matrix& c_inv = cache.by_count.at(n).first;
    post_mean[i] = m.mu + m.between * (c_inv * (st.speaker_means[i] - m.mu));
    post_cov_sum += post_cov.at(n);
    post_cov_weighted += n * post_cov.at(n);
  }
  PldaModel next;
  next.mu = Vector::Zero(m.mu.size());
  for (const auto& y : post_mean) next.mu += y;
  next.mu /= s;
  next.between = post_cov_sum;
  next.within = st.within_scatter + post_cov_weighted;
  for (std::size_t i = 0; i < st.counts.size(); ++i) {
    const Vector dy = post_mean[i] - next.mu;
    next.between.noalias() += dy * dy.transpose();
    const Vector dx = st.speaker_means[i] - post_mean[i];
    next.within.noalias() += st.counts[i] * dx * dx.transpose();
  }
  next.between = detail::symmetrize(next.between / s);
  next.within = detail::symmetrize(next.within / st.n_total);
  return next;
}

/// EM for the two-covariance model, initialised from the speaker scatter
/// matrices.
inline PldaFitResult plda_fit(const Matrix& x, const std::vector<std::string>& speakers, int iters) {
  if (iters < 0) throw ConfigError("plda_fit: iters must be >= 0");
  const auto st = detail::plda_stats(x, speakers);
  Scatter sc = speaker_scatter(x, speakers);
  PldaFitResult res;
  res.model.mu = sc.mean;
  res.model.within = detail::symmetrize(sc.within);
  detail::ridge_if_singular(res.model.within);
  res.model.between = detail::symmetrize(sc.between);
  // B only needs to be PSD, but B + W/n must be invertible, which holds once W is PD.
  res.log_likelihood.push_back(detail::plda_log_likelihood(res.model, st));
  for (int it = 0; it < iters; ++it) {
    res.model = plda_em_step(res.model, st);
    Eigen::LLT<Matrix> llt(res.model.within);
    if (llt.info() != Eigen::Success) detail::ridge_if_singular(res.model.within);
    res.log_likelihood.push_back(detail::plda_log_likelihood(res.model, st));
    if (!std::isfinite(res.log_likelihood.back())) throw NumericalError("plda_fit: non-finite log-likelihood");
  }
  return res;
}

/// Precomputed verification scorer:
///   llr(e,t) = e'Qe/2 + t'Qt/2 + e'Pt + c   (e, t centred on mu)
class PldaScorer {
 public:
  explicit PldaScorer(const PldaModel& m) : mu_(m.mu) {
    const Matrix total = m.between + m.within;
    const Matrix total_inv = detail::inverse_spd(total, "plda_score");
    const Matrix schur = detail::symmetrize(total - m.between * total_inv * m.between);
    const Matrix schur_inv = detail::inverse_spd(schur, "plda_score");
    q_ = detail::symmetrize(total_inv - schur_inv);
    p_ = detail::symmetrize(total_inv * m.between * schur_inv);
    c_ = 0.5 * detail::log_det_spd(total, "plda_score") - 0.5 * detail::log_det_spd(schur, "plda_score");
  }

  double score(const Vector& enroll, const Vector& test) const {
    require_dim(static_cast<std::size_t>(enroll.size()), static_cast<std::size_t>(mu_.size()), "plda_score");
    require_dim(static_cast<std::size_t>(test.size()), static_cast<std::size_t>(mu_.size()), "plda_score");
    const Vector e = enroll - mu_;
    const Vector t = test - mu_;
    return 0.5 * e.dot(q_ * e) + 0.5 * t.dot(q_ * t) + e.dot(p_ * t) + c_;
  }

 private:
  Vector mu_;
  Matrix q_, p_;
  double c_ = 0.0;
};

inline double plda_score(const PldaModel& m, const Vector& enroll, const Vector& test) {
  return PldaScorer(m).score(enroll, test);
}

// ---------------------------------------------------------------------------
// Trials

struct Trial {
  std::string enroll;
  std::string test;
  bool is_target = false;

  bool operator==(const Trial&) const = default;
};

using TrialList = std::vector<Trial>;

/// Pairs every segment (as test) with one other segment of the same speaker
/// and `nontarget_per_test` segments of other speakers, all drawn at random.
inline TrialList build_trials(const Corpus& corpus, std::uint64_t seed, int nontarget_per_test = 3) {
  const auto groups = detail::group_by_speaker(corpus.speaker_ids());
  detail::require_speaker_structure(groups, "build_trials");
  std::unordered_map<std::string, std::size_t> speaker_index;
  {
    std::size_t g = 0;
    for (const auto& members : groups.members) speaker_index[corpus[static_cast<std::size_t>(members[0])].speaker_id] = g++;
  }
  std::mt19937_64 rng(seed);
  const auto n = static_cast<std::size_t>(corpus.size());
  TrialList trials;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& test = corpus[i];
    const auto& own = groups.members[speaker_index.at(test.speaker_id)];
    std::uniform_int_distribution<std::size_t> pick_own(0, own.size() - 2);
    std::size_t j = pick_own(rng);
    if (static_cast<std::size_t>(own[j]) == i) j = own.size() - 1;
    trials.push_back({corpus[static_cast<std::size_t>(own[j])].segment_id, test.segment_id, true});
    std::uniform_int_distribution<std::size_t> pick_any(0, n - 1);
    for (int k = 0; k < nontarget_per_test;) {
      const std::size_t e = pick_any(rng);
      if (corpus[e].speaker_id == test.speaker_id) continue;
      trials.push_back({corpus[e].segment_id, test.segment_id, false});
      ++k;
    }
  }
  return trials;
}

// Trial-list file:
//   veilvec-trials v1
//   <enroll_id> <test_id> <target|nontarget>

inline void save_trials(const TrialList& trials, const std::string& path) {
  auto out = open_output(path);
  out << "veilvec-trials v1\n";
  for (const auto& t : trials) out << t.enroll << ' ' << t.test << ' ' << (t.is_target ? "target" : "nontarget") << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline TrialList load_trials(const std::string& path) {
  auto in = open_input(path);
  std::string line;
  std::size_t lineno = 1;
  if (!std::getline(in, line) || split_ws(line) != std::vector<std::string_view>{"veilvec-trials", "v1"}) {
    throw ParseError(path, 1, "malformed header, expected 'veilvec-trials v1'");
  }
  TrialList trials;
  while (std::getline(in, line)) {
    ++lineno;
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 3 || (tok[2] != "target" && tok[2] != "nontarget")) {
      throw ParseError(path, lineno, "expected '<enroll_id> <test_id> <target|nontarget>'");
    }
    trials.push_back({std::string(tok[0]), std::string(tok[1]), tok[2] == "target"});
  }
  return trials;
}

struct TrialScores {
  ScoreSet scores;
  std::vector<ScoreRecord> records;  // id "<enroll>:<test>"
};

/// Scores every trial with LDA projection followed by PLDA. Enrollment and
/// test vectors both come from `corpus`, so a protected corpus yields the
/// protected condition.
inline TrialScores run_trials(const PldaScorer& plda, const LdaProjection& lda, const Corpus& corpus,
                              const TrialList& trials) {
  if (trials.empty()) throw DataError("run_trials: empty trial list");
  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < corpus.size(); ++i) index.emplace(corpus[i].segment_id, i);
  std::unordered_map<std::size_t, Vector> projected;
  auto get = [&](const std::string& id, const Trial& t) -> const Vector& {
    auto it = index.find(id);
    if (it == index.end()) {
      throw DataError("run_trials: trial '" + t.enroll + " " + t.test + "' references unknown segment '" + id + "'");
    }
    auto p = projected.find(it->second);
    if (p == projected.end()) p = projected.emplace(it->second, lda.project(corpus[it->second].vector)).first;
    return p->second;
  };
  TrialScores out;
  out.records.reserve(trials.size());
  for (const auto& t : trials) {
    const double llr = plda.score(get(t.enroll, t), get(t.test, t));
    (t.is_target ? out.scores.target : out.scores.nontarget).push_back(llr);
    out.records.push_back({t.enroll + ":" + t.test, t.is_target ? 1 : 0, llr, std::nullopt});
  }
  return out;
}

}  // namespace veilvec
