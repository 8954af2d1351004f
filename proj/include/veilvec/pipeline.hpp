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

// End-to-end experiment driver. Every command reads its inputs from and
// writes its outputs to one run directory; file names are fixed (see
// RunPaths). Per-stage seeds are derived from the master seed with
// stage_seed(master, "<command>").

#include <array>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "veilvec/adversary_ae.hpp"
#include "veilvec/asv_backend.hpp"
#include "veilvec/attribute_classifier.hpp"
#include "veilvec/calibration.hpp"
#include "veilvec/common.hpp"
#include "veilvec/corpus.hpp"
#include "veilvec/preprocess.hpp"
#include "veilvec/privacy_metrics.hpp"
#include "veilvec/scores.hpp"

namespace veilvec {

using Json = nlohmann::ordered_json;

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "veilvec-run";
  SynthConfig synth;
  std::array<double, 3> split{0.25, 0.5, 0.25};  // classifier / autoencoder / test, by speaker
  ClassifierTrainConfig clf;
  AeTrainConfig ae;
  double protect_w = kNeutralCondition;
  int mi_k = kDefaultMiNeighbors;
  double hist_bin_width = kDefaultPlotBinWidth;
  double plot_bin_width = kDefaultPlotBinWidth;
  int lda_dim = 128;  // clipped to n_speakers - 1 of the back-end training data
  int plda_iters = 10;
  int nontarget_per_test = 3;

  void validate() const {
    synth.validate();
    ae.validate();
    double sum = 0.0;
    for (double f : split) {
      if (!(f > 0.0)) throw ConfigError("split fractions must be positive");
      sum += f;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");
    if (clf.epochs < 0 || clf.batch_size < 1 || !(clf.lr >= 0.0)) throw ConfigError("bad classifier settings");
    if (!(protect_w >= 0.0 && protect_w <= 1.0)) throw ConfigError("protect.w must be in [0,1]");
    if (mi_k < 1) throw ConfigError("metrics.mi_k must be >= 1");
    if (!(hist_bin_width > 0.0 && hist_bin_width <= 1.0) || !(plot_bin_width > 0.0 && plot_bin_width <= 1.0)) {
      throw ConfigError("bin widths must be in (0,1]");
    }
    if (lda_dim < 1 || plda_iters < 0 || nontarget_per_test < 1) throw ConfigError("bad asv settings");
    if (out_dir.empty()) throw ConfigError("out must not be empty");
  }
};

namespace detail {

struct ConfigKey {
  std::function<bool(PipelineConfig&, std::string_view)> set;
  std::function<std::string(const PipelineConfig&)> get;
};

template <typename T>
ConfigKey number_key(T PipelineConfig::*outer) {
  return {[outer](PipelineConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, double>) {
              return parse_double(v, c.*outer);
            } else {
              std::uint64_t u = 0;
              if (!parse_u64(v, u) || u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) return false;
              c.*outer = static_cast<T>(u);
              return true;
            }
          },
          [outer](const PipelineConfig& c) {
            if constexpr (std::is_same_v<T, double>) {
              return format_double(c.*outer);
            } else {
              return std::to_string(c.*outer);
            }
          }};
}

template <typename S, typename T>
ConfigKey nested_key(S PipelineConfig::*outer, T S::*inner) {
  return {[outer, inner](PipelineConfig& c, std::string_view v) {
            if constexpr (std::is_same_v<T, double>) {
              return parse_double(v, c.*outer.*inner);
            } else {
              std::uint64_t u = 0;
              if (!parse_u64(v, u) || u > static_cast<std::uint64_t>(std::numeric_limits<T>::max())) return false;
              c.*outer.*inner = static_cast<T>(u);
              return true;
            }
          },
          [outer, inner](const PipelineConfig& c) {
            if constexpr (std::is_same_v<T, double>) {
              return format_double(c.*outer.*inner);
            } else {
              return std::to_string(c.*outer.*inner);
            }
          }};
}

/// Optional per-group AE learning rate; the dump shows the resolved value.
inline ConfigKey ae_rate_key(std::optional<double> AeTrainConfig::*field, double (AeTrainConfig::*resolved)() const) {
  return {[field](PipelineConfig& c, std::string_view v) {
            double x = 0.0;
            if (!parse_double(v, x)) return false;
            c.ae.*field = x;
            return true;
          },
          [resolved](const PipelineConfig& c) { return format_double((c.ae.*resolved)()); }};
}

inline ConfigKey split_key(std::size_t i) {
  return {[i](PipelineConfig& c, std::string_view v) { return parse_double(v, c.split[i]); },
          [i](const PipelineConfig& c) { return format_double(c.split[i]); }};
}

// Ordered, so the canonical dump is stable.
inline const std::map<std::string, ConfigKey, std::less<>>& config_keys() {
  static const std::map<std::string, ConfigKey, std::less<>> keys = {
      {"seed", number_key(&PipelineConfig::seed)},
      {"out",
       {[](PipelineConfig& c, std::string_view v) {
          c.out_dir = std::string(v);
          return true;
        },
        [](const PipelineConfig& c) { return c.out_dir; }}},
      {"synth.n_speakers", nested_key(&PipelineConfig::synth, &SynthConfig::n_speakers)},
      {"synth.segments_per_speaker", nested_key(&PipelineConfig::synth, &SynthConfig::segments_per_speaker)},
      {"synth.dim", nested_key(&PipelineConfig::synth, &SynthConfig::dim)},
      {"synth.attribute_shift", nested_key(&PipelineConfig::synth, &SynthConfig::attribute_shift)},
      {"synth.speaker_spread", nested_key(&PipelineConfig::synth, &SynthConfig::speaker_spread)},
      {"synth.within_spread", nested_key(&PipelineConfig::synth, &SynthConfig::within_spread)},
      {"synth.speaker_rank", nested_key(&PipelineConfig::synth, &SynthConfig::speaker_rank)},
      {"split.classifier", split_key(0)},
      {"split.autoencoder", split_key(1)},
      {"split.test", split_key(2)},
      {"clf.epochs", nested_key(&PipelineConfig::clf, &ClassifierTrainConfig::epochs)},
      {"clf.lr", nested_key(&PipelineConfig::clf, &ClassifierTrainConfig::lr)},
      {"clf.batch_size", nested_key(&PipelineConfig::clf, &ClassifierTrainConfig::batch_size)},
      {"ae.lr", nested_key(&PipelineConfig::ae, &AeTrainConfig::lr)},
      {"ae.encoder_lr", ae_rate_key(&AeTrainConfig::encoder_lr, &AeTrainConfig::lr_encoder)},
      {"ae.decoder_lr", ae_rate_key(&AeTrainConfig::decoder_lr, &AeTrainConfig::lr_decoder)},
      {"ae.adversary_lr", ae_rate_key(&AeTrainConfig::adversary_lr, &AeTrainConfig::lr_adversary)},
      {"ae.momentum", nested_key(&PipelineConfig::ae, &AeTrainConfig::momentum)},
      {"ae.batch_size", nested_key(&PipelineConfig::ae, &AeTrainConfig::batch_size)},
      {"ae.epochs", nested_key(&PipelineConfig::ae, &AeTrainConfig::epochs)},
      {"ae.bn_momentum", nested_key(&PipelineConfig::ae, &AeTrainConfig::bn_momentum)},
      {"protect.w", number_key(&PipelineConfig::protect_w)},
      {"metrics.mi_k", number_key(&PipelineConfig::mi_k)},
      {"metrics.hist_bin_width", number_key(&PipelineConfig::hist_bin_width)},
      {"metrics.plot_bin_width", number_key(&PipelineConfig::plot_bin_width)},
      {"asv.lda_dim", number_key(&PipelineConfig::lda_dim)},
      {"asv.plda_iters", number_key(&PipelineConfig::plda_iters)},
      {"asv.nontarget_per_test", number_key(&PipelineConfig::nontarget_per_test)},
  };
  return keys;
}

}  // namespace detail

/// `key = value` lines; '#' starts a comment. Unknown keys are errors.
inline PipelineConfig parse_config(std::istream& in, const std::string& source) {
  PipelineConfig cfg;
  const auto& keys = detail::config_keys();
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (split_ws(line).empty()) continue;
      throw ParseError(source, lineno, "expected 'key = value'");
    }
    const auto key = split_ws(std::string_view(line).substr(0, eq));
    const auto value = split_ws(std::string_view(line).substr(eq + 1));
    if (key.size() != 1 || value.size() != 1) throw ParseError(source, lineno, "expected 'key = value'");
    auto it = keys.find(key[0]);
    if (it == keys.end()) throw ParseError(source, lineno, "unknown key '" + std::string(key[0]) + "'");
    if (!it->second.set(cfg, value[0])) {
      throw ParseError(source, lineno, "bad value for '" + std::string(key[0]) + "'");
    }
  }
  return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
  auto in = open_input(path);
  return parse_config(in, path);
}

/// Canonical `key = value` dump, parseable by parse_config.
inline std::string to_string(const PipelineConfig& cfg) {
  std::string out;
  for (const auto& [k, key] : detail::config_keys()) out += k + " = " + key.get(cfg) + "\n";
  return out;
}

// ---------------------------------------------------------------------------

struct RunPaths {
  std::filesystem::path dir;

  std::string file(std::string_view name) const { return (dir / name).string(); }
  std::string classifier_corpus() const { return file("corpus_classifier.txt"); }
  std::string autoencoder_corpus() const { return file("corpus_autoencoder.txt"); }
  std::string test_corpus() const { return file("corpus_test.txt"); }
  std::string classifier() const { return file("classifier.txt"); }
  std::string calibration() const { return file("calibration.txt"); }
  std::string calibration_scores() const { return file("scores_calibration.txt"); }
  std::string autoencoder() const { return file("autoencoder.txt"); }
  std::string training_log() const { return file("training_log.json"); }
  std::string protected_corpus() const { return file("corpus_protected.txt"); }
  std::string privacy_report() const { return file("privacy.json"); }
  std::string trials() const { return file("trials.txt"); }
  std::string asv_report() const { return file("asv.json"); }
  std::string report() const { return file("report.json"); }
};

inline RunPaths run_paths(const PipelineConfig& cfg) { return {std::filesystem::path(cfg.out_dir)}; }

inline void log_line(const std::string& msg) { std::clog << "veilvec: " << msg << '\n'; }

namespace detail {

inline void write_json(const Json& j, const std::string& path) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
  if (!out) throw DataError("write failed for '" + path + "'");
}

inline Json read_json(const std::string& path) {
  auto in = open_input(path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("'" + path + "': " + e.what());
  }
}

/// Everything the evaluation commands need from the training stages.
struct Trained {
  Corpus ae_split;
  Corpus test;
  StandardizerStats stats;
  LinearClassifier clf;
  CalibrationMap calibration;
  AeModel ae;
};

inline Trained load_trained(const RunPaths& p) {
  Trained t{load(p.autoencoder_corpus()), load(p.test_corpus()), {}, load_classifier(p.classifier()),
            load_calibration(p.calibration()), load_autoencoder(p.autoencoder())};
  t.stats = t.ae.preprocess;
  return t;
}

inline std::vector<double> calibrated(const CalibrationMap& map, const std::vector<double>& raw) {
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = apply(map, raw[i]);
  return out;
}

inline Json bins_json(const std::vector<CalibrationBin>& bins) {
  Json a = Json::array();
  for (const auto& b : bins) a.push_back({{"center", b.center}, {"proportion", b.proportion}, {"count", b.count}});
  return a;
}

inline Json bins_json(const std::vector<HistogramBin>& bins) {
  Json a = Json::array();
  for (const auto& b : bins) a.push_back({{"center", b.center}, {"target", b.target}, {"nontarget", b.nontarget}});
  return a;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands

inline void cmd_gen(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths p = run_paths(cfg);
  std::filesystem::create_directories(p.dir);
  SynthConfig synth = cfg.synth;
  synth.seed = stage_seed(cfg.seed, "gen");
  const Corpus all = generate(synth);
  const auto parts = split(all, cfg.split, stage_seed(cfg.seed, "split"), true);
  save(parts[0], p.classifier_corpus());
  save(parts[1], p.autoencoder_corpus());
  save(parts[2], p.test_corpus());
  log_line("gen: " + std::to_string(all.size()) + " segments -> " + std::to_string(parts[0].size()) + " / " +
           std::to_string(parts[1].size()) + " / " + std::to_string(parts[2].size()));
}

/// Trains the attribute classifier on the classifier split and fits the PAV
/// map on its scores over the autoencoder split. Inputs are preprocessed
/// with statistics of the autoencoder split.
inline void cmd_train_clf(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths p = run_paths(cfg);
  const Corpus clf_split = load(p.classifier_corpus());
  const Corpus ae_split = load(p.autoencoder_corpus());
  const StandardizerStats stats = fit_standardizer(ae_split);
  ClassifierTrainConfig tc = cfg.clf;
  tc.seed = stage_seed(cfg.seed, "train-clf");
  const LinearClassifier clf = train(preprocess(stats, clf_split), tc);

  const Matrix x = preprocess(stats, ae_split.matrix());
  const std::vector<double> raw = score_all(clf, x);
  const std::vector<int> labels = ae_split.labels();
  const CalibrationMap map = pav_fit(raw, labels);
  save(clf, p.classifier());
  save(map, p.calibration());

  const double prior = static_cast<double>(std::count(labels.begin(), labels.end(), 1)) / labels.size();
  std::vector<ScoreRecord> records;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    records.push_back({ae_split[i].segment_id, labels[i], raw[i],
                       posterior_to_llr(apply(map, raw[i]), prior, raw.size())});
  }
  save_scores(records, p.calibration_scores());
  log_line("train-clf: calibration-split AUC " + format_double(auc(ScoreSet::from_labels(raw, labels))) + ", " +
           std::to_string(map.posteriors.size()) + " PAV blocks");
}

/// Attaches calibrated soft labels to the autoencoder split and trains the
/// adversarial autoencoder. The test split serves as held-out set for the
/// adversary AUC in the training log.
inline void cmd_train_ae(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths p = run_paths(cfg);
  const Corpus ae_split = load(p.autoencoder_corpus());
  const Corpus test = load(p.test_corpus());
  const LinearClassifier clf = load_classifier(p.classifier());
  const CalibrationMap map = load_calibration(p.calibration());
  const StandardizerStats stats = fit_standardizer(ae_split);
  const auto posteriors = detail::calibrated(map, score_all(clf, preprocess(stats, ae_split.matrix())));

  AeTrainConfig tc = cfg.ae;
  tc.seed = stage_seed(cfg.seed, "train-ae");
  const auto res = train_autoencoder(ae_split.with_posteriors(posteriors), tc, &test);
  save(res.model, p.autoencoder());

  Json log = Json::array();
  for (const auto& e : res.log) {
    Json row = {{"epoch", e.epoch},
                {"adversary_loss", e.adversary_loss},
                {"autoencoder_loss", e.autoencoder_loss},
                {"reconstruction", e.reconstruction}};
    if (e.heldout_adversary_auc) row["heldout_adversary_auc"] = *e.heldout_adversary_auc;
    log.push_back(row);
  }
  detail::write_json(log, p.training_log());
  if (!res.log.empty()) {
    const auto& last = res.log.back();
    log_line("train-ae: epoch " + std::to_string(last.epoch) + " L_adv " + format_double(last.adversary_loss) +
             " L_ae " + format_double(last.autoencoder_loss) + " held-out adversary AUC " +
             (last.heldout_adversary_auc ? format_double(*last.heldout_adversary_auc) : "n/a"));
  }
}

inline void cmd_protect(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths p = run_paths(cfg);
  const AeModel model = load_autoencoder(p.autoencoder());
  save(protect(model, load(p.test_corpus()), cfg.protect_w), p.protected_corpus());
  log_line("protect: w = " + format_double(cfg.protect_w) + " -> " + p.protected_corpus());
}

/// The three evaluation conditions of the test split: preprocessed original
/// vectors, reconstruction conditioned on w = y~, and protection with the
/// configured w.
struct Conditions {
  std::vector<std::string> names;
  std::vector<Corpus> corpora;
};

inline Conditions evaluation_conditions(const detail::Trained& t, double protect_w) {
  const Matrix raw = t.test.matrix();
  const Matrix orig = preprocess(t.stats, raw);
  const auto posteriors = detail::calibrated(t.calibration, score_all(t.clf, orig));
  const RowVector soft = Eigen::Map<const RowVector>(posteriors.data(), static_cast<Eigen::Index>(posteriors.size()));
  Conditions c;
  c.names = {"original", "w=y~", "w=" + format_double(protect_w)};
  c.corpora.push_back(t.test.with_vectors(orig));
  c.corpora.push_back(t.test.with_vectors(protect(t.ae, raw, soft)));
  c.corpora.push_back(t.test.with_vectors(
      protect(t.ae, raw, RowVector::Constant(static_cast<Eigen::Index>(t.test.size()), protect_w))));
  return c;
}

inline Json privacy_row(const std::string& name, const Corpus& vectors, const detail::Trained& t,
                        const PipelineConfig& cfg, double prior, std::size_t n_cal) {
  const std::vector<int> labels = vectors.labels();
  const std::vector<double> raw = score_all(t.clf, vectors.matrix());
  const PolarityResult pol = canonical_polarity(ScoreSet::from_labels(raw, labels));
  const std::vector<int> canon_labels =
      pol.swapped ? [&] {
        std::vector<int> l(labels);
        for (int& v : l) v = 1 - v;
        return l;
      }()
                  : labels;
  const auto post = detail::calibrated(t.calibration, raw);
  std::vector<double> llr(post.size());
  for (std::size_t i = 0; i < post.size(); ++i) llr[i] = posterior_to_llr(post[i], prior, n_cal);
  const ScoreSet llr_set = ScoreSet::from_labels(llr, canon_labels);
  const ZebraReport z = zebra(pol.scores);
  return {{"condition", name},
          {"auc", auc(pol.scores)},
          {"eer", eer(pol.scores)},
          {"cllr", cllr(llr_set.target, llr_set.nontarget)},
          {"cllr_min", cllr_min(pol.scores)},
          {"d_ece", z.d_ece},
          {"log10_lw", z.log10_lw},
          {"tag", z.tag},
          {"mi_avg_bits", mutual_information(vectors.matrix(), labels, cfg.mi_k)},
          {"polarity_swapped", pol.swapped},
          {"histogram", detail::bins_json(score_histogram(ScoreSet::from_labels(post, canon_labels),
                                                          cfg.hist_bin_width))},
          {"calibration_plot", detail::bins_json(calibration_plot(raw, canon_labels, cfg.plot_bin_width))}};
}

inline Json evaluate_privacy(const PipelineConfig& cfg) {
  cfg.validate();
  const detail::Trained t = detail::load_trained(run_paths(cfg));
  const auto labels_cal = t.ae_split.labels();
  const double prior =
      static_cast<double>(std::count(labels_cal.begin(), labels_cal.end(), 1)) / static_cast<double>(labels_cal.size());
  const Conditions cond = evaluation_conditions(t, cfg.protect_w);
  Json rows = Json::array();
  for (std::size_t i = 0; i < cond.names.size(); ++i) {
    rows.push_back(privacy_row(cond.names[i], cond.corpora[i], t, cfg, prior, labels_cal.size()));
  }
  Json mi = Json::array();
  for (const auto& r : rows) mi.push_back({{"condition", r["condition"]}, {"mi_avg_bits", r["mi_avg_bits"]}});

  // classifier calibration on the autoencoder split, raw vs PAV-calibrated
  const auto raw_cal = score_all(t.clf, preprocess(t.stats, t.ae_split.matrix()));
  Json plots = {{"calibration_raw", detail::bins_json(calibration_plot(raw_cal, labels_cal, cfg.plot_bin_width))},
                {"calibration_pav", detail::bins_json(calibration_plot(detail::calibrated(t.calibration, raw_cal),
                                                                       labels_cal, cfg.plot_bin_width))}};
  return {{"protection", rows}, {"mutual_information", mi}, {"plots", plots}};
}

inline void cmd_eval_privacy(const PipelineConfig& cfg) {
  const Json j = evaluate_privacy(cfg);
  detail::write_json(j, run_paths(cfg).privacy_report());
  for (const auto& r : j["protection"]) {
    log_line("eval-privacy: " + r["condition"].get<std::string>() + " AUC " + format_double(r["auc"].get<double>()) +
             " Cllr_min " + format_double(r["cllr_min"].get<double>()) + " D_ECE " +
             format_double(r["d_ece"].get<double>()) + " tag " + r["tag"].get<std::string>());
  }
}

/// LDA + PLDA trained on original vectors of the classifier and autoencoder
/// splits, trials over the test split under each condition.
inline Json evaluate_asv(const PipelineConfig& cfg) {
  cfg.validate();
  const RunPaths p = run_paths(cfg);
  const detail::Trained t = detail::load_trained(p);
  const Corpus clf_split = load(p.classifier_corpus());

  const Matrix a = preprocess(t.stats, clf_split.matrix());
  const Matrix b = preprocess(t.stats, t.ae_split.matrix());
  Matrix x(a.rows(), a.cols() + b.cols());
  x << a, b;
  std::vector<std::string> speakers = clf_split.speaker_ids();
  const auto more = t.ae_split.speaker_ids();
  speakers.insert(speakers.end(), more.begin(), more.end());
  const int n_speakers = static_cast<int>(detail::group_by_speaker(speakers).members.size());
  const int k = std::min({cfg.lda_dim, n_speakers - 1, static_cast<int>(x.rows())});
  const LdaProjection lda = lda_fit(x, speakers, k);
  const PldaFitResult plda = plda_fit(lda.project(x), speakers, cfg.plda_iters);
  const PldaScorer scorer(plda.model);

  const TrialList trials = build_trials(t.test, stage_seed(cfg.seed, "trials"), cfg.nontarget_per_test);
  save_trials(trials, p.trials());
  const Conditions cond = evaluation_conditions(t, cfg.protect_w);
  Json rows = Json::array();
  for (std::size_t i = 0; i < cond.names.size(); ++i) {
    const TrialScores s = run_trials(scorer, lda, cond.corpora[i], trials);
    rows.push_back({{"condition", cond.names[i]}, {"eer", eer(s.scores)}, {"cllr_min", cllr_min(s.scores)}});
  }
  return {{"asv",
           {{"lda_dim", k},
            {"plda_iters", cfg.plda_iters},
            {"target_trials", std::count_if(trials.begin(), trials.end(), [](const Trial& tr) { return tr.is_target; })},
            {"nontarget_trials",
             std::count_if(trials.begin(), trials.end(), [](const Trial& tr) { return !tr.is_target; })},
            {"rows", rows}}}};
}

inline void cmd_eval_asv(const PipelineConfig& cfg) {
  const Json j = evaluate_asv(cfg);
  detail::write_json(j, run_paths(cfg).asv_report());
  for (const auto& r : j["asv"]["rows"]) {
    log_line("eval-asv: " + r["condition"].get<std::string>() + " EER " + format_double(r["eer"].get<double>()) +
             " Cllr_min " + format_double(r["cllr_min"].get<double>()));
  }
}

/// Merges configuration, training log and both evaluation reports. Contains
/// no wall-clock data, so equal seeds give byte-identical files.
inline Json build_report(const PipelineConfig& cfg) {
  const RunPaths p = run_paths(cfg);
  Json config = Json::object();
  for (const auto& [k, key] : detail::config_keys()) {
    if (k != "out") config[k] = key.get(cfg);
  }
  Json privacy = detail::read_json(p.privacy_report());
  Json asv = detail::read_json(p.asv_report());
  return {{"format", "veilvec-report v1"},
          {"config", config},
          {"training", detail::read_json(p.training_log())},
          {"protection", privacy.at("protection")},
          {"mutual_information", privacy.at("mutual_information")},
          {"asv", asv.at("asv")},
          {"plots", privacy.at("plots")}};
}

inline void cmd_report(const PipelineConfig& cfg) {
  cfg.validate();
  detail::write_json(build_report(cfg), run_paths(cfg).report());
  log_line("report: " + run_paths(cfg).report());
}

inline void run_all(const PipelineConfig& cfg) {
  cmd_gen(cfg);
  cmd_train_clf(cfg);
  cmd_train_ae(cfg);
  cmd_protect(cfg);
  cmd_eval_privacy(cfg);
  cmd_eval_asv(cfg);
  cmd_report(cfg);
}

}  // namespace veilvec
