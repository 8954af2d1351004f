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

// Minimal library walk-through on a small synthetic corpus: train an
// attribute classifier, calibrate it, train the autoencoder on calibrated
// soft labels, then compare attribute AUC before and after protection.

#include <cstdio>

#include "veilvec/adversary_ae.hpp"
#include "veilvec/attribute_classifier.hpp"
#include "veilvec/calibration.hpp"
#include "veilvec/corpus.hpp"
#include "veilvec/preprocess.hpp"
#include "veilvec/privacy_metrics.hpp"

using namespace veilvec;

int main() {
  SynthConfig synth;
  synth.n_speakers = 120;
  synth.segments_per_speaker = 20;
  synth.dim = 256;
  synth.speaker_rank = 32;
  synth.within_spread = 0.04;
  synth.seed = 11;
  const std::vector<double> fractions{0.25, 0.5, 0.25};
  const auto parts = split(generate(synth), fractions, 12, true);
  const Corpus &clf_split = parts[0], &ae_split = parts[1], &test = parts[2];

  const StandardizerStats stats = fit_standardizer(ae_split);
  ClassifierTrainConfig ccfg;
  ccfg.epochs = 20;
  const LinearClassifier clf = train(preprocess(stats, clf_split), ccfg);

  const std::vector<double> raw = score_all(clf, preprocess(stats, ae_split.matrix()));
  const CalibrationMap map = pav_fit(raw, ae_split.labels());
  std::vector<double> soft;
  for (double s : raw) soft.push_back(apply(map, s));

  AeTrainConfig acfg;
  acfg.lr = 1e-3;
  acfg.encoder_lr = 3e-4;
  acfg.decoder_lr = 1.0;
  acfg.adversary_lr = 0.03;
  acfg.momentum = 0.0;
  acfg.batch_size = 64;
  acfg.epochs = 50;
  const AeTrainResult ae = train_autoencoder(ae_split.with_posteriors(soft), acfg, &test);
  std::printf("final epoch: adversary loss %.4f, reconstruction %.4f\n", ae.log.back().adversary_loss,
              ae.log.back().reconstruction);

  const auto attribute_auc = [&](const Matrix& x) {
    return auc(canonical_polarity(ScoreSet::from_labels(score_all(clf, x), test.labels())).scores);
  };
  const Matrix protected_x = protect(ae.model, test.matrix(), RowVector::Constant(test.size(), 0.5));
  std::printf("attribute AUC on test speakers: original %.3f, protected %.3f\n",
              attribute_auc(preprocess(stats, test.matrix())), attribute_auc(protected_x));
  return 0;
}
