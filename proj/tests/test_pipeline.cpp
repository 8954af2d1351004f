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
#include <sys/wait.h>

#include <cstdlib>
#include <sstream>

#include "test_util.hpp"
#include "veilvec/pipeline.hpp"

namespace veilvec {
namespace {

// A pipeline small enough to run in a few seconds.
PipelineConfig tiny_config(const std::string& out) {
  std::istringstream in(R"(
seed = 7
synth.n_speakers = 24
synth.segments_per_speaker = 6
synth.dim = 16
synth.speaker_rank = 4
split.classifier = 0.25
split.autoencoder = 0.5
split.test = 0.25
clf.epochs = 5
ae.epochs = 2
ae.batch_size = 16
ae.momentum = 0
asv.lda_dim = 8
)");
  PipelineConfig cfg = parse_config(in, "tiny");
  cfg.out_dir = out;
  return cfg;
}

TEST(Config, CanonicalDumpRoundTrips) {
  const PipelineConfig cfg = tiny_config("x");
  std::istringstream in(to_string(cfg));
  EXPECT_EQ(to_string(parse_config(in, "dump")), to_string(cfg));
}

TEST(Config, CommentsBlankLinesAndOverrides) {
  std::istringstream in("# header\n\nseed = 12  # trailing\nae.encoder_lr = 3e-4\n");
  const PipelineConfig cfg = parse_config(in, "c");
  EXPECT_EQ(cfg.seed, 12u);
  EXPECT_EQ(cfg.ae.lr_encoder(), 3e-4);
  EXPECT_EQ(cfg.ae.lr_decoder(), cfg.ae.lr);
}

void expect_config_error_at(const std::string& text, std::size_t line) {
  std::istringstream in(text);
  try {
    parse_config(in, "c");
    FAIL() << "accepted: " << text;
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
  }
}

TEST(Config, ErrorsNameTheLine) {
  expect_config_error_at("seed = 1\nbogus = 2\n", 2);
  expect_config_error_at("seed = abc\n", 1);
  expect_config_error_at("\n\nseed 4\n", 3);
  expect_config_error_at("ae.lr = 1 2\n", 1);
}

TEST(Config, ValidationRejectsBadValues) {
  PipelineConfig cfg = tiny_config("x");
  cfg.split = {0.5, 0.5, 0.5};
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config("x");
  cfg.protect_w = 1.2;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config("x");
  cfg.ae.batch_size = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, ReferenceFileLoads) {
  const PipelineConfig cfg = load_config(VEILVEC_REFERENCE_CONFIG_FOR_TESTS);
  EXPECT_EQ(cfg.synth.n_speakers, 200);
  EXPECT_EQ(cfg.synth.segments_per_speaker, 40);
  EXPECT_EQ(cfg.synth.dim, 512);
  EXPECT_EQ(cfg.synth.attribute_shift, 2.0);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(Pipeline, TinyRunProducesAllSectionsDeterministically) {
  testing::TempDir a("pipe"), b("pipe");
  run_all(tiny_config(a.path().string()));
  run_all(tiny_config(b.path().string()));
  const RunPaths pa{a.path()};
  for (const std::string& f : {pa.classifier_corpus(), pa.autoencoder_corpus(), pa.test_corpus(), pa.classifier(),
                               pa.calibration(), pa.calibration_scores(), pa.autoencoder(), pa.training_log(),
                               pa.protected_corpus(), pa.privacy_report(), pa.trials(), pa.asv_report(), pa.report()}) {
    EXPECT_TRUE(std::filesystem::exists(f)) << f;
  }
  const std::string report = testing::slurp(pa.report());
  EXPECT_EQ(report, testing::slurp(RunPaths{b.path()}.report()));

  const Json j = Json::parse(report);
  EXPECT_EQ(j.at("format"), "veilvec-report v1");
  ASSERT_EQ(j.at("protection").size(), 3u);
  EXPECT_EQ(j.at("protection")[0].at("condition"), "original");
  EXPECT_EQ(j.at("protection")[1].at("condition"), "w=y~");
  EXPECT_EQ(j.at("protection")[2].at("condition"), "w=0.5");
  EXPECT_EQ(j.at("mutual_information").size(), 3u);
  EXPECT_EQ(j.at("asv").at("rows").size(), 3u);
  EXPECT_EQ(j.at("training").size(), 2u);
  EXPECT_FALSE(j.at("config").contains("out"));
  EXPECT_TRUE(j.at("plots").contains("calibration_pav"));
}

TEST(Pipeline, ProtectUsesConfiguredCondition) {
  testing::TempDir dir("pipe");
  PipelineConfig cfg = tiny_config(dir.path().string());
  run_all(cfg);
  const Corpus first = load(run_paths(cfg).protected_corpus());
  cfg.protect_w = 0.9;
  cmd_protect(cfg);
  const Corpus second = load(run_paths(cfg).protected_corpus());
  EXPECT_EQ(first.size(), second.size());
  EXPECT_FALSE(first == second);
  for (const auto& e : second.items()) EXPECT_NEAR(e.vector.norm(), 1.0, 1e-12);
}

TEST(Pipeline, MissingInputsAreDataErrors) {
  testing::TempDir dir("pipe");
  EXPECT_THROW(cmd_train_clf(tiny_config(dir.path().string())), DataError);
  EXPECT_THROW(cmd_report(tiny_config(dir.path().string())), DataError);
}

// ---------------------------------------------------------------------------
// Command-line exit status.

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + VEILVEC_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    cfg_ = dir_.file("tiny.cfg");
    PipelineConfig cfg = tiny_config(dir_.file("run"));
    testing::write_text(cfg_, to_string(cfg));
  }
  testing::TempDir dir_{"cli"};
  std::string cfg_;
};

TEST_F(Cli, UsageErrors) {
  EXPECT_EQ(run_cli(""), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("gen --config " + dir_.file("missing.cfg")), 1);
  EXPECT_EQ(run_cli("protect --config " + cfg_ + " --w 2"), 1);
  EXPECT_EQ(run_cli("--help"), 0);
}

TEST_F(Cli, ConfigurationErrors) {
  testing::write_text(dir_.file("split.cfg"), "split.classifier = 0.9\n");
  EXPECT_EQ(run_cli("gen --config " + dir_.file("split.cfg") + " --out " + dir_.file("r")), 1);
}

TEST_F(Cli, DataAndParseErrors) {
  testing::write_text(dir_.file("bad.cfg"), "nonsense = 1\n");
  EXPECT_EQ(run_cli("gen --config " + dir_.file("bad.cfg")), 2);
  EXPECT_EQ(run_cli("train-clf --config " + cfg_ + " --out " + dir_.file("empty")), 2);
}

TEST_F(Cli, NumericalFailure) {
  testing::write_text(dir_.file("diverge.cfg"), testing::slurp(cfg_) + "ae.encoder_lr = 1e300\nae.decoder_lr = 1e300\nae.adversary_lr = 1e300\n");
  const std::string out = " --out " + dir_.file("div");
  ASSERT_EQ(run_cli("gen --config " + dir_.file("diverge.cfg") + out), 0);
  ASSERT_EQ(run_cli("train-clf --config " + dir_.file("diverge.cfg") + out), 0);
  EXPECT_EQ(run_cli("train-ae --config " + dir_.file("diverge.cfg") + out), 3);
}

TEST_F(Cli, FullRunSucceeds) {
  EXPECT_EQ(run_cli("all --config " + cfg_ + " --seed 3"), 0);
  EXPECT_TRUE(std::filesystem::exists(dir_.file("run/report.json")));
}

}  // namespace
}  // namespace veilvec
