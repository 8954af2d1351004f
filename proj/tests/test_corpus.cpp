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

#include <set>

#include "test_util.hpp"
#include "veilvec/corpus.hpp"
#include "veilvec/privacy_metrics.hpp"

namespace veilvec {
namespace {

SynthConfig small_config(std::uint64_t seed = 3) {
  SynthConfig c;
  c.n_speakers = 12;
  c.segments_per_speaker = 5;
  c.dim = 6;
  c.seed = seed;
  return c;
}

Corpus toy_corpus(int speakers, int segments, std::size_t dim = 2) {
  std::vector<Embedding> items;
  for (int s = 0; s < speakers; ++s) {
    for (int k = 0; k < segments; ++k) {
      Embedding e;
      e.speaker_id = "s" + std::to_string(s);
      e.segment_id = e.speaker_id + "-" + std::to_string(k);
      e.label = s % 2;
      e.vector = Vector::Constant(static_cast<Eigen::Index>(dim), s + 0.1 * k);
      items.push_back(e);
    }
  }
  return Corpus(dim, items);
}

TEST(Generate, ShapeAndLabelBalance) {
  for (int n : {7, 12}) {
    SynthConfig c = small_config();
    c.n_speakers = n;
    const Corpus corpus = generate(c);
    ASSERT_EQ(corpus.size(), static_cast<std::size_t>(n * c.segments_per_speaker));
    EXPECT_EQ(corpus.dim(), 6u);
    const auto labels = corpus.labels();
    const long ones = std::count(labels.begin(), labels.end(), 1);
    const long zeros = static_cast<long>(labels.size()) - ones;
    EXPECT_LE(std::abs(ones - zeros), (n % 2) * c.segments_per_speaker);
    EXPECT_EQ(corpus.unique_speakers().size(), static_cast<std::size_t>(n));
  }
}

TEST(Generate, OneLabelPerSpeaker) {
  const Corpus corpus = generate(small_config());
  std::map<std::string, int> label_of;
  for (const auto& e : corpus.items()) {
    auto [it, inserted] = label_of.emplace(e.speaker_id, e.label);
    EXPECT_EQ(it->second, e.label);
  }
}

TEST(Generate, SameSeedGivesIdenticalFiles) {
  testing::TempDir dir("gen");
  save(generate(small_config(9)), dir.file("a.txt"));
  save(generate(small_config(9)), dir.file("b.txt"));
  EXPECT_EQ(testing::slurp(dir.file("a.txt")), testing::slurp(dir.file("b.txt")));
  EXPECT_FALSE(generate(small_config(9)) == generate(small_config(10)));
}

TEST(Generate, NoShiftMeansNoLabelInformation) {
  SynthConfig c;
  c.n_speakers = 400;
  c.segments_per_speaker = 5;
  c.dim = 8;
  c.attribute_shift = 0.0;
  c.speaker_spread = 0.3;
  c.within_spread = 1.0;
  c.seed = 11;
  const Corpus corpus = generate(c);
  EXPECT_LE(mutual_information(corpus.matrix(), corpus.labels(), 3), 0.02);
}

TEST(Generate, SpeakerRankConfinesOffsets) {
  SynthConfig c = small_config();
  c.dim = 10;
  c.speaker_rank = 2;
  c.attribute_shift = 0.0;
  c.n_speakers = 20;
  const Corpus corpus = generate(c);
  // speaker means (averaged segments) minus the global average span rank <= 2 up to noise
  std::map<std::string, std::pair<Vector, int>> acc;
  for (const auto& e : corpus.items()) {
    auto& [sum, n] = acc.try_emplace(e.speaker_id, Vector::Zero(10), 0).first->second;
    sum += e.vector;
    ++n;
  }
  Matrix means(10, static_cast<Eigen::Index>(acc.size()));
  Eigen::Index col = 0;
  for (const auto& [id, sn] : acc) means.col(col++) = sn.first / sn.second;
  means = means.colwise() - means.rowwise().mean();
  Eigen::JacobiSVD<Matrix> svd(means);
  const Vector sv = svd.singularValues();
  EXPECT_LT(sv(2), 0.25 * sv(1));
}

TEST(Generate, InvalidConfigRejected) {
  SynthConfig c = small_config();
  c.n_speakers = 1;
  EXPECT_THROW(generate(c), ConfigError);
  c = small_config();
  c.within_spread = 0.0;
  EXPECT_THROW(generate(c), ConfigError);
  c = small_config();
  c.speaker_rank = 7;
  EXPECT_THROW(generate(c), ConfigError);
}

TEST(CorpusFile, RoundTripIsExact) {
  testing::TempDir dir("corpus");
  const Corpus corpus = generate(small_config());
  save(corpus, dir.file("c.txt"));
  EXPECT_TRUE(load(dir.file("c.txt")) == corpus);
}

TEST(CorpusFile, EmptyCorpusAccepted) {
  testing::TempDir dir("corpus");
  testing::write_text(dir.file("c.txt"), "veilvec-corpus v1 dim=3\n");
  const Corpus c = load(dir.file("c.txt"));
  EXPECT_TRUE(c.empty());
  EXPECT_EQ(c.dim(), 3u);
}

void expect_parse_error_at(const std::string& path, std::size_t line) {
  try {
    load(path);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), line) << e.what();
  }
}

TEST(CorpusFile, ErrorsNameTheLine) {
  testing::TempDir dir("corpus");
  testing::write_text(dir.file("short.txt"), "veilvec-corpus v1 dim=2\na s 0 1 2\nb s 1 1\n");
  expect_parse_error_at(dir.file("short.txt"), 3);
  testing::write_text(dir.file("dup.txt"), "veilvec-corpus v1 dim=1\na s 0 1\n\na t 1 2\n");
  expect_parse_error_at(dir.file("dup.txt"), 4);
  testing::write_text(dir.file("head.txt"), "veilvec-corpus v2 dim=1\n");
  expect_parse_error_at(dir.file("head.txt"), 1);
  testing::write_text(dir.file("label.txt"), "veilvec-corpus v1 dim=1\na s 2 1\n");
  expect_parse_error_at(dir.file("label.txt"), 2);
  testing::write_text(dir.file("num.txt"), "veilvec-corpus v1 dim=1\na s 1 1e\n");
  expect_parse_error_at(dir.file("num.txt"), 2);
  EXPECT_THROW(load(dir.file("missing.txt")), DataError);
}

TEST(CorpusInvariants, DuplicateIdsAndDimensionsRejected) {
  Embedding a{"x", "s", 0, std::nullopt, Vector::Zero(2)};
  Embedding b{"x", "t", 1, std::nullopt, Vector::Zero(2)};
  EXPECT_THROW(Corpus(2, {a, b}), DataError);
  b.segment_id = "y";
  b.vector = Vector::Zero(3);
  EXPECT_THROW(Corpus(2, {a, b}), DataError);
  b.vector = Vector::Zero(2);
  b.posterior = 1.5;
  EXPECT_THROW(Corpus(2, {a, b}), DataError);
}

TEST(Split, TenSpeakersHalfAndHalf) {
  const Corpus c = toy_corpus(10, 3);
  const std::vector<double> f{0.5, 0.5};
  const auto parts = split(c, f, 5, true);
  ASSERT_EQ(parts.size(), 2u);
  const auto a = parts[0].unique_speakers(), b = parts[1].unique_speakers();
  EXPECT_EQ(a.size(), 5u);
  EXPECT_EQ(b.size(), 5u);
  for (const auto& s : a) EXPECT_EQ(std::find(b.begin(), b.end(), s), b.end());
}

TEST(Split, SingleFractionIsIdentity) {
  const Corpus c = toy_corpus(4, 3);
  const std::vector<double> f{1.0};
  const auto parts = split(c, f, 1, true);
  ASSERT_EQ(parts.size(), 1u);
  EXPECT_TRUE(parts[0] == c);
}

TEST(Split, SpeakerDisjointForManySeeds) {
  const Corpus c = toy_corpus(37, 4);
  const std::vector<double> f{0.25, 0.35, 0.4};
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto parts = split(c, f, seed, true);
    std::map<std::string, std::size_t> owner;
    std::size_t total = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      EXPECT_FALSE(parts[p].empty());
      total += parts[p].size();
      for (const auto& e : parts[p].items()) {
        auto [it, inserted] = owner.emplace(e.speaker_id, p);
        ASSERT_EQ(it->second, p) << "speaker " << e.speaker_id << " in two partitions, seed " << seed;
      }
    }
    EXPECT_EQ(total, c.size());
  }
}

TEST(Split, StableAcrossRuns) {
  const Corpus c = toy_corpus(20, 2);
  const std::vector<double> f{0.3, 0.7};
  const auto a = split(c, f, 77, true);
  const auto b = split(c, f, 77, true);
  EXPECT_TRUE(a[0] == b[0]);
  EXPECT_TRUE(a[1] == b[1]);
}

TEST(Split, ItemLevelAndErrors) {
  const Corpus c = toy_corpus(2, 5);
  const std::vector<double> half{0.5, 0.5};
  const auto items = split(c, half, 1, false);
  EXPECT_EQ(items[0].size() + items[1].size(), 10u);
  const std::vector<double> three{0.2, 0.3, 0.5};
  EXPECT_THROW(split(c, three, 1, true), DataError);
  const std::vector<double> bad{0.5, 0.6};
  EXPECT_THROW(split(c, bad, 1, true), ConfigError);
}

}  // namespace
}  // namespace veilvec
