// Copyright 2026 The contam Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <gtest/gtest.h>

#include <cmath>

#include "contam/baselines.hpp"
#include "contam/kds.hpp"
#include "contam/synth.hpp"
#include "test_util.hpp"

namespace contam {
namespace {

OracleConfig small(std::uint64_t seed = 1) {
  OracleConfig c;
  c.n_seen = 120;
  c.n_unseen = 120;
  c.d = 16;
  c.tokens_per_sample = 24;
  c.seed = seed;
  return c;
}

std::vector<Label> labels_of(const SampleManifest& m) {
  std::vector<Label> out;
  for (const auto& e : m.entries()) out.push_back(e.label);
  return out;
}

TEST(OracleConfigTest, JsonRoundTripAndDefaults) {
  OracleConfig c = small(99);
  c.srct_gap_seen = 1.25;
  const nlohmann::json j = c;
  const auto back = j.get<OracleConfig>();
  EXPECT_EQ(nlohmann::json(back), j);
  const auto defaults = nlohmann::json::object().get<OracleConfig>();
  EXPECT_EQ(defaults.n_seen, 1000u);
  EXPECT_EQ(defaults.d, 64u);
}

TEST(OracleConfigTest, Validation) {
  OracleConfig c = small();
  c.unseen_shift = 0.01;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.n_seen = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = small();
  c.mean_lp_seen = 0.5;
  EXPECT_THROW(c.validate(), ConfigError);
  EXPECT_THROW(nlohmann::json({{"d", "wide"}}).get<OracleConfig>(), ConfigError);
}

TEST(OracleEmbeddings, DeterministicPerSeed) {
  const auto a = gen_embeddings(small(3));
  const auto b = gen_embeddings(small(3));
  EXPECT_EQ(a.before, b.before);
  EXPECT_EQ(a.after, b.after);
  EXPECT_EQ(a.manifest, b.manifest);
  const auto c = gen_embeddings(small(4));
  EXPECT_EQ(c.before.n(), a.before.n());
  EXPECT_EQ(c.before.d(), a.before.d());
  EXPECT_NE(c.before.values(), a.before.values());
}

TEST(OracleEmbeddings, LabelsAndUnitRows) {
  const auto e = gen_embeddings(small());
  EXPECT_EQ(e.manifest.ids_with(Label::kSeen).size(), 120u);
  EXPECT_EQ(e.manifest.ids_with(Label::kUnseen).size(), 120u);
  EXPECT_EQ(e.before.ids()[0], "s00000");
  for (std::size_t i = 0; i < e.before.n(); ++i) {
    double s = 0.0, t = 0.0;
    for (double x : e.before.row(i)) s += x * x;
    for (double x : e.after.row(i)) t += x * x;
    EXPECT_NEAR(s, 1.0, 1e-12);
    EXPECT_NEAR(t, 1.0, 1e-12);
  }
}

TEST(OracleEmbeddings, ZeroShiftIsIdentity) {
  OracleConfig c = small();
  c.seen_shift = 0.0;
  c.unseen_shift = 0.0;
  const auto e = gen_embeddings(c);
  EXPECT_EQ(e.after, e.before);
  EXPECT_EQ(kds(e.before, e.after).score, 0.0);
}

TEST(OracleEmbeddings, UnseenPairsMoveMost) {
  const auto e = gen_embeddings(small(5));
  PairGeometry geom(e.before, e.after);
  const auto rep = pair_shift_report(geom, labels_of(e.manifest));
  const double ss = rep[PairType::kSeenSeen].mean_abs_change;
  const double su = rep[PairType::kSeenUnseen].mean_abs_change;
  const double uu = rep[PairType::kUnseenUnseen].mean_abs_change;
  EXPECT_LT(ss, su);
  EXPECT_LT(su, uu);
}

TEST(OracleEmbeddings, TwinPoolsShareGeometryBeforeFineTuning) {
  const auto e = gen_embeddings(small(6));
  const auto d = pairwise_sq_dists(e.before);
  double twin = 0.0, other = 0.0;
  for (std::size_t p = 0; p < 120; ++p) {
    twin += d(p, 120 + p);
    other += d(p, 120 + (p + 1) % 120);
  }
  EXPECT_LT(twin, 0.05 * other);
}

TEST(OracleLogprobs, DeterministicAndValid) {
  const auto a = gen_logprobs(small(2));
  const auto b = gen_logprobs(small(2));
  EXPECT_EQ(a.before, b.before);
  EXPECT_EQ(a.after, b.after);
  EXPECT_EQ(a.shards, b.shards);
  for (const auto& r : a.before) EXPECT_NO_THROW(validate(r));
  for (const auto& r : a.after) EXPECT_NO_THROW(validate(r));
  for (const auto& s : a.shards) EXPECT_NO_THROW(validate(s));
}

TEST(OracleLogprobs, ZeroNoiseGivesLabelMeans) {
  OracleConfig c = small();
  c.lp_noise = 0.0;
  const auto lp = gen_logprobs(c);
  for (std::size_t i = 0; i < lp.before.size(); ++i) {
    const double mean = oracle_is_seen(c, i) ? c.mean_lp_seen : c.mean_lp_unseen;
    for (double x : lp.before[i].logprobs) EXPECT_EQ(x, mean);
    for (double s : *lp.before[i].sigma) EXPECT_EQ(s, 1.0);
  }
}

TEST(OracleLogprobs, ZeroGainsGiveZeroFsd) {
  OracleConfig c = small();
  c.sft_gain_seen = 0.0;
  c.sft_gain_unseen = 0.0;
  const auto lp = gen_logprobs(c);
  for (auto method : {BaselineMethod::kZlib, BaselineMethod::kPerplexity,
                      BaselineMethod::kMinK, BaselineMethod::kMinKPlusPlus}) {
    EXPECT_EQ(fsd_score({lp.before, lp.after, BaselineKind::make(method)}, &lp.manifest), 0.0);
  }
}

TEST(OracleLogprobs, SeenSamplesLookFamiliar) {
  const auto lp = gen_logprobs(small(7));
  const std::vector<TokenLogProbRecord> seen(lp.before.begin(), lp.before.begin() + 120);
  const std::vector<TokenLogProbRecord> unseen(lp.before.begin() + 120, lp.before.end());
  for (auto method : {BaselineMethod::kZlib, BaselineMethod::kPerplexity,
                      BaselineMethod::kMinK, BaselineMethod::kMinKPlusPlus}) {
    const auto kind = BaselineKind::make(method);
    EXPECT_GT(oriented_score(kind, seen, &lp.manifest),
              oriented_score(kind, unseen, &lp.manifest))
        << to_string(method);
  }
  const std::vector<ShardLikelihoodRecord> s_seen(lp.shards.begin(), lp.shards.begin() + 120);
  const std::vector<ShardLikelihoodRecord> s_unseen(lp.shards.begin() + 120, lp.shards.end());
  EXPECT_GT(srct_score(s_seen), srct_score(s_unseen));
}

TEST(OracleFiles, WrittenFilesParseBack) {
  const auto dir = testing::temp_dir("oracle_files");
  const OracleConfig c = small(8);
  write_oracle_embeddings(c, dir);
  write_oracle_logprobs(c, dir);
  const auto e = gen_embeddings(c);
  const auto before = read_embeddings(dir / "before.kdse");
  EXPECT_EQ(before.ids(), e.before.ids());
  for (std::size_t k = 0; k < before.values().size(); ++k) {
    EXPECT_EQ(before.values()[k], static_cast<float>(e.before.values()[k]));
  }
  EXPECT_EQ(read_manifest(dir / "manifest.jsonl"), e.manifest);
  const auto lp = gen_logprobs(c);
  EXPECT_EQ(read_logprobs(dir / "logprobs_before.jsonl"), lp.before);
  EXPECT_EQ(read_logprobs(dir / "logprobs_after.jsonl"), lp.after);
  EXPECT_EQ(read_shards(dir / "shards.jsonl"), lp.shards);
}

}  // namespace
}  // namespace contam
