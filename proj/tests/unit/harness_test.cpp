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

#include <algorithm>
#include <fstream>
#include <set>

#include "contam/harness.hpp"
#include "contam/synth.hpp"
#include "test_util.hpp"

namespace contam {
namespace {

std::vector<std::string> ids(const std::string& prefix, std::size_t n) {
  return testing::make_ids(n, prefix);
}

ExperimentData oracle_data(std::size_t pool, std::uint64_t seed) {
  OracleConfig oc;
  oc.n_seen = pool;
  oc.n_unseen = pool;
  oc.d = 16;
  oc.tokens_per_sample = 16;
  oc.seed = seed;
  auto e = gen_embeddings(oc);
  auto lp = gen_logprobs(oc);
  ExperimentData data;
  data.manifest = e.manifest;
  data.pairs.push_back({"default", e.before, e.after});
  data.logprobs = lp.before;
  data.logprobs_after = lp.after;
  data.shards = lp.shards;
  return data;
}

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.lambda_grid = {0.0, 0.25, 0.5, 0.75, 1.0};
  cfg.subset_size = 60;
  cfg.runs = 3;
  cfg.master_seed = 11;
  return cfg;
}

TEST(SeenCount, RoundsHalfUp) {
  EXPECT_EQ(seen_count(ContaminationRate(0.4), 100), 40u);
  EXPECT_EQ(seen_count(ContaminationRate(0.05), 10), 1u);
  EXPECT_EQ(seen_count(ContaminationRate(0.25), 2), 1u);
  EXPECT_EQ(seen_count(ContaminationRate(0.0), 700), 0u);
  EXPECT_EQ(seen_count(ContaminationRate(1.0), 700), 700u);
  EXPECT_EQ(seen_count(ContaminationRate(0.35), 700), 245u);
}

TEST(MixSubset, Endpoints) {
  const auto s = ids("s", 20), u = ids("u", 20);
  const auto none = mix_subset(s, u, ContaminationRate(0.0), 10, 1);
  EXPECT_EQ(none.size(), 10u);
  for (const auto& id : none) EXPECT_EQ(id[0], 'u');
  const auto all = mix_subset(s, u, ContaminationRate(1.0), 10, 1);
  for (const auto& id : all) EXPECT_EQ(id[0], 's');
}

TEST(MixSubset, CountsAndSeedDependence) {
  const auto s = ids("s", 200), u = ids("u", 200);
  const auto a = mix_subset(s, u, ContaminationRate(0.4), 100, 1);
  const auto b = mix_subset(s, u, ContaminationRate(0.4), 100, 2);
  for (const auto* sub : {&a, &b}) {
    EXPECT_EQ(std::count_if(sub->begin(), sub->end(),
                            [](const std::string& id) { return id[0] == 's'; }),
              40);
    EXPECT_EQ(std::set<std::string>(sub->begin(), sub->end()).size(), 100u);
  }
  EXPECT_NE(std::set<std::string>(a.begin(), a.end()), std::set<std::string>(b.begin(), b.end()));
  EXPECT_EQ(mix_subset(s, u, ContaminationRate(0.4), 100, 1), a);
}

TEST(MixSubset, PoolExhaustionIsConfigError) {
  const auto s = ids("s", 5), u = ids("u", 50);
  EXPECT_THROW(mix_subset(s, u, ContaminationRate(1.0), 10, 1), ConfigError);
}

TEST(ConfigJson, RoundTrip) {
  ExperimentConfig cfg = small_config();
  cfg.correlation_mode = CorrelationMode::kPerRun;
  cfg.policy = BandwidthPolicy::fixed(0.1);
  ScorerSpec euclid;
  euclid.kind = KernelKind::kEuclidean;
  ScorerSpec ablation;
  ablation.type = ScorerType::kKdsAblation;
  ablation.ablation = AblationMode::kNoFinetune;
  ScorerSpec mink;
  mink.type = ScorerType::kBaseline;
  mink.baseline = BaselineKind::make(BaselineMethod::kMinK, 10.0);
  ScorerSpec fsd;
  fsd.type = ScorerType::kFsd;
  fsd.baseline = BaselineKind::make(BaselineMethod::kZlib);
  ScorerSpec srct;
  srct.type = ScorerType::kSrct;
  cfg.scorers = {ScorerSpec{}, euclid, ablation, mink, fsd, srct};
  cfg.inputs.manifest = "m.jsonl";
  cfg.inputs.embedding_pairs = {{"l8", "b.kdse", "a.kdse"}};
  const auto j = config_json(cfg);
  EXPECT_EQ(config_json(parse_config(j)), j);
  std::vector<std::string> names;
  for (const auto& s : cfg.scorers) names.push_back(scorer_name(s));
  EXPECT_EQ(names, (std::vector<std::string>{"kds", "kds:euclidean", "kds_no_finetune",
                                             "mink:k=10", "fsd_zlib", "srct"}));
}

TEST(ConfigJson, Errors) {
  EXPECT_THROW(parse_config(nlohmann::json::array()), ConfigError);
  EXPECT_THROW(parse_config({{"lambda_grid", {0.5, 0.2}}}), ConfigError);
  EXPECT_THROW(parse_config({{"lambda_grid", {0.0, 1.5}}}), ConfigError);
  EXPECT_THROW(parse_config({{"runs", 0}}), ConfigError);
  EXPECT_THROW(parse_config({{"correlation_mode", "median"}}), ConfigError);
  EXPECT_THROW(parse_config({{"scorers", {{{"type", "bogus"}}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"scorers", {{{"type", "kds"}}, {{"type", "kds"}}}}}), ConfigError);
  EXPECT_THROW(parse_config({{"kernel", {{"gamma", -1.0}}}}), ConfigError);
}

TEST(RunExperiment, EndpointOrdering) {
  const auto data = oracle_data(80, 1);
  ExperimentConfig cfg;
  cfg.lambda_grid = {0.0, 1.0};
  cfg.subset_size = 60;
  cfg.runs = 1;
  const auto rep = run_experiment(cfg, data, 1);
  ASSERT_EQ(rep.scorers.size(), 1u);
  EXPECT_EQ(rep.scorers[0].scores.size(), 2u);
  EXPECT_EQ(*rep.scorers[0].spearman, 1.0);
  EXPECT_FALSE(rep.scorers[0].mean_mape);
}

TEST(RunExperiment, DuplicatedPoolsGiveZeroMape) {
  const auto data = oracle_data(50, 2);
  ExperimentConfig cfg;
  cfg.lambda_grid = {0.0, 1.0};
  cfg.subset_size = 50;
  cfg.runs = 5;
  ScorerSpec ppl;
  ppl.type = ScorerType::kBaseline;
  cfg.scorers = {ScorerSpec{}, ppl};
  const auto rep = run_experiment(cfg, data, 2);
  for (const auto& s : rep.scorers) {
    for (const auto& m : s.mape) EXPECT_EQ(*m, 0.0) << s.name;
  }
}

TEST(RunExperiment, DeterministicAcrossThreadCounts) {
  const auto data = oracle_data(80, 3);
  ExperimentConfig cfg = small_config();
  ScorerSpec ppl;
  ppl.type = ScorerType::kBaseline;
  ScorerSpec srct;
  srct.type = ScorerType::kSrct;
  cfg.scorers = {ScorerSpec{}, ppl, srct};
  const auto a = report_json(run_experiment(cfg, data, 1)).dump();
  const auto b = report_json(run_experiment(cfg, data, 8)).dump();
  EXPECT_EQ(a, b);
}

TEST(RunExperiment, PoolOrderDoesNotMatter) {
  auto data = oracle_data(80, 4);
  const auto a = report_json(run_experiment(small_config(), data, 2)).dump();
  auto entries = data.manifest.entries();
  std::reverse(entries.begin(), entries.end());
  data.manifest = SampleManifest(entries);
  EXPECT_EQ(report_json(run_experiment(small_config(), data, 2)).dump(), a);
}

TEST(RunExperiment, SeedsFollowDeriveSeed) {
  const auto rep = run_experiment(small_config(), oracle_data(80, 5), 2);
  for (std::size_t li = 0; li < 5; ++li) {
    for (std::size_t ri = 0; ri < 3; ++ri) {
      EXPECT_EQ(rep.seeds[li][ri], derive_seed(11, li, ri));
    }
  }
}

TEST(RunExperiment, MissingInputs) {
  auto data = oracle_data(80, 6);
  ExperimentConfig cfg = small_config();
  ScorerSpec fsd;
  fsd.type = ScorerType::kFsd;
  cfg.scorers = {fsd};
  data.logprobs_after.reset();
  EXPECT_THROW(run_experiment(cfg, data, 1), ConfigError);

  ScorerSpec srct;
  srct.type = ScorerType::kSrct;
  cfg.scorers = {ScorerSpec{}, srct};
  data.shards.reset();
  const auto rep = run_experiment(cfg, data, 1);
  EXPECT_EQ(rep.scorers.size(), 1u);
  ASSERT_EQ(rep.notes.size(), 1u);
  EXPECT_NE(rep.notes[0].find("srct"), std::string::npos);

  cfg.scorers = {ScorerSpec{}};
  cfg.subset_size = 100;
  EXPECT_THROW(run_experiment(cfg, data, 1), ConfigError);
}

TEST(RunExperiment, DegenerateCellNamesLambdaAndRun) {
  // Every embedding identical: the median bandwidth is undefined.
  std::vector<ManifestEntry> entries;
  for (int i = 0; i < 10; ++i) {
    entries.push_back({"s" + std::to_string(i), Label::kSeen, std::nullopt});
    entries.push_back({"u" + std::to_string(i), Label::kUnseen, std::nullopt});
  }
  ExperimentData data;
  data.manifest = SampleManifest(entries);
  std::vector<std::string> all;
  for (const auto& e : entries) all.push_back(e.id);
  EmbeddingMatrix z(20, 2, std::vector<double>(40, 1.0), all);
  data.pairs.push_back({"default", z, z});
  ExperimentConfig cfg;
  cfg.lambda_grid = {0.0, 1.0};
  cfg.subset_size = 8;
  cfg.runs = 2;
  try {
    run_experiment(cfg, data, 1);
    FAIL() << "expected a run error";
  } catch (const RunError& e) {
    EXPECT_NE(std::string(e.what()).find("lambda=0, run=0"), std::string::npos) << e.what();
  }
}

TEST(RunExperiment, CorrelationModes) {
  const auto data = oracle_data(80, 7);
  ExperimentConfig cfg = small_config();
  const auto mean = run_experiment(cfg, data, 2);
  cfg.correlation_mode = CorrelationMode::kPerRun;
  const auto per_run = run_experiment(cfg, data, 2);
  EXPECT_EQ(per_run.correlation_mode, "per_run");
  EXPECT_EQ(mean.scorers[0].scores, per_run.scorers[0].scores);
  // Per-run average of per-run Spearman values, recomputed here.
  double sp = 0.0;
  for (std::size_t ri = 0; ri < 3; ++ri) {
    std::vector<double> col;
    for (const auto& row : per_run.scorers[0].scores) col.push_back(row[ri]);
    sp += spearman(cfg.lambda_grid, col);
  }
  EXPECT_NEAR(*per_run.scorers[0].spearman, sp / 3.0, 1e-15);
}

TEST(RunExperiment, MultiplePairsGetTaggedRows) {
  auto data = oracle_data(80, 8);
  data.pairs.push_back({"other", data.pairs[0].before, data.pairs[0].after});
  const auto rep = run_experiment(small_config(), data, 2);
  ASSERT_EQ(rep.scorers.size(), 2u);
  EXPECT_EQ(rep.scorers[0].name, "kds@default");
  EXPECT_EQ(rep.scorers[1].name, "kds@other");
  EXPECT_EQ(rep.scorers[0].scores, rep.scorers[1].scores);
}

TEST(LoadInputs, ResolvesRelativeToConfigDir) {
  const auto dir = testing::temp_dir("inputs");
  OracleConfig oc;
  oc.n_seen = oc.n_unseen = 30;
  oc.d = 8;
  write_oracle_embeddings(oc, dir / "emb");
  write_oracle_logprobs(oc, dir / "lp");
  ExperimentInputs in;
  in.manifest = "emb/manifest.jsonl";
  in.embedding_pairs = {{"default", "emb/before.kdse", "emb/after.kdse"}};
  in.logprobs = "lp/logprobs_before.jsonl";
  in.shards = (dir / "lp/shards.jsonl").string();
  const auto data = load_inputs(in, dir);
  EXPECT_EQ(data.manifest.size(), 60u);
  EXPECT_EQ(data.pairs.size(), 1u);
  EXPECT_TRUE(data.logprobs);
  EXPECT_FALSE(data.logprobs_after);
  EXPECT_EQ(data.shards->size(), 60u);
  in.manifest = "missing.jsonl";
  EXPECT_THROW(load_inputs(in, dir), IoError);
}

}  // namespace
}  // namespace contam
