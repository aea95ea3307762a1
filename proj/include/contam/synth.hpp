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

// Synthetic stand-in for a language model. Samples labelled "seen" barely move
// under fine-tuning while "unseen" samples are pushed in random directions;
// seen samples also get systematically higher token log-probabilities. This
// is enough to exercise every scorer end to end without a model.
//
// Random streams: every sample i draws from its own Rng seeded with
// derive_seed(seed, stream, i), so outputs do not depend on generation order.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "contam/data_model.hpp"
#include "contam/error.hpp"
#include "contam/random.hpp"
#include "json.hpp"

namespace contam {

struct OracleConfig {
  std::size_t n_seen = 1000;
  std::size_t n_unseen = 1000;
  std::size_t d = 64;
  std::size_t clusters = 5;
  double cluster_noise = 0.1;
  // Seen sample p and unseen sample p share a base point; each adds its own
  // jitter of this scale, so the two pools have the same geometry before
  // fine-tuning.
  double twin_jitter = 0.01;
  double seen_shift = 0.05;
  double unseen_shift = 0.5;

  std::size_t tokens_per_sample = 64;
  double mean_lp_seen = -1.5;
  double mean_lp_unseen = -2.5;
  double lp_noise = 0.5;
  double sft_gain_seen = 0.1;
  double sft_gain_unseen = 0.8;

  // Shard likelihoods: one shard per sample; the canonical ordering of a
  // seen sample beats its shuffled orderings by srct_gap_seen on average.
  std::size_t srct_permutations = 5;
  double srct_gap_seen = 2.0;
  double srct_noise = 0.5;

  std::uint64_t seed = 0;

  void validate() const {
    if (n_seen == 0 || n_unseen == 0) throw ConfigError("oracle pools must be non-empty");
    if (d == 0) throw ConfigError("oracle dimension must be >= 1");
    if (clusters == 0) throw ConfigError("oracle needs at least one cluster");
    if (!(cluster_noise > 0.0)) throw ConfigError("cluster_noise must be > 0");
    if (!(twin_jitter >= 0.0)) throw ConfigError("twin_jitter must be >= 0");
    if (!(seen_shift >= 0.0) || !(unseen_shift >= 0.0)) {
      throw ConfigError("shifts must be >= 0");
    }
    if (unseen_shift < seen_shift) {
      throw ConfigError("unseen_shift must be >= seen_shift");
    }
    if (tokens_per_sample == 0) throw ConfigError("tokens_per_sample must be >= 1");
    if (!(mean_lp_seen < 0.0) || !(mean_lp_unseen < 0.0)) {
      throw ConfigError("mean log-probs must be < 0");
    }
    if (!(lp_noise >= 0.0)) throw ConfigError("lp_noise must be >= 0");
    if (srct_permutations == 0) throw ConfigError("srct_permutations must be >= 1");
    if (!(srct_noise >= 0.0)) throw ConfigError("srct_noise must be >= 0");
  }
};

inline void to_json(nlohmann::json& j, const OracleConfig& c) {
  j = nlohmann::json{{"n_seen", c.n_seen},
                     {"n_unseen", c.n_unseen},
                     {"d", c.d},
                     {"clusters", c.clusters},
                     {"cluster_noise", c.cluster_noise},
                     {"twin_jitter", c.twin_jitter},
                     {"seen_shift", c.seen_shift},
                     {"unseen_shift", c.unseen_shift},
                     {"tokens_per_sample", c.tokens_per_sample},
                     {"mean_lp_seen", c.mean_lp_seen},
                     {"mean_lp_unseen", c.mean_lp_unseen},
                     {"lp_noise", c.lp_noise},
                     {"sft_gain_seen", c.sft_gain_seen},
                     {"sft_gain_unseen", c.sft_gain_unseen},
                     {"srct_permutations", c.srct_permutations},
                     {"srct_gap_seen", c.srct_gap_seen},
                     {"srct_noise", c.srct_noise},
                     {"seed", c.seed}};
}

// Missing keys keep their defaults.
inline void from_json(const nlohmann::json& j, OracleConfig& c) {
  try {
    auto get = [&](const char* key, auto& field) {
      if (auto it = j.find(key); it != j.end()) it->get_to(field);
    };
    get("n_seen", c.n_seen);
    get("n_unseen", c.n_unseen);
    get("d", c.d);
    get("clusters", c.clusters);
    get("cluster_noise", c.cluster_noise);
    get("twin_jitter", c.twin_jitter);
    get("seen_shift", c.seen_shift);
    get("unseen_shift", c.unseen_shift);
    get("tokens_per_sample", c.tokens_per_sample);
    get("mean_lp_seen", c.mean_lp_seen);
    get("mean_lp_unseen", c.mean_lp_unseen);
    get("lp_noise", c.lp_noise);
    get("sft_gain_seen", c.sft_gain_seen);
    get("sft_gain_unseen", c.sft_gain_unseen);
    get("srct_permutations", c.srct_permutations);
    get("srct_gap_seen", c.srct_gap_seen);
    get("srct_noise", c.srct_noise);
    get("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid oracle config: ") + e.what());
  }
}

namespace detail {

enum OracleStream : std::uint32_t {
  kStreamCenters = 0,
  kStreamEmbedding = 1,
  kStreamText = 2,
  kStreamLogprob = 3,
  kStreamShard = 4,
  kStreamBase = 5,
};

inline Rng oracle_rng(const OracleConfig& cfg, OracleStream stream, std::size_t i) {
  return Rng(derive_seed(cfg.seed, stream, static_cast<std::uint32_t>(i)));
}

inline void normalize_in_place(std::span<double> v) {
  double sq = 0.0;
  for (double x : v) sq += x * x;
  const double norm = std::sqrt(sq);
  for (double& x : v) x /= norm;
}

inline std::string oracle_id(std::size_t i) {
  std::string digits = std::to_string(i);
  return "s" + std::string(digits.size() < 5 ? 5 - digits.size() : 0, '0') + digits;
}

}  // namespace detail

inline bool oracle_is_seen(const OracleConfig& cfg, std::size_t i) {
  return i < cfg.n_seen;
}

// Ids s00000.. with the seen pool first; each sample carries random ASCII
// text of 200-400 characters.
inline SampleManifest gen_manifest(const OracleConfig& cfg) {
  cfg.validate();
  static constexpr std::string_view kAlphabet =
      "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789 .,";
  const std::size_t n = cfg.n_seen + cfg.n_unseen;
  std::vector<ManifestEntry> entries;
  entries.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    Rng rng = detail::oracle_rng(cfg, detail::kStreamText, i);
    const std::size_t len = 200 + static_cast<std::size_t>(rng.below(201));
    std::string text(len, ' ');
    for (char& c : text) c = kAlphabet[rng.below(kAlphabet.size())];
    entries.push_back({detail::oracle_id(i),
                       oracle_is_seen(cfg, i) ? Label::kSeen : Label::kUnseen,
                       std::move(text)});
  }
  return SampleManifest(std::move(entries));
}

struct OracleEmbeddings {
  EmbeddingMatrix before;
  EmbeddingMatrix after;
  SampleManifest manifest;
};

inline OracleEmbeddings gen_embeddings(const OracleConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_seen + cfg.n_unseen;
  const std::size_t d = cfg.d;

  std::vector<double> centers(cfg.clusters * d);
  {
    Rng rng = detail::oracle_rng(cfg, detail::kStreamCenters, 0);
    for (std::size_t c = 0; c < cfg.clusters; ++c) {
      std::span<double> center(centers.data() + c * d, d);
      for (double& x : center) x = rng.normal();
      detail::normalize_in_place(center);
    }
  }

  std::vector<double> before(n * d), after(n * d);
  std::vector<double> direction(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t pool_index = oracle_is_seen(cfg, i) ? i : i - cfg.n_seen;
    const std::size_t c = pool_index % cfg.clusters;
    std::span<double> b(before.data() + i * d, d);
    std::span<double> a(after.data() + i * d, d);
    {
      Rng base = detail::oracle_rng(cfg, detail::kStreamBase, pool_index);
      for (std::size_t k = 0; k < d; ++k) {
        b[k] = centers[c * d + k] + cfg.cluster_noise * base.normal();
      }
    }
    Rng rng = detail::oracle_rng(cfg, detail::kStreamEmbedding, i);
    for (std::size_t k = 0; k < d; ++k) b[k] += cfg.twin_jitter * rng.normal();
    detail::normalize_in_place(b);
    for (double& x : direction) x = rng.normal();
    detail::normalize_in_place(direction);
    const double shift = oracle_is_seen(cfg, i) ? cfg.seen_shift : cfg.unseen_shift;
    if (shift == 0.0) {
      std::copy(b.begin(), b.end(), a.begin());
      continue;
    }
    for (std::size_t k = 0; k < d; ++k) a[k] = b[k] + shift * direction[k];
    detail::normalize_in_place(a);
  }

  SampleManifest manifest = gen_manifest(cfg);
  std::vector<std::string> ids;
  ids.reserve(n);
  for (const auto& e : manifest.entries()) ids.push_back(e.id);
  return {EmbeddingMatrix(n, d, std::move(before), ids),
          EmbeddingMatrix(n, d, std::move(after), ids), std::move(manifest)};
}

struct OracleLogprobs {
  std::vector<TokenLogProbRecord> before;
  std::vector<TokenLogProbRecord> after;
  SampleManifest manifest;
  std::vector<ShardLikelihoodRecord> shards;
};

// Token log-probs ~ Normal(mean_lp_label, lp_noise), capped at 0. The
// post-fine-tuning file adds sft_gain_label per token (again capped at 0).
// mu is the label-independent midpoint of the two label means and sigma is
// lp_noise (1 when lp_noise is 0), so Min-K%++ sees seen tokens above the
// expectation and unseen tokens below it.
inline OracleLogprobs gen_logprobs(const OracleConfig& cfg) {
  cfg.validate();
  const std::size_t n = cfg.n_seen + cfg.n_unseen;
  const std::size_t t_count = cfg.tokens_per_sample;
  const double mu = 0.5 * (cfg.mean_lp_seen + cfg.mean_lp_unseen);
  const double sigma = cfg.lp_noise > 0.0 ? cfg.lp_noise : 1.0;

  OracleLogprobs out;
  out.manifest = gen_manifest(cfg);
  out.before.reserve(n);
  out.after.reserve(n);
  out.shards.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const bool seen = oracle_is_seen(cfg, i);
    const std::string& id = out.manifest.entries()[i].id;
    const double mean = seen ? cfg.mean_lp_seen : cfg.mean_lp_unseen;
    const double gain = seen ? cfg.sft_gain_seen : cfg.sft_gain_unseen;

    Rng rng = detail::oracle_rng(cfg, detail::kStreamLogprob, i);
    TokenLogProbRecord pre{id, std::vector<double>(t_count),
                           std::vector<double>(t_count, mu),
                           std::vector<double>(t_count, sigma)};
    TokenLogProbRecord post = pre;
    double total = 0.0;
    for (std::size_t t = 0; t < t_count; ++t) {
      const double lp = std::min(0.0, mean + cfg.lp_noise * rng.normal());
      pre.logprobs[t] = lp;
      post.logprobs[t] = std::min(0.0, lp + gain);
      total += lp;
    }

    Rng srng = detail::oracle_rng(cfg, detail::kStreamShard, i);
    ShardLikelihoodRecord shard;
    shard.shard_index = static_cast<std::int64_t>(i);
    shard.canonical_loglik =
        total + (seen ? cfg.srct_gap_seen : 0.0) + cfg.srct_noise * srng.normal();
    shard.permuted_logliks.resize(cfg.srct_permutations);
    for (double& v : shard.permuted_logliks) v = total + cfg.srct_noise * srng.normal();
    shard.ids = std::vector<std::string>{id};

    out.before.push_back(std::move(pre));
    out.after.push_back(std::move(post));
    out.shards.push_back(std::move(shard));
  }
  return out;
}

// before.kdse, after.kdse, manifest.jsonl
inline void write_oracle_embeddings(const OracleConfig& cfg,
                                    const std::filesystem::path& dir) {
  const auto data = gen_embeddings(cfg);
  std::filesystem::create_directories(dir);
  write_embeddings(data.before, dir / "before.kdse");
  write_embeddings(data.after, dir / "after.kdse");
  write_manifest(data.manifest, dir / "manifest.jsonl");
}

// logprobs_before.jsonl, logprobs_after.jsonl, manifest.jsonl, shards.jsonl
inline void write_oracle_logprobs(const OracleConfig& cfg,
                                  const std::filesystem::path& dir) {
  const auto data = gen_logprobs(cfg);
  std::filesystem::create_directories(dir);
  write_logprobs(data.before, dir / "logprobs_before.jsonl");
  write_logprobs(data.after, dir / "logprobs_after.jsonl");
  write_manifest(data.manifest, dir / "manifest.jsonl");
  write_shards(data.shards, dir / "shards.jsonl");
}

}  // namespace contam
