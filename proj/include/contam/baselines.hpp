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

// Dataset-level baseline contamination scores computed from per-token
// log-probabilities (Zlib, Perplexity, Min-K%, Min-K%++, FSD) and from shard
// likelihoods (SRCT).
//
// The *_score functions follow the textbook definitions. Min-K% and Min-K%++
// are defined as negated mean log-probabilities and so grow when the data
// looks less familiar; oriented_score() flips them so that for every method
// a higher value means more contamination.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <zlib.h>

#include "contam/data_model.hpp"
#include "contam/error.hpp"

namespace contam {

enum class BaselineMethod { kZlib, kPerplexity, kMinK, kMinKPlusPlus, kSrct };

inline BaselineMethod parse_baseline_method(std::string_view s) {
  if (s == "zlib") return BaselineMethod::kZlib;
  if (s == "ppl" || s == "perplexity") return BaselineMethod::kPerplexity;
  if (s == "mink" || s == "min_k") return BaselineMethod::kMinK;
  if (s == "minkpp" || s == "min_k_pp") return BaselineMethod::kMinKPlusPlus;
  if (s == "srct") return BaselineMethod::kSrct;
  throw ConfigError("unknown baseline method '" + std::string(s) + "'");
}

inline std::string_view to_string(BaselineMethod m) {
  switch (m) {
    case BaselineMethod::kZlib: return "zlib";
    case BaselineMethod::kPerplexity: return "ppl";
    case BaselineMethod::kMinK: return "mink";
    case BaselineMethod::kMinKPlusPlus: return "minkpp";
    case BaselineMethod::kSrct: return "srct";
  }
  return "zlib";
}

inline constexpr double kDefaultKPercent = 20.0;
inline constexpr int kDefaultZlibLevel = 6;

inline bool uses_k_percent(BaselineMethod m) {
  return m == BaselineMethod::kMinK || m == BaselineMethod::kMinKPlusPlus;
}

struct BaselineKind {
  BaselineMethod method = BaselineMethod::kPerplexity;
  std::optional<double> k_percent;

  static BaselineKind make(BaselineMethod m,
                           std::optional<double> k = std::nullopt) {
    if (uses_k_percent(m)) {
      const double kp = k.value_or(kDefaultKPercent);
      if (!(kp > 0.0 && kp <= 100.0)) {
        throw ConfigError("k percent must lie in (0, 100], got " + std::to_string(kp));
      }
      return {m, kp};
    }
    return {m, std::nullopt};
  }
};

namespace detail {

inline void require_records(std::span<const TokenLogProbRecord> recs) {
  if (recs.empty()) throw DataError("no log-prob records to score");
}

inline void check_k(double k_percent) {
  if (!(k_percent > 0.0 && k_percent <= 100.0)) {
    throw ConfigError("k percent must lie in (0, 100], got " +
                      std::to_string(k_percent));
  }
}

inline std::size_t bottom_count(std::size_t tokens, double k_percent) {
  const double raw = std::floor(k_percent * static_cast<double>(tokens) / 100.0);
  return std::max<std::size_t>(1, static_cast<std::size_t>(raw));
}

// Mean of the `count` smallest values; ties go to the earlier position.
inline double bottom_mean(std::span<const double> values, std::size_t count) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto less = [&](std::size_t a, std::size_t b) {
    return values[a] < values[b] || (values[a] == values[b] && a < b);
  };
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count),
                    order.end(), less);
  double s = 0.0;
  for (std::size_t t = 0; t < count; ++t) s += values[order[t]];
  return s / static_cast<double>(count);
}

}  // namespace detail

// -(1/|T|) * sum of token log-probs.
inline double mean_nll(const TokenLogProbRecord& rec) {
  if (rec.logprobs.empty()) throw DataError("record '" + rec.id + "' has no tokens");
  double s = 0.0;
  for (double lp : rec.logprobs) s += lp;
  return -s / static_cast<double>(rec.logprobs.size());
}

inline double perplexity_score(std::span<const TokenLogProbRecord> recs) {
  detail::require_records(recs);
  double s = 0.0;
  for (const auto& r : recs) s += std::exp(mean_nll(r));
  return -s / static_cast<double>(recs.size());
}

// Byte length of the zlib-framed DEFLATE stream of `text`.
inline std::size_t deflate_size(std::string_view text, int level = kDefaultZlibLevel) {
  if (level < 0 || level > 9) throw ConfigError("zlib level must lie in [0, 9]");
  uLongf len = compressBound(static_cast<uLong>(text.size()));
  std::vector<Bytef> buf(len);
  const int rc = compress2(buf.data(), &len, reinterpret_cast<const Bytef*>(text.data()),
                           static_cast<uLong>(text.size()), level);
  if (rc != Z_OK) throw DataError("zlib compression failed (code " + std::to_string(rc) + ")");
  return static_cast<std::size_t>(len);
}

inline double zlib_score(const SampleManifest& manifest,
                         std::span<const TokenLogProbRecord> recs,
                         int level = kDefaultZlibLevel) {
  detail::require_records(recs);
  double s = 0.0;
  for (const auto& r : recs) {
    const ManifestEntry* e = manifest.find(r.id);
    if (!e) throw DataError("sample '" + r.id + "' missing from manifest");
    if (!e->text) throw DataError("sample '" + r.id + "' has no text for the zlib score");
    s += mean_nll(r) / static_cast<double>(deflate_size(*e->text, level));
  }
  return -s / static_cast<double>(recs.size());
}

// Per sample: negated mean of the bottom max(1, floor(k% * |T|)) log-probs;
// then averaged over samples.
inline double min_k_score(std::span<const TokenLogProbRecord> recs,
                          double k_percent = kDefaultKPercent) {
  detail::check_k(k_percent);
  detail::require_records(recs);
  double s = 0.0;
  for (const auto& r : recs) {
    if (r.logprobs.empty()) throw DataError("record '" + r.id + "' has no tokens");
    s += detail::bottom_mean(r.logprobs, detail::bottom_count(r.logprobs.size(), k_percent));
  }
  return -s / static_cast<double>(recs.size());
}

// As min_k_score on (logprob - mu) / sigma; bottom tokens are chosen by the
// normalized value.
inline double min_k_pp_score(std::span<const TokenLogProbRecord> recs,
                             double k_percent = kDefaultKPercent) {
  detail::check_k(k_percent);
  detail::require_records(recs);
  double s = 0.0;
  std::vector<double> z;
  for (const auto& r : recs) {
    if (r.logprobs.empty()) throw DataError("record '" + r.id + "' has no tokens");
    if (!r.mu || !r.sigma) {
      throw DataError("record '" + r.id + "' lacks mu/sigma required by Min-K%++");
    }
    if (r.mu->size() != r.logprobs.size() || r.sigma->size() != r.logprobs.size()) {
      throw DataError("record '" + r.id + "' has mu/sigma of the wrong length");
    }
    z.resize(r.logprobs.size());
    for (std::size_t t = 0; t < z.size(); ++t) {
      const double sigma = (*r.sigma)[t];
      if (!(sigma > 0.0)) throw DataError("record '" + r.id + "' has sigma <= 0");
      z[t] = (r.logprobs[t] - (*r.mu)[t]) / sigma;
    }
    s += detail::bottom_mean(z, detail::bottom_count(z.size(), k_percent));
  }
  return -s / static_cast<double>(recs.size());
}

// (1/r) * sum_k [canonical_k - mean(permuted_k)].
inline double srct_score(std::span<const ShardLikelihoodRecord> shards) {
  if (shards.empty()) throw DataError("SRCT needs at least one shard");
  double s = 0.0;
  for (const auto& sh : shards) {
    if (sh.permuted_logliks.empty()) {
      throw DataError("shard " + std::to_string(sh.shard_index) +
                      " has no permuted log-likelihoods");
    }
    double p = 0.0;
    for (double v : sh.permuted_logliks) p += v;
    s += sh.canonical_loglik - p / static_cast<double>(sh.permuted_logliks.size());
  }
  return s / static_cast<double>(shards.size());
}

// +1 when the definition already rises with contamination, -1 otherwise.
inline double orientation(BaselineMethod m) {
  return uses_k_percent(m) ? -1.0 : 1.0;
}

// Textbook value of a log-prob based baseline. `manifest` is needed for zlib.
inline double baseline_score(const BaselineKind& kind,
                             std::span<const TokenLogProbRecord> recs,
                             const SampleManifest* manifest = nullptr,
                             int zlib_level = kDefaultZlibLevel) {
  switch (kind.method) {
    case BaselineMethod::kZlib:
      if (!manifest) throw ConfigError("zlib score needs a manifest with texts");
      return zlib_score(*manifest, recs, zlib_level);
    case BaselineMethod::kPerplexity:
      return perplexity_score(recs);
    case BaselineMethod::kMinK:
      return min_k_score(recs, kind.k_percent.value_or(kDefaultKPercent));
    case BaselineMethod::kMinKPlusPlus:
      return min_k_pp_score(recs, kind.k_percent.value_or(kDefaultKPercent));
    case BaselineMethod::kSrct:
      throw ConfigError("SRCT is scored from shard likelihoods, not token log-probs");
  }
  throw ConfigError("unknown baseline method");
}

// baseline_score with the sign adjusted so that higher means more contamination.
inline double oriented_score(const BaselineKind& kind,
                             std::span<const TokenLogProbRecord> recs,
                             const SampleManifest* manifest = nullptr,
                             int zlib_level = kDefaultZlibLevel) {
  return orientation(kind.method) * baseline_score(kind, recs, manifest, zlib_level);
}

struct FsdPair {
  std::vector<TokenLogProbRecord> before;  // model before fine-tuning
  std::vector<TokenLogProbRecord> after;   // model after fine-tuning
  BaselineKind base;
};

// Oriented base score before fine-tuning minus after. Every base is a
// per-sample mean, so this equals the mean of per-sample differences.
inline double fsd_score(const FsdPair& pair, const SampleManifest* manifest = nullptr,
                        int zlib_level = kDefaultZlibLevel) {
  if (pair.base.method == BaselineMethod::kSrct) {
    throw ConfigError("FSD base must be zlib, ppl, mink or minkpp");
  }
  if (pair.before.size() != pair.after.size()) {
    throw DataError("FSD before/after record counts differ (" +
                    std::to_string(pair.before.size()) + " vs " +
                    std::to_string(pair.after.size()) + ")");
  }
  std::unordered_map<std::string, std::size_t> after_index;
  for (std::size_t i = 0; i < pair.after.size(); ++i) {
    after_index.emplace(pair.after[i].id, i);
  }
  for (const auto& r : pair.before) {
    if (!after_index.count(r.id)) {
      throw DataError("sample '" + r.id + "' missing from post-fine-tuning log-probs");
    }
  }
  return oriented_score(pair.base, pair.before, manifest, zlib_level) -
         oriented_score(pair.base, pair.after, manifest, zlib_level);
}

}  // namespace contam
