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

// Controlled-contamination experiments.
//
// For every contamination rate lambda in the grid and every run, a subset of
// `subset_size` samples is drawn with round(lambda * size) ids from the seen
// pool and the rest from the unseen pool, every configured scorer is
// evaluated on that subset, and the scores are summarized per scorer as
// Spearman / Pearson correlation against lambda (monotonicity) and MAPE
// across runs at each lambda (consistency).
//
// Cell (lambda_index, run_index) uses seed derive_seed(master_seed, li, ri)
// and nothing else, so cells can run in any order or in parallel and the
// report is byte-identical.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "contam/baselines.hpp"
#include "contam/data_model.hpp"
#include "contam/error.hpp"
#include "contam/kds.hpp"
#include "contam/kernel.hpp"
#include "contam/parallel.hpp"
#include "contam/random.hpp"
#include "contam/stats.hpp"
#include "json.hpp"

namespace contam {

// ---------------------------------------------------------------------------
// Subset mixing

// Number of seen samples in a subset: round(lambda * size), halves up.
inline std::size_t seen_count(ContaminationRate lam, std::size_t size) {
  return static_cast<std::size_t>(std::floor(lam.value() * static_cast<double>(size) + 0.5));
}

// round(lambda * size) ids drawn without replacement from `seen_ids`, the
// rest from `unseen_ids`, returned in shuffled order.
inline std::vector<std::string> mix_subset(std::span<const std::string> seen_ids,
                                           std::span<const std::string> unseen_ids,
                                           ContaminationRate lam, std::size_t size,
                                           std::uint64_t seed) {
  const std::size_t k_seen = seen_count(lam, size);
  const std::size_t k_unseen = size - k_seen;
  if (k_seen > seen_ids.size()) {
    throw ConfigError("seen pool exhausted: need " + std::to_string(k_seen) +
                      ", have " + std::to_string(seen_ids.size()));
  }
  if (k_unseen > unseen_ids.size()) {
    throw ConfigError("unseen pool exhausted: need " + std::to_string(k_unseen) +
                      ", have " + std::to_string(unseen_ids.size()));
  }
  Rng rng(seed);
  auto draw = [&](std::span<const std::string> pool, std::size_t k,
                  std::vector<std::string>& out) {
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (std::size_t t = 0; t < k; ++t) {
      const std::size_t j = t + static_cast<std::size_t>(rng.below(idx.size() - t));
      std::swap(idx[t], idx[j]);
      out.push_back(pool[idx[t]]);
    }
  };
  std::vector<std::string> out;
  out.reserve(size);
  draw(seen_ids, k_seen, out);
  draw(unseen_ids, k_unseen, out);
  rng.shuffle(std::span<std::string>(out));
  return out;
}

// ---------------------------------------------------------------------------
// Configuration

enum class ScorerType { kKds, kKdsAblation, kBaseline, kFsd, kSrct };
enum class CorrelationMode { kMeanScores, kPerRun };

struct ScorerSpec {
  ScorerType type = ScorerType::kKds;
  std::string name;  // empty: derived by scorer_name()
  std::optional<KernelKind> kind;
  std::optional<BandwidthPolicy> policy;
  AblationMode ablation = AblationMode::kNoGate;
  BaselineKind baseline = BaselineKind::make(BaselineMethod::kPerplexity);
  std::optional<std::string> pair;  // embedding pair tag for kds scorers
};

inline bool uses_embeddings(const ScorerSpec& s) {
  return s.type == ScorerType::kKds || s.type == ScorerType::kKdsAblation;
}

inline std::string format_number(double v) {
  std::ostringstream os;
  os.precision(15);
  os << v;
  return os.str();
}

inline std::string scorer_name(const ScorerSpec& s) {
  if (!s.name.empty()) return s.name;
  switch (s.type) {
    case ScorerType::kKds: {
      std::string n = "kds";
      if (s.kind && *s.kind != KernelKind::kRbf) n += ":" + std::string(to_string(*s.kind));
      if (s.policy && s.policy->mode == BandwidthPolicy::Mode::kFixed) {
        n += ":gamma=" + format_number(s.policy->gamma);
      }
      return n;
    }
    case ScorerType::kKdsAblation:
      return "kds_" + std::string(to_string(s.ablation));
    case ScorerType::kBaseline: {
      std::string n(to_string(s.baseline.method));
      if (s.baseline.k_percent && *s.baseline.k_percent != kDefaultKPercent) {
        n += ":k=" + format_number(*s.baseline.k_percent);
      }
      return n;
    }
    case ScorerType::kFsd:
      return "fsd_" + std::string(to_string(s.baseline.method));
    case ScorerType::kSrct:
      return "srct";
  }
  return "scorer";
}

struct EmbeddingPairPaths {
  std::string tag;
  std::string before;
  std::string after;
};

// File inputs named by a config file; relative paths resolve against the
// config file's directory.
struct ExperimentInputs {
  std::string manifest;
  std::vector<EmbeddingPairPaths> embedding_pairs;
  std::string logprobs;
  std::string logprobs_after;
  std::string shards;
};

inline std::vector<double> default_lambda_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 20; ++i) g.push_back(i / 20.0);
  return g;
}

struct ExperimentConfig {
  std::vector<double> lambda_grid = default_lambda_grid();
  std::size_t subset_size = 700;
  std::size_t runs = 5;
  std::vector<ScorerSpec> scorers = {ScorerSpec{}};
  std::uint64_t master_seed = 0;
  BandwidthPolicy policy = BandwidthPolicy::median();
  KernelKind kind = KernelKind::kRbf;
  std::size_t block = kDefaultBlock;
  CorrelationMode correlation_mode = CorrelationMode::kMeanScores;
  int zlib_level = kDefaultZlibLevel;
  ExperimentInputs inputs;

  void validate() const {
    if (lambda_grid.size() < 2) throw ConfigError("lambda grid needs at least 2 values");
    for (std::size_t i = 0; i < lambda_grid.size(); ++i) {
      (void)ContaminationRate{lambda_grid[i]};
      if (i > 0 && !(lambda_grid[i] > lambda_grid[i - 1])) {
        throw ConfigError("lambda grid must be strictly increasing");
      }
    }
    if (subset_size < 2) throw ConfigError("subset_size must be >= 2");
    if (runs < 1) throw ConfigError("runs must be >= 1");
    if (scorers.empty()) throw ConfigError("no scorers configured");
    if (block == 0) throw ConfigError("block must be positive");
    if (zlib_level < 0 || zlib_level > 9) throw ConfigError("zlib_level must lie in [0, 9]");
    std::set<std::string> names;
    for (const auto& s : scorers) {
      if (s.pair) continue;
      if (!names.insert(scorer_name(s)).second) {
        throw ConfigError("duplicate scorer name '" + scorer_name(s) + "'");
      }
    }
  }
};

// ---- JSON <-> config

namespace detail {

inline BandwidthPolicy parse_gamma(const nlohmann::json& j) {
  if (j.is_string()) {
    if (j.get<std::string>() == "median") return BandwidthPolicy::median();
    try {
      return BandwidthPolicy::fixed(std::stod(j.get<std::string>()));
    } catch (const std::invalid_argument&) {
      throw ConfigError("gamma must be \"median\" or a positive number");
    }
  }
  if (j.is_number()) return BandwidthPolicy::fixed(j.get<double>());
  throw ConfigError("gamma must be \"median\" or a positive number");
}

inline nlohmann::json gamma_json(const BandwidthPolicy& p) {
  if (p.mode == BandwidthPolicy::Mode::kMedian) return "median";
  return p.gamma;
}

inline std::string type_name(ScorerType t) {
  switch (t) {
    case ScorerType::kKds: return "kds";
    case ScorerType::kKdsAblation: return "kds_ablation";
    case ScorerType::kBaseline: return "baseline";
    case ScorerType::kFsd: return "fsd";
    case ScorerType::kSrct: return "srct";
  }
  return "kds";
}

inline ScorerType parse_type(const std::string& s) {
  if (s == "kds") return ScorerType::kKds;
  if (s == "kds_ablation") return ScorerType::kKdsAblation;
  if (s == "baseline") return ScorerType::kBaseline;
  if (s == "fsd") return ScorerType::kFsd;
  if (s == "srct") return ScorerType::kSrct;
  throw ConfigError("unknown scorer type '" + s + "'");
}

inline std::optional<double> optional_k(const nlohmann::json& j) {
  if (auto it = j.find("k"); it != j.end()) return it->get<double>();
  return std::nullopt;
}

}  // namespace detail

inline ScorerSpec parse_scorer(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("scorer entry must be an object");
  ScorerSpec s;
  s.type = detail::parse_type(j.value("type", std::string("kds")));
  s.name = j.value("name", std::string());
  switch (s.type) {
    case ScorerType::kKds:
    case ScorerType::kKdsAblation:
      if (auto it = j.find("kind"); it != j.end()) {
        s.kind = parse_kernel_kind(it->get<std::string>());
      }
      if (auto it = j.find("gamma"); it != j.end()) s.policy = detail::parse_gamma(*it);
      if (auto it = j.find("pair"); it != j.end()) s.pair = it->get<std::string>();
      if (s.type == ScorerType::kKdsAblation) {
        s.ablation = parse_ablation_mode(j.value("mode", std::string("no_gate")));
      }
      break;
    case ScorerType::kBaseline: {
      const auto m = parse_baseline_method(j.value("method", std::string()));
      if (m == BaselineMethod::kSrct) {
        s.type = ScorerType::kSrct;
      } else {
        s.baseline = BaselineKind::make(m, detail::optional_k(j));
      }
      break;
    }
    case ScorerType::kFsd: {
      const auto m = parse_baseline_method(j.value("base", std::string("ppl")));
      if (m == BaselineMethod::kSrct) throw ConfigError("FSD base cannot be srct");
      s.baseline = BaselineKind::make(m, detail::optional_k(j));
      break;
    }
    case ScorerType::kSrct:
      s.baseline = BaselineKind::make(BaselineMethod::kSrct);
      break;
  }
  return s;
}

inline nlohmann::json scorer_json(const ScorerSpec& s) {
  nlohmann::json j;
  j["type"] = detail::type_name(s.type);
  if (!s.name.empty()) j["name"] = s.name;
  if (uses_embeddings(s)) {
    if (s.kind) j["kind"] = std::string(to_string(*s.kind));
    if (s.policy) j["gamma"] = detail::gamma_json(*s.policy);
    if (s.pair) j["pair"] = *s.pair;
    if (s.type == ScorerType::kKdsAblation) j["mode"] = std::string(to_string(s.ablation));
  } else if (s.type == ScorerType::kBaseline || s.type == ScorerType::kFsd) {
    j[s.type == ScorerType::kFsd ? "base" : "method"] =
        std::string(to_string(s.baseline.method));
    if (s.baseline.k_percent) j["k"] = *s.baseline.k_percent;
  }
  return j;
}

inline nlohmann::json config_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["lambda_grid"] = c.lambda_grid;
  j["subset_size"] = c.subset_size;
  j["runs"] = c.runs;
  j["master_seed"] = c.master_seed;
  j["kernel"] = {{"kind", std::string(to_string(c.kind))},
                 {"gamma", detail::gamma_json(c.policy)},
                 {"block", c.block}};
  j["correlation_mode"] =
      c.correlation_mode == CorrelationMode::kMeanScores ? "mean_scores" : "per_run";
  j["zlib_level"] = c.zlib_level;
  nlohmann::json scorers = nlohmann::json::array();
  for (const auto& s : c.scorers) scorers.push_back(scorer_json(s));
  j["scorers"] = scorers;
  nlohmann::json in = nlohmann::json::object();
  if (!c.inputs.manifest.empty()) in["manifest"] = c.inputs.manifest;
  if (!c.inputs.embedding_pairs.empty()) {
    nlohmann::json pairs = nlohmann::json::array();
    for (const auto& p : c.inputs.embedding_pairs) {
      pairs.push_back({{"tag", p.tag}, {"before", p.before}, {"after", p.after}});
    }
    in["embedding_pairs"] = pairs;
  }
  if (!c.inputs.logprobs.empty()) in["logprobs"] = c.inputs.logprobs;
  if (!c.inputs.logprobs_after.empty()) in["logprobs_after"] = c.inputs.logprobs_after;
  if (!c.inputs.shards.empty()) in["shards"] = c.inputs.shards;
  j["inputs"] = in;
  return j;
}

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("experiment config must be a JSON object");
  ExperimentConfig c;
  try {
    if (auto it = j.find("lambda_grid"); it != j.end()) {
      c.lambda_grid = it->get<std::vector<double>>();
    }
    c.subset_size = j.value("subset_size", c.subset_size);
    c.runs = j.value("runs", c.runs);
    c.master_seed = j.value("master_seed", c.master_seed);
    if (auto it = j.find("kernel"); it != j.end()) {
      if (auto k = it->find("kind"); k != it->end()) c.kind = parse_kernel_kind(k->get<std::string>());
      if (auto g = it->find("gamma"); g != it->end()) c.policy = detail::parse_gamma(*g);
      c.block = it->value("block", c.block);
    }
    const std::string mode = j.value("correlation_mode", std::string("mean_scores"));
    if (mode == "mean_scores") {
      c.correlation_mode = CorrelationMode::kMeanScores;
    } else if (mode == "per_run") {
      c.correlation_mode = CorrelationMode::kPerRun;
    } else {
      throw ConfigError("correlation_mode must be mean_scores or per_run");
    }
    c.zlib_level = j.value("zlib_level", c.zlib_level);
    if (auto it = j.find("scorers"); it != j.end()) {
      c.scorers.clear();
      for (const auto& s : *it) c.scorers.push_back(parse_scorer(s));
    }
    if (auto it = j.find("inputs"); it != j.end()) {
      const auto& in = *it;
      c.inputs.manifest = in.value("manifest", std::string());
      if (auto p = in.find("embedding_pairs"); p != in.end()) {
        for (const auto& e : *p) {
          c.inputs.embedding_pairs.push_back({e.value("tag", std::string("default")),
                                              e.at("before").get<std::string>(),
                                              e.at("after").get<std::string>()});
        }
      } else if (in.contains("before") || in.contains("after")) {
        c.inputs.embedding_pairs.push_back({"default", in.at("before").get<std::string>(),
                                            in.at("after").get<std::string>()});
      }
      c.inputs.logprobs = in.value("logprobs", std::string());
      c.inputs.logprobs_after = in.value("logprobs_after", std::string());
      c.inputs.shards = in.value("shards", std::string());
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid experiment config: ") + e.what());
  }
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Inputs

struct EmbeddingPair {
  std::string tag = "default";
  EmbeddingMatrix before;
  EmbeddingMatrix after;
};

struct ExperimentData {
  SampleManifest manifest;
  std::vector<EmbeddingPair> pairs;
  std::optional<std::vector<TokenLogProbRecord>> logprobs;
  std::optional<std::vector<TokenLogProbRecord>> logprobs_after;
  std::optional<std::vector<ShardLikelihoodRecord>> shards;
};

inline ExperimentData load_inputs(const ExperimentInputs& in,
                                  const std::filesystem::path& base_dir) {
  auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_absolute() ? path : base_dir / path;
  };
  if (in.manifest.empty()) throw ConfigError("inputs.manifest is required");
  ExperimentData data;
  data.manifest = read_manifest(resolve(in.manifest));
  for (const auto& p : in.embedding_pairs) {
    data.pairs.push_back({p.tag, read_embeddings(resolve(p.before)),
                          read_embeddings(resolve(p.after))});
  }
  if (!in.logprobs.empty()) data.logprobs = read_logprobs(resolve(in.logprobs));
  if (!in.logprobs_after.empty()) {
    data.logprobs_after = read_logprobs(resolve(in.logprobs_after));
  }
  if (!in.shards.empty()) data.shards = read_shards(resolve(in.shards));
  return data;
}

// ---------------------------------------------------------------------------
// Report

struct ScorerReport {
  std::string name;
  std::vector<std::vector<double>> scores;  // [lambda][run]
  std::vector<double> mean_scores;
  std::vector<double> std_scores;           // sample std across runs; 0 for 1 run
  std::optional<double> spearman;
  std::optional<double> pearson;
  std::vector<std::optional<double>> mape;  // per lambda
  std::optional<double> mean_mape;
  std::vector<std::string> notes;

  friend bool operator==(const ScorerReport&, const ScorerReport&) = default;
};

struct ExperimentReport {
  nlohmann::json config;
  std::vector<double> lambdas;
  std::size_t runs = 0;
  std::string correlation_mode = "mean_scores";
  std::vector<std::vector<std::uint64_t>> seeds;  // [lambda][run]
  std::vector<ScorerReport> scorers;
  std::vector<std::string> notes;

  const ScorerReport* find(const std::string& name) const {
    for (const auto& s : scorers) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }
};

namespace detail {

inline nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

inline std::optional<double> optional_from(const nlohmann::json& j) {
  if (j.is_null()) return std::nullopt;
  return j.get<double>();
}

}  // namespace detail

inline nlohmann::json report_json(const ExperimentReport& r) {
  nlohmann::json j;
  j["config"] = r.config;
  j["lambdas"] = r.lambdas;
  j["runs"] = r.runs;
  j["correlation_mode"] = r.correlation_mode;
  j["seeds"] = r.seeds;
  nlohmann::json scorers = nlohmann::json::array();
  for (const auto& s : r.scorers) {
    nlohmann::json sj;
    sj["name"] = s.name;
    sj["scores"] = s.scores;
    sj["mean_scores"] = s.mean_scores;
    sj["std_scores"] = s.std_scores;
    sj["spearman"] = detail::optional_json(s.spearman);
    sj["pearson"] = detail::optional_json(s.pearson);
    nlohmann::json mape = nlohmann::json::array();
    for (const auto& m : s.mape) mape.push_back(detail::optional_json(m));
    sj["mape"] = mape;
    sj["mean_mape"] = detail::optional_json(s.mean_mape);
    sj["notes"] = s.notes;
    scorers.push_back(sj);
  }
  j["scorers"] = scorers;
  j["notes"] = r.notes;
  return j;
}

inline ExperimentReport parse_report(const nlohmann::json& j) {
  ExperimentReport r;
  try {
    r.config = j.at("config");
    r.lambdas = j.at("lambdas").get<std::vector<double>>();
    r.runs = j.at("runs").get<std::size_t>();
    r.correlation_mode = j.at("correlation_mode").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::vector<std::uint64_t>>>();
    for (const auto& sj : j.at("scorers")) {
      ScorerReport s;
      s.name = sj.at("name").get<std::string>();
      s.scores = sj.at("scores").get<std::vector<std::vector<double>>>();
      s.mean_scores = sj.at("mean_scores").get<std::vector<double>>();
      s.std_scores = sj.at("std_scores").get<std::vector<double>>();
      s.spearman = detail::optional_from(sj.at("spearman"));
      s.pearson = detail::optional_from(sj.at("pearson"));
      for (const auto& m : sj.at("mape")) s.mape.push_back(detail::optional_from(m));
      s.mean_mape = detail::optional_from(sj.at("mean_mape"));
      s.notes = sj.at("notes").get<std::vector<std::string>>();
      r.scorers.push_back(std::move(s));
    }
    r.notes = j.at("notes").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("invalid report: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// Running

namespace detail {

// A configured scorer bound to concrete inputs (one row of the report).
struct BoundScorer {
  ScorerSpec spec;
  std::string name;
  const EmbeddingPair* pair = nullptr;
  KernelKind kind = KernelKind::kRbf;
  BandwidthPolicy policy;
};

inline std::unordered_map<std::string, const TokenLogProbRecord*> index_records(
    const std::vector<TokenLogProbRecord>& recs) {
  std::unordered_map<std::string, const TokenLogProbRecord*> out;
  for (const auto& r : recs) out.emplace(r.id, &r);
  return out;
}

inline std::vector<TokenLogProbRecord> select_records(
    const std::unordered_map<std::string, const TokenLogProbRecord*>& index,
    std::span<const std::string> ids) {
  std::vector<TokenLogProbRecord> out;
  out.reserve(ids.size());
  for (const auto& id : ids) out.push_back(*index.at(id));
  return out;
}

inline double sample_std(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace detail

// Runs every (lambda, run) cell on up to `threads` workers (CONTAM_THREADS by
// default). The report is identical for any worker count.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg,
                                       const ExperimentData& data,
                                       unsigned threads = thread_limit()) {
  cfg.validate();

  ExperimentReport report;
  report.config = config_json(cfg);
  report.lambdas = cfg.lambda_grid;
  report.runs = cfg.runs;
  report.correlation_mode =
      cfg.correlation_mode == CorrelationMode::kMeanScores ? "mean_scores" : "per_run";

  // Bind scorers to inputs; missing inputs are config errors, except SRCT
  // which is skipped with a note.
  std::vector<detail::BoundScorer> bound;
  for (const auto& spec : cfg.scorers) {
    const std::string base_name = scorer_name(spec);
    switch (spec.type) {
      case ScorerType::kKds:
      case ScorerType::kKdsAblation: {
        if (data.pairs.empty()) {
          throw ConfigError("scorer '" + base_name + "' needs a before/after embedding pair");
        }
        std::vector<const EmbeddingPair*> targets;
        if (spec.pair) {
          for (const auto& p : data.pairs) {
            if (p.tag == *spec.pair) targets.push_back(&p);
          }
          if (targets.empty()) {
            throw ConfigError("scorer '" + base_name + "' names unknown embedding pair '" +
                              *spec.pair + "'");
          }
        } else {
          for (const auto& p : data.pairs) targets.push_back(&p);
        }
        for (const auto* p : targets) {
          detail::BoundScorer b;
          b.spec = spec;
          b.pair = p;
          b.kind = spec.kind.value_or(cfg.kind);
          b.policy = spec.policy.value_or(cfg.policy);
          b.name = (spec.pair || data.pairs.size() > 1) ? base_name + "@" + p->tag : base_name;
          bound.push_back(std::move(b));
        }
        break;
      }
      case ScorerType::kBaseline:
        if (!data.logprobs) {
          throw ConfigError("scorer '" + base_name + "' needs a log-prob file");
        }
        if (spec.baseline.method == BaselineMethod::kZlib) {
          for (const auto& e : data.manifest.entries()) {
            if (e.label != Label::kUnknown && !e.text) {
              throw ConfigError("scorer '" + base_name + "' needs texts in the manifest");
            }
          }
        }
        bound.push_back({spec, base_name, nullptr, cfg.kind, cfg.policy});
        break;
      case ScorerType::kFsd:
        if (!data.logprobs || !data.logprobs_after) {
          throw ConfigError("scorer '" + base_name +
                            "' needs log-prob files before and after fine-tuning");
        }
        bound.push_back({spec, base_name, nullptr, cfg.kind, cfg.policy});
        break;
      case ScorerType::kSrct:
        if (!data.shards) {
          report.notes.push_back("scorer '" + base_name +
                                 "' skipped: no shard likelihood file provided");
          break;
        }
        bound.push_back({spec, base_name, nullptr, cfg.kind, cfg.policy});
        break;
    }
  }
  {
    std::set<std::string> names;
    for (const auto& b : bound) {
      if (!names.insert(b.name).second) {
        throw ConfigError("duplicate scorer row '" + b.name + "'");
      }
    }
  }

  // Pools are sorted so results do not depend on file order.
  std::vector<std::string> seen = data.manifest.ids_with(Label::kSeen);
  std::vector<std::string> unseen = data.manifest.ids_with(Label::kUnseen);
  std::sort(seen.begin(), seen.end());
  std::sort(unseen.begin(), unseen.end());
  for (double lam : cfg.lambda_grid) {
    const std::size_t k = seen_count(ContaminationRate{lam}, cfg.subset_size);
    if (k > seen.size() || cfg.subset_size - k > unseen.size()) {
      throw ConfigError("lambda " + format_number(lam) + " with subset size " +
                        std::to_string(cfg.subset_size) + " needs " + std::to_string(k) +
                        " seen and " + std::to_string(cfg.subset_size - k) +
                        " unseen samples; pools hold " + std::to_string(seen.size()) +
                        " and " + std::to_string(unseen.size()));
    }
  }

  // Every pool id must be present in each input a scorer reads.
  std::unordered_map<std::string, const TokenLogProbRecord*> lp_index, lp_after_index;
  if (data.logprobs) lp_index = detail::index_records(*data.logprobs);
  if (data.logprobs_after) lp_after_index = detail::index_records(*data.logprobs_after);
  bool need_lp = false, need_lp_after = false;
  std::set<const EmbeddingPair*> used_pairs;
  for (const auto& b : bound) {
    if (b.pair) used_pairs.insert(b.pair);
    if (b.spec.type == ScorerType::kBaseline || b.spec.type == ScorerType::kFsd) need_lp = true;
    if (b.spec.type == ScorerType::kFsd) need_lp_after = true;
  }
  for (const auto* pool : {&seen, &unseen}) {
    for (const auto& id : *pool) {
      for (const auto* p : used_pairs) {
        if (!p->before.index_of(id) || !p->after.index_of(id)) {
          throw DataError("sample '" + id + "' missing from embedding pair '" + p->tag + "'");
        }
      }
      if (need_lp && !lp_index.count(id)) {
        throw DataError("sample '" + id + "' missing from log-prob file");
      }
      if (need_lp_after && !lp_after_index.count(id)) {
        throw DataError("sample '" + id + "' missing from post-fine-tuning log-prob file");
      }
    }
  }

  const std::size_t n_lambda = cfg.lambda_grid.size();
  const std::size_t n_cells = n_lambda * cfg.runs;
  report.seeds.assign(n_lambda, std::vector<std::uint64_t>(cfg.runs));
  std::unordered_set<std::uint64_t> distinct;
  for (std::size_t li = 0; li < n_lambda; ++li) {
    for (std::size_t ri = 0; ri < cfg.runs; ++ri) {
      const std::uint64_t s = derive_seed(cfg.master_seed, static_cast<std::uint32_t>(li),
                                          static_cast<std::uint32_t>(ri));
      report.seeds[li][ri] = s;
      if (!distinct.insert(s).second) throw RunError("cell seed collision");
    }
  }

  // results[cell][scorer]
  std::vector<std::vector<double>> results(n_cells, std::vector<double>(bound.size()));
  parallel_for(n_cells, threads, [&](std::size_t cell) {
    const std::size_t li = cell / cfg.runs;
    const std::size_t ri = cell % cfg.runs;
    const std::string where = "cell (lambda=" + format_number(cfg.lambda_grid[li]) +
                              ", run=" + std::to_string(ri) + ")";
    try {
      // Scored in id order: a cell's value depends only on its id set.
      auto ids = mix_subset(seen, unseen, ContaminationRate{cfg.lambda_grid[li]},
                            cfg.subset_size, report.seeds[li][ri]);
      std::sort(ids.begin(), ids.end());
      std::map<const EmbeddingPair*, PairGeometry> geoms;
      std::optional<std::vector<TokenLogProbRecord>> lp, lp_after;
      auto geometry = [&](const EmbeddingPair* p) -> PairGeometry& {
        auto it = geoms.find(p);
        if (it == geoms.end()) {
          it = geoms.emplace(p, PairGeometry(p->before.select(ids), p->after.select(ids),
                                             cfg.block, 1)).first;
        }
        return it->second;
      };
      for (std::size_t s = 0; s < bound.size(); ++s) {
        const auto& b = bound[s];
        double v = 0.0;
        switch (b.spec.type) {
          case ScorerType::kKds:
            v = kds(geometry(b.pair), b.policy, b.kind).score;
            break;
          case ScorerType::kKdsAblation:
            v = kds_ablation(geometry(b.pair), b.spec.ablation, b.policy);
            break;
          case ScorerType::kBaseline:
            if (!lp) lp = detail::select_records(lp_index, ids);
            v = oriented_score(b.spec.baseline, *lp, &data.manifest, cfg.zlib_level);
            break;
          case ScorerType::kFsd:
            if (!lp) lp = detail::select_records(lp_index, ids);
            if (!lp_after) lp_after = detail::select_records(lp_after_index, ids);
            v = fsd_score({*lp, *lp_after, b.spec.baseline}, &data.manifest, cfg.zlib_level);
            break;
          case ScorerType::kSrct: {
            const std::unordered_set<std::string> members(ids.begin(), ids.end());
            std::vector<ShardLikelihoodRecord> kept;
            for (const auto& sh : *data.shards) {
              const bool inside =
                  !sh.ids || std::all_of(sh.ids->begin(), sh.ids->end(),
                                         [&](const std::string& id) { return members.count(id) > 0; });
              if (inside) kept.push_back(sh);
            }
            if (kept.empty()) throw DataError("no shard lies inside the subset");
            v = srct_score(kept);
            break;
          }
        }
        if (!std::isfinite(v)) throw DataError("scorer '" + b.name + "' produced a non-finite score");
        results[cell][s] = v;
      }
    } catch (const RunError&) {
      throw;
    } catch (const Error& e) {
      throw RunError(where + ": " + e.message());
    }
  });

  // Summaries.
  for (std::size_t s = 0; s < bound.size(); ++s) {
    ScorerReport sr;
    sr.name = bound[s].name;
    sr.scores.assign(n_lambda, std::vector<double>(cfg.runs));
    for (std::size_t li = 0; li < n_lambda; ++li) {
      for (std::size_t ri = 0; ri < cfg.runs; ++ri) {
        sr.scores[li][ri] = results[li * cfg.runs + ri][s];
      }
      double mean = 0.0;
      for (double v : sr.scores[li]) mean += v;
      sr.mean_scores.push_back(mean / static_cast<double>(cfg.runs));
      sr.std_scores.push_back(detail::sample_std(sr.scores[li]));
      if (cfg.runs < 2) {
        sr.mape.push_back(std::nullopt);
      } else {
        try {
          sr.mape.push_back(mape_consistency(sr.scores[li]));
        } catch (const DegenerateError&) {
          sr.mape.push_back(std::nullopt);
          sr.notes.push_back("MAPE undefined at lambda=" + format_number(cfg.lambda_grid[li]) +
                             ": mean score is ~0");
        }
      }
    }
    if (cfg.runs < 2) sr.notes.push_back("MAPE needs at least 2 runs");
    double mape_sum = 0.0;
    std::size_t mape_count = 0;
    for (const auto& m : sr.mape) {
      if (m) {
        mape_sum += *m;
        ++mape_count;
      }
    }
    if (mape_count > 0) sr.mean_mape = mape_sum / static_cast<double>(mape_count);

    if (cfg.correlation_mode == CorrelationMode::kMeanScores) {
      try {
        sr.spearman = spearman(cfg.lambda_grid, sr.mean_scores);
        sr.pearson = pearson(cfg.lambda_grid, sr.mean_scores);
      } catch (const DegenerateError&) {
        sr.spearman.reset();
        sr.pearson.reset();
        sr.notes.push_back("correlation undefined: mean scores are constant across lambda");
      }
    } else {
      double sp = 0.0, pe = 0.0;
      std::size_t used = 0;
      std::vector<double> column(n_lambda);
      for (std::size_t ri = 0; ri < cfg.runs; ++ri) {
        for (std::size_t li = 0; li < n_lambda; ++li) column[li] = sr.scores[li][ri];
        try {
          const double a = spearman(cfg.lambda_grid, column);
          const double b = pearson(cfg.lambda_grid, column);
          sp += a;
          pe += b;
          ++used;
        } catch (const DegenerateError&) {
          sr.notes.push_back("correlation undefined for run " + std::to_string(ri));
        }
      }
      if (used > 0) {
        sr.spearman = sp / static_cast<double>(used);
        sr.pearson = pe / static_cast<double>(used);
      }
    }
    report.scorers.push_back(std::move(sr));
  }
  return report;
}

}  // namespace contam
