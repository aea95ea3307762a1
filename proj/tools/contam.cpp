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

// contam: command-line front end.
//
//   contam score kds --before Z.kdse --after Zp.kdse [--kernel rbf|euclid|cos1|dot]
//                    [--gamma median|<float>] [--block N] [--decompose DIR]
//   contam score baseline --method zlib|ppl|mink|minkpp|srct [--k 20]
//                    --logprobs L.jsonl [--logprobs-after L2.jsonl --fsd]
//                    [--manifest M.jsonl] [--shards S.jsonl]
//   contam score shift --before Z.kdse --after Zp.kdse --manifest M.jsonl
//   contam experiment run --config cfg.json --out report/
//   contam report --in report.json [--svg] [--csv] [--out DIR]
//   contam synth embeddings|logprobs [--config o.json] [--seed S] --out DIR
//
// Scores are printed as JSON on stdout. CONTAM_THREADS caps parallelism.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "contam/contam.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

contam::BandwidthPolicy parse_gamma_flag(const std::string& s) {
  if (s == "median") return contam::BandwidthPolicy::median();
  double g = 0.0;
  try {
    g = std::stod(s);
  } catch (const std::exception&) {
    throw contam::ConfigError("--gamma must be 'median' or a positive number");
  }
  return contam::BandwidthPolicy::fixed(g);
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw contam::IoError("cannot open '" + path.string() + "' for reading");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw contam::FormatError(path.string() + ": invalid JSON: " + e.what());
  }
}

void print(const json& j) { std::cout << j.dump(2) << "\n"; }

json optional_number(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset contamination scoring toolkit"};
  app.require_subcommand(1);

  // ---- score
  auto* score = app.add_subcommand("score", "Score one dataset");
  score->require_subcommand(1);

  struct {
    std::string before, after, kernel = "rbf", gamma = "median", decompose;
    std::size_t block = contam::kDefaultBlock;
  } kds_opt;
  auto* score_kds = score->add_subcommand("kds", "Kernel Divergence Score");
  score_kds->add_option("--before", kds_opt.before, "Embeddings before fine-tuning (KDSE)")
      ->required();
  score_kds->add_option("--after", kds_opt.after, "Embeddings after fine-tuning (KDSE)")
      ->required();
  score_kds->add_option("--kernel", kds_opt.kernel, "rbf|euclid|cos1|dot")
      ->check(CLI::IsMember({"rbf", "euclid", "euclidean", "cos1", "cosine_plus_one", "dot"}));
  score_kds->add_option("--gamma", kds_opt.gamma, "median or a fixed positive bandwidth");
  score_kds->add_option("--block", kds_opt.block, "Tile size for kernel computation")
      ->check(CLI::PositiveNumber);
  score_kds->add_option("--decompose", kds_opt.decompose,
                        "Write gate/delta/product CSV matrices (gamma = 1) to this directory");

  struct {
    std::string method, logprobs, logprobs_after, manifest, shards;
    double k = contam::kDefaultKPercent;
    bool fsd = false;
    int zlib_level = contam::kDefaultZlibLevel;
  } base_opt;
  auto* score_base = score->add_subcommand("baseline", "Baseline contamination scores");
  score_base->add_option("--method", base_opt.method, "zlib|ppl|mink|minkpp|srct")
      ->required()
      ->check(CLI::IsMember({"zlib", "ppl", "mink", "minkpp", "srct"}));
  score_base->add_option("--k", base_opt.k, "Bottom-k percent for mink/minkpp");
  score_base->add_option("--logprobs", base_opt.logprobs, "Token log-probs (JSONL)");
  score_base->add_option("--logprobs-after", base_opt.logprobs_after,
                         "Token log-probs after fine-tuning (JSONL)");
  score_base->add_flag("--fsd", base_opt.fsd, "Fine-tuned score deviation of the method");
  score_base->add_option("--manifest", base_opt.manifest, "Manifest with texts (zlib)");
  score_base->add_option("--shards", base_opt.shards, "Shard likelihoods (srct)");
  score_base->add_option("--zlib-level", base_opt.zlib_level, "DEFLATE level")
      ->check(CLI::Range(0, 9));

  struct {
    std::string before, after, manifest;
    std::size_t bins = 40;
    double lo = -1.0, hi = 1.0;
  } shift_opt;
  auto* score_shift = score->add_subcommand(
      "shift", "Squared-distance change by pair type (seen/unseen)");
  score_shift->add_option("--before", shift_opt.before)->required();
  score_shift->add_option("--after", shift_opt.after)->required();
  score_shift->add_option("--manifest", shift_opt.manifest)->required();
  score_shift->add_option("--bins", shift_opt.bins)->check(CLI::PositiveNumber);
  score_shift->add_option("--lo", shift_opt.lo);
  score_shift->add_option("--hi", shift_opt.hi);

  // ---- experiment
  auto* experiment = app.add_subcommand("experiment", "Controlled-contamination experiments");
  experiment->require_subcommand(1);
  std::string exp_config, exp_out;
  auto* exp_run = experiment->add_subcommand("run", "Run an experiment config");
  exp_run->add_option("--config", exp_config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  exp_run->add_option("--out", exp_out, "Output directory")->required();

  // ---- report
  std::string rep_in, rep_out;
  bool rep_svg = false, rep_csv = false, rep_json = false;
  auto* report = app.add_subcommand("report", "Render a report.json as SVG/CSV");
  report->add_option("--in", rep_in, "report.json")->required()->check(CLI::ExistingFile);
  report->add_flag("--svg", rep_svg, "Write report.svg");
  report->add_flag("--csv", rep_csv, "Write report.csv");
  report->add_flag("--json", rep_json, "Re-emit report.json");
  report->add_option("--out", rep_out, "Output directory (default: next to --in)");

  // ---- synth
  auto* synth = app.add_subcommand("synth", "Synthetic oracle data");
  synth->require_subcommand(1);
  std::string synth_config, synth_out;
  std::optional<std::uint64_t> synth_seed;
  auto add_synth_opts = [&](CLI::App* cmd) {
    cmd->add_option("--config", synth_config, "Oracle config (JSON)")->check(CLI::ExistingFile);
    cmd->add_option("--seed", synth_seed, "Override the config seed");
    cmd->add_option("--out", synth_out, "Output directory")->required();
  };
  auto* synth_emb = synth->add_subcommand("embeddings", "before.kdse, after.kdse, manifest.jsonl");
  auto* synth_lp = synth->add_subcommand(
      "logprobs", "logprobs_before/after.jsonl, manifest.jsonl, shards.jsonl");
  add_synth_opts(synth_emb);
  add_synth_opts(synth_lp);

  CLI11_PARSE(app, argc, argv);

  try {
    if (score_kds->parsed()) {
      const auto before = contam::read_embeddings(kds_opt.before);
      const auto after = contam::read_embeddings(kds_opt.after);
      const auto kind = contam::parse_kernel_kind(kds_opt.kernel);
      contam::PairGeometry geom(before, after, kds_opt.block, contam::thread_limit());
      const auto r = contam::kds(geom, parse_gamma_flag(kds_opt.gamma), kind);
      json out{{"kind", std::string(contam::to_string(r.kind))},
               {"n", geom.n()},
               {"score", r.score},
               {"divergence", r.divergence},
               {"normalizer_e", r.normalizer_e},
               {"gamma_used", optional_number(r.gamma_used)}};
      if (!kds_opt.decompose.empty()) {
        const auto dec = contam::kds_decomposed(geom);
        contam::write_decomposition_csv(dec.matrices, geom.before().ids(), kds_opt.decompose);
        out["decomposed_score"] = dec.score;
      }
      print(out);
    } else if (score_base->parsed()) {
      const auto method = contam::parse_baseline_method(base_opt.method);
      json out;
      if (method == contam::BaselineMethod::kSrct) {
        if (base_opt.shards.empty()) throw contam::ConfigError("srct needs --shards");
        const auto shards = contam::read_shards(base_opt.shards);
        out = {{"method", "srct"}, {"shards", shards.size()},
               {"score", contam::srct_score(shards)}};
      } else {
        if (base_opt.logprobs.empty()) throw contam::ConfigError("--logprobs is required");
        const auto kind = contam::BaselineKind::make(method, base_opt.k);
        const auto recs = contam::read_logprobs(base_opt.logprobs);
        std::optional<contam::SampleManifest> manifest;
        if (!base_opt.manifest.empty()) manifest = contam::read_manifest(base_opt.manifest);
        const contam::SampleManifest* mp = manifest ? &*manifest : nullptr;
        out = {{"method", base_opt.method}, {"samples", recs.size()}};
        if (kind.k_percent) out["k"] = *kind.k_percent;
        if (base_opt.fsd) {
          if (base_opt.logprobs_after.empty()) {
            throw contam::ConfigError("--fsd needs --logprobs-after");
          }
          const auto after = contam::read_logprobs(base_opt.logprobs_after);
          out["fsd"] = true;
          out["score"] = contam::fsd_score({recs, after, kind}, mp, base_opt.zlib_level);
        } else {
          const double raw = contam::baseline_score(kind, recs, mp, base_opt.zlib_level);
          out["raw_score"] = raw;
          out["score"] = contam::orientation(method) * raw;
        }
      }
      print(out);
    } else if (score_shift->parsed()) {
      const auto before = contam::read_embeddings(shift_opt.before);
      const auto after = contam::read_embeddings(shift_opt.after);
      const auto manifest = contam::read_manifest(shift_opt.manifest);
      contam::PairGeometry geom(before, after, contam::kDefaultBlock, contam::thread_limit());
      std::vector<contam::Label> labels;
      for (const auto& id : geom.before().ids()) {
        const auto* e = manifest.find(id);
        labels.push_back(e ? e->label : contam::Label::kUnknown);
      }
      const auto rep = contam::pair_shift_report(geom, labels, shift_opt.bins, shift_opt.lo,
                                                 shift_opt.hi);
      json out{{"bin_lo", rep.bin_lo}, {"bin_hi", rep.bin_hi}};
      const char* names[] = {"seen_seen", "seen_unseen", "unseen_unseen"};
      for (int t = 0; t < 3; ++t) {
        const auto& s = rep.by_type[t];
        out[names[t]] = {{"pairs", s.pairs},
                         {"mean_change", s.mean_change},
                         {"mean_abs_change", s.mean_abs_change},
                         {"histogram", s.histogram}};
      }
      print(out);
    } else if (exp_run->parsed()) {
      const fs::path cfg_path(exp_config);
      const auto cfg = contam::parse_config(read_json_file(cfg_path));
      const auto data = contam::load_inputs(cfg.inputs, cfg_path.parent_path());
      const auto rep = contam::run_experiment(cfg, data, contam::thread_limit());
      fs::create_directories(exp_out);
      contam::emit_report(rep, contam::ReportFormat::kJson, fs::path(exp_out) / "report.json");
      for (const auto& s : rep.scorers) {
        std::fprintf(stderr, "%-28s spearman=%s pearson=%s mean_mape=%s\n", s.name.c_str(),
                     s.spearman ? std::to_string(*s.spearman).c_str() : "n/a",
                     s.pearson ? std::to_string(*s.pearson).c_str() : "n/a",
                     s.mean_mape ? std::to_string(*s.mean_mape).c_str() : "n/a");
      }
      for (const auto& note : rep.notes) std::fprintf(stderr, "note: %s\n", note.c_str());
    } else if (report->parsed()) {
      const auto rep = contam::read_report(rep_in);
      const fs::path dir = rep_out.empty() ? fs::path(rep_in).parent_path() : fs::path(rep_out);
      if (!dir.empty()) fs::create_directories(dir);
      if (!rep_svg && !rep_csv && !rep_json) rep_svg = rep_csv = true;
      if (rep_svg) contam::emit_report(rep, contam::ReportFormat::kSvg, dir / "report.svg");
      if (rep_csv) contam::emit_report(rep, contam::ReportFormat::kCsv, dir / "report.csv");
      if (rep_json) contam::emit_report(rep, contam::ReportFormat::kJson, dir / "report.json");
    } else if (synth_emb->parsed() || synth_lp->parsed()) {
      contam::OracleConfig cfg;
      if (!synth_config.empty()) cfg = read_json_file(synth_config).get<contam::OracleConfig>();
      if (synth_seed) cfg.seed = *synth_seed;
      if (synth_emb->parsed()) {
        contam::write_oracle_embeddings(cfg, synth_out);
      } else {
        contam::write_oracle_logprobs(cfg, synth_out);
      }
    }
  } catch (const contam::Error& e) {
    std::cerr << "contam: " << e.what() << "\n";
    return e.kind() == contam::ErrorKind::kConfig ? 2 : 1;
  } catch (const std::exception& e) {
    std::cerr << "contam: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
