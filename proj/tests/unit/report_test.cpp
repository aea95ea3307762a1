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

#include <boost/property_tree/ptree.hpp>
#include <boost/property_tree/xml_parser.hpp>
#include <algorithm>
#include <sstream>

#include "contam/report.hpp"
#include "contam/synth.hpp"
#include "test_util.hpp"

namespace contam {
namespace {

ExperimentReport sample_report() {
  OracleConfig oc;
  oc.n_seen = oc.n_unseen = 60;
  oc.d = 8;
  oc.tokens_per_sample = 8;
  const auto e = gen_embeddings(oc);
  const auto lp = gen_logprobs(oc);
  ExperimentData data;
  data.manifest = e.manifest;
  data.pairs.push_back({"default", e.before, e.after});
  data.logprobs = lp.before;
  ExperimentConfig cfg;
  cfg.lambda_grid = {0.0, 0.5, 1.0};
  cfg.subset_size = 40;
  cfg.runs = 2;
  ScorerSpec ppl;
  ppl.type = ScorerType::kBaseline;
  ScorerSpec named;
  named.name = "kds, \"quoted\" <&>";
  named.kind = KernelKind::kCosinePlusOne;
  cfg.scorers = {ScorerSpec{}, ppl, named};
  return run_experiment(cfg, data, 2);
}

std::size_t count_lines(const std::string& s) {
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

TEST(ReportJson, ParseEmitRoundTrip) {
  const auto rep = sample_report();
  const std::string first = format_report_json(rep);
  const auto parsed = parse_report(nlohmann::json::parse(first));
  EXPECT_EQ(format_report_json(parsed), first);
  EXPECT_EQ(parsed.scorers, rep.scorers);

  const auto dir = testing::temp_dir("report_json");
  emit_report(rep, ReportFormat::kJson, dir / "r.json");
  EXPECT_EQ(format_report_json(read_report(dir / "r.json")), first);
}

TEST(ReportJson, Errors) {
  EXPECT_THROW(parse_report(nlohmann::json::object()), FormatError);
  EXPECT_THROW(read_report("/nonexistent/r.json"), IoError);
  EXPECT_THROW(emit_report(sample_report(), ReportFormat::kJson, "/nonexistent/dir/r.json"),
               IoError);
}

TEST(ReportCsv, RowCountAndHeader) {
  const auto rep = sample_report();
  const std::string csv = format_report_csv(rep);
  const std::size_t s = 3, g = 3, r = 2;
  EXPECT_EQ(count_lines(csv), 1 + s * g * r + s * (g + 3));
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "record,scorer,lambda,run,value");
  EXPECT_NE(csv.find("\"kds, \"\"quoted\"\" <&>\""), std::string::npos);
}

TEST(ReportCsv, ScoresRoundTripExactly) {
  const auto rep = sample_report();
  std::istringstream in(format_report_csv(rep));
  std::string line;
  std::getline(in, line);
  std::getline(in, line);
  // First data row: first scorer, first lambda, run 0.
  const double v = std::stod(line.substr(line.rfind(',') + 1));
  EXPECT_EQ(v, rep.scorers[0].scores[0][0]);
}

TEST(ReportSvg, WellFormedWithOnePolylinePerScorer) {
  const auto rep = sample_report();
  std::istringstream in(format_report_svg(rep));
  boost::property_tree::ptree tree;
  ASSERT_NO_THROW(boost::property_tree::read_xml(in, tree));
  const auto& svg = tree.get_child("svg");
  std::size_t polylines = 0, polygons = 0;
  for (const auto& [tag, group] : svg) {
    if (tag != "g") continue;
    for (const auto& [child, node] : group) {
      polylines += child == "polyline";
      polygons += child == "polygon";
      if (child == "polyline") {
        const auto pts = node.get<std::string>("<xmlattr>.points");
        EXPECT_EQ(std::count(pts.begin(), pts.end(), ','), 3);
      }
    }
  }
  EXPECT_EQ(polylines, 3u);
  EXPECT_EQ(polygons, 3u);
}

}  // namespace
}  // namespace contam
