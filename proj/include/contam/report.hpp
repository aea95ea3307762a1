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

// Serializations of an ExperimentReport.
//
// CSV columns: record,scorer,lambda,run,value. One `score` row per
// (scorer, lambda, run), then per scorer one `mape` row per lambda and one
// row each for `spearman`, `pearson` and `mean_mape`. Undefined values are
// left empty.
//
// SVG: one panel per scorer with lambda on x and the mean score on y, a
// shaded band of +-1 std across runs, and the mean as a <polyline>.

#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <system_error>

#include "contam/error.hpp"
#include "contam/harness.hpp"

namespace contam {

enum class ReportFormat { kJson, kCsv, kSvg };

namespace detail {

// Shortest decimal that round-trips.
inline std::string shortest(double v) {
  std::array<char, 64> buf{};
  auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (ec != std::errc()) return "nan";
  return std::string(buf.data(), end);
}

inline std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string xml_escape(std::string_view s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out += c;
    }
  }
  return out;
}

inline std::string fixed2(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", v);
  return buf;
}

inline std::string short_g(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

}  // namespace detail

inline std::string format_report_json(const ExperimentReport& r) {
  return report_json(r).dump(2) + "\n";
}

inline std::string format_report_csv(const ExperimentReport& r) {
  using detail::csv_field;
  using detail::shortest;
  std::string out = "record,scorer,lambda,run,value\n";
  for (const auto& s : r.scorers) {
    for (std::size_t li = 0; li < r.lambdas.size(); ++li) {
      for (std::size_t ri = 0; ri < r.runs; ++ri) {
        out += "score," + csv_field(s.name) + "," + shortest(r.lambdas[li]) + "," +
               std::to_string(ri) + "," + shortest(s.scores[li][ri]) + "\n";
      }
    }
  }
  auto opt = [](const std::optional<double>& v) { return v ? shortest(*v) : std::string(); };
  for (const auto& s : r.scorers) {
    for (std::size_t li = 0; li < r.lambdas.size(); ++li) {
      out += "mape," + csv_field(s.name) + "," + shortest(r.lambdas[li]) + ",," +
             opt(s.mape[li]) + "\n";
    }
    out += "spearman," + csv_field(s.name) + ",,," + opt(s.spearman) + "\n";
    out += "pearson," + csv_field(s.name) + ",,," + opt(s.pearson) + "\n";
    out += "mean_mape," + csv_field(s.name) + ",,," + opt(s.mean_mape) + "\n";
  }
  return out;
}

inline std::string format_report_svg(const ExperimentReport& r) {
  constexpr double kWidth = 640, kPanel = 260, kLeft = 70, kRight = 20, kTop = 40,
                   kBottom = 40;
  const double plot_w = kWidth - kLeft - kRight;
  const double plot_h = kPanel - kTop - kBottom;
  const double height = kPanel * static_cast<double>(std::max<std::size_t>(1, r.scorers.size()));
  const double x_lo = r.lambdas.empty() ? 0.0 : r.lambdas.front();
  const double x_hi = r.lambdas.empty() ? 1.0 : r.lambdas.back();

  std::string out;
  out += "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + detail::fixed2(kWidth) +
         "\" height=\"" + detail::fixed2(height) + "\" viewBox=\"0 0 " +
         detail::fixed2(kWidth) + " " + detail::fixed2(height) + "\">\n";
  out += "<rect x=\"0\" y=\"0\" width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

  for (std::size_t p = 0; p < r.scorers.size(); ++p) {
    const auto& s = r.scorers[p];
    const double y0 = kPanel * static_cast<double>(p);
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < s.mean_scores.size(); ++i) {
      const double a = s.mean_scores[i] - s.std_scores[i];
      const double b = s.mean_scores[i] + s.std_scores[i];
      if (i == 0 || a < lo) lo = a;
      if (i == 0 || b > hi) hi = b;
    }
    if (!(hi > lo)) {
      lo -= 0.5;
      hi += 0.5;
    }
    auto px = [&](double x) {
      return kLeft + (x_hi > x_lo ? (x - x_lo) / (x_hi - x_lo) : 0.5) * plot_w;
    };
    auto py = [&](double y) { return y0 + kTop + (hi - y) / (hi - lo) * plot_h; };

    out += "<g>\n";
    out += "<text x=\"" + detail::fixed2(kLeft) + "\" y=\"" + detail::fixed2(y0 + 24) +
           "\" font-family=\"sans-serif\" font-size=\"14\">" + detail::xml_escape(s.name);
    if (s.spearman) out += " (Spearman " + detail::short_g(*s.spearman) + ")";
    out += "</text>\n";
    out += "<rect x=\"" + detail::fixed2(kLeft) + "\" y=\"" + detail::fixed2(y0 + kTop) +
           "\" width=\"" + detail::fixed2(plot_w) + "\" height=\"" + detail::fixed2(plot_h) +
           "\" fill=\"none\" stroke=\"#888\"/>\n";
    const double base = y0 + kTop + plot_h;
    out += "<text x=\"" + detail::fixed2(kLeft) + "\" y=\"" + detail::fixed2(base + 16) +
           "\" font-family=\"sans-serif\" font-size=\"11\">" + detail::short_g(x_lo) +
           "</text>\n";
    out += "<text x=\"" + detail::fixed2(kLeft + plot_w) + "\" y=\"" +
           detail::fixed2(base + 16) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           detail::short_g(x_hi) + "</text>\n";
    out += "<text x=\"" + detail::fixed2(kLeft + plot_w / 2) + "\" y=\"" +
           detail::fixed2(base + 30) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"middle\">"
           "contamination rate</text>\n";
    out += "<text x=\"" + detail::fixed2(kLeft - 6) + "\" y=\"" + detail::fixed2(y0 + kTop + 10) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           detail::short_g(hi) + "</text>\n";
    out += "<text x=\"" + detail::fixed2(kLeft - 6) + "\" y=\"" + detail::fixed2(base) +
           "\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">" +
           detail::short_g(lo) + "</text>\n";

    std::string band, line;
    for (std::size_t i = 0; i < s.mean_scores.size(); ++i) {
      band += detail::fixed2(px(r.lambdas[i])) + "," +
              detail::fixed2(py(s.mean_scores[i] + s.std_scores[i])) + " ";
    }
    for (std::size_t i = s.mean_scores.size(); i-- > 0;) {
      band += detail::fixed2(px(r.lambdas[i])) + "," +
              detail::fixed2(py(s.mean_scores[i] - s.std_scores[i])) + " ";
    }
    for (std::size_t i = 0; i < s.mean_scores.size(); ++i) {
      if (i) line += " ";
      line += detail::fixed2(px(r.lambdas[i])) + "," + detail::fixed2(py(s.mean_scores[i]));
    }
    out += "<polygon points=\"" + band + "\" fill=\"#1f77b4\" fill-opacity=\"0.2\" stroke=\"none\"/>\n";
    out += "<polyline points=\"" + line + "\" fill=\"none\" stroke=\"#1f77b4\" stroke-width=\"2\"/>\n";
    out += "</g>\n";
  }
  out += "</svg>\n";
  return out;
}

inline std::string format_report(const ExperimentReport& r, ReportFormat format) {
  switch (format) {
    case ReportFormat::kJson: return format_report_json(r);
    case ReportFormat::kCsv: return format_report_csv(r);
    case ReportFormat::kSvg: return format_report_svg(r);
  }
  return format_report_json(r);
}

inline void emit_report(const ExperimentReport& r, ReportFormat format,
                        const std::filesystem::path& path) {
  detail::write_file(path, format_report(r, format));
}

inline ExperimentReport read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path.string() + ": invalid JSON: " + e.what());
  }
  return parse_report(j);
}

}  // namespace contam
