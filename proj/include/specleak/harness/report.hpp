#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "specleak/attacks/pr.hpp"
#include "specleak/capture/signature.hpp"
#include "specleak/common.hpp"
#include "specleak/defense/sweep.hpp"
#include "specleak/harness/experiment.hpp"
#include "specleak/wirechan/trace.hpp"

namespace specleak::harness {

struct Series {
  std::string name;
  std::vector<std::pair<double, double>> points;
};

struct ChartSpec {
  std::string title, x_label, y_label;
  std::optional<std::pair<double, double>> x_range, y_range;
  std::string annotation;
};

namespace detail {

inline const char* palette(std::size_t i) {
  static const char* colors[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                 "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  return colors[i % 10];
}

inline std::string escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else out += c;
  }
  return out;
}

inline std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) throw Error("io-error", ErrorKind::data, "cannot read " + p.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
    rows.push_back(std::move(cells));
  }
  return rows;
}

inline double to_double(const std::string& s, const std::filesystem::path& where) {
  try {
    return std::stod(s);
  } catch (const std::exception&) {
    throw Error("bad-metrics", ErrorKind::data, where.string() + ": not a number '" + s + "'");
  }
}

}  // namespace detail

/// Polyline chart with axes, legend and an optional corner annotation.
inline std::string line_chart_svg(const std::vector<Series>& series, const ChartSpec& spec) {
  const double W = 520, H = 340, L = 60, B = 44, R = 130, T = 30;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool any = false;
  for (const auto& s : series)
    for (const auto& [x, y] : s.points) {
      if (!any) x0 = x1 = x, y0 = y1 = y;
      any = true;
      x0 = std::min(x0, x), x1 = std::max(x1, x), y0 = std::min(y0, y), y1 = std::max(y1, y);
    }
  if (spec.x_range) std::tie(x0, x1) = *spec.x_range;
  if (spec.y_range) std::tie(y0, y1) = *spec.y_range;
  if (x1 <= x0) x1 = x0 + 1;
  if (y1 <= y0) y1 = y0 + 1;
  auto X = [&](double v) { return L + (W - L - R) * (v - x0) / (x1 - x0); };
  auto Y = [&](double v) { return H - B - (H - B - T) * (v - y0) / (y1 - y0); };

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << (W - R + L) / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">"
    << detail::escape(spec.title) << "</text>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  s << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double xv = x0 + (x1 - x0) * i / 4, yv = y0 + (y1 - y0) * i / 4;
    s << "<text x=\"" << X(xv) << "\" y=\"" << H - B + 14 << "\" text-anchor=\"middle\" font-size=\"10\">"
      << format_number(std::round(xv * 1000) / 1000) << "</text>\n";
    s << "<text x=\"" << L - 4 << "\" y=\"" << Y(yv) + 3 << "\" text-anchor=\"end\" font-size=\"10\">"
      << format_number(std::round(yv * 1000) / 1000) << "</text>\n";
  }
  s << "<text x=\"" << (W - R + L) / 2 << "\" y=\"" << H - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
    << detail::escape(spec.x_label) << "</text>\n";
  s << "<text x=\"14\" y=\"" << H / 2 << "\" font-size=\"12\" transform=\"rotate(-90 14 " << H / 2
    << ")\" text-anchor=\"middle\">" << detail::escape(spec.y_label) << "</text>\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    s << "<polyline fill=\"none\" stroke=\"" << detail::palette(i) << "\" stroke-width=\"1.5\" points=\"";
    for (const auto& [x, y] : series[i].points) s << X(x) << ',' << Y(y) << ' ';
    s << "\"/>\n";
    s << "<text x=\"" << W - R + 8 << "\" y=\"" << T + 14 * (i + 1) << "\" font-size=\"10\" fill=\""
      << detail::palette(i) << "\">" << detail::escape(series[i].name) << "</text>\n";
  }
  if (!spec.annotation.empty())
    s << "<text x=\"" << W - R - 6 << "\" y=\"" << H - B - 8 << "\" text-anchor=\"end\" font-size=\"12\">"
      << detail::escape(spec.annotation) << "</text>\n";
  s << "</svg>\n";
  return s.str();
}

inline std::string pr_svg(const attacks::PrCurve& c, const std::string& title) {
  Series s{"PR", {}};
  for (const auto& p : c.points) s.points.emplace_back(p.recall, p.precision);
  return line_chart_svg({s}, {title, "recall", "precision", std::pair{0.0, 1.0}, std::pair{0.0, 1.0},
                              "AUC = " + format_number(std::round(c.auc * 1000) / 1000)});
}

/// Heat map with counts printed in each cell; rows are true classes.
inline std::string confusion_svg(const std::vector<std::vector<std::size_t>>& m, const std::vector<std::string>& names,
                                 const std::string& title) {
  const std::size_t n = m.size();
  const double cell = n > 6 ? 36 : 60, L = 110, T = 40;
  const double W = L + cell * static_cast<double>(n) + 20, H = T + cell * static_cast<double>(n) + 30;
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\">\n";
  s << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  s << "<text x=\"" << W / 2 << "\" y=\"18\" text-anchor=\"middle\" font-size=\"13\">" << detail::escape(title)
    << "</text>\n";
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t row = 0;
    for (auto v : m[i]) row += v;
    s << "<text x=\"" << L - 4 << "\" y=\"" << T + cell * (i + 0.5) + 4 << "\" text-anchor=\"end\" font-size=\"10\">"
      << detail::escape(i < names.size() ? names[i] : std::to_string(i)) << "</text>\n";
    for (std::size_t j = 0; j < m[i].size(); ++j) {
      const double f = row ? static_cast<double>(m[i][j]) / static_cast<double>(row) : 0.0;
      const int shade = static_cast<int>(255 - 200 * f);
      s << "<rect x=\"" << L + cell * j << "\" y=\"" << T + cell * i << "\" width=\"" << cell << "\" height=\"" << cell
        << "\" fill=\"rgb(" << shade << ',' << shade << ",255)\" stroke=\"#999\"/>\n";
      s << "<text x=\"" << L + cell * (j + 0.5) << "\" y=\"" << T + cell * (i + 0.5) + 4
        << "\" text-anchor=\"middle\" font-size=\"10\">" << m[i][j] << "</text>\n";
    }
  }
  s << "</svg>\n";
  return s.str();
}

/// Delay before each server packet, one series per trace.
inline std::string delay_overlay_svg(const std::vector<Trace>& traces, const std::vector<std::string>& names,
                                     const std::string& title) {
  std::vector<Series> series;
  for (std::size_t i = 0; i < traces.size(); ++i) {
    Series s{i < names.size() ? names[i] : traces[i].stream_id, {}};
    const auto d = capture::ipd(traces[i]);
    for (std::size_t j = 0; j < d.size(); ++j) s.points.emplace_back(static_cast<double>(j + 1), to_seconds(d[j]) * 1e3);
    series.push_back(std::move(s));
  }
  return line_chart_svg(series, {title, "packet index", "delay (ms)", std::nullopt, std::nullopt, ""});
}

inline defense::TradeoffCurve read_tradeoff_csv(const std::filesystem::path& p) {
  const auto rows = detail::read_csv(p);
  if (rows.empty() || rows[0].size() != 5 || rows[0][0] != "interval_ms")
    throw Error("bad-metrics", ErrorKind::data, p.string() + ": not a tradeoff table");
  defense::TradeoffCurve c;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 5) throw Error("bad-metrics", ErrorKind::data, p.string() + ": short row");
    c.points.push_back({detail::to_double(rows[i][0], p), detail::to_double(rows[i][1], p),
                        detail::to_double(rows[i][2], p), detail::to_double(rows[i][3], p),
                        detail::to_double(rows[i][4], p)});
  }
  return c;
}

inline attacks::PrCurve read_pr_csv(const std::filesystem::path& p) {
  const auto rows = detail::read_csv(p);
  if (rows.empty() || rows[0].size() != 3 || rows[0][0] != "threshold")
    throw Error("bad-metrics", ErrorKind::data, p.string() + ": not a PR table");
  attacks::PrCurve c;
  double prev = 0;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != 3) throw Error("bad-metrics", ErrorKind::data, p.string() + ": short row");
    attacks::PrPoint pt{detail::to_double(rows[i][0], p), detail::to_double(rows[i][1], p),
                        detail::to_double(rows[i][2], p)};
    c.auc += (pt.recall - prev) * pt.precision;
    prev = pt.recall;
    c.points.push_back(pt);
  }
  return c;
}

struct ConfusionTable {
  std::vector<std::string> names;
  std::vector<std::vector<std::size_t>> counts;
};

inline ConfusionTable read_confusion_csv(const std::filesystem::path& p) {
  const auto rows = detail::read_csv(p);
  if (rows.empty() || rows[0].empty()) throw Error("bad-metrics", ErrorKind::data, p.string() + ": empty");
  ConfusionTable t;
  t.names.assign(rows[0].begin() + 1, rows[0].end());
  for (std::size_t i = 1; i < rows.size(); ++i) {
    if (rows[i].size() != t.names.size() + 1) throw Error("bad-metrics", ErrorKind::data, p.string() + ": ragged row");
    std::vector<std::size_t> r;
    for (std::size_t j = 1; j < rows[i].size(); ++j) r.push_back(static_cast<std::size_t>(detail::to_double(rows[i][j], p)));
    t.counts.push_back(std::move(r));
  }
  return t;
}

struct MetricSummary {
  std::string scenario, metric;
  double mean = 0, min = 0, max = 0;
  std::size_t seeds = 0;
};

inline std::vector<MetricSummary> summarize(const std::vector<MetricRow>& rows) {
  std::map<std::pair<std::string, std::string>, std::vector<double>> groups;
  std::vector<std::pair<std::string, std::string>> order;
  for (const auto& r : rows) {
    auto key = std::pair{r.scenario, r.metric};
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(r.value);
  }
  std::vector<MetricSummary> out;
  for (const auto& key : order) {
    const auto& v = groups[key];
    double sum = 0;
    for (double x : v) sum += x;
    out.push_back({key.first, key.second, sum / static_cast<double>(v.size()), *std::min_element(v.begin(), v.end()),
                   *std::max_element(v.begin(), v.end()), v.size()});
  }
  return out;
}

struct ReportResult {
  std::vector<std::filesystem::path> files;
  std::vector<MetricSummary> summary;
};

/// Renders everything under `dir/metrics` (and overlays from `dir/traces`)
/// into `dir/report`: PR curves, confusion matrices, tradeoff curves,
/// per-packet delay overlays and a markdown summary of metric means.
inline ReportResult report(const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  const fs::path metrics = dir / "metrics";
  std::vector<fs::path> files;
  if (fs::is_directory(metrics))
    for (const auto& e : fs::directory_iterator(metrics))
      if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  if (files.empty()) throw Error("no-metrics", ErrorKind::data, "no metric tables under " + metrics.string());
  std::sort(files.begin(), files.end());

  const fs::path out = dir / "report";
  fs::create_directories(out);
  ReportResult res;
  auto emit = [&](const std::string& name, const std::string& body) {
    auto f = detail::open_out(out / name);
    f << body;
    res.files.push_back(out / name);
  };

  std::vector<MetricRow> rows;
  for (const auto& p : files) {
    const auto stem = p.stem().string();
    if (stem.rfind("pr-", 0) == 0) {
      emit(stem + ".svg", pr_svg(read_pr_csv(p), stem.substr(3)));
    } else if (stem.rfind("confusion-", 0) == 0) {
      const auto t = read_confusion_csv(p);
      emit(stem + ".svg", confusion_svg(t.counts, t.names, stem.substr(10)));
    } else if (stem.rfind("tradeoff-", 0) == 0) {
      emit(stem + ".svg", defense::tradeoff_svg(read_tradeoff_csv(p)));
    } else {
      std::ifstream in(p);
      const auto r = read_metrics_csv(in);
      rows.insert(rows.end(), r.begin(), r.end());
    }
  }

  const fs::path traces = dir / "traces";
  if (fs::is_directory(traces)) {
    std::vector<fs::path> tf;
    for (const auto& e : fs::directory_iterator(traces))
      if (e.path().extension() == ".jsonl" && e.path().stem().string().find("-conversations") == std::string::npos)
        tf.push_back(e.path());
    std::sort(tf.begin(), tf.end());
    for (const auto& p : tf) {
      std::ifstream in(p);
      const auto all = read_jsonl(in);
      // first three training traces of the first two classes
      std::vector<Trace> pick;
      for (const std::string cls : {"train/c0/", "train/c1/"}) {
        std::size_t n = 0;
        for (const auto& t : all)
          if (t.stream_id.rfind(cls, 0) == 0 && n < 3) {
            pick.push_back(t);
            ++n;
          }
      }
      if (!pick.empty()) emit("overlay-" + p.stem().string() + ".svg", delay_overlay_svg(pick, {}, p.stem().string()));
    }
  }

  res.summary = summarize(rows);
  std::ostringstream md;
  md << "| scenario | metric | mean | min | max | seeds |\n|---|---|---|---|---|---|\n";
  for (const auto& m : res.summary)
    md << "| " << m.scenario << " | " << m.metric << " | " << format_number(m.mean) << " | " << format_number(m.min)
       << " | " << format_number(m.max) << " | " << m.seeds << " |\n";
  emit("summary.md", md.str());
  return res;
}

}  // namespace specleak::harness
