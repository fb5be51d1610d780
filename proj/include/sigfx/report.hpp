#ifndef SIGFX_REPORT_HPP
#define SIGFX_REPORT_HPP

#include "sigfx/common.hpp"
#include "sigfx/evaluation.hpp"
#include "sigfx/runner.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace sigfx {

inline constexpr const char* kResultsHeader = "pair,method,lookback,threshold_k,tp,fp,fn,tn,precision,recall,f1,status";

namespace detail {

inline std::string sanitize_status(std::string_view s)
{
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ',')
      out += ';';
    else if (c == '\n' || c == '\r' || c == '"')
      out += ' ';
    else
      out += c;
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(fmt::format("cannot write '{}'", path.string()));
  out << content;
  out.close();
  if (!out)
    throw Error(fmt::format("write to '{}' failed", path.string()));
}

inline std::vector<std::string> split_csv_line(std::string_view line)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    out.emplace_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos)
      break;
    start = comma + 1;
  }
  return out;
}

template <class T>
T parse_field(const std::string& s, const char* what, std::size_t line)
{
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw Error(fmt::format("results.csv line {}: bad {} '{}'", line, what, s));
  return v;
}

} // namespace detail

/// One results.csv row (without newline).
inline std::string format_record(const MetricsRecord& r)
{
  const auto& c = r.cell;
  if (r.failed()) {
    auto status = detail::sanitize_status(r.status);
    return fmt::format("{},{},{},{:.6f},,,,,,,,{}", c.pair, c.method, c.lookback, c.k, status);
  }
  return fmt::format("{},{},{},{:.6f},{},{},{},{},{:.6f},{:.6f},{:.6f},{}", c.pair, c.method, c.lookback, c.k,
                     r.counts.tp, r.counts.fp, r.counts.fn, r.counts.tn, r.precision, r.recall, r.f1, r.status);
}

inline std::string results_csv(const ResultsTable& table)
{
  std::string out = kResultsHeader;
  out += '\n';
  for (const auto& r : table.records) {
    out += format_record(r);
    out += '\n';
  }
  return out;
}

/// Writes results.csv and run_meta.json into `dir`, creating it if needed.
inline void write_results(const ResultsTable& table, const std::filesystem::path& dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw Error(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  detail::write_file(dir / "results.csv", results_csv(table));
  detail::write_file(dir / "run_meta.json", table.meta.dump(2) + "\n");
}

inline ResultsTable parse_results_csv(std::istream& in)
{
  ResultsTable table;
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line))
    throw Error("results.csv is empty");
  ++lineno;
  if (!line.empty() && line.back() == '\r')
    line.pop_back();
  if (line != kResultsHeader)
    throw Error("results.csv: unexpected header");
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    if (line.empty())
      continue;
    const auto f = detail::split_csv_line(line);
    if (f.size() != 12)
      throw Error(fmt::format("results.csv line {}: expected 12 fields, got {}", lineno, f.size()));
    MetricsRecord r;
    r.cell.pair = f[0];
    r.cell.method = f[1];
    r.cell.lookback = detail::parse_field<int>(f[2], "lookback", lineno);
    r.cell.k = detail::parse_field<double>(f[3], "threshold_k", lineno);
    r.status = f[11];
    if (!r.failed()) {
      r.counts.tp = detail::parse_field<std::int64_t>(f[4], "tp", lineno);
      r.counts.fp = detail::parse_field<std::int64_t>(f[5], "fp", lineno);
      r.counts.fn = detail::parse_field<std::int64_t>(f[6], "fn", lineno);
      r.counts.tn = detail::parse_field<std::int64_t>(f[7], "tn", lineno);
      r.precision = detail::parse_field<double>(f[8], "precision", lineno);
      r.recall = detail::parse_field<double>(f[9], "recall", lineno);
      r.f1 = detail::parse_field<double>(f[10], "f1", lineno);
    }
    table.records.push_back(std::move(r));
  }
  return table;
}

inline ResultsTable read_results(const std::filesystem::path& dir)
{
  std::ifstream in(dir / "results.csv", std::ios::binary);
  if (!in)
    throw Error(fmt::format("cannot open '{}'", (dir / "results.csv").string()));
  auto table = parse_results_csv(in);
  std::ifstream meta(dir / "run_meta.json");
  if (meta) {
    try {
      table.meta = nlohmann::json::parse(meta);
    } catch (const nlohmann::json::exception& e) {
      log_warning(fmt::format("ignoring unreadable run_meta.json: {}", e.what()));
    }
  }
  return table;
}

/// Metric table for one (pair, lookback): rows are k ascending, columns the
/// methods present in the run in first-seen order.
struct ReportPanel {
  std::string pair;
  int lookback = 0;
  std::vector<double> thresholds;
  std::vector<std::string> methods;
  /// values[metric][row][col]; NaN marks a failed cell.
  std::map<std::string, std::vector<std::vector<double>>> values;
};

inline std::vector<ReportPanel> build_report(const ResultsTable& table)
{
  std::vector<ReportPanel> panels;
  std::map<std::pair<std::string, int>, std::size_t> index;
  std::vector<std::string> methods;
  for (const auto& r : table.records)
    if (std::find(methods.begin(), methods.end(), r.cell.method) == methods.end())
      methods.push_back(r.cell.method);

  for (const auto& r : table.records) {
    const auto key = std::make_pair(r.cell.pair, r.cell.lookback);
    if (!index.count(key)) {
      index[key] = panels.size();
      ReportPanel p;
      p.pair = r.cell.pair;
      p.lookback = r.cell.lookback;
      panels.push_back(std::move(p));
    }
    auto& p = panels[index[key]];
    if (std::find(p.thresholds.begin(), p.thresholds.end(), r.cell.k) == p.thresholds.end())
      p.thresholds.push_back(r.cell.k);
    if (std::find(p.methods.begin(), p.methods.end(), r.cell.method) == p.methods.end())
      p.methods.push_back(r.cell.method);
  }
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (auto& p : panels) {
    std::sort(p.thresholds.begin(), p.thresholds.end());
    std::vector<std::string> ordered;
    for (const auto& m : methods)
      if (std::find(p.methods.begin(), p.methods.end(), m) != p.methods.end())
        ordered.push_back(m);
    p.methods = std::move(ordered);
    for (const char* metric : {"f1", "recall"})
      p.values[metric].assign(p.thresholds.size(), std::vector<double>(p.methods.size(), nan));
  }
  for (const auto& r : table.records) {
    if (r.failed())
      continue;
    auto& p = panels[index[{r.cell.pair, r.cell.lookback}]];
    const auto row = static_cast<std::size_t>(
        std::find(p.thresholds.begin(), p.thresholds.end(), r.cell.k) - p.thresholds.begin());
    const auto col =
        static_cast<std::size_t>(std::find(p.methods.begin(), p.methods.end(), r.cell.method) - p.methods.begin());
    p.values["f1"][row][col] = r.f1;
    p.values["recall"][row][col] = r.recall;
  }
  return panels;
}

inline std::string panel_csv(const ReportPanel& p, const std::string& metric)
{
  std::string out = "k";
  for (const auto& m : p.methods)
    out += "," + m;
  out += '\n';
  const auto& v = p.values.at(metric);
  for (std::size_t i = 0; i < p.thresholds.size(); ++i) {
    out += fmt::format("{:.6f}", p.thresholds[i]);
    for (double x : v[i])
      out += std::isnan(x) ? std::string(",") : fmt::format(",{:.6f}", x);
    out += '\n';
  }
  return out;
}

inline std::string panel_svg(const ReportPanel& p, const std::string& metric)
{
  static constexpr std::array<const char*, 10> colours{"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                                       "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};
  const double W = 720, H = 440, left = 60, right = 150, top = 40, bottom = 50;
  const double pw = W - left - right, ph = H - top - bottom;
  const double kmin = p.thresholds.front(), kmax = p.thresholds.back();
  auto sx = [&](double k) { return left + (kmax > kmin ? (k - kmin) / (kmax - kmin) : 0.5) * pw; };
  auto sy = [&](double v) { return top + (1.0 - v) * ph; };

  std::string s = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{0}\" height=\"{1}\" viewBox=\"0 0 {0} {1}\">\n"
      "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
      "<text x=\"{2}\" y=\"24\" font-family=\"sans-serif\" font-size=\"15\" text-anchor=\"middle\">{3} {4}, p = {5}</text>\n",
      W, H, left + pw / 2, p.pair, metric == "f1" ? "F1" : "recall", p.lookback);
  for (int t = 0; t <= 5; ++t) {
    const double v = t / 5.0;
    s += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"#ddd\"/>"
                     "<text x=\"{3}\" y=\"{4:.1f}\" font-family=\"sans-serif\" font-size=\"11\" text-anchor=\"end\">{5:.1f}</text>\n",
                     left, left + pw, sy(v), left - 6, sy(v) + 4, v);
  }
  for (double k : p.thresholds)
    s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
                     "text-anchor=\"middle\">{:g}</text>\n",
                     sx(k), top + ph + 18, k);
  s += fmt::format("<text x=\"{:.1f}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"12\" "
                   "text-anchor=\"middle\">threshold k</text>\n",
                   left + pw / 2, H - 10);
  s += fmt::format("<rect x=\"{}\" y=\"{}\" width=\"{}\" height=\"{}\" fill=\"none\" stroke=\"black\"/>\n", left, top,
                   pw, ph);
  const auto& v = p.values.at(metric);
  for (std::size_t c = 0; c < p.methods.size(); ++c) {
    const char* colour = colours[c % colours.size()];
    std::string pts;
    for (std::size_t r = 0; r < p.thresholds.size(); ++r) {
      if (std::isnan(v[r][c]))
        continue;
      pts += fmt::format("{:.1f},{:.1f} ", sx(p.thresholds[r]), sy(v[r][c]));
    }
    if (!pts.empty())
      s += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n", colour, pts);
    const double ly = top + 14 + 18 * static_cast<double>(c);
    s += fmt::format("<line x1=\"{0}\" x2=\"{1}\" y1=\"{2:.1f}\" y2=\"{2:.1f}\" stroke=\"{3}\" stroke-width=\"3\"/>"
                     "<text x=\"{4}\" y=\"{5:.1f}\" font-family=\"sans-serif\" font-size=\"12\">{6}</text>\n",
                     left + pw + 12, left + pw + 36, ly, colour, left + pw + 42, ly + 4, p.methods[c]);
  }
  s += "</svg>\n";
  return s;
}

/// Writes f1_<pair>_<p>.csv and recall_<pair>_<p>.csv (and SVG charts when
/// requested) for every (pair, lookback) in the table.
inline std::vector<std::filesystem::path> emit_report(const ResultsTable& table, const std::filesystem::path& dir,
                                                      bool svg = false)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec)
    throw Error(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
  std::vector<std::filesystem::path> written;
  for (const auto& panel : build_report(table)) {
    for (const std::string metric : {"f1", "recall"}) {
      const auto stem = fmt::format("{}_{}_{}", metric, panel.pair, panel.lookback);
      written.push_back(dir / (stem + ".csv"));
      detail::write_file(written.back(), panel_csv(panel, metric));
      if (svg) {
        written.push_back(dir / (stem + ".svg"));
        detail::write_file(written.back(), panel_svg(panel, metric));
      }
    }
  }
  return written;
}

inline std::string cell_file_stem(const CellDescriptor& c)
{
  return fmt::format("{}_{}_{:.2f}_{}", c.pair, c.lookback, c.k, to_string(c.method));
}

/// Writes the optional per-cell model JSON and score CSV.
inline void write_cell_artifacts(const CellDescriptor& cell, const CellArtifacts& art,
                                 const std::filesystem::path& dir, bool models, bool scores)
{
  const auto stem = cell_file_stem(cell);
  if (models && !art.model.is_null()) {
    std::filesystem::create_directories(dir / "models");
    detail::write_file(dir / "models" / (stem + ".json"), art.model.dump(1) + "\n");
  }
  if (scores) {
    std::filesystem::create_directories(dir / "scores");
    std::string out = "date,score,cutoff,signal\n";
    for (std::size_t i = 0; i < art.signal.size(); ++i) {
      const std::string score = i < art.scores.size() ? fmt::format("{:.9g}", art.scores[i]) : "";
      out += fmt::format("{},{},{:.9g},{}\n", i < art.dates.size() ? format_date(art.dates[i]) : "", score,
                         art.cutoff, art.signal[i]);
    }
    detail::write_file(dir / "scores" / (stem + ".csv"), out);
  }
}

} // namespace sigfx

#endif // SIGFX_REPORT_HPP
