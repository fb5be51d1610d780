#ifndef SIGFX_MARKET_DATA_HPP
#define SIGFX_MARKET_DATA_HPP

#include "sigfx/common.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace sigfx {

using Date = std::chrono::year_month_day;

namespace detail {

inline std::string_view trim(std::string_view s)
{
  const auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && ws(s.front()))
    s.remove_prefix(1);
  while (!s.empty() && ws(s.back()))
    s.remove_suffix(1);
  return s;
}

template <typename T>
bool parse_number(std::string_view s, T& out)
{
  s = trim(s);
  if (s.empty())
    return false;
  if (s.front() == '+')
    s.remove_prefix(1);
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return ec == std::errc{} && ptr == s.data() + s.size();
}

} // namespace detail

/// Parses a strict ISO-8601 calendar date (YYYY-MM-DD). Returns false on any
/// malformed or out-of-range input.
inline bool try_parse_iso_date(std::string_view s, Date& out)
{
  s = detail::trim(s);
  if (s.size() != 10 || s[4] != '-' || s[7] != '-')
    return false;
  int y = 0;
  unsigned m = 0, d = 0;
  if (!detail::parse_number(s.substr(0, 4), y) || !detail::parse_number(s.substr(5, 2), m) ||
      !detail::parse_number(s.substr(8, 2), d))
    return false;
  Date date{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!date.ok())
    return false;
  out = date;
  return true;
}

inline Date parse_iso_date(std::string_view s)
{
  Date d;
  if (!try_parse_iso_date(s, d))
    throw Error(fmt::format("invalid ISO-8601 date '{}'", s));
  return d;
}

inline std::string format_date(const Date& d)
{
  return fmt::format("{:04d}-{:02d}-{:02d}", static_cast<int>(d.year()), static_cast<unsigned>(d.month()),
                     static_cast<unsigned>(d.day()));
}

/// Daily closes of one currency pair. Dates strictly increase, closes are
/// positive and there are at least two observations.
class PriceSeries {
public:
  PriceSeries(std::string pair, std::vector<Date> dates, std::vector<double> closes)
      : pair_(std::move(pair)), dates_(std::move(dates)), closes_(std::move(closes))
  {
    if (dates_.size() != closes_.size())
      throw Error("PriceSeries: dates and closes differ in length");
    if (closes_.size() < 2)
      throw Error(fmt::format("PriceSeries '{}': length >= 2 violated (got {})", pair_, closes_.size()));
    for (std::size_t i = 0; i < closes_.size(); ++i) {
      if (!(closes_[i] > 0.0) || !std::isfinite(closes_[i]))
        throw Error(fmt::format("PriceSeries '{}': non-positive close at index {}", pair_, i));
      if (i > 0 && !(dates_[i - 1] < dates_[i]))
        throw Error(fmt::format("PriceSeries '{}': dates not strictly increasing at {}", pair_,
                                format_date(dates_[i])));
    }
  }

  const std::string& pair() const noexcept { return pair_; }
  const std::vector<Date>& dates() const noexcept { return dates_; }
  const std::vector<double>& closes() const noexcept { return closes_; }
  std::size_t size() const noexcept { return closes_.size(); }

  bool operator==(const PriceSeries&) const = default;

private:
  std::string pair_;
  std::vector<Date> dates_;
  std::vector<double> closes_;
};

/// Log returns r_t = ln(E_t / E_{t-1}); dates[i] is the date of day t.
class ReturnSeries {
public:
  ReturnSeries(std::string pair, std::vector<Date> dates, std::vector<double> returns)
      : pair_(std::move(pair)), dates_(std::move(dates)), returns_(std::move(returns))
  {
    if (dates_.size() != returns_.size())
      throw Error("ReturnSeries: dates and returns differ in length");
    for (std::size_t i = 0; i < returns_.size(); ++i)
      if (!std::isfinite(returns_[i]))
        throw Error(fmt::format("ReturnSeries '{}': non-finite return at index {}", pair_, i));
  }

  const std::string& pair() const noexcept { return pair_; }
  const std::vector<Date>& dates() const noexcept { return dates_; }
  const std::vector<double>& values() const noexcept { return returns_; }
  std::size_t size() const noexcept { return returns_.size(); }
  double operator[](std::size_t i) const { return returns_[i]; }

private:
  std::string pair_;
  std::vector<Date> dates_;
  std::vector<double> returns_;
};

/// Reads `date,close` rows. A header row is accepted, blank lines are skipped,
/// rows are sorted ascending by date. `source` only labels error messages.
inline PriceSeries parse_price_csv(std::istream& in, const std::string& pair, const std::string& source = "<stream>")
{
  struct Row {
    Date date;
    double close;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::string line;
  std::size_t line_no = 0;
  bool seen_content = false;
  while (std::getline(in, line)) {
    ++line_no;
    std::string_view view = detail::trim(line);
    if (line_no == 1 && view.starts_with("\xEF\xBB\xBF"))
      view.remove_prefix(3);
    if (view.empty())
      continue;
    const auto comma = view.find(',');
    if (comma == std::string_view::npos)
      throw Error(fmt::format("{}: unparseable row at line {}: expected 'date,close'", source, line_no));
    const auto date_field = detail::trim(view.substr(0, comma));
    const auto close_field = detail::trim(view.substr(comma + 1));
    Date date;
    if (!try_parse_iso_date(date_field, date)) {
      const bool looks_like_header =
          !date_field.empty() && std::isalpha(static_cast<unsigned char>(date_field.front()));
      if (!seen_content && looks_like_header) {
        seen_content = true;
        continue;
      }
      throw Error(fmt::format("{}: unparseable date '{}' at line {}", source, date_field, line_no));
    }
    seen_content = true;
    double close = 0.0;
    if (!detail::parse_number(close_field, close) || !std::isfinite(close))
      throw Error(fmt::format("{}: unparseable close '{}' at line {}", source, close_field, line_no));
    if (close <= 0.0)
      throw Error(fmt::format("{}: non-positive close at line {}", source, line_no));
    rows.push_back({date, close, line_no});
  }
  std::stable_sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.date < b.date; });
  for (std::size_t i = 1; i < rows.size(); ++i)
    if (rows[i].date == rows[i - 1].date)
      throw Error(fmt::format("{}: duplicate date {} at line {}", source, format_date(rows[i].date),
                              std::max(rows[i].line, rows[i - 1].line)));
  if (rows.size() < 2)
    throw Error(fmt::format("{}: length >= 2 violated ({} data rows)", source, rows.size()));

  std::vector<Date> dates;
  std::vector<double> closes;
  dates.reserve(rows.size());
  closes.reserve(rows.size());
  for (const auto& r : rows) {
    dates.push_back(r.date);
    closes.push_back(r.close);
  }
  return PriceSeries(pair, std::move(dates), std::move(closes));
}

inline PriceSeries load_price_csv(const std::filesystem::path& path, const std::string& pair)
{
  std::ifstream in(path);
  if (!in)
    throw Error(fmt::format("cannot open price file '{}'", path.string()));
  return parse_price_csv(in, pair, path.string());
}

inline ReturnSeries compute_returns(const PriceSeries& prices)
{
  const auto& c = prices.closes();
  std::vector<double> r(c.size() - 1);
  for (std::size_t i = 0; i + 1 < c.size(); ++i)
    r[i] = std::log(c[i + 1] / c[i]);
  std::vector<Date> dates(prices.dates().begin() + 1, prices.dates().end());
  return ReturnSeries(prices.pair(), std::move(dates), std::move(r));
}

/// Population standard deviation (divides by n).
inline double return_sigma(std::span<const double> r)
{
  if (r.size() < 2)
    throw Error("return_sigma: at least two returns required");
  const double n = static_cast<double>(r.size());
  const double mean = std::accumulate(r.begin(), r.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : r)
    ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n);
}

inline double return_sigma(const ReturnSeries& r) { return return_sigma(std::span<const double>(r.values())); }

} // namespace sigfx

#endif // SIGFX_MARKET_DATA_HPP
