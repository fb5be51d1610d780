#ifndef SIGFX_SYNTHETIC_HPP
#define SIGFX_SYNTHETIC_HPP

// Synthetic daily exchange-rate series for demos and tests.

#include "sigfx/common.hpp"
#include "sigfx/market_data.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace sigfx {

/// GARCH(1,1) log returns with standardised Student-t innovations.
struct GarchParams {
  double omega = 1e-7;
  double alpha = 0.05;
  double beta = 0.93;
  double nu = 6.0;
  double start_price = 1.17;
};

/// Weekdays starting at `first` (moved forward to a weekday if needed).
inline std::vector<Date> business_days(Date first, std::size_t count)
{
  std::vector<Date> out;
  out.reserve(count);
  std::chrono::sys_days d{first};
  while (out.size() < count) {
    const std::chrono::weekday wd{d};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday)
      out.emplace_back(d);
    d += std::chrono::days{1};
  }
  return out;
}

inline PriceSeries synthetic_garch_series(const std::string& pair, std::size_t prices, std::uint64_t seed,
                                          const GarchParams& gp = {},
                                          Date first = Date{std::chrono::year{1999}, std::chrono::January, std::chrono::day{4}})
{
  if (prices < 2)
    throw Error("synthetic_garch_series: need at least two prices");
  if (!(gp.alpha >= 0 && gp.beta >= 0 && gp.alpha + gp.beta < 1 && gp.omega > 0 && gp.nu > 2))
    throw Error("synthetic_garch_series: parameters must be stationary with nu > 2");
  std::mt19937_64 rng(derive_seed(seed, pair));
  std::student_t_distribution<double> t(gp.nu);
  const double unit = std::sqrt((gp.nu - 2.0) / gp.nu);
  double var = gp.omega / (1.0 - gp.alpha - gp.beta);
  double prev = 0.0;
  std::vector<double> closes(prices);
  closes[0] = gp.start_price;
  for (std::size_t i = 1; i < prices; ++i) {
    var = gp.omega + gp.alpha * prev * prev + gp.beta * var;
    prev = std::sqrt(var) * unit * t(rng);
    closes[i] = closes[i - 1] * std::exp(prev);
  }
  return PriceSeries(pair, business_days(first, prices), std::move(closes));
}

/// Writes `date,close` rows with 8 significant decimals.
inline void write_price_csv(const PriceSeries& s, const std::filesystem::path& path)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out)
    throw Error(fmt::format("cannot write '{}'", path.string()));
  out << "date,close\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << format_date(s.dates()[i]) << ',' << fmt::format("{:.10g}", s.closes()[i]) << '\n';
  if (!out)
    throw Error(fmt::format("write to '{}' failed", path.string()));
}

} // namespace sigfx

#endif // SIGFX_SYNTHETIC_HPP
