#ifndef SIGFX_RSI_HPP
#define SIGFX_RSI_HPP

#include "sigfx/common.hpp"
#include "sigfx/dataset.hpp"
#include "sigfx/market_data.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <vector>

namespace sigfx {

enum class RsiSignalMode {
  /// RSI at t-1 is at or beyond a band edge.
  Level,
  /// RSI moved from inside the band at t-2 to at or beyond an edge at t-1.
  Crossing,
};

struct RsiState {
  int lookback = 14;
  double upper = 70.0;
  double lower = 30.0;

  void validate() const
  {
    if (lookback < 2)
      throw Error(fmt::format("RsiState: lookback must be >= 2 (got {})", lookback));
    if (!(lower > 0.0 && lower < upper && upper < 100.0))
      throw Error(fmt::format("RsiState: need 0 < lower < upper < 100 (got {}, {})", lower, upper));
  }
};

/// RSI = 100 - 100 / (1 + gains / losses) over the `lookback` price changes
/// ending at index t, with plain (unsmoothed) sums. No losses gives 100, no
/// gains gives 0 and a flat window gives 50.
inline double compute_rsi(std::span<const double> closes, const RsiState& state, std::size_t t)
{
  state.validate();
  const auto lb = static_cast<std::size_t>(state.lookback);
  if (t < lb || t >= closes.size())
    throw Error(fmt::format("compute_rsi: index {} needs {} prior prices within a series of {}", t, lb,
                            closes.size()));
  double gains = 0.0, losses = 0.0;
  for (std::size_t i = t + 1 - lb; i <= t; ++i) {
    const double change = closes[i] - closes[i - 1];
    if (change > 0)
      gains += change;
    else
      losses -= change;
  }
  if (losses == 0.0)
    return gains == 0.0 ? 50.0 : 100.0;
  if (gains == 0.0)
    return 0.0;
  return 100.0 - 100.0 / (1.0 + gains / losses);
}

inline double compute_rsi(const PriceSeries& prices, const RsiState& state, std::size_t t)
{
  return compute_rsi(std::span<const double>(prices.closes()), state, t);
}

/// Benchmark signal aligned to the targets of build_windows(compute_returns(prices), p):
/// row i targets price index t = i + p + 1 and uses the RSI through t - 1.
/// Targets without enough history get 0.
inline Labels rsi_signal(const PriceSeries& prices, const RsiState& state, const WindowSpec& spec,
                         RsiSignalMode mode = RsiSignalMode::Level)
{
  state.validate();
  const std::size_t n_returns = prices.size() - 1;
  const auto p = static_cast<std::size_t>(spec.p);
  if (n_returns <= p)
    throw Error(fmt::format("rsi_signal: series of {} prices too short for lookback {}", prices.size(), p));
  const std::size_t rows = n_returns - p;
  const auto lb = static_cast<std::size_t>(state.lookback);
  const auto& closes = prices.closes();

  auto outside = [&](double rsi) { return rsi >= state.upper || rsi <= state.lower; };
  Labels out(rows, 0);
  std::size_t warmup = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    const std::size_t last = i + p; // price index t - 1
    if (last < lb || (mode == RsiSignalMode::Crossing && last < lb + 1)) {
      ++warmup;
      continue;
    }
    const double now = compute_rsi(closes, state, last);
    if (mode == RsiSignalMode::Level) {
      out[i] = outside(now) ? 1 : 0;
    } else {
      const double before = compute_rsi(closes, state, last - 1);
      out[i] = outside(now) && !outside(before) ? 1 : 0;
    }
  }
  if (warmup > 0)
    log_warning(fmt::format("RSI({}): {} leading targets lack history and are signalled 0", state.lookback, warmup));
  return out;
}

} // namespace sigfx

#endif // SIGFX_RSI_HPP
