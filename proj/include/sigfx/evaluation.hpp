#ifndef SIGFX_EVALUATION_HPP
#define SIGFX_EVALUATION_HPP

#include "sigfx/common.hpp"

#include <fmt/format.h>

#include <cstdint>
#include <span>
#include <string>

namespace sigfx {

struct ConfusionCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  std::int64_t total() const noexcept { return tp + fp + fn + tn; }
  bool operator==(const ConfusionCounts&) const = default;
};

/// Identifies one grid cell: currency pair, method, lookback p and threshold k.
struct CellIdentity {
  std::string pair;
  std::string method;
  int lookback = 0;
  double k = 0.0;

  std::string key() const { return fmt::format("{}|{}|{}|{:.6f}", pair, lookback, method, k); }
  bool operator==(const CellIdentity&) const = default;
};

struct MetricsRecord {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  ConfusionCounts counts;
  CellIdentity cell;
  /// "ok" or "error:<message>".
  std::string status = "ok";

  bool failed() const noexcept { return status != "ok"; }
};

inline ConfusionCounts confusion_counts(std::span<const int> y_true, std::span<const int> y_pred)
{
  if (y_true.size() != y_pred.size())
    throw Error(fmt::format("confusion_counts: length mismatch ({} vs {})", y_true.size(), y_pred.size()));
  ConfusionCounts c;
  for (std::size_t i = 0; i < y_true.size(); ++i) {
    const int t = y_true[i];
    const int p = y_pred[i];
    if ((t != 0 && t != 1) || (p != 0 && p != 1))
      throw Error(fmt::format("confusion_counts: non-binary entry at index {}", i));
    if (t == 1)
      (p == 1 ? c.tp : c.fn) += 1;
    else
      (p == 1 ? c.fp : c.tn) += 1;
  }
  return c;
}

/// Degenerate denominators yield 0 rather than NaN.
inline MetricsRecord metrics_from_counts(const ConfusionCounts& c, CellIdentity cell = {})
{
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0)
    throw Error("metrics_from_counts: negative count");
  MetricsRecord m;
  m.counts = c;
  m.cell = std::move(cell);
  m.precision = (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp) : 0.0;
  m.recall = (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn) : 0.0;
  // same value as 2PR/(P+R), rounded once
  const std::int64_t denom = 2 * c.tp + c.fp + c.fn;
  m.f1 = c.tp > 0 ? static_cast<double>(2 * c.tp) / static_cast<double>(denom) : 0.0;
  return m;
}

inline MetricsRecord evaluate_signal(std::span<const int> y_true, std::span<const int> y_pred, CellIdentity cell = {})
{
  return metrics_from_counts(confusion_counts(y_true, y_pred), std::move(cell));
}

inline MetricsRecord failed_record(CellIdentity cell, std::string_view message)
{
  MetricsRecord m;
  m.cell = std::move(cell);
  m.status = fmt::format("error:{}", message);
  return m;
}

} // namespace sigfx

#endif // SIGFX_EVALUATION_HPP
