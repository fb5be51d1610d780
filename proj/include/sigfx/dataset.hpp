#ifndef SIGFX_DATASET_HPP
#define SIGFX_DATASET_HPP

#include "sigfx/common.hpp"
#include "sigfx/market_data.hpp"

#include <fmt/format.h>

#include <cmath>
#include <vector>

namespace sigfx {

/// Lookback length p: the number of prior returns used as features.
struct WindowSpec {
  int p = 7;

  explicit WindowSpec(int lookback) : p(lookback)
  {
    if (p < 1)
      throw Error(fmt::format("WindowSpec: lookback must be >= 1 (got {})", p));
  }
};

/// Significance threshold k * sigma.
struct ThresholdSpec {
  double k;
  double sigma;

  ThresholdSpec(double multiplier, double sigma_) : k(multiplier), sigma(sigma_)
  {
    if (!(k > 0.0) || !std::isfinite(k))
      throw Error(fmt::format("ThresholdSpec: multiplier must be > 0 (got {})", k));
    if (!(sigma > 0.0) || !std::isfinite(sigma))
      throw Error(fmt::format("ThresholdSpec: sigma must be > 0 (got {})", sigma));
  }

  double level() const noexcept { return k * sigma; }
};

/// Feature windows without labels. Row i targets return index target[i] = i + p
/// and holds (r_{t-1}, ..., r_{t-p}), most recent first.
struct Windows {
  Matrix X;
  Vector y_cont;
  std::vector<Date> dates;
};

struct LabeledDataset {
  Matrix X;
  Vector y_cont;
  Labels y_bin;
  std::vector<Date> dates;

  std::size_t rows() const noexcept { return static_cast<std::size_t>(X.rows()); }
  int lookback() const noexcept { return static_cast<int>(X.cols()); }
};

struct SplitDataset {
  LabeledDataset train;
  LabeledDataset test;
  double split_ratio = 0.7;
};

inline Windows build_windows(const ReturnSeries& returns, const WindowSpec& spec)
{
  const auto len = returns.size();
  const auto p = static_cast<std::size_t>(spec.p);
  if (len <= p)
    throw Error(fmt::format("build_windows: series length {} must exceed lookback {}", len, p));
  const auto n = len - p;
  Windows w;
  w.X.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(p));
  w.y_cont.resize(static_cast<Eigen::Index>(n));
  w.dates.reserve(n);
  const auto& r = returns.values();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t t = i + p;
    for (std::size_t j = 0; j < p; ++j)
      w.X(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[t - 1 - j];
    w.y_cont(static_cast<Eigen::Index>(i)) = r[t];
    w.dates.push_back(returns.dates()[t]);
  }
  return w;
}

/// 1 iff |r| > k * sigma (strict).
inline Labels label_significant(const Vector& y_cont, const ThresholdSpec& thr)
{
  const double level = thr.level();
  Labels out(static_cast<std::size_t>(y_cont.size()));
  for (Eigen::Index i = 0; i < y_cont.size(); ++i)
    out[static_cast<std::size_t>(i)] = std::abs(y_cont(i)) > level ? 1 : 0;
  return out;
}

inline LabeledDataset make_labeled_dataset(Windows windows, const ThresholdSpec& thr)
{
  LabeledDataset ds;
  ds.y_bin = label_significant(windows.y_cont, thr);
  ds.X = std::move(windows.X);
  ds.y_cont = std::move(windows.y_cont);
  ds.dates = std::move(windows.dates);
  return ds;
}

inline LabeledDataset make_labeled_dataset(const ReturnSeries& returns, const WindowSpec& spec,
                                           const ThresholdSpec& thr)
{
  return make_labeled_dataset(build_windows(returns, spec), thr);
}

/// Number of leading rows that go to the training partition.
inline std::size_t split_point(std::size_t n, double ratio)
{
  if (!(ratio > 0.0 && ratio < 1.0))
    throw Error(fmt::format("temporal_split: ratio must lie in (0, 1) (got {})", ratio));
  // The small epsilon keeps products such as 0.7 * 10 from flooring to 6.
  return static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n) + 1e-9));
}

namespace detail {
inline LabeledDataset slice_rows(const LabeledDataset& ds, std::size_t begin, std::size_t end)
{
  const auto b = static_cast<Eigen::Index>(begin);
  const auto m = static_cast<Eigen::Index>(end - begin);
  LabeledDataset out;
  out.X = ds.X.middleRows(b, m);
  out.y_cont = ds.y_cont.segment(b, m);
  out.y_bin.assign(ds.y_bin.begin() + static_cast<std::ptrdiff_t>(begin),
                   ds.y_bin.begin() + static_cast<std::ptrdiff_t>(end));
  out.dates.assign(ds.dates.begin() + static_cast<std::ptrdiff_t>(begin),
                   ds.dates.begin() + static_cast<std::ptrdiff_t>(end));
  return out;
}
} // namespace detail

/// Chronological split without shuffling: the first floor(ratio * n) rows
/// train, the remainder test.
inline SplitDataset temporal_split(const LabeledDataset& ds, double ratio)
{
  const std::size_t n = ds.rows();
  if (n < 2)
    throw Error("temporal_split: at least two rows required");
  const std::size_t cut = split_point(n, ratio);
  if (cut == 0 || cut >= n)
    throw Error(fmt::format("temporal_split: ratio {} leaves an empty partition for n = {}", ratio, n));
  return SplitDataset{detail::slice_rows(ds, 0, cut), detail::slice_rows(ds, cut, n), ratio};
}

/// Column z-scoring with statistics taken from the training partition only.
struct FeatureScaler {
  Vector mean;
  Vector scale;

  static FeatureScaler fit(const Matrix& X_train)
  {
    FeatureScaler s;
    const double n = static_cast<double>(X_train.rows());
    s.mean = X_train.colwise().mean().transpose();
    s.scale.resize(X_train.cols());
    for (Eigen::Index j = 0; j < X_train.cols(); ++j) {
      const double var = (X_train.col(j).array() - s.mean(j)).square().sum() / n;
      s.scale(j) = var > 0.0 ? std::sqrt(var) : 1.0;
    }
    return s;
  }

  Matrix transform(const Matrix& X) const
  {
    Matrix out = X;
    out.rowwise() -= mean.transpose();
    out.array().rowwise() /= scale.transpose().array();
    return out;
  }
};

inline void standardize_features(SplitDataset& split)
{
  const auto scaler = FeatureScaler::fit(split.train.X);
  split.train.X = scaler.transform(split.train.X);
  split.test.X = scaler.transform(split.test.X);
}

} // namespace sigfx

#endif // SIGFX_DATASET_HPP
