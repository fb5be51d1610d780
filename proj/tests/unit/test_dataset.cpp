#include "sigfx/dataset.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace sigfx;
using sigfx::testing::make_returns;

namespace {

ReturnSeries ramp(std::size_t n)
{
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i)
    r[i] = static_cast<double>(i);
  return make_returns(r);
}

ReturnSeries gaussian_returns(std::size_t n, std::uint64_t seed)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::vector<double> r(n);
  for (auto& v : r)
    v = z(rng);
  return make_returns(r);
}

} // namespace

TEST(BuildWindows, RowCount)
{
  EXPECT_EQ(build_windows(ramp(10), WindowSpec(7)).X.rows(), 3);
}

TEST(BuildWindows, MostRecentFirst)
{
  const auto w = build_windows(ramp(10), WindowSpec(7));
  EXPECT_EQ(w.y_cont(0), 7.0);
  for (int j = 0; j < 7; ++j)
    EXPECT_EQ(w.X(0, j), 6.0 - j);
}

TEST(BuildWindows, TooShort)
{
  EXPECT_THROW(build_windows(ramp(10), WindowSpec(10)), Error);
  EXPECT_THROW(WindowSpec(0), Error);
}

TEST(BuildWindows, RowsAreExactSlices)
{
  const auto r = gaussian_returns(300, 1);
  for (int p : {1, 7, 14, 30, 60}) {
    const auto w = build_windows(r, WindowSpec(p));
    ASSERT_EQ(static_cast<std::size_t>(w.X.rows()), r.size() - static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < w.X.rows(); ++i) {
      const auto t = static_cast<std::size_t>(i) + static_cast<std::size_t>(p);
      ASSERT_EQ(w.y_cont(i), r[t]);
      ASSERT_EQ(w.dates[static_cast<std::size_t>(i)], r.dates()[t]);
      for (int j = 0; j < p; ++j)
        ASSERT_EQ(w.X(i, j), r[t - 1 - static_cast<std::size_t>(j)]);
    }
  }
}

TEST(LabelSignificant, StrictTwoSidedRule)
{
  Vector y(4);
  y << 2.0, -1.6, 1.4, 1.5;
  const auto lab = label_significant(y, ThresholdSpec(1.5, 1.0));
  EXPECT_EQ(lab, (Labels{1, 1, 0, 0}));
}

TEST(LabelSignificant, GaussianRateMonteCarlo)
{
  std::mt19937_64 rng(99);
  std::normal_distribution<double> z;
  Vector y(1'000'000);
  for (Eigen::Index i = 0; i < y.size(); ++i)
    y(i) = z(rng);
  const auto lab = label_significant(y, ThresholdSpec(1.5, 1.0));
  const double rate = static_cast<double>(std::count(lab.begin(), lab.end(), 1)) / static_cast<double>(lab.size());
  EXPECT_NEAR(rate, 0.1336, 0.003);
}

TEST(LabelSignificant, MonotoneInK)
{
  const auto r = gaussian_returns(2000, 4);
  const auto w = build_windows(r, WindowSpec(7));
  Labels prev = label_significant(w.y_cont, ThresholdSpec(0.5, 1.0));
  for (double k = 0.75; k <= 3.0; k += 0.25) {
    const auto cur = label_significant(w.y_cont, ThresholdSpec(k, 1.0));
    for (std::size_t i = 0; i < cur.size(); ++i)
      ASSERT_LE(cur[i], prev[i]);
    prev = cur;
  }
}

TEST(ThresholdSpec, RejectsNonPositive)
{
  EXPECT_THROW(ThresholdSpec(0.0, 1.0), Error);
  EXPECT_THROW(ThresholdSpec(1.0, 0.0), Error);
  EXPECT_DOUBLE_EQ(ThresholdSpec(1.5, 2.0).level(), 3.0);
}

TEST(TemporalSplit, FloorConvention)
{
  for (auto [len, train] : std::vector<std::pair<std::size_t, std::size_t>>{{17, 7}, {16, 6}}) {
    const auto ds = make_labeled_dataset(ramp(len), WindowSpec(7), ThresholdSpec(1.0, 1.0));
    const auto s = temporal_split(ds, 0.7);
    EXPECT_EQ(s.train.rows(), train);
    EXPECT_EQ(s.test.rows(), 3u);
  }
  EXPECT_EQ(split_point(10, 0.7), 7u);
  EXPECT_EQ(split_point(9, 0.7), 6u);
}

TEST(TemporalSplit, ChronologyAndReconstruction)
{
  const auto r = gaussian_returns(500, 8);
  const auto ds = make_labeled_dataset(r, WindowSpec(14), ThresholdSpec(1.5, return_sigma(r)));
  const auto s = temporal_split(ds, 0.7);
  EXPECT_LT(s.train.dates.back(), s.test.dates.front());
  const auto n_train = static_cast<Eigen::Index>(s.train.rows());
  for (Eigen::Index i = 0; i < ds.X.rows(); ++i) {
    const bool tr = i < n_train;
    const auto& part = tr ? s.train : s.test;
    const Eigen::Index j = tr ? i : i - n_train;
    ASSERT_EQ(part.X.row(j), ds.X.row(i));
    ASSERT_EQ(part.y_cont(j), ds.y_cont(i));
    ASSERT_EQ(part.y_bin[static_cast<std::size_t>(j)], ds.y_bin[static_cast<std::size_t>(i)]);
    ASSERT_EQ(part.dates[static_cast<std::size_t>(j)], ds.dates[static_cast<std::size_t>(i)]);
  }
}

TEST(TemporalSplit, Errors)
{
  const auto ds = make_labeled_dataset(ramp(10), WindowSpec(7), ThresholdSpec(1.0, 1.0));
  EXPECT_THROW(temporal_split(ds, 0.0), Error);
  EXPECT_THROW(temporal_split(ds, 1.0), Error);
  EXPECT_THROW(temporal_split(ds, 0.2), Error); // floor(0.6) = 0 rows of training
}

TEST(FeatureScaler, UsesTrainingStatisticsOnly)
{
  const auto r = gaussian_returns(400, 12);
  auto ds = make_labeled_dataset(r, WindowSpec(5), ThresholdSpec(1.0, 1.0));
  auto split = temporal_split(ds, 0.7);
  const Matrix test_before = split.test.X;
  const auto scaler = FeatureScaler::fit(split.train.X);
  standardize_features(split);
  const Vector mean = split.train.X.colwise().mean();
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 1e-12);
  const Matrix expected = scaler.transform(test_before);
  EXPECT_LT((expected - split.test.X).cwiseAbs().maxCoeff(), 1e-15);
}
