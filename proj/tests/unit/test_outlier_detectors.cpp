#include "sigfx/outlier_detectors.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

using namespace sigfx;
using sigfx::testing::ReferenceLof;
using sigfx::testing::gaussian_matrix;

namespace {

Matrix cluster_with_far_point(std::uint64_t seed)
{
  Matrix X = gaussian_matrix(101, 3, seed);
  X.row(100) = X.topRows(100).colwise().mean();
  X(100, 0) += 10.0;
  return X;
}

double fraction(const Labels& s)
{
  return static_cast<double>(std::count(s.begin(), s.end(), 1)) / static_cast<double>(s.size());
}

} // namespace

TEST(RobustCovariance, IdentityScatterLimit)
{
  const Matrix X = gaussian_matrix(5000, 3, 1);
  const auto model = fit_detector(DetectorKind::RC, X, ContaminationRule(0.05), 2);
  const auto& rc = std::get<RobustCovariance>(model.state());
  Matrix q(2, 3);
  q.row(0) = rc.location.transpose();
  q.row(1) = rc.location.transpose() + Eigen::RowVector3d(3.0, -2.0, 1.0);
  const Vector d = model.score(q);
  EXPECT_NEAR(d(0), 0.0, 1e-12);
  EXPECT_NEAR(d(1), std::sqrt(14.0), 0.1 * std::sqrt(14.0));
  EXPECT_LT(rc.location.norm(), 0.1);
}

TEST(RobustCovariance, ResistsContamination)
{
  Matrix X = gaussian_matrix(1000, 2, 3);
  for (Eigen::Index i = 0; i < 200; ++i)
    X.row(i) += Eigen::RowVector2d(10.0, 0.0);
  const auto rc = fast_mcd(X, 4);
  EXPECT_LT(rc.location.norm(), 0.5);
  EXPECT_GT(Vector(X.colwise().mean().transpose()).norm(), 0.5);
}

TEST(RobustCovariance, SeedDeterminism)
{
  const Matrix X = gaussian_matrix(300, 4, 5);
  const auto a = fast_mcd(X, 7);
  const auto b = fast_mcd(X, 7);
  EXPECT_EQ(a.location, b.location);
  EXPECT_EQ(a.covariance, b.covariance);
}

TEST(Lof, UniformGridInteriorNearOne)
{
  Matrix X(900, 2);
  for (int i = 0; i < 30; ++i)
    for (int j = 0; j < 30; ++j)
      X.row(i * 30 + j) << i, j;
  const auto lof = fit_lof(X);
  for (int i = 6; i < 24; ++i)
    for (int j = 6; j < 24; ++j)
      EXPECT_NEAR(lof.train_scores(i * 30 + j), 1.0, 0.1) << i << "," << j;
}

TEST(Lof, MatchesExhaustiveReference)
{
  for (auto [n, p, k] : std::vector<std::tuple<int, int, int>>{{50, 2, 5}, {120, 7, 20}, {200, 14, 10}}) {
    const Matrix X = gaussian_matrix(n, p, static_cast<std::uint64_t>(n));
    const Matrix Q = gaussian_matrix(40, p, static_cast<std::uint64_t>(n + 1), 1.5);
    LofParams params;
    params.k_neighbors = k;
    const auto lof = fit_lof(X, params);
    const ReferenceLof ref(X, k);
    for (Eigen::Index i = 0; i < X.rows(); ++i)
      ASSERT_NEAR(lof.train_scores(i), ref.lof(X, i, i), 1e-9);
    const Vector s = lof.score(Q);
    for (Eigen::Index i = 0; i < Q.rows(); ++i)
      ASSERT_NEAR(s(i), ref.lof(Q, i, -1), 1e-9);
  }
}

TEST(Lof, NeighbourCountRules)
{
  const Matrix X = gaussian_matrix(15, 2, 6);
  EXPECT_EQ(fit_lof(X).k, 14);
  LofParams bad;
  bad.k_neighbors = 15;
  EXPECT_THROW(fit_lof(X, bad), Error);
}

TEST(Pkde, CollinearDataKeepsOneComponent)
{
  Matrix X(50, 3);
  for (int i = 0; i < 50; ++i)
    X.row(i) << i, 2.0 * i, -0.5 * i;
  const auto s = fit_pkde(X);
  EXPECT_EQ(s.retained(), 1);
  EXPECT_NEAR(s.retained_ratio, 1.0, 1e-12);
}

TEST(Pkde, SinglePointDensityPeak)
{
  ProductKernelDensity kde;
  kde.points = Matrix::Zero(1, 3);
  kde.points.row(0) << 0.2, -1.0, 4.0;
  kde.bandwidth = Vector::Constant(3, 0.7);
  const double peak = std::pow(2.0 * std::numbers::pi * 0.49, -1.5);
  EXPECT_NEAR(kde.density(kde.points.row(0).data()), peak, 1e-14);
  const double off[3] = {0.3, -1.0, 4.0};
  EXPECT_LT(kde.density(off), peak);
}

TEST(Pkde, MatchesDirectSummation)
{
  const Matrix X = gaussian_matrix(150, 5, 8);
  const auto s = fit_pkde(X);
  const Matrix Q = gaussian_matrix(20, 5, 9, 2.0);
  const Matrix Z = s.project(Q);
  const Matrix& P = s.kde.points;
  const Vector sc = s.score(Q);
  for (Eigen::Index q = 0; q < Q.rows(); ++q) {
    double sum = 0.0;
    for (Eigen::Index i = 0; i < P.rows(); ++i) {
      double prod = 1.0;
      for (Eigen::Index j = 0; j < P.cols(); ++j) {
        const double h = s.kde.bandwidth(j);
        const double u = (Z(q, j) - P(i, j)) / h;
        prod *= std::exp(-0.5 * u * u) / (std::sqrt(2.0 * std::numbers::pi) * h);
      }
      sum += prod;
    }
    EXPECT_NEAR(sc(q), -std::log(sum / static_cast<double>(P.rows())), 1e-10);
  }
}

TEST(Pkde, SilvermanBandwidth)
{
  std::vector<double> v{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  double mean = 5.5, ss = 0;
  for (double x : v)
    ss += (x - mean) * (x - mean);
  const double sd = std::sqrt(ss / 9.0);
  const double iqr = 7.75 - 3.25;
  EXPECT_NEAR(silverman_bandwidth(v), 0.9 * std::min(sd, iqr / 1.34) * std::pow(10.0, -0.2), 1e-14);
}

TEST(Pkde, RetainedVarianceAndRotationInvariance)
{
  Matrix X = gaussian_matrix(300, 6, 10);
  for (Eigen::Index j = 0; j < 6; ++j)
    X.col(j) *= 1.0 + j;
  const auto s = fit_pkde(X);
  const Matrix Z = s.project(X);
  const Matrix centred = X.rowwise() - X.colwise().mean();
  EXPECT_GE(Z.squaredNorm() / centred.squaredNorm(), 0.9 - 1e-12);

  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(gaussian_matrix(6, 6, 11)));
  const Eigen::MatrixXd R = qr.householderQ();
  const Matrix XR = X * R;
  const Matrix Q = gaussian_matrix(25, 6, 12, 3.0);
  const Matrix QR = Q * R;
  const auto rotated = fit_pkde(XR);
  EXPECT_LT((s.score(Q) - rotated.score(QR)).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Pkde, ZeroVarianceIsAnError)
{
  const Matrix X = Matrix::Constant(20, 3, 0.5);
  try {
    fit_pkde(X);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("zero-variance"), std::string::npos);
  }
}

TEST(Detectors, FarQueryScoresHighest)
{
  const Matrix X = gaussian_matrix(100, 3, 13);
  Matrix Q = X;
  Q.conservativeResize(101, 3);
  Q.row(100) = X.colwise().mean();
  Q(100, 0) += 10.0;

  // classical Mahalanobis oracle
  const Eigen::RowVectorXd mu = X.colwise().mean();
  const Eigen::MatrixXd C = (X.rowwise() - mu).transpose() * (X.rowwise() - mu) / 99.0;
  const Eigen::MatrixXd Ci = C.inverse();
  Eigen::Index arg = 0;
  Vector md(101);
  for (Eigen::Index i = 0; i < 101; ++i)
    md(i) = (Q.row(i) - mu) * Ci * (Q.row(i) - mu).transpose();
  md.maxCoeff(&arg);
  EXPECT_EQ(arg, 100);

  for (auto kind : {DetectorKind::RC, DetectorKind::LOF, DetectorKind::PKDE}) {
    const auto model = fit_detector(kind, X, ContaminationRule(0.1), 14);
    const Vector s = model.score(Q);
    ASSERT_TRUE(s.allFinite());
    s.maxCoeff(&arg);
    EXPECT_EQ(arg, 100) << to_string(kind);
    EXPECT_GT(s(100), s.head(100).maxCoeff()) << to_string(kind);
  }
}

TEST(Detectors, PlantedPointOutscoresCluster)
{
  const Matrix X = cluster_with_far_point(15);
  for (auto kind : {DetectorKind::RC, DetectorKind::LOF, DetectorKind::PKDE}) {
    const auto model = fit_detector(kind, X, ContaminationRule(0.05), 16);
    const Vector& t = model.train_scores();
    EXPECT_GT(t(100), t.head(100).maxCoeff()) << to_string(kind);
  }
}

TEST(Detectors, DuplicateRowsScoreIdentically)
{
  const Matrix X = gaussian_matrix(80, 4, 17);
  Matrix Q(3, 4);
  Q.row(0) = X.row(5) * 1.3;
  Q.row(1) = Q.row(0);
  Q.row(2) = Q.row(0);
  for (auto kind : {DetectorKind::RC, DetectorKind::LOF, DetectorKind::PKDE}) {
    const Vector s = fit_detector(kind, X, ContaminationRule(0.1), 1).score(Q);
    EXPECT_EQ(s(0), s(1));
    EXPECT_EQ(s(1), s(2));
  }
}

TEST(Detectors, InputErrors)
{
  EXPECT_THROW(fit_detector(DetectorKind::RC, gaussian_matrix(9, 2, 1), ContaminationRule(0.1), 1), Error);
  EXPECT_THROW(ContaminationRule(0.0), Error);
  EXPECT_THROW(ContaminationRule(1.0), Error);
  const auto m = fit_detector(DetectorKind::LOF, gaussian_matrix(30, 2, 1), ContaminationRule(0.1), 1);
  EXPECT_THROW(m.score(gaussian_matrix(2, 3, 1)), Error);
}

TEST(Cutoff, QuantileConvention)
{
  const std::vector<double> train{1, 2, 3, 4};
  const double cut = contamination_cutoff(train, 0.5);
  EXPECT_EQ(cut, 3.0);
  Vector q(2);
  q << 3.5, 2.5;
  EXPECT_EQ(scores_to_signal(q, cut), (Labels{1, 0}));
  Vector low = Vector::Constant(5, 0.5);
  EXPECT_EQ(scores_to_signal(low, cut), Labels(5, 0));
}

TEST(Cutoff, RaisingQNeverClearsASignal)
{
  std::mt19937_64 rng(18);
  std::normal_distribution<double> z;
  std::vector<double> train(500);
  for (auto& v : train)
    v = z(rng);
  Vector scores(300);
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    scores(i) = z(rng);
  Labels prev = scores_to_signal(scores, contamination_cutoff(train, 0.01));
  for (double q = 0.02; q < 0.99; q += 0.01) {
    const auto cur = scores_to_signal(scores, contamination_cutoff(train, q));
    for (std::size_t i = 0; i < cur.size(); ++i)
      ASSERT_GE(cur[i], prev[i]);
    prev = cur;
  }
}

TEST(Cutoff, FlaggedRateMatchesContamination)
{
  // Windows of i.i.d. Gaussian returns; q is the training significant-label rate.
  std::mt19937_64 rng(19);
  std::normal_distribution<double> z;
  const int p = 7, n = 2000, m = 2000;
  auto windows = [&](int rows, Vector& next) {
    Matrix X(rows, p);
    next.resize(rows);
    for (int i = 0; i < rows; ++i) {
      for (int j = 0; j < p; ++j)
        X(i, j) = z(rng);
      next(i) = z(rng);
    }
    return X;
  };
  Vector next_train, next_test;
  const Matrix train = windows(n, next_train);
  const Matrix test = windows(m, next_test);
  const double q = static_cast<double>((next_train.array().abs() > 1.5).count()) / n;
  const double tol = 3.0 * std::sqrt(q * (1 - q) / m);
  for (auto kind : {DetectorKind::RC, DetectorKind::LOF, DetectorKind::PKDE}) {
    const auto model = fit_detector(kind, train, ContaminationRule(q), 20);
    const double flagged = fraction(scores_to_signal(model.score(test), model));
    EXPECT_NEAR(flagged, q, tol) << to_string(kind);
  }
}

TEST(Detectors, JsonDump)
{
  const auto j = fit_detector(DetectorKind::PKDE, gaussian_matrix(40, 3, 2), ContaminationRule(0.2), 1).to_json();
  EXPECT_EQ(j.at("kind"), "PKDE");
  EXPECT_DOUBLE_EQ(j.at("contamination").get<double>(), 0.2);
}
