#ifndef SIGFX_OUTLIER_DETECTORS_HPP
#define SIGFX_OUTLIER_DETECTORS_HPP

#include "sigfx/common.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

namespace sigfx {

enum class DetectorKind { RC, LOF, PKDE };

inline std::string to_string(DetectorKind k)
{
  switch (k) {
  case DetectorKind::RC: return "RC";
  case DetectorKind::LOF: return "LOF";
  case DetectorKind::PKDE: return "PKDE";
  }
  return "?";
}

/// Expected outlier fraction q; the decision cutoff sits at the (1 - q)
/// quantile of the training scores.
struct ContaminationRule {
  double q;

  explicit ContaminationRule(double fraction) : q(fraction)
  {
    if (!(q > 0.0 && q < 1.0))
      throw Error(fmt::format("ContaminationRule: q must lie in (0, 1) (got {})", q));
  }
};

struct McdParams {
  int restarts = 10;
  int max_csteps = 50;
  bool reweight = true;
};

struct LofParams {
  /// Unset means 20, clamped to n - 1. An explicit value must be below n.
  std::optional<int> k_neighbors;
};

struct PkdeParams {
  double variance_ratio = 0.9;
};

struct DetectorParams {
  McdParams rc;
  LofParams lof;
  PkdeParams pkde;
};

// ---------------------------------------------------------------------------
// Robust covariance (Fast-MCD)

struct RobustCovariance {
  Vector location;
  Eigen::MatrixXd covariance;
  Eigen::MatrixXd cholesky; // lower factor of covariance
  Vector raw_location;
  Eigen::MatrixXd raw_covariance;
  std::vector<Eigen::Index> support; // indices of the best h-subset
  double raw_log_det = 0.0;

  /// Squared Mahalanobis distances of the rows of X.
  Vector squared_distances(const Matrix& X) const
  {
    Eigen::MatrixXd Y = (X.rowwise() - location.transpose()).transpose();
    cholesky.triangularView<Eigen::Lower>().solveInPlace(Y);
    return Y.colwise().squaredNorm().transpose();
  }

  Vector distances(const Matrix& X) const { return squared_distances(X).cwiseSqrt(); }
};

namespace detail {

struct Gaussian {
  Vector mean;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd chol;
  double log_det = std::numeric_limits<double>::infinity();
  bool ok = false;
};

inline Gaussian fit_gaussian(const Matrix& X, std::span<const Eigen::Index> rows)
{
  const auto p = X.cols();
  const auto m = static_cast<double>(rows.size());
  Gaussian g;
  g.mean = Vector::Zero(p);
  for (auto r : rows)
    g.mean += X.row(r).transpose();
  g.mean /= m;
  Eigen::MatrixXd centred(static_cast<Eigen::Index>(rows.size()), p);
  for (std::size_t i = 0; i < rows.size(); ++i)
    centred.row(static_cast<Eigen::Index>(i)) = X.row(rows[i]) - g.mean.transpose();
  g.cov = centred.transpose() * centred / m;
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() == Eigen::Success) {
    g.chol = llt.matrixL();
    const auto diag = g.chol.diagonal();
    if ((diag.array() > 0.0).all()) {
      g.log_det = 2.0 * diag.array().log().sum();
      g.ok = std::isfinite(g.log_det);
    }
  }
  return g;
}

inline Vector squared_mahalanobis(const Matrix& X, const Vector& mean, const Eigen::MatrixXd& chol)
{
  Eigen::MatrixXd Y = (X.rowwise() - mean.transpose()).transpose();
  chol.triangularView<Eigen::Lower>().solveInPlace(Y);
  return Y.colwise().squaredNorm().transpose();
}

/// Indices of the h smallest entries; ties resolve to the lower index.
inline std::vector<Eigen::Index> smallest_h(const Vector& d2, Eigen::Index h)
{
  std::vector<std::pair<double, Eigen::Index>> keyed(static_cast<std::size_t>(d2.size()));
  for (Eigen::Index i = 0; i < d2.size(); ++i)
    keyed[static_cast<std::size_t>(i)] = {d2(i), i};
  std::nth_element(keyed.begin(), keyed.begin() + (h - 1), keyed.end());
  std::vector<Eigen::Index> out(static_cast<std::size_t>(h));
  for (Eigen::Index i = 0; i < h; ++i)
    out[static_cast<std::size_t>(i)] = keyed[static_cast<std::size_t>(i)].second;
  std::sort(out.begin(), out.end());
  return out;
}

inline double median(Vector v)
{
  const auto n = v.size();
  auto* b = v.data();
  std::nth_element(b, b + n / 2, b + n);
  const double hi = b[n / 2];
  if (n % 2 == 1)
    return hi;
  return 0.5 * (hi + *std::max_element(b, b + n / 2));
}

/// Adds a small ridge when the covariance is numerically singular.
inline Gaussian regularise(Gaussian g)
{
  if (g.ok)
    return g;
  const double scale = g.cov.trace() / static_cast<double>(g.cov.rows());
  if (!(scale > 0.0))
    throw Error("robust covariance: zero-variance data");
  g.cov.diagonal().array() += 1e-10 * scale;
  Eigen::LLT<Eigen::MatrixXd> llt(g.cov);
  if (llt.info() != Eigen::Success)
    throw Error("robust covariance: scatter matrix is singular");
  g.chol = llt.matrixL();
  g.log_det = 2.0 * g.chol.diagonal().array().log().sum();
  g.ok = true;
  return g;
}

} // namespace detail

/// Fast-MCD: seeded random (p+1)-subsets refined by concentration steps, the
/// lowest-determinant h-subset wins (h = ceil((n+p+1)/2)). The raw scatter is
/// rescaled for consistency under normality, then optionally reweighted using
/// the points inside the 97.5% chi-square quantile.
inline RobustCovariance fast_mcd(const Matrix& X, std::uint64_t seed, const McdParams& params = {})
{
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < p + 2)
    throw Error(fmt::format("robust covariance: need more than p + 1 = {} samples (got {})", p + 1, n));
  const Eigen::Index h = (n + p + 2) / 2;

  detail::Gaussian best;
  std::vector<Eigen::Index> best_support;
  for (int r = 0; r < std::max(1, params.restarts); ++r) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(r)));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Eigen::Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::Index m = p + 1;
    detail::Gaussian g = detail::fit_gaussian(X, std::span(perm.data(), static_cast<std::size_t>(m)));
    while (!g.ok && m < n) {
      ++m;
      g = detail::fit_gaussian(X, std::span(perm.data(), static_cast<std::size_t>(m)));
    }
    g = detail::regularise(std::move(g));

    std::vector<Eigen::Index> support;
    for (int step = 0; step < params.max_csteps; ++step) {
      const Vector d2 = detail::squared_mahalanobis(X, g.mean, g.chol);
      auto next_support = detail::smallest_h(d2, h);
      auto next = detail::regularise(detail::fit_gaussian(X, next_support));
      const bool improved = next.log_det < g.log_det - 1e-12 * std::max(1.0, std::abs(g.log_det));
      if (!support.empty() && !improved)
        break;
      g = std::move(next);
      support = std::move(next_support);
    }
    if (best_support.empty() || g.log_det < best.log_det) {
      best = std::move(g);
      best_support = std::move(support);
    }
  }

  const boost::math::chi_squared_distribution<double> chi2(static_cast<double>(p));
  const double med = boost::math::quantile(chi2, 0.5);

  RobustCovariance rc;
  rc.support = best_support;
  rc.raw_location = best.mean;
  rc.raw_log_det = best.log_det;
  Vector d2 = detail::squared_mahalanobis(X, best.mean, best.chol);
  double factor = detail::median(d2) / med;
  if (!(factor > 0.0))
    factor = 1.0;
  rc.raw_covariance = best.cov * factor;
  d2 /= factor;

  detail::Gaussian final_fit;
  if (params.reweight) {
    const double cut = boost::math::quantile(chi2, 0.975);
    std::vector<Eigen::Index> inliers;
    for (Eigen::Index i = 0; i < n; ++i)
      if (d2(i) < cut)
        inliers.push_back(i);
    if (static_cast<Eigen::Index>(inliers.size()) > p + 1) {
      final_fit = detail::regularise(detail::fit_gaussian(X, inliers));
      Vector d2w = detail::squared_mahalanobis(X, final_fit.mean, final_fit.chol);
      double f2 = detail::median(d2w) / med;
      if (f2 > 0.0) {
        final_fit.cov *= f2;
        final_fit.chol *= std::sqrt(f2);
      }
    }
  }
  if (!final_fit.ok) {
    final_fit = best;
    final_fit.cov = rc.raw_covariance;
    final_fit.chol = best.chol * std::sqrt(factor);
  }
  rc.location = final_fit.mean;
  rc.covariance = final_fit.cov;
  rc.cholesky = final_fit.chol;
  return rc;
}

// ---------------------------------------------------------------------------
// Local outlier factor, novelty mode

struct LofState {
  Matrix train;
  int k = 20;
  Vector k_distance;
  Vector lrd;
  /// LOF of each training point against the other training points.
  Vector train_scores;

  /// LOF of each query row against the training neighbours.
  Vector score(const Matrix& Q) const
  {
    Vector out(Q.rows());
    std::vector<std::pair<double, Eigen::Index>> nn;
    for (Eigen::Index r = 0; r < Q.rows(); ++r) {
      nearest(Q.row(r).data(), -1, nn);
      out(r) = factor_from_neighbours(nn);
    }
    return out;
  }

  /// k nearest training rows by (distance, index), excluding `skip`.
  void nearest(const double* x, Eigen::Index skip, std::vector<std::pair<double, Eigen::Index>>& nn) const
  {
    const Eigen::Index n = train.rows();
    const Eigen::Index p = train.cols();
    nn.clear();
    nn.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == skip)
        continue;
      const double* t = train.row(j).data();
      double s = 0.0;
      for (Eigen::Index c = 0; c < p; ++c) {
        const double d = x[c] - t[c];
        s += d * d;
      }
      nn.emplace_back(std::sqrt(s), j);
    }
    std::partial_sort(nn.begin(), nn.begin() + k, nn.end());
    nn.resize(static_cast<std::size_t>(k));
  }

  double local_reachability(const std::vector<std::pair<double, Eigen::Index>>& nn) const
  {
    double sum = 0.0;
    for (const auto& [d, j] : nn)
      sum += std::max(k_distance(j), d);
    return 1.0 / (sum / static_cast<double>(nn.size()) + 1e-10);
  }

  double factor_from_neighbours(const std::vector<std::pair<double, Eigen::Index>>& nn) const
  {
    double mean_lrd = 0.0;
    for (const auto& nb : nn)
      mean_lrd += lrd(nb.second);
    mean_lrd /= static_cast<double>(nn.size());
    return mean_lrd / local_reachability(nn);
  }
};

inline LofState fit_lof(const Matrix& X, const LofParams& params = {})
{
  const Eigen::Index n = X.rows();
  if (n < 2)
    throw Error("LOF: at least two training samples required");
  int k = 20;
  if (params.k_neighbors) {
    k = *params.k_neighbors;
    if (k < 1 || k >= n)
      throw Error(fmt::format("LOF: k_neighbors = {} must lie in [1, n - 1] with n = {}", k, n));
  } else {
    k = static_cast<int>(std::min<Eigen::Index>(k, n - 1));
  }

  LofState s;
  s.train = X;
  s.k = k;
  s.k_distance.resize(n);
  std::vector<std::vector<std::pair<double, Eigen::Index>>> neighbours(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    auto& nn = neighbours[static_cast<std::size_t>(i)];
    s.nearest(X.row(i).data(), i, nn);
    s.k_distance(i) = nn.back().first;
  }
  s.lrd.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s.lrd(i) = s.local_reachability(neighbours[static_cast<std::size_t>(i)]);
  s.train_scores.resize(n);
  for (Eigen::Index i = 0; i < n; ++i)
    s.train_scores(i) = s.factor_from_neighbours(neighbours[static_cast<std::size_t>(i)]);
  return s;
}

// ---------------------------------------------------------------------------
// Principal kernel density estimate

/// Gaussian product-kernel density with one bandwidth per dimension.
struct ProductKernelDensity {
  Matrix points;   // n x d
  Vector bandwidth; // d

  /// log f(x); the point with index `skip` (if any) is left out of the sum.
  double log_density(const double* x, Eigen::Index skip = -1) const
  {
    const Eigen::Index n = points.rows();
    const Eigen::Index d = points.cols();
    const Eigen::Index count = skip >= 0 && skip < n ? n - 1 : n;
    if (count < 1)
      throw Error("kernel density: no points to sum over");
    double log_norm = 0.0;
    for (Eigen::Index j = 0; j < d; ++j)
      log_norm -= std::log(std::sqrt(2.0 * M_PI) * bandwidth(j));

    thread_local std::vector<double> expo;
    expo.resize(static_cast<std::size_t>(n));
    double peak = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < n; ++i) {
      if (i == skip) {
        expo[static_cast<std::size_t>(i)] = -std::numeric_limits<double>::infinity();
        continue;
      }
      const double* pt = points.row(i).data();
      double s = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double z = (x[j] - pt[j]) / bandwidth(j);
        s += z * z;
      }
      const double e = -0.5 * s;
      expo[static_cast<std::size_t>(i)] = e;
      peak = std::max(peak, e);
    }
    double acc = 0.0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (i != skip)
        acc += std::exp(expo[static_cast<std::size_t>(i)] - peak);
    return peak + std::log(acc) - std::log(static_cast<double>(count)) + log_norm;
  }

  double density(const double* x) const { return std::exp(log_density(x)); }
};

namespace detail {
/// Linear-interpolation quantile of sorted data.
inline double sorted_quantile(const std::vector<double>& sorted, double prob)
{
  const double pos = prob * static_cast<double>(sorted.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}
} // namespace detail

/// Silverman's rule 0.9 * min(std, IQR / 1.34) * n^(-1/5); the IQR term is
/// ignored when it is zero.
inline double silverman_bandwidth(std::span<const double> values)
{
  const auto n = values.size();
  if (n < 2)
    throw Error("silverman_bandwidth: at least two values required");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(n);
  double ss = 0.0;
  for (double v : values)
    ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(n - 1));
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const double iqr = detail::sorted_quantile(sorted, 0.75) - detail::sorted_quantile(sorted, 0.25);
  const double spread = iqr > 0.0 ? std::min(sd, iqr / 1.34) : sd;
  return 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
}

struct PkdeState {
  Vector mean;
  Eigen::MatrixXd basis;     // p x d, columns are principal directions
  Vector eigenvalues;        // all p, descending
  double retained_ratio = 0; // variance fraction kept by the d components
  ProductKernelDensity kde;  // over the projected training points

  int retained() const noexcept { return static_cast<int>(basis.cols()); }

  Matrix project(const Matrix& X) const
  {
    Matrix out = (X.rowwise() - mean.transpose()) * basis;
    return out;
  }

  /// -log density; higher means more outlying.
  Vector score(const Matrix& X) const
  {
    const Matrix Z = project(X);
    Vector out(Z.rows());
    for (Eigen::Index r = 0; r < Z.rows(); ++r)
      out(r) = -kde.log_density(Z.row(r).data());
    return out;
  }

  /// Leave-one-out scores of the training points.
  Vector training_scores() const
  {
    const auto& P = kde.points;
    Vector out(P.rows());
    for (Eigen::Index r = 0; r < P.rows(); ++r)
      out(r) = -kde.log_density(P.row(r).data(), r);
    return out;
  }
};

inline PkdeState fit_pkde(const Matrix& X, const PkdeParams& params = {})
{
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  if (n < 3)
    throw Error("PKDE: at least three training samples required");
  if (!(params.variance_ratio > 0.0 && params.variance_ratio <= 1.0))
    throw Error("PKDE: variance_ratio must lie in (0, 1]");

  PkdeState s;
  s.mean = X.colwise().mean().transpose();
  const Eigen::MatrixXd centred = X.rowwise() - s.mean.transpose();
  const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
  if (eig.info() != Eigen::Success)
    throw Error("PKDE: eigendecomposition failed");
  // Eigen returns ascending order.
  s.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  const Eigen::MatrixXd vectors = eig.eigenvectors().rowwise().reverse();
  const double total = s.eigenvalues.sum();
  if (!(total > 0.0))
    throw Error("PKDE: zero-variance training data, bandwidth would be zero; "
                "drop constant windows or check the input series");

  Eigen::Index d = 0;
  double cum = 0.0;
  while (d < p) {
    cum += s.eigenvalues(d);
    ++d;
    if (cum / total >= params.variance_ratio - 1e-12)
      break;
  }
  s.retained_ratio = cum / total;
  s.basis = vectors.leftCols(d);
  for (Eigen::Index j = 0; j < d; ++j) {
    Eigen::Index arg = 0;
    s.basis.col(j).cwiseAbs().maxCoeff(&arg);
    if (s.basis(arg, j) < 0)
      s.basis.col(j) *= -1.0;
  }

  s.kde.points = s.project(X);
  s.kde.bandwidth.resize(d);
  std::vector<double> column(static_cast<std::size_t>(n));
  for (Eigen::Index j = 0; j < d; ++j) {
    for (Eigen::Index i = 0; i < n; ++i)
      column[static_cast<std::size_t>(i)] = s.kde.points(i, j);
    const double h = silverman_bandwidth(column);
    if (!(h > 0.0))
      throw Error(fmt::format("PKDE: zero bandwidth in principal direction {}; "
                              "the projected data is constant, drop duplicate windows or lower variance_ratio",
                              j));
    s.kde.bandwidth(j) = h;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Common detector interface

/// Smallest training score s with at least floor((1 - q) n) training scores
/// strictly below it, i.e. the sorted score at 0-based index floor((1 - q) n).
inline double contamination_cutoff(std::span<const double> train_scores, double q)
{
  ContaminationRule rule(q);
  if (train_scores.empty())
    throw Error("contamination_cutoff: no training scores");
  std::vector<double> sorted(train_scores.begin(), train_scores.end());
  std::sort(sorted.begin(), sorted.end());
  const auto n = sorted.size();
  auto idx = static_cast<std::size_t>(std::floor((1.0 - rule.q) * static_cast<double>(n) + 1e-9));
  idx = std::min(idx, n - 1);
  return sorted[idx];
}

/// 1 iff score > cutoff.
inline Labels scores_to_signal(const Vector& scores, double cutoff)
{
  Labels out(static_cast<std::size_t>(scores.size()));
  for (Eigen::Index i = 0; i < scores.size(); ++i)
    out[static_cast<std::size_t>(i)] = scores(i) > cutoff ? 1 : 0;
  return out;
}

class DetectorModel {
public:
  using State = std::variant<RobustCovariance, LofState, PkdeState>;

  DetectorModel(DetectorKind kind, State state, Vector train_scores, double q, int lookback)
      : kind_(kind), state_(std::move(state)), train_scores_(std::move(train_scores)), q_(q), lookback_(lookback)
  {
    cutoff_ = contamination_cutoff(std::span<const double>(train_scores_.data(), train_scores_.size()), q_);
  }

  DetectorKind kind() const noexcept { return kind_; }
  const State& state() const noexcept { return state_; }
  const Vector& train_scores() const noexcept { return train_scores_; }
  double cutoff() const noexcept { return cutoff_; }
  double contamination() const noexcept { return q_; }
  int lookback() const noexcept { return lookback_; }

  Vector score(const Matrix& X) const
  {
    if (X.cols() != lookback_)
      throw Error(fmt::format("score_windows: expected {} columns, got {}", lookback_, X.cols()));
    return std::visit(
        [&](const auto& s) -> Vector {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, RobustCovariance>)
            return s.distances(X);
          else
            return s.score(X);
        },
        state_);
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["kind"] = to_string(kind_);
    j["lookback"] = lookback_;
    j["contamination"] = q_;
    j["cutoff"] = cutoff_;
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, RobustCovariance>) {
            j["location"] = std::vector<double>(s.location.data(), s.location.data() + s.location.size());
            j["support_size"] = s.support.size();
          } else if constexpr (std::is_same_v<T, LofState>) {
            j["k_neighbors"] = s.k;
            j["train_size"] = s.train.rows();
          } else {
            j["retained_components"] = s.retained();
            j["retained_ratio"] = s.retained_ratio;
            j["bandwidth"] = std::vector<double>(s.kde.bandwidth.data(), s.kde.bandwidth.data() + s.kde.bandwidth.size());
          }
        },
        state_);
    return j;
  }

private:
  DetectorKind kind_;
  State state_;
  Vector train_scores_;
  double q_;
  double cutoff_ = 0.0;
  int lookback_;
};

inline DetectorModel fit_detector(DetectorKind kind, const Matrix& X_train, const ContaminationRule& rule,
                                  std::uint64_t seed, const DetectorParams& params = {})
{
  if (X_train.rows() < 10)
    throw Error(fmt::format("{}: at least 10 training windows required (got {})", to_string(kind), X_train.rows()));
  require_finite(X_train, "fit_detector");
  const int p = static_cast<int>(X_train.cols());
  switch (kind) {
  case DetectorKind::RC: {
    auto rc = fast_mcd(X_train, seed, params.rc);
    Vector train = rc.distances(X_train);
    return DetectorModel(kind, std::move(rc), std::move(train), rule.q, p);
  }
  case DetectorKind::LOF: {
    auto lof = fit_lof(X_train, params.lof);
    Vector train = lof.train_scores;
    return DetectorModel(kind, std::move(lof), std::move(train), rule.q, p);
  }
  case DetectorKind::PKDE: {
    auto pk = fit_pkde(X_train, params.pkde);
    Vector train = pk.training_scores();
    return DetectorModel(kind, std::move(pk), std::move(train), rule.q, p);
  }
  }
  throw Error("fit_detector: unknown kind");
}

inline Vector score_windows(const DetectorModel& model, const Matrix& X) { return model.score(X); }

inline Labels scores_to_signal(const Vector& scores, const DetectorModel& model)
{
  return scores_to_signal(scores, model.cutoff());
}

} // namespace sigfx

#endif // SIGFX_OUTLIER_DETECTORS_HPP
