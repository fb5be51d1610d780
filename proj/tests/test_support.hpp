#ifndef SIGFX_TEST_SUPPORT_HPP
#define SIGFX_TEST_SUPPORT_HPP

#include "sigfx/common.hpp"
#include "sigfx/market_data.hpp"
#include "sigfx/mlp.hpp"
#include "sigfx/synthetic.hpp"

#include <unistd.h>

#include <atomic>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

namespace sigfx::testing {

inline ReturnSeries make_returns(std::vector<double> r, const std::string& pair = "EURUSD")
{
  auto dates = business_days(Date{std::chrono::year{2020}, std::chrono::January, std::chrono::day{1}}, r.size());
  return ReturnSeries(pair, std::move(dates), std::move(r));
}

inline PriceSeries make_prices(std::vector<double> closes, const std::string& pair = "EURUSD")
{
  auto dates = business_days(Date{std::chrono::year{2020}, std::chrono::January, std::chrono::day{1}}, closes.size());
  return PriceSeries(pair, std::move(dates), std::move(closes));
}

inline Matrix gaussian_matrix(Eigen::Index n, Eigen::Index p, std::uint64_t seed, double scale = 1.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, scale);
  Matrix X(n, p);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < p; ++j)
      X(i, j) = z(rng);
  return X;
}

/// Fresh directory under the system temp path, removed on destruction.
class TempDir {
public:
  explicit TempDir(const std::string& tag)
  {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("sigfx_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir()
  {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

  std::filesystem::path write(const std::string& name, const std::string& content) const
  {
    auto p = path_ / name;
    std::ofstream(p, std::ios::binary) << content;
    return p;
  }

private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Worst relative error between the analytic gradient and central finite
/// differences over every parameter. The denominator is floored at 1e-8.
inline double gradient_check(const Mlp& net, const Matrix& X, const Vector& y, MlpLoss loss, double step = 1e-5)
{
  Vector grad;
  net.loss_and_gradient(X, y, loss, grad);
  Mlp probe = net;
  const Vector theta = net.parameters();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector t = theta;
    t(i) = theta(i) + step;
    probe.set_parameters(t);
    const double up = probe.loss(X, y, loss);
    t(i) = theta(i) - step;
    probe.set_parameters(t);
    const double down = probe.loss(X, y, loss);
    const double numeric = (up - down) / (2.0 * step);
    const double denom = std::max({std::abs(numeric), std::abs(grad(i)), 1e-8});
    worst = std::max(worst, std::abs(numeric - grad(i)) / denom);
  }
  return worst;
}

/// True when a central difference of half-width `step` on any parameter
/// cannot move a hidden pre-activation across the ReLU kink.
inline bool stencil_clear_of_kinks(const Mlp& net, const Matrix& X, double step = 1e-5)
{
  const double reach = step * std::max(1.0, X.cwiseAbs().maxCoeff());
  return net.pre_activation(X).cwiseAbs().minCoeff() > reach;
}

/// Gaussian returns with planted events. Each event is a run of three
/// moderate moves followed by one large shock; `shock_index` lists the return
/// index of every shock.
struct PlantedSeries {
  PriceSeries prices;
  std::vector<std::size_t> shock_index;
};

inline PlantedSeries planted_shock_series(std::size_t n_returns, std::uint64_t seed, double sigma0 = 0.005,
                                          std::size_t spacing = 50, double precursor = 3.0, double shock = 8.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z(0.0, sigma0);
  std::uniform_int_distribution<std::size_t> jitter(0, spacing / 2);
  std::bernoulli_distribution sign(0.5);
  std::vector<double> r(n_returns);
  for (auto& v : r)
    v = z(rng);
  std::vector<std::size_t> shocks;
  for (std::size_t t = spacing / 2 + jitter(rng); t + 1 < n_returns; t += spacing / 2 + jitter(rng) + spacing / 4) {
    const double s = sign(rng) ? 1.0 : -1.0;
    for (std::size_t j = 1; j <= 3 && j <= t; ++j)
      r[t - j] = s * precursor * sigma0 * (1.0 + 0.1 * static_cast<double>(j));
    r[t] = (sign(rng) ? 1.0 : -1.0) * shock * sigma0;
    shocks.push_back(t);
  }
  std::vector<double> closes(n_returns + 1);
  closes[0] = 1.1;
  for (std::size_t i = 0; i < n_returns; ++i)
    closes[i + 1] = closes[i] * std::exp(r[i]);
  auto dates = business_days(Date{std::chrono::year{2001}, std::chrono::January, std::chrono::day{2}}, closes.size());
  return {PriceSeries("EURUSD", std::move(dates), std::move(closes)), std::move(shocks)};
}

/// Calm Gaussian returns (truncated at 3 sigma0) with volatile episodes of `storm` days whose moves
/// are at least `storm_scale` sigma0. Each episode opens with seven moves of
/// up to +-`onset` sigma0: unusual as a window, small one by one.
inline PriceSeries regime_series(std::size_t n_returns, std::uint64_t seed, double sigma0 = 0.004,
                                 double onset = 1.9, std::size_t storm = 20, double storm_scale = 3.0)
{
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> z;
  std::uniform_int_distribution<std::size_t> gap(150, 250);
  std::bernoulli_distribution sign(0.5);
  std::uniform_real_distribution<double> jitter;
  std::vector<double> r;
  while (r.size() < n_returns) {
    for (std::size_t i = gap(rng); i > 0; --i) {
      double v = z(rng);
      while (std::abs(v) > 3.0)
        v = z(rng);
      r.push_back(sigma0 * v);
    }
    for (int i = 0; i < 7; ++i)
      r.push_back((sign(rng) ? 1.0 : -1.0) * onset * sigma0 * (0.8 + 0.2 * jitter(rng)));
    for (std::size_t i = 0; i < storm; ++i)
      r.push_back((sign(rng) ? 1.0 : -1.0) * storm_scale * sigma0 * (1.0 + std::abs(z(rng))));
  }
  r.resize(n_returns);
  std::vector<double> closes(n_returns + 1);
  closes[0] = 1.1;
  for (std::size_t i = 0; i < n_returns; ++i)
    closes[i + 1] = closes[i] * std::exp(r[i]);
  auto dates = business_days(Date{std::chrono::year{2001}, std::chrono::January, std::chrono::day{2}}, closes.size());
  return PriceSeries("EURUSD", std::move(dates), std::move(closes));
}

// Textbook LOF by exhaustive search. Neighbour sets are the k closest points
// (ties by index) and lrd = 1 / (mean reach-dist + 1e-10).
struct ReferenceLof {
  Matrix train;
  int k;
  std::vector<double> kdist, lrd;

  static double dist(const Matrix& A, Eigen::Index i, const Matrix& B, Eigen::Index j)
  {
    return (A.row(i) - B.row(j)).norm();
  }

  std::vector<Eigen::Index> knn(const Matrix& Q, Eigen::Index q, Eigen::Index skip) const
  {
    std::vector<std::pair<double, Eigen::Index>> all;
    for (Eigen::Index j = 0; j < train.rows(); ++j)
      if (j != skip)
        all.emplace_back(dist(Q, q, train, j), j);
    std::sort(all.begin(), all.end());
    std::vector<Eigen::Index> out;
    for (int i = 0; i < k; ++i)
      out.push_back(all[static_cast<std::size_t>(i)].second);
    return out;
  }

  double lrd_of(const Matrix& Q, Eigen::Index q, const std::vector<Eigen::Index>& nb) const
  {
    double s = 0.0;
    for (auto j : nb)
      s += std::max(kdist[static_cast<std::size_t>(j)], dist(Q, q, train, j));
    return 1.0 / (s / k + 1e-10);
  }

  ReferenceLof(Matrix X, int k_) : train(std::move(X)), k(k_)
  {
    const auto n = train.rows();
    kdist.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto nb = knn(train, i, i);
      kdist[static_cast<std::size_t>(i)] = dist(train, i, train, nb.back());
    }
    lrd.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i)
      lrd[static_cast<std::size_t>(i)] = lrd_of(train, i, knn(train, i, i));
  }

  double lof(const Matrix& Q, Eigen::Index q, Eigen::Index skip) const
  {
    const auto nb = knn(Q, q, skip);
    double m = 0.0;
    for (auto j : nb)
      m += lrd[static_cast<std::size_t>(j)];
    return m / k / lrd_of(Q, q, nb);
  }
};

} // namespace sigfx::testing

#endif // SIGFX_TEST_SUPPORT_HPP
