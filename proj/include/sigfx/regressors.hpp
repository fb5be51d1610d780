#ifndef SIGFX_REGRESSORS_HPP
#define SIGFX_REGRESSORS_HPP

#include "sigfx/common.hpp"
#include "sigfx/dataset.hpp"
#include "sigfx/mlp.hpp"
#include "sigfx/svm.hpp"

#include <nlohmann/json.hpp>

#include <memory>
#include <optional>
#include <string>
#include <variant>

namespace sigfx {

enum class RegressorKind { OLS, SVR, NNR };

inline std::string to_string(RegressorKind k)
{
  switch (k) {
  case RegressorKind::OLS: return "OLS";
  case RegressorKind::SVR: return "SVR";
  case RegressorKind::NNR: return "NNR";
  }
  return "?";
}

struct SvrParams {
  double C = 1.0;
  double epsilon = 0.1;
  /// Unset means 1 / (p * Var(X)).
  std::optional<double> gamma;
  double tolerance = 1e-3;
  double max_passes = 1e4;
};

struct RegressorParams {
  SvrParams svr;
  MlpOptions nnr;
  /// Ridge term used only when the design matrix is rank deficient.
  double ols_ridge = 1e-10;
};

struct OlsFit {
  double intercept = 0.0;
  Vector coef;
  bool regularized = false;
};

struct SvrFit {
  KernelExpansion expansion;
  SmoResult solver; // alpha dropped after fitting
};

struct NnrFit {
  Mlp net;
};

class RegressorModel {
public:
  using State = std::variant<OlsFit, SvrFit, NnrFit>;

  RegressorModel(RegressorKind kind, State state, int lookback, std::uint64_t seed, RegressorParams params)
      : kind_(kind), state_(std::move(state)), lookback_(lookback), seed_(seed), params_(std::move(params))
  {
  }

  RegressorKind kind() const noexcept { return kind_; }
  int lookback() const noexcept { return lookback_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const State& state() const noexcept { return state_; }
  const RegressorParams& params() const noexcept { return params_; }

  Vector predict(const Matrix& X) const
  {
    if (X.cols() != lookback_)
      throw Error(fmt::format("predict_returns: expected {} columns, got {}", lookback_, X.cols()));
    return std::visit(
        [&](const auto& s) -> Vector {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, OlsFit>)
            return (X * s.coef).array() + s.intercept;
          else if constexpr (std::is_same_v<T, SvrFit>)
            return s.expansion.decision(X);
          else
            return s.net.output(X);
        },
        state_);
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["kind"] = to_string(kind_);
    j["lookback"] = lookback_;
    j["seed"] = seed_;
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, OlsFit>) {
            j["intercept"] = s.intercept;
            j["coef"] = std::vector<double>(s.coef.data(), s.coef.data() + s.coef.size());
            j["regularized"] = s.regularized;
          } else if constexpr (std::is_same_v<T, SvrFit>) {
            j["hyperparameters"] = {{"C", params_.svr.C}, {"epsilon", params_.svr.epsilon}};
            j["model"] = s.expansion.to_json();
            j["solver"] = {{"iterations", s.solver.iterations}, {"kkt_gap", s.solver.kkt_gap}};
          } else {
            j["hyperparameters"] = {{"hidden", params_.nnr.hidden},
                                    {"epochs", params_.nnr.epochs},
                                    {"batch_size", params_.nnr.batch_size},
                                    {"learning_rate", params_.nnr.learning_rate}};
            j["model"] = s.net.to_json();
          }
        },
        state_);
    return j;
  }

private:
  RegressorKind kind_;
  State state_;
  int lookback_;
  std::uint64_t seed_;
  RegressorParams params_;
};

/// Least squares with intercept. Centering removes the intercept column; the
/// centred problem is solved by column-pivoting QR, or by a ridge-augmented QR
/// when the design is rank deficient.
inline OlsFit fit_ols(const Matrix& X, const Vector& y, double ridge = 1e-10)
{
  const Eigen::RowVectorXd xm = X.colwise().mean();
  const double ym = y.mean();
  const Eigen::MatrixXd Xc = X.rowwise() - xm;
  const Vector yc = y.array() - ym;

  OlsFit fit;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xc);
  if (qr.rank() == Xc.cols()) {
    fit.coef = qr.solve(yc);
  } else {
    const Eigen::Index p = Xc.cols();
    Eigen::MatrixXd A(Xc.rows() + p, p);
    A << Xc, std::sqrt(ridge) * Eigen::MatrixXd::Identity(p, p);
    Vector b = Vector::Zero(Xc.rows() + p);
    b.head(Xc.rows()) = yc;
    fit.coef = Eigen::HouseholderQR<Eigen::MatrixXd>(A).solve(b);
    fit.regularized = true;
  }
  fit.intercept = ym - xm.dot(fit.coef);
  return fit;
}

/// epsilon-insensitive RBF regression; `kernel` may be shared with other fits
/// over the same X.
inline SvrFit fit_svr(const KernelMatrix& kernel, const Vector& y, const SvrParams& params)
{
  const Eigen::Index n = kernel.size();
  if (y.size() != n)
    throw Error("fit_svr: target length mismatch");
  std::vector<signed char> sign(static_cast<std::size_t>(2 * n));
  Vector linear(2 * n);
  for (Eigen::Index i = 0; i < n; ++i) {
    sign[static_cast<std::size_t>(i)] = 1;
    sign[static_cast<std::size_t>(i + n)] = -1;
    linear(i) = params.epsilon - y(i);
    linear(i + n) = params.epsilon + y(i);
  }
  SmoOptions opt{params.C, params.tolerance, params.max_passes};
  SvrFit fit;
  fit.solver = solve_smo(kernel, sign, linear, opt);
  const Vector coef = fit.solver.alpha.head(n) - fit.solver.alpha.tail(n);
  fit.expansion = KernelExpansion::from_dual(kernel.samples(), coef, fit.solver.rho, kernel.gamma());
  return fit;
}

inline std::shared_ptr<KernelMatrix> make_rbf_kernel(const Matrix& X, std::optional<double> gamma = std::nullopt)
{
  auto samples = std::make_shared<const Matrix>(X);
  const double g = gamma ? *gamma : scale_gamma(X);
  return std::make_shared<KernelMatrix>(std::move(samples), g);
}

/// Fits one of the continuous-target models. `kernel`, when given, must be the
/// RBF Gram matrix over X and is used by SVR only.
inline RegressorModel fit_regressor(RegressorKind kind, const Matrix& X, const Vector& y, std::uint64_t seed,
                                    const RegressorParams& params = {},
                                    std::shared_ptr<const KernelMatrix> kernel = nullptr)
{
  if (X.rows() != y.size())
    throw Error("fit_regressor: X and y disagree in length");
  if (X.rows() < 2)
    throw Error("fit_regressor: at least two samples required");
  require_finite(X, "fit_regressor");
  require_finite(y, "fit_regressor");
  const int p = static_cast<int>(X.cols());
  switch (kind) {
  case RegressorKind::OLS: return RegressorModel(kind, fit_ols(X, y, params.ols_ridge), p, seed, params);
  case RegressorKind::SVR: {
    if (!kernel)
      kernel = make_rbf_kernel(X, params.svr.gamma);
    auto fit = fit_svr(*kernel, y, params.svr);
    fit.solver.alpha.resize(0);
    return RegressorModel(kind, std::move(fit), p, seed, params);
  }
  case RegressorKind::NNR:
    return RegressorModel(kind, NnrFit{train_mlp(X, y, MlpLoss::MeanSquared, params.nnr, seed).net}, p, seed,
                          params);
  }
  throw Error("fit_regressor: unknown kind");
}

inline Vector predict_returns(const RegressorModel& model, const Matrix& X) { return model.predict(X); }

/// 1 iff |prediction| > k * sigma.
inline Labels regression_to_signal(const Vector& preds, const ThresholdSpec& thr)
{
  return label_significant(preds, thr);
}

} // namespace sigfx

#endif // SIGFX_REGRESSORS_HPP
