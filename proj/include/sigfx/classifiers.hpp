#ifndef SIGFX_CLASSIFIERS_HPP
#define SIGFX_CLASSIFIERS_HPP

#include "sigfx/cart.hpp"
#include "sigfx/common.hpp"
#include "sigfx/mlp.hpp"
#include "sigfx/svm.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <thread>
#include <variant>
#include <vector>

namespace sigfx {

enum class ClassifierKind { RF, SVC, NNC };

inline std::string to_string(ClassifierKind k)
{
  switch (k) {
  case ClassifierKind::RF: return "RF";
  case ClassifierKind::SVC: return "SVC";
  case ClassifierKind::NNC: return "NNC";
  }
  return "?";
}

struct ForestParams {
  int trees = 100;
  /// 0 means ceil(sqrt(p)).
  int max_features = 0;
  int min_samples_split = 2;
  int max_depth = 0;
  bool bootstrap = true;
  /// Worker threads used to grow trees; results do not depend on it.
  int threads = 1;
};

struct SvcParams {
  double C = 1.0;
  std::optional<double> gamma;
  double tolerance = 1e-3;
  double max_passes = 1e4;
};

struct ClassifierParams {
  ForestParams rf;
  SvcParams svc;
  MlpOptions nnc;
};

struct ForestFit {
  std::vector<DecisionTree> trees;
};

struct SvcFit {
  KernelExpansion expansion;
  long iterations = 0;
  double kkt_gap = 0.0;
  double equality_residual = 0.0;
};

struct NncFit {
  Mlp net;
};

/// Degenerate model used when the training labels contain a single class.
struct ConstantFit {
  int label = 0;
};

class ClassifierModel {
public:
  using State = std::variant<ForestFit, SvcFit, NncFit, ConstantFit>;

  ClassifierModel(ClassifierKind kind, State state, int lookback, std::uint64_t seed)
      : kind_(kind), state_(std::move(state)), lookback_(lookback), seed_(seed)
  {
  }

  ClassifierKind kind() const noexcept { return kind_; }
  int lookback() const noexcept { return lookback_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const State& state() const noexcept { return state_; }
  bool is_constant() const noexcept { return std::holds_alternative<ConstantFit>(state_); }

  Labels predict(const Matrix& X) const
  {
    check_columns(X);
    Labels out(static_cast<std::size_t>(X.rows()));
    std::visit(
        [&](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, ForestFit>) {
            std::vector<int> votes(s.trees.size());
            for (Eigen::Index r = 0; r < X.rows(); ++r) {
              for (std::size_t t = 0; t < s.trees.size(); ++t)
                votes[t] = s.trees[t].predict(X.row(r).data());
              out[static_cast<std::size_t>(r)] = majority_vote(votes);
            }
          } else if constexpr (std::is_same_v<T, SvcFit>) {
            const Vector f = s.expansion.decision(X);
            for (Eigen::Index r = 0; r < f.size(); ++r)
              out[static_cast<std::size_t>(r)] = f(r) > 0.0 ? 1 : 0;
          } else if constexpr (std::is_same_v<T, NncFit>) {
            const Vector prob = probabilities(s.net, X);
            for (Eigen::Index r = 0; r < prob.size(); ++r)
              out[static_cast<std::size_t>(r)] = prob(r) > 0.5 ? 1 : 0;
          } else {
            std::fill(out.begin(), out.end(), s.label);
          }
        },
        state_);
    return out;
  }

  /// SVC decision values f(x); positive means class 1.
  Vector decision_values(const Matrix& X) const
  {
    check_columns(X);
    const auto* svc = std::get_if<SvcFit>(&state_);
    if (!svc)
      throw Error("decision_values: not an SVC model");
    return svc->expansion.decision(X);
  }

  /// NNC class-1 probabilities, kept strictly inside (0, 1).
  Vector probability(const Matrix& X) const
  {
    check_columns(X);
    const auto* nnc = std::get_if<NncFit>(&state_);
    if (!nnc)
      throw Error("probability: not an NNC model");
    return probabilities(nnc->net, X);
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
          if constexpr (std::is_same_v<T, ForestFit>) {
            auto& trees = j["trees"] = nlohmann::json::array();
            for (const auto& t : s.trees)
              trees.push_back(t.to_json());
          } else if constexpr (std::is_same_v<T, SvcFit>) {
            j["model"] = s.expansion.to_json();
            j["solver"] = {{"iterations", s.iterations}, {"kkt_gap", s.kkt_gap}};
          } else if constexpr (std::is_same_v<T, NncFit>) {
            j["model"] = s.net.to_json();
          } else {
            j["constant_label"] = s.label;
          }
        },
        state_);
    return j;
  }

private:
  static Vector probabilities(const Mlp& net, const Matrix& X)
  {
    constexpr double eps = 1e-15;
    Vector z = net.output(X);
    for (Eigen::Index i = 0; i < z.size(); ++i)
      z(i) = std::clamp(Mlp::sigmoid(z(i)), eps, 1.0 - eps);
    return z;
  }

  void check_columns(const Matrix& X) const
  {
    if (X.cols() != lookback_)
      throw Error(fmt::format("predict_labels: expected {} columns, got {}", lookback_, X.cols()));
  }

  ClassifierKind kind_;
  State state_;
  int lookback_;
  std::uint64_t seed_;
};

/// Bagged CART forest. Tree t draws its bootstrap sample and feature subsets
/// from a generator seeded with derive_seed(seed, t).
inline ForestFit fit_forest(const Matrix& X, std::span<const int> y, std::uint64_t seed, const ForestParams& params)
{
  if (params.trees < 1)
    throw Error("fit_forest: at least one tree required");
  const auto n = X.rows();
  const int p = static_cast<int>(X.cols());
  CartOptions cart;
  cart.max_features =
      params.max_features > 0 ? params.max_features : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(p))));
  cart.min_samples_split = params.min_samples_split;
  cart.max_depth = params.max_depth;

  ForestFit fit;
  fit.trees.resize(static_cast<std::size_t>(params.trees));
  auto grow = [&](int t) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<Eigen::Index> rows(static_cast<std::size_t>(n));
    if (params.bootstrap) {
      std::uniform_int_distribution<Eigen::Index> draw(0, n - 1);
      for (auto& r : rows)
        r = draw(rng);
    } else {
      std::iota(rows.begin(), rows.end(), Eigen::Index{0});
    }
    fit.trees[static_cast<std::size_t>(t)] = DecisionTree::fit(X, y, std::move(rows), cart, rng);
  };

  const int workers = std::clamp(params.threads, 1, params.trees);
  if (workers == 1) {
    for (int t = 0; t < params.trees; ++t)
      grow(t);
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < workers; ++w)
      pool.emplace_back([&, w] {
        for (int t = w; t < params.trees; t += workers)
          grow(t);
      });
  }
  return fit;
}

/// Soft-margin RBF classifier. `kernel`, if given, must be the Gram matrix
/// over X; it may be shared between fits with different labels.
inline SvcFit fit_svc(const KernelMatrix& kernel, std::span<const int> y, const SvcParams& params)
{
  const Eigen::Index n = kernel.size();
  if (static_cast<Eigen::Index>(y.size()) != n)
    throw Error("fit_svc: label length mismatch");
  std::vector<signed char> sign(static_cast<std::size_t>(n));
  for (std::size_t i = 0; i < sign.size(); ++i)
    sign[i] = y[i] == 1 ? 1 : -1;
  const Vector linear = Vector::Constant(n, -1.0);
  const auto res = solve_smo(kernel, sign, linear, SmoOptions{params.C, params.tolerance, params.max_passes});
  Vector coef(n);
  for (Eigen::Index i = 0; i < n; ++i)
    coef(i) = sign[static_cast<std::size_t>(i)] * res.alpha(i);
  SvcFit fit;
  fit.expansion = KernelExpansion::from_dual(kernel.samples(), coef, res.rho, kernel.gamma());
  fit.iterations = res.iterations;
  fit.kkt_gap = res.kkt_gap;
  fit.equality_residual = res.equality_residual;
  return fit;
}

inline ClassifierModel fit_classifier(ClassifierKind kind, const Matrix& X, std::span<const int> y,
                                      std::uint64_t seed, const ClassifierParams& params = {},
                                      std::shared_ptr<const KernelMatrix> kernel = nullptr)
{
  if (static_cast<Eigen::Index>(y.size()) != X.rows())
    throw Error("fit_classifier: X and y disagree in length");
  if (X.rows() == 0)
    throw Error("fit_classifier: empty training set");
  require_finite(X, "fit_classifier");
  long positives = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] != 0 && y[i] != 1)
      throw Error(fmt::format("fit_classifier: non-binary label at index {}", i));
    positives += y[i];
  }
  const int p = static_cast<int>(X.cols());
  const bool single_class = positives == 0 || positives == static_cast<long>(y.size());
  if (single_class) {
    const int label = positives == 0 ? 0 : 1;
    if (kind == ClassifierKind::SVC)
      throw Error("fit_classifier: SVC needs both classes in the training labels");
    log_warning(fmt::format("{}: training labels contain only class {}; using a constant predictor",
                            to_string(kind), label));
    return ClassifierModel(kind, ConstantFit{label}, p, seed);
  }

  switch (kind) {
  case ClassifierKind::RF: return ClassifierModel(kind, fit_forest(X, y, seed, params.rf), p, seed);
  case ClassifierKind::SVC: {
    if (!kernel) {
      auto samples = std::make_shared<const Matrix>(X);
      const double g = params.svc.gamma ? *params.svc.gamma : scale_gamma(X);
      kernel = std::make_shared<KernelMatrix>(std::move(samples), g);
    }
    return ClassifierModel(kind, fit_svc(*kernel, y, params.svc), p, seed);
  }
  case ClassifierKind::NNC: {
    Vector target(X.rows());
    for (Eigen::Index i = 0; i < target.size(); ++i)
      target(i) = y[static_cast<std::size_t>(i)];
    return ClassifierModel(kind, NncFit{train_mlp(X, target, MlpLoss::BinaryCrossEntropy, params.nnc, seed).net},
                           p, seed);
  }
  }
  throw Error("fit_classifier: unknown kind");
}

inline Labels predict_labels(const ClassifierModel& model, const Matrix& X) { return model.predict(X); }

} // namespace sigfx

#endif // SIGFX_CLASSIFIERS_HPP
