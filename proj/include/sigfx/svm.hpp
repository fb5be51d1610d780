#ifndef SIGFX_SVM_HPP
#define SIGFX_SVM_HPP

#include "sigfx/common.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <limits>
#include <memory>
#include <mutex>
#include <span>
#include <vector>

namespace sigfx {

/// gamma = 1 / (p * Var(X)) with the variance taken over every entry of X;
/// falls back to 1 when X is constant.
inline double scale_gamma(const Matrix& X)
{
  const double count = static_cast<double>(X.size());
  if (count == 0)
    throw Error("scale_gamma: empty matrix");
  const double mean = X.sum() / count;
  const double var = (X.array() - mean).square().sum() / count;
  return var > 0.0 ? 1.0 / (static_cast<double>(X.cols()) * var) : 1.0;
}

inline double squared_distance(const double* a, const double* b, Eigen::Index p) noexcept
{
  double s = 0.0;
  for (Eigen::Index k = 0; k < p; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return s;
}

/// Lazily evaluated RBF Gram matrix over the rows of X. Columns are computed
/// on first access and cached; access is thread-safe, so one instance can be
/// shared by several fits over the same samples.
class KernelMatrix {
public:
  KernelMatrix(std::shared_ptr<const Matrix> X, double gamma)
      : X_(std::move(X)), gamma_(gamma), n_(X_->rows()),
        columns_(static_cast<std::size_t>(n_)), flags_(std::make_unique<std::once_flag[]>(static_cast<std::size_t>(n_)))
  {
    if (!(gamma_ > 0.0))
      throw Error("KernelMatrix: gamma must be positive");
  }

  Eigen::Index size() const noexcept { return n_; }
  double gamma() const noexcept { return gamma_; }
  const Matrix& samples() const noexcept { return *X_; }

  std::span<const double> column(Eigen::Index j) const
  {
    const auto idx = static_cast<std::size_t>(j);
    std::call_once(flags_[idx], [&] {
      auto col = std::make_unique<double[]>(static_cast<std::size_t>(n_));
      const Eigen::Index p = X_->cols();
      const double* xj = X_->row(j).data();
      for (Eigen::Index i = 0; i < n_; ++i)
        col[static_cast<std::size_t>(i)] =
            i == j ? 1.0 : std::exp(-gamma_ * squared_distance(X_->row(i).data(), xj, p));
      columns_[idx] = std::move(col);
    });
    return {columns_[idx].get(), static_cast<std::size_t>(n_)};
  }

private:
  std::shared_ptr<const Matrix> X_;
  double gamma_;
  Eigen::Index n_;
  mutable std::vector<std::unique_ptr<double[]>> columns_;
  mutable std::unique_ptr<std::once_flag[]> flags_;
};

struct SmoOptions {
  double C = 1.0;
  /// Stop once the maximal violating pair gap falls below this.
  double tolerance = 1e-3;
  /// Iteration cap in passes; one pass is as many pair updates as there are
  /// dual variables.
  double max_passes = 1e4;
};

struct SmoResult {
  Vector alpha;
  double rho = 0.0;
  long iterations = 0;
  /// Maximal violating pair gap m(alpha) - M(alpha) at termination.
  double kkt_gap = 0.0;
  /// |sum_t y_t alpha_t|.
  double equality_residual = 0.0;
  bool converged = false;
};

/// Solves   min 1/2 a'Qa + p'a   s.t.  y'a = 0,  0 <= a <= C
/// with Q_st = y_s y_t K(s mod n, t mod n). Variables beyond n (the regression
/// layout) reuse the kernel rows of the first n. Working-set selection takes
/// the maximal violator for i and the second-order choice for j; ties go to
/// the lowest index, so the iterate sequence is fully deterministic.
inline SmoResult solve_smo(const KernelMatrix& K, std::span<const signed char> y, const Vector& linear,
                           const SmoOptions& opt)
{
  constexpr double tau = 1e-12;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const Eigen::Index n = K.size();
  const auto l = static_cast<Eigen::Index>(y.size());
  if (linear.size() != l || n == 0 || (l != n && l != 2 * n))
    throw Error("solve_smo: inconsistent problem dimensions");
  const double C = opt.C;
  if (!(C > 0.0))
    throw Error("solve_smo: C must be positive");

  const auto kidx = [n](Eigen::Index t) { return t < n ? t : t - n; };
  Vector alpha = Vector::Zero(l);
  Vector G = linear;
  const long max_iter = static_cast<long>(std::min(opt.max_passes * static_cast<double>(l), 9.0e18));

  SmoResult res;
  double gap = -inf;
  while (true) {
    double gmax = -inf;
    Eigen::Index i = -1;
    for (Eigen::Index t = 0; t < l; ++t) {
      if (y[t] > 0) {
        if (alpha(t) < C && -G(t) > gmax) {
          gmax = -G(t);
          i = t;
        }
      } else if (alpha(t) > 0 && G(t) > gmax) {
        gmax = G(t);
        i = t;
      }
    }
    double gmax2 = -inf;
    Eigen::Index j = -1;
    double obj_min = inf;
    std::span<const double> Ki;
    if (i != -1) {
      Ki = K.column(kidx(i));
      const double qd_i = 1.0;
      for (Eigen::Index t = 0; t < l; ++t) {
        double grad_diff;
        if (y[t] > 0) {
          if (!(alpha(t) > 0))
            continue;
          grad_diff = gmax + G(t);
          gmax2 = std::max(gmax2, G(t));
        } else {
          if (!(alpha(t) < C))
            continue;
          grad_diff = gmax - G(t);
          gmax2 = std::max(gmax2, -G(t));
        }
        if (grad_diff > 0) {
          const double quad = qd_i + 1.0 - 2.0 * Ki[static_cast<std::size_t>(kidx(t))];
          const double obj = -(grad_diff * grad_diff) / (quad > 0 ? quad : tau);
          if (obj < obj_min) {
            obj_min = obj;
            j = t;
          }
        }
      }
    }
    gap = gmax + gmax2;
    if (gap < opt.tolerance || j == -1) {
      res.converged = true;
      break;
    }
    if (res.iterations >= max_iter)
      break;
    ++res.iterations;

    const auto Kj = K.column(kidx(j));
    const double yi = y[i], yj = y[j];
    const double Kij = Ki[static_cast<std::size_t>(kidx(j))];
    const double old_i = alpha(i), old_j = alpha(j);
    double ai = old_i, aj = old_j;
    // RBF diagonal is 1, so both cases share Q_ii + Q_jj - 2 y_i y_j Q_ij = 2 - 2 K_ij.
    double quad = 2.0 - 2.0 * Kij;
    if (quad <= 0)
      quad = tau;
    if (yi != yj) {
      const double delta = (-G(i) - G(j)) / quad;
      const double diff = ai - aj;
      ai += delta;
      aj += delta;
      if (diff > 0) {
        if (aj < 0) {
          aj = 0;
          ai = diff;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = -diff;
      }
      if (diff > 0) {
        if (ai > C) {
          ai = C;
          aj = C - diff;
        }
      } else if (aj > C) {
        aj = C;
        ai = C + diff;
      }
    } else {
      const double delta = (G(i) - G(j)) / quad;
      const double sum = ai + aj;
      ai -= delta;
      aj += delta;
      if (sum > C) {
        if (ai > C) {
          ai = C;
          aj = sum - C;
        }
      } else if (aj < 0) {
        aj = 0;
        ai = sum;
      }
      if (sum > C) {
        if (aj > C) {
          aj = C;
          ai = sum - C;
        }
      } else if (ai < 0) {
        ai = 0;
        aj = sum;
      }
    }
    alpha(i) = ai;
    alpha(j) = aj;
    const double dai = (ai - old_i) * yi;
    const double daj = (aj - old_j) * yj;
    for (Eigen::Index t = 0; t < l; ++t) {
      const auto kt = static_cast<std::size_t>(kidx(t));
      G(t) += y[t] * (Ki[kt] * dai + Kj[kt] * daj);
    }
  }
  res.kkt_gap = std::max(gap, 0.0);

  // Offset: average over free variables, else the midpoint of the feasible range.
  double ub = inf, lb = -inf, sum_free = 0.0;
  long nr_free = 0;
  for (Eigen::Index t = 0; t < l; ++t) {
    const double yG = y[t] * G(t);
    if (alpha(t) >= C) {
      if (y[t] < 0)
        ub = std::min(ub, yG);
      else
        lb = std::max(lb, yG);
    } else if (alpha(t) <= 0) {
      if (y[t] > 0)
        ub = std::min(ub, yG);
      else
        lb = std::max(lb, yG);
    } else {
      ++nr_free;
      sum_free += yG;
    }
  }
  res.rho = nr_free > 0 ? sum_free / static_cast<double>(nr_free) : (ub + lb) / 2.0;
  double eq = 0.0;
  for (Eigen::Index t = 0; t < l; ++t)
    eq += y[t] * alpha(t);
  res.equality_residual = std::abs(eq);
  res.alpha = std::move(alpha);
  return res;
}

/// Kernel expansion f(x) = sum_i coef_i exp(-gamma |sv_i - x|^2) - rho.
struct KernelExpansion {
  Matrix support;
  Vector coef;
  double rho = 0.0;
  double gamma = 1.0;

  double decision(const double* x) const noexcept
  {
    double f = -rho;
    const Eigen::Index p = support.cols();
    for (Eigen::Index i = 0; i < support.rows(); ++i)
      f += coef(i) * std::exp(-gamma * squared_distance(support.row(i).data(), x, p));
    return f;
  }

  Vector decision(const Matrix& X) const
  {
    Vector out(X.rows());
    for (Eigen::Index r = 0; r < X.rows(); ++r)
      out(r) = decision(X.row(r).data());
    return out;
  }

  /// Keeps the rows of X whose coefficient is non-zero.
  static KernelExpansion from_dual(const Matrix& X, const Vector& coef, double rho, double gamma)
  {
    KernelExpansion e;
    e.rho = rho;
    e.gamma = gamma;
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < coef.size(); ++i)
      if (coef(i) != 0.0)
        keep.push_back(i);
    e.support.resize(static_cast<Eigen::Index>(keep.size()), X.cols());
    e.coef.resize(static_cast<Eigen::Index>(keep.size()));
    for (std::size_t r = 0; r < keep.size(); ++r) {
      e.support.row(static_cast<Eigen::Index>(r)) = X.row(keep[r]);
      e.coef(static_cast<Eigen::Index>(r)) = coef(keep[r]);
    }
    return e;
  }

  nlohmann::json to_json() const
  {
    nlohmann::json j;
    j["gamma"] = gamma;
    j["rho"] = rho;
    j["coef"] = std::vector<double>(coef.data(), coef.data() + coef.size());
    auto& sv = j["support_vectors"] = nlohmann::json::array();
    for (Eigen::Index r = 0; r < support.rows(); ++r)
      sv.push_back(std::vector<double>(support.row(r).data(), support.row(r).data() + support.cols()));
    return j;
  }
};

} // namespace sigfx

#endif // SIGFX_SVM_HPP
