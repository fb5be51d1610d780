#ifndef SIGFX_MLP_HPP
#define SIGFX_MLP_HPP

#include "sigfx/common.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace sigfx {

enum class MlpLoss { MeanSquared, BinaryCrossEntropy };

struct MlpOptions {
  int hidden = 100;
  double learning_rate = 1e-3;
  int epochs = 200;
  int batch_size = 32;
  // Adam moments
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-7;
};

/// One hidden ReLU layer and a single linear output unit. For the
/// cross-entropy loss the output is a logit and the probability is its sigmoid.
class Mlp {
public:
  Mlp() = default;

  Mlp(int inputs, int hidden, std::uint64_t seed) : W1_(hidden, inputs), b1_(Vector::Zero(hidden)), w2_(hidden)
  {
    if (inputs < 1 || hidden < 1)
      throw Error("Mlp: layer sizes must be positive");
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    // Normal initialisation scaled by fan-in (He for the ReLU layer).
    const double s1 = std::sqrt(2.0 / inputs);
    const double s2 = std::sqrt(1.0 / hidden);
    for (Eigen::Index r = 0; r < W1_.rows(); ++r)
      for (Eigen::Index c = 0; c < W1_.cols(); ++c)
        W1_(r, c) = s1 * normal(rng);
    for (Eigen::Index r = 0; r < w2_.size(); ++r)
      w2_(r) = s2 * normal(rng);
  }

  int inputs() const noexcept { return static_cast<int>(W1_.cols()); }
  int hidden() const noexcept { return static_cast<int>(W1_.rows()); }
  Eigen::Index parameter_count() const noexcept { return W1_.size() + b1_.size() + w2_.size() + 1; }

  /// Hidden-layer input before the ReLU, one row per sample.
  Matrix pre_activation(const Matrix& X) const { return (X * W1_.transpose()).rowwise() + b1_.transpose(); }

  /// Raw network output (regression value or logit) for each row of X.
  Vector output(const Matrix& X) const
  {
    Matrix H = (X * W1_.transpose()).rowwise() + b1_.transpose();
    H = H.cwiseMax(0.0);
    return (H * w2_).array() + b2_;
  }

  /// Mean loss over the rows of (X, y); fills `grad` in parameters() layout.
  double loss_and_gradient(const Matrix& X, const Vector& y, MlpLoss loss, Vector& grad) const
  {
    const auto m = static_cast<double>(X.rows());
    const Matrix pre = (X * W1_.transpose()).rowwise() + b1_.transpose();
    const Matrix H = pre.cwiseMax(0.0);
    const Vector out = (H * w2_).array() + b2_;

    Vector dout(out.size());
    double value = 0.0;
    if (loss == MlpLoss::MeanSquared) {
      const Vector err = out - y;
      value = err.squaredNorm() / m;
      dout = 2.0 * err / m;
    } else {
      for (Eigen::Index i = 0; i < out.size(); ++i) {
        const double z = out(i);
        // log(1 + e^z) - y z, evaluated without overflow.
        const double softplus = z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
        value += softplus - y(i) * z;
        dout(i) = (sigmoid(z) - y(i)) / m;
      }
      value /= m;
    }

    Matrix dH = dout * w2_.transpose();
    dH.array() *= (pre.array() > 0.0).cast<double>();
    const Matrix gW1 = dH.transpose() * X;
    const Vector gb1 = dH.colwise().sum().transpose();
    const Vector gw2 = H.transpose() * dout;

    grad.resize(parameter_count());
    Eigen::Index o = 0;
    grad.segment(o, gW1.size()) = Eigen::Map<const Vector>(gW1.data(), gW1.size());
    o += gW1.size();
    grad.segment(o, gb1.size()) = gb1;
    o += gb1.size();
    grad.segment(o, gw2.size()) = gw2;
    o += gw2.size();
    grad(o) = dout.sum();
    return value;
  }

  double loss(const Matrix& X, const Vector& y, MlpLoss loss) const
  {
    Vector g;
    return loss_and_gradient(X, y, loss, g);
  }

  /// Flat parameter vector: W1 (row-major), b1, w2, b2.
  Vector parameters() const
  {
    Vector v(parameter_count());
    Eigen::Index o = 0;
    v.segment(o, W1_.size()) = Eigen::Map<const Vector>(W1_.data(), W1_.size());
    o += W1_.size();
    v.segment(o, b1_.size()) = b1_;
    o += b1_.size();
    v.segment(o, w2_.size()) = w2_;
    o += w2_.size();
    v(o) = b2_;
    return v;
  }

  void set_parameters(const Vector& v)
  {
    if (v.size() != parameter_count())
      throw Error("Mlp::set_parameters: size mismatch");
    Eigen::Index o = 0;
    Eigen::Map<Vector>(W1_.data(), W1_.size()) = v.segment(o, W1_.size());
    o += W1_.size();
    b1_ = v.segment(o, b1_.size());
    o += b1_.size();
    w2_ = v.segment(o, w2_.size());
    o += w2_.size();
    b2_ = v(o);
  }

  static double sigmoid(double z) noexcept
  {
    if (z >= 0) {
      const double e = std::exp(-z);
      return 1.0 / (1.0 + e);
    }
    const double e = std::exp(z);
    return e / (1.0 + e);
  }

  nlohmann::json to_json() const
  {
    const auto p = parameters();
    return {{"inputs", inputs()},
            {"hidden", hidden()},
            {"activation", "relu"},
            {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
  }

private:
  Matrix W1_; // hidden x inputs
  Vector b1_;
  Vector w2_;
  double b2_ = 0.0;
};

struct MlpTrainingResult {
  Mlp net;
  /// Mean training loss after each epoch, evaluated on the full training set.
  std::vector<double> epoch_loss;
};

/// Mini-batch training with Adam; samples are reshuffled every epoch from a
/// generator seeded with `seed`. No early stopping.
inline MlpTrainingResult train_mlp(const Matrix& X, const Vector& y, MlpLoss loss, const MlpOptions& opt,
                                   std::uint64_t seed, bool record_loss = false)
{
  if (X.rows() != y.size() || X.rows() == 0)
    throw Error("train_mlp: X and y must be non-empty and agree in length");
  if (opt.epochs < 0 || opt.batch_size < 1 || !(opt.learning_rate > 0))
    throw Error("train_mlp: invalid options");
  require_finite(X, "train_mlp");
  require_finite(y, "train_mlp");

  MlpTrainingResult res{Mlp(static_cast<int>(X.cols()), opt.hidden, derive_seed(seed, "init")), {}};
  Mlp& net = res.net;
  Vector theta = net.parameters();
  Vector m1 = Vector::Zero(theta.size());
  Vector m2 = Vector::Zero(theta.size());
  Vector grad;

  std::mt19937_64 rng(derive_seed(seed, "shuffle"));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto n = static_cast<Eigen::Index>(order.size());
  Matrix xb;
  Vector yb;
  long step = 0;
  for (int epoch = 0; epoch < opt.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Eigen::Index start = 0; start < n; start += opt.batch_size) {
      const Eigen::Index len = std::min<Eigen::Index>(opt.batch_size, n - start);
      xb.resize(len, X.cols());
      yb.resize(len);
      for (Eigen::Index r = 0; r < len; ++r) {
        const auto src = order[static_cast<std::size_t>(start + r)];
        xb.row(r) = X.row(src);
        yb(r) = y(src);
      }
      net.loss_and_gradient(xb, yb, loss, grad);
      ++step;
      m1 = opt.beta1 * m1 + (1.0 - opt.beta1) * grad;
      m2 = opt.beta2 * m2 + (1.0 - opt.beta2) * grad.cwiseProduct(grad);
      const double t = static_cast<double>(step);
      const double lr_t =
          opt.learning_rate * std::sqrt(1.0 - std::pow(opt.beta2, t)) / (1.0 - std::pow(opt.beta1, t));
      theta.array() -= lr_t * m1.array() / (m2.array().sqrt() + opt.epsilon);
      net.set_parameters(theta);
    }
    if (record_loss)
      res.epoch_loss.push_back(net.loss(X, y, loss));
  }
  return res;
}

} // namespace sigfx

#endif // SIGFX_MLP_HPP
