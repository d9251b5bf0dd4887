#pragma once

// The depth-n residual network: activations, classifier, forward recursion
// X_{i+1} = X_i + (1/n) sigma(K_i X_i + b_i), loss and regularizers, and the
// combined objective.

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deeplimit/parallel.hpp"
#include "deeplimit/spaces.hpp"

namespace deeplimit {

// Componentwise scalar nonlinearity with sigma(0) = 0.
struct Activation {
  std::string name;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;
  std::function<double(double)> secondDeriv;  // empty for nonsmooth variants
  double lipschitzConst = 1.0;

  Activation(std::string n, std::function<double(double)> f,
             std::function<double(double)> df,
             std::function<double(double)> d2f, double lip)
      : name(std::move(n)), eval(std::move(f)), deriv(std::move(df)),
        secondDeriv(std::move(d2f)), lipschitzConst(lip) {
    if (eval(0.0) != 0.0)
      throw std::invalid_argument("Activation " + name + ": eval(0) must be 0");
  }

  Vector apply(const Vector& z) const {
    Vector out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = eval(z(i));
    return out;
  }

  Vector applyDeriv(const Vector& z) const {
    Vector out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = deriv(z(i));
    return out;
  }

  static Activation identity() {
    return Activation(
        "identity", [](double x) { return x; }, [](double) { return 1.0; },
        [](double) { return 0.0; }, 1.0);
  }

  static Activation tanh_() {
    return Activation(
        "tanh", [](double x) { return std::tanh(x); },
        [](double x) { double t = std::tanh(x); return 1.0 - t * t; },
        [](double x) { double t = std::tanh(x); return -2.0 * t * (1.0 - t * t); },
        1.0);
  }

  // deriv(0) fixed to 0 (a subgradient choice)
  static Activation relu() {
    return Activation(
        "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x) { return x > 0.0 ? 1.0 : 0.0; }, nullptr, 1.0);
  }

  // x * logistic(x); smooth everywhere, max slope sup|1.0998...|
  static Activation silu() {
    auto logistic = [](double x) { return 1.0 / (1.0 + std::exp(-x)); };
    return Activation(
        "silu", [logistic](double x) { return x * logistic(x); },
        [logistic](double x) {
          const double s = logistic(x);
          return s * (1.0 + x * (1.0 - s));
        },
        [logistic](double x) {
          const double s = logistic(x);
          return s * (1.0 - s) * (2.0 + x * (1.0 - 2.0 * s));
        },
        1.0998652);
  }

  static Activation byName(const std::string& n) {
    if (n == "tanh") return tanh_();
    if (n == "relu") return relu();
    if (n == "silu") return silu();
    if (n == "identity") return identity();
    throw std::invalid_argument("unknown activation: " + n);
  }
};

// Componentwise readout map h.
struct Classifier {
  std::string name;
  std::function<double(double)> eval;
  std::function<double(double)> deriv;

  Vector apply(const Vector& z) const {
    Vector out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = eval(z(i));
    return out;
  }

  Vector applyDeriv(const Vector& z) const {
    Vector out(z.size());
    for (Eigen::Index i = 0; i < z.size(); ++i) out(i) = deriv(z(i));
    return out;
  }

  static Classifier identity() {
    return Classifier{"identity", [](double x) { return x; },
                      [](double) { return 1.0; }};
  }

  static Classifier tanh_() {
    return Classifier{"tanh", [](double x) { return std::tanh(x); },
                      [](double x) { double t = std::tanh(x); return 1.0 - t * t; }};
  }

  static Classifier byName(const std::string& n) {
    if (n == "identity") return identity();
    if (n == "tanh") return tanh_();
    throw std::invalid_argument("unknown classifier: " + n);
  }
};

struct TrainingSet {
  std::vector<Vector> inputs;
  std::vector<Vector> labels;

  int size() const { return static_cast<int>(inputs.size()); }
  int d() const { return inputs.empty() ? 0 : static_cast<int>(inputs[0].size()); }
  int m() const { return labels.empty() ? 0 : static_cast<int>(labels[0].size()); }

  void add(const Vector& x, const Vector& y) {
    if (!inputs.empty() && (x.size() != d() || y.size() != m()))
      throw std::invalid_argument("TrainingSet: inconsistent sample dimensions");
    inputs.push_back(x);
    labels.push_back(y);
  }
};

struct HyperParams {
  double alpha1 = 1.0, alpha2 = 1.0, alpha3 = 1.0, alpha4 = 1.0;
  double tau1 = 1.0, tau2 = 1.0;

  void validate() const {
    for (double v : {alpha1, alpha2, alpha3, alpha4, tau1, tau2})
      if (!(v > 0.0))
        throw std::invalid_argument("HyperParams: weights must be strictly positive");
  }
};

struct Trajectory {
  std::vector<Vector> states;  // X_0..X_n

  int depth() const { return static_cast<int>(states.size()) - 1; }
  const Vector& last() const { return states.back(); }
};

// One residual update with step 1/n.  Both the layer recursion and the
// explicit-Euler solver route through this kernel so that their arithmetic
// is identical operation for operation.
inline Vector residual_step(const Vector& x, const Matrix& Ki, const Matrix& bi,
                            const Activation& sigma, double inv_n) {
  return x + inv_n * sigma.apply(Ki * x + bi.col(0));
}

inline Trajectory forward_pass(const Vector& x, const DiscreteParamPath& K,
                               const DiscreteParamPath& b, const Activation& sigma) {
  if (!K.isMatrixFlavor() || K.rows() != x.size())
    throw std::invalid_argument("forward_pass: K must be d x d");
  if (!b.isVectorFlavor() || b.rows() != x.size())
    throw std::invalid_argument("forward_pass: b must be d-vectors");
  if (K.n() != b.n()) throw std::invalid_argument("forward_pass: depth mismatch");

  const int n = K.n();
  const double inv_n = 1.0 / n;
  Trajectory tr;
  tr.states.reserve(n + 1);
  tr.states.push_back(x);
  for (int i = 0; i < n; ++i) {
    tr.states.push_back(
        residual_step(tr.states.back(), K.values[i], b.values[i], sigma, inv_n));
    if (!tr.states.back().allFinite())
      throw std::runtime_error("forward_pass: non-finite state at layer " +
                               std::to_string(i + 1));
  }
  return tr;
}

// Sum over samples of || h(W X_n + c) - y_s ||^2.
inline double loss_En(const DiscreteParams& theta, const TrainingSet& data,
                      const Activation& sigma, const Classifier& h) {
  theta.validate();
  if (data.size() > 0 && (data.d() != theta.d() || data.m() != theta.m()))
    throw std::invalid_argument("loss_En: data dimensions do not match params");
  std::vector<double> per(data.size());
  parallel_for(data.size(), [&](int s) {
    const Trajectory tr = forward_pass(data.inputs[s], theta.K, theta.b, sigma);
    const Vector z = theta.W * tr.last() + theta.c;
    per[s] = (h.apply(z) - data.labels[s]).squaredNorm();
  });
  double acc = 0.0;
  for (int s = 0; s < data.size(); ++s) acc += per[s];  // fixed order
  return acc;
}

// n * sum of squared consecutive differences + tau * ||first value||^2.
// For n = 1 the difference sum is empty.
inline double reg_R1n(const DiscreteParamPath& K, double tau1) {
  const int n = K.n();
  double acc = 0.0;
  for (int i = 1; i < n; ++i) acc += (K.values[i] - K.values[i - 1]).squaredNorm();
  return n * acc + tau1 * K.values[0].squaredNorm();
}

inline double reg_R2n(const DiscreteParamPath& b, double tau2) {
  return reg_R1n(b, tau2);
}

inline double reg_R3(const Matrix& W) { return W.squaredNorm(); }
inline double reg_R4(const Vector& c) { return c.squaredNorm(); }

struct ObjectiveBreakdown {
  double loss = 0.0;
  double r1 = 0.0, r2 = 0.0, r3 = 0.0, r4 = 0.0;  // already weighted
  double total = 0.0;
};

inline ObjectiveBreakdown objective_En(const DiscreteParams& theta,
                                       const TrainingSet& data,
                                       const HyperParams& hp,
                                       const Activation& sigma,
                                       const Classifier& h) {
  hp.validate();
  ObjectiveBreakdown out;
  out.loss = loss_En(theta, data, sigma, h);
  out.r1 = hp.alpha1 * reg_R1n(theta.K, hp.tau1);
  out.r2 = hp.alpha2 * reg_R2n(theta.b, hp.tau2);
  out.r3 = hp.alpha3 * reg_R3(theta.W);
  out.r4 = hp.alpha4 * reg_R4(theta.c);
  out.total = out.loss + out.r1 + out.r2 + out.r3 + out.r4;
  return out;
}

}  // namespace deeplimit
