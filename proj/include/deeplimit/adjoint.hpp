#pragma once

// Exact derivatives of the depth-n objective.  Directional derivatives come
// from the forward product formula
//   D = (1/n) sum_i [ prod_{j>i} (Id + (1/n) diag(sdot_j) K_j) ]
//                 diag(sdot_i) (L_i X_i + beta_i),
// full gradients from a hand-written adjoint sweep.  The two derivations are
// independent and cross-check each other; no autodiff library is involved.

#include <functional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "deeplimit/fit.hpp"
#include "deeplimit/model.hpp"
#include "deeplimit/parallel.hpp"
#include "deeplimit/spaces.hpp"

namespace deeplimit {

// Perturbation directions (L, beta, V, gamma) share the parameter layout,
// as do gradients; the aliases keep that fact in the type system.
using PerturbationSet = DiscreteParams;
using GradientSet = DiscreteParams;

// Derivative of the final state X_n with respect to a parameter
// perturbation, evaluated by the explicit product formula.  Row scaling
// diag(a) M commutes with the running matrix product, so the suffix
// products can be accumulated right to left in one backward pass.
inline Vector state_jvp(const DiscreteParams& theta, const PerturbationSet& xi,
                        const Vector& x, const Activation& sigma) {
  theta.validate();
  if (!xi.K.sameShape(theta.K) || !xi.b.sameShape(theta.b))
    throw std::invalid_argument("state_jvp: perturbation shape mismatch");

  const int n = theta.n();
  const int d = theta.d();
  const double inv_n = 1.0 / n;
  const Trajectory tr = forward_pass(x, theta.K, theta.b, sigma);

  Matrix suffix = Matrix::Identity(d, d);  // prod over j > i, built downward
  Vector acc = Vector::Zero(d);
  for (int i = n - 1; i >= 0; --i) {
    const Vector a = theta.K.values[i] * tr.states[i] + theta.b.values[i].col(0);
    const Vector sdot = sigma.applyDeriv(a);
    const Vector load =
        xi.K.values[i] * tr.states[i] + xi.b.values[i].col(0);
    acc += suffix * sdot.cwiseProduct(load);
    suffix *= Matrix::Identity(d, d) + inv_n * (sdot.asDiagonal() * theta.K.values[i]);
  }
  return inv_n * acc;
}

// Directional derivative of the full objective at theta in direction xi.
inline double objective_directional(const DiscreteParams& theta,
                                    const PerturbationSet& xi,
                                    const TrainingSet& data,
                                    const HyperParams& hp,
                                    const Activation& sigma, const Classifier& h) {
  hp.validate();
  const int n = theta.n();

  std::vector<double> per(data.size());
  parallel_for(data.size(), [&](int s) {
    const Trajectory tr = forward_pass(data.inputs[s], theta.K, theta.b, sigma);
    const Vector z = theta.W * tr.last() + theta.c;
    const Vector resid = h.apply(z) - data.labels[s];
    const Vector jvp = state_jvp(theta, xi, data.inputs[s], sigma);
    const Vector zdot = theta.W * jvp + xi.W * tr.last() + xi.c;
    per[s] = 2.0 * resid.cwiseProduct(h.applyDeriv(z)).dot(zdot);
  });
  double dir = 0.0;
  for (int s = 0; s < data.size(); ++s) dir += per[s];

  double r1 = 2.0 * hp.tau1 * frob_inner(theta.K.values[0], xi.K.values[0]);
  double r2 = 2.0 * hp.tau2 * frob_inner(theta.b.values[0], xi.b.values[0]);
  for (int i = 1; i < n; ++i) {
    r1 += 2.0 * n *
          frob_inner(theta.K.values[i] - theta.K.values[i - 1],
                     xi.K.values[i] - xi.K.values[i - 1]);
    r2 += 2.0 * n *
          frob_inner(theta.b.values[i] - theta.b.values[i - 1],
                     xi.b.values[i] - xi.b.values[i - 1]);
  }
  dir += hp.alpha1 * r1 + hp.alpha2 * r2;
  dir += hp.alpha3 * 2.0 * frob_inner(theta.W, xi.W);
  dir += hp.alpha4 * 2.0 * theta.c.dot(xi.c);
  return dir;
}

// Reverse-mode gradient: <gradient, xi> equals objective_directional for
// every xi, at a cost independent of the number of directions.
inline GradientSet gradient_En(const DiscreteParams& theta, const TrainingSet& data,
                               const HyperParams& hp, const Activation& sigma,
                               const Classifier& h) {
  theta.validate();
  hp.validate();
  const int n = theta.n();
  const int d = theta.d();
  const int m = theta.m();
  const double inv_n = 1.0 / n;

  std::vector<GradientSet> per(data.size(), GradientSet::zeros(n, d, m));
  parallel_for(data.size(), [&](int s) {
    GradientSet& g = per[s];
    const Trajectory tr = forward_pass(data.inputs[s], theta.K, theta.b, sigma);
    const Vector z = theta.W * tr.last() + theta.c;
    const Vector w = 2.0 * (h.apply(z) - data.labels[s]).cwiseProduct(h.applyDeriv(z));
    g.W = w * tr.last().transpose();
    g.c = w;
    Vector lam = theta.W.transpose() * w;  // adjoint of X_i, backwards
    for (int i = n - 1; i >= 0; --i) {
      const Vector a = theta.K.values[i] * tr.states[i] + theta.b.values[i].col(0);
      const Vector u = sigma.applyDeriv(a).cwiseProduct(lam);
      g.K.values[i] = inv_n * (u * tr.states[i].transpose());
      g.b.values[i] = inv_n * u;
      lam += inv_n * (theta.K.values[i].transpose() * u);
    }
  });

  GradientSet grad = GradientSet::zeros(n, d, m);
  for (int s = 0; s < data.size(); ++s) grad = axpy(grad, 1.0, per[s]);

  // regularizer parts: difference quadratic plus the first-cell penalty
  for (int i = 0; i < n; ++i) {
    Matrix gK = Matrix::Zero(d, d);
    Matrix gb = Matrix::Zero(d, 1);
    if (i >= 1) {
      gK += 2.0 * n * (theta.K.values[i] - theta.K.values[i - 1]);
      gb += 2.0 * n * (theta.b.values[i] - theta.b.values[i - 1]);
    }
    if (i + 1 < n) {
      gK -= 2.0 * n * (theta.K.values[i + 1] - theta.K.values[i]);
      gb -= 2.0 * n * (theta.b.values[i + 1] - theta.b.values[i]);
    }
    grad.K.values[i] += hp.alpha1 * gK;
    grad.b.values[i] += hp.alpha2 * gb;
  }
  grad.K.values[0] += hp.alpha1 * 2.0 * hp.tau1 * theta.K.values[0];
  grad.b.values[0] += hp.alpha2 * 2.0 * hp.tau2 * theta.b.values[0];
  grad.W += hp.alpha3 * 2.0 * theta.W;
  grad.c += hp.alpha4 * 2.0 * theta.c;
  return grad;
}

struct FdReport {
  std::vector<std::pair<double, double>> errors;  // (r, |fd - predicted|)
  PowerLawFit fit;                                // slope ~ 2 for a correct derivative
};

// Central-difference check along one line: phi(r) is the objective at
// theta + r * xi, predicted the analytic directional value.
inline FdReport fd_check_line(const std::function<double(double)>& phi,
                              double predicted, const std::vector<double>& steps) {
  for (std::size_t k = 0; k + 1 < steps.size(); ++k)
    if (!(steps[k] > steps[k + 1]) || !(steps[k + 1] > 0.0))
      throw std::invalid_argument("fd_check: steps must be positive, decreasing");
  FdReport rep;
  for (double r : steps) {
    const double fd = (phi(r) - phi(-r)) / (2.0 * r);
    rep.errors.emplace_back(r, std::abs(fd - predicted));
  }
  rep.fit = loglog_fit(rep.errors);
  return rep;
}

inline FdReport fd_check(const DiscreteParams& theta, const PerturbationSet& xi,
                         const TrainingSet& data, const HyperParams& hp,
                         const Activation& sigma, const Classifier& h,
                         const std::vector<double>& steps) {
  const double predicted = objective_directional(theta, xi, data, hp, sigma, h);
  auto phi = [&](double r) {
    return objective_En(axpy(theta, r, xi), data, hp, sigma, h).total;
  };
  return fd_check_line(phi, predicted, steps);
}

}  // namespace deeplimit
