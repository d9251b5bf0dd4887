#pragma once

// Deterministic first-order local minimization over flat coordinate vectors,
// plus seeded multistart.  Gradient descent with Armijo backtracking: the
// simplest scheme whose convergence behaviour is predictable, since the
// object of study is the energy landscape rather than solver speed.
//
// Scale note: multiplying the objective by a constant s and dividing
// initialStep by s yields the same accepted iterate trajectory (the Armijo
// test is invariant under that joint rescaling, up to rounding).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <vector>

#include "deeplimit/adjoint.hpp"
#include "deeplimit/continuum.hpp"
#include "deeplimit/model.hpp"
#include "deeplimit/parallel.hpp"
#include "deeplimit/spaces.hpp"

namespace deeplimit {

struct OptimizeConfig {
  int maxIters = 1000;
  double gradTol = 1e-8;
  double armijoC1 = 1e-4;    // sufficient-decrease constant, in (0,1)
  double backtrack = 0.5;    // step shrink factor, in (0,1)
  double initialStep = 1.0;
  double momentum = 0.0;     // 0 disables the deflected direction
  std::uint64_t seed = 0;

  void validate() const {
    if (maxIters < 0) throw std::invalid_argument("OptimizeConfig: maxIters < 0");
    if (!(gradTol > 0)) throw std::invalid_argument("OptimizeConfig: gradTol must be > 0");
    if (!(armijoC1 > 0 && armijoC1 < 1))
      throw std::invalid_argument("OptimizeConfig: armijo constant must lie in (0,1)");
    if (!(backtrack > 0 && backtrack < 1))
      throw std::invalid_argument("OptimizeConfig: backtrack factor must lie in (0,1)");
    if (!(initialStep > 0))
      throw std::invalid_argument("OptimizeConfig: initialStep must be > 0");
    if (momentum < 0 || momentum >= 1)
      throw std::invalid_argument("OptimizeConfig: momentum must lie in [0,1)");
  }
};

struct OptimizeResult {
  Vector thetaStar;
  double finalObjective = 0.0;
  int iterations = 0;                    // accepted steps
  std::vector<double> objectiveHistory;  // one entry per visited iterate
  std::vector<double> gradNormHistory;   // aligned with objectiveHistory
  std::vector<double> stepHistory;       // accepted step sizes
  bool converged = false;                // stopped by gradTol
};

using ObjectiveFn = std::function<double(const Vector&)>;
using GradientFn = std::function<Vector(const Vector&)>;

inline OptimizeResult minimize(const ObjectiveFn& f, const GradientFn& g,
                               const Vector& x0, const OptimizeConfig& cfg) {
  cfg.validate();
  static constexpr int kMaxBacktracks = 60;

  Vector x = x0;
  double fx = f(x);
  if (!std::isfinite(fx)) throw std::runtime_error("minimize: non-finite objective");
  Vector vel = Vector::Zero(x.size());

  OptimizeResult res;
  double start = cfg.initialStep;
  while (true) {
    const Vector gx = g(x);
    if (!gx.allFinite()) throw std::runtime_error("minimize: non-finite gradient");
    const double gn = gx.norm();
    res.objectiveHistory.push_back(fx);
    res.gradNormHistory.push_back(gn);
    if (gn <= cfg.gradTol) {
      res.converged = true;
      break;
    }
    if (res.iterations >= cfg.maxIters) break;

    Vector p = -gx;
    if (cfg.momentum > 0.0) {
      const Vector cand = cfg.momentum * vel - gx;
      if (cand.dot(gx) < 0.0) p = cand;  // keep only genuine descent directions
    }
    const double slope = gx.dot(p);  // < 0

    double t = start;
    bool accepted = false;
    for (int bt = 0; bt <= kMaxBacktracks; ++bt) {
      const Vector trial = x + t * p;
      const double ft = f(trial);
      if (std::isfinite(ft) && ft <= fx + cfg.armijoC1 * t * slope) {
        vel = t * p;
        x = trial;
        fx = ft;
        accepted = true;
        break;
      }
      t *= cfg.backtrack;
    }
    if (!accepted)
      throw std::runtime_error("minimize: line search failed after 60 backtracks");
    res.stepHistory.push_back(t);
    ++res.iterations;
    start = std::min(cfg.initialStep, t / cfg.backtrack);  // warm start
  }

  res.thetaStar = std::move(x);
  res.finalObjective = fx;
  return res;
}

using InitSampler = std::function<Vector(std::mt19937_64&)>;

// Zero anchor plus uniform noise; the regularizers are centred at zero.
inline InitSampler default_init_sampler(int dim, double amplitude = 0.1) {
  return [dim, amplitude](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-amplitude, amplitude);
    Vector x(dim);
    for (int i = 0; i < dim; ++i) x(i) = u(rng);
    return x;
  };
}

struct MultistartResult {
  OptimizeResult best;
  int bestIndex = -1;
  std::vector<OptimizeResult> runs;
};

// Seeded local runs from sampled starts; lowest final objective wins, ties
// broken by run index.  Callbacks must be pure (runs execute concurrently).
inline MultistartResult multistart(const ObjectiveFn& f, const GradientFn& g,
                                   const InitSampler& sampler, int count,
                                   const OptimizeConfig& cfg) {
  cfg.validate();
  if (count < 1) throw std::invalid_argument("multistart: count must be >= 1");

  std::mt19937_64 master(cfg.seed);
  std::vector<std::uint64_t> seeds(count);
  for (auto& s : seeds) s = master();

  MultistartResult out;
  out.runs.resize(count);
  parallel_for(count, [&](int k) {
    std::mt19937_64 rng(seeds[k]);
    out.runs[k] = minimize(f, g, sampler(rng), cfg);
  });
  out.bestIndex = 0;
  for (int k = 1; k < count; ++k)
    if (out.runs[k].finalObjective < out.runs[out.bestIndex].finalObjective)
      out.bestIndex = k;
  out.best = out.runs[out.bestIndex];
  return out;
}

struct Problem {
  ObjectiveFn f;
  GradientFn g;
};

// Flat-coordinate adapters.  `like` fixes the shapes; its values are unused.
inline Problem make_discrete_problem(const DiscreteParams& like, const TrainingSet& data,
                                     const HyperParams& hp, const Activation& sigma,
                                     const Classifier& h) {
  like.validate();
  hp.validate();
  return Problem{
      [=](const Vector& v) {
        return objective_En(unflatten_like(like, v), data, hp, sigma, h).total;
      },
      [=](const Vector& v) {
        return flatten(gradient_En(unflatten_like(like, v), data, hp, sigma, h));
      }};
}

inline Problem make_continuum_problem(const ContinuumParams& like,
                                      const TrainingSet& data, const HyperParams& hp,
                                      const Activation& sigma, const Classifier& h,
                                      const OdeSolveConfig& ode) {
  like.validate();
  hp.validate();
  return Problem{
      [=](const Vector& v) {
        return objective_Einf(unflatten_like(like, v), data, hp, sigma, h, ode).total;
      },
      [=](const Vector& v) {
        return flatten(gradient_Einf(unflatten_like(like, v), data, hp, sigma, h, ode));
      }};
}

}  // namespace deeplimit
