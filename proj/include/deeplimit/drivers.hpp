#pragma once

// Command dispatch: each subcommand runs one experiment driver and writes a
// CSV of records plus a JSON manifest into the output directory.  Outputs are
// deterministic for a fixed config + seed; wall-clock timings go to a separate
// timings.json that is excluded from that guarantee.

#include <chrono>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deeplimit/adjoint.hpp"
#include "deeplimit/config.hpp"
#include "deeplimit/continuum.hpp"
#include "deeplimit/harness.hpp"
#include "deeplimit/io.hpp"
#include "deeplimit/model.hpp"
#include "deeplimit/optimize.hpp"
#include "deeplimit/spaces.hpp"

namespace deeplimit {

namespace detail {

inline double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::string flag(bool v) { return v ? "1" : "0"; }

// Collects named output files, then writes them together with the manifest.
class OutputBundle {
 public:
  OutputBundle(std::string command, const RunConfig& cfg)
      : command_(std::move(command)), cfg_(cfg), t0_(std::chrono::steady_clock::now()) {}

  void add(const std::string& name, const std::string& content) {
    files_.emplace_back(name, content);
  }

  void addTable(const std::string& name, const CsvTable& table) {
    add(name, table.serialize());
  }

  void phase(const std::string& name) {
    timings_.emplace_back(name, seconds_since(t0_));
    t0_ = std::chrono::steady_clock::now();
  }

  void writeAll() {
    Json manifest;
    manifest["command"] = command_;
    manifest["experiment"] = cfg_.experiment;
    manifest["config"] = cfg_.echo;
    manifest["configHash"] = cfg_.hash;
    manifest["seed"] = cfg_.seed;
    manifest["versions"] = {
        {"artifact", "0.1.0"},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                      std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__}};
    Json outputs = Json::array();
    for (const auto& [name, content] : files_) {
      outputs.push_back({{"file", name}, {"hash", hex64(fnv1a64(content))}});
      write_text_file(cfg_.outDir + "/" + name, content);
    }
    manifest["outputs"] = std::move(outputs);
    manifest["timingsFile"] = "timings.json";
    write_text_file(cfg_.outDir + "/manifest.json", manifest.dump(2) + "\n");

    Json timings;
    timings["command"] = command_;
    Json phases = Json::array();
    for (const auto& [name, sec] : timings_)
      phases.push_back({{"phase", name}, {"seconds", sec}});
    timings["phases"] = std::move(phases);
    write_text_file(cfg_.outDir + "/timings.json", timings.dump(2) + "\n");
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::chrono::steady_clock::time_point t0_;
  std::vector<std::pair<std::string, std::string>> files_;
  std::vector<std::pair<std::string, double>> timings_;
};

template <class Params>
Params random_params_like(const Params& like, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Vector v(flat_size(like));
  for (int k = 0; k < v.size(); ++k) v(k) = u(rng);
  return unflatten_like(like, v);
}

// Nodes sampled from a one-harmonic series per entry, so the path has O(1)
// derivatives and finite-difference truncation constants stay moderate.
template <class Params>
Params random_smooth_params(const Params& like, std::mt19937_64& rng, double amplitude) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  Params out = like;
  const int blocks = static_cast<int>(out.K.values.size());
  const double pi = std::acos(-1.0);
  auto fill_series = [&](std::vector<Matrix>& values) {
    const int rows = static_cast<int>(values[0].rows());
    const int cols = static_cast<int>(values[0].cols());
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) {
        const double a = u(rng), cs = u(rng), sn = u(rng);
        for (int j = 0; j < blocks; ++j) {
          const double t = blocks == 1 ? 0.0 : static_cast<double>(j) / (blocks - 1);
          values[j](r, c) = a + cs * std::cos(2.0 * pi * t) + sn * std::sin(2.0 * pi * t);
        }
      }
  };
  fill_series(out.K.values);
  fill_series(out.b.values);
  for (int r = 0; r < out.W.rows(); ++r)
    for (int c = 0; c < out.W.cols(); ++c) out.W(r, c) = u(rng);
  for (int r = 0; r < out.c.size(); ++r) out.c(r) = u(rng);
  return out;
}

inline TrainingSet random_training(std::mt19937_64& rng, int samples, int d, int m,
                                   double amplitude = 1.0) {
  std::uniform_real_distribution<double> u(-amplitude, amplitude);
  TrainingSet data;
  for (int s = 0; s < samples; ++s) {
    Vector x(d), y(m);
    for (int k = 0; k < d; ++k) x(k) = u(rng);
    for (int k = 0; k < m; ++k) y(k) = u(rng);
    data.add(x, y);
  }
  return data;
}

inline TrainingSet require_data(const RunConfig& cfg, const char* command) {
  if (cfg.dataPath.empty())
    throw std::runtime_error(std::string(command) + ": config key 'data' is required");
  return load_training_csv(cfg.dataPath);
}

inline std::vector<std::string> breakdown_cells(const ObjectiveBreakdown& ob) {
  return {format_double(ob.loss), format_double(ob.r1), format_double(ob.r2),
          format_double(ob.r3),   format_double(ob.r4), format_double(ob.total)};
}

inline void append(std::vector<std::string>& row, std::vector<std::string> tail) {
  for (auto& cell : tail) row.push_back(std::move(cell));
}

}  // namespace detail

inline int run_train_discrete(const RunConfig& cfg) {
  detail::OutputBundle out("train-discrete", cfg);
  const TrainingSet data = detail::require_data(cfg, "train-discrete");
  const Activation sigma = Activation::byName(cfg.sigma);
  const Classifier h = Classifier::byName(cfg.classifier);
  const auto like = DiscreteParams::zeros(cfg.train.n, data.d(), data.m());
  const auto prob = make_discrete_problem(like, data, cfg.hyper, sigma, h);
  OptimizeConfig opt = cfg.opt;
  opt.seed = cfg.seed;
  out.phase("setup");

  const auto ms = multistart(prob.f, prob.g, default_init_sampler(flat_size(like)),
                             cfg.train.multistart, opt);
  const auto star = unflatten_like(like, ms.best.thetaStar);
  const auto ob = objective_En(star, data, cfg.hyper, sigma, h);
  out.phase("optimize");

  out.addTable("trace.csv", trace_table(ms.best));
  out.add("params.json", params_to_json(star).dump(2) + "\n");
  CsvTable summary({"n", "samples", "d", "m", "converged", "iterations", "gradNorm",
                    "bestStart", "loss", "r1", "r2", "r3", "r4", "total"});
  std::vector<std::string> row{
      std::to_string(cfg.train.n),     std::to_string(data.size()),
      std::to_string(data.d()),        std::to_string(data.m()),
      detail::flag(ms.best.converged), std::to_string(ms.best.iterations),
      format_double(ms.best.gradNormHistory.back()), std::to_string(ms.bestIndex)};
  detail::append(row, detail::breakdown_cells(ob));
  summary.addRow(row);
  out.addTable("summary.csv", summary);
  out.writeAll();
  return 0;
}

inline int run_train_continuum(const RunConfig& cfg) {
  detail::OutputBundle out("train-continuum", cfg);
  const TrainingSet data = detail::require_data(cfg, "train-continuum");
  const Activation sigma = Activation::byName(cfg.sigma);
  const Classifier h = Classifier::byName(cfg.classifier);
  const OdeSolveConfig ode = solver_to_ode(cfg.solver);
  const auto like = ContinuumParams::zeros(cfg.train.nodes, data.d(), data.m());
  const auto prob = make_continuum_problem(like, data, cfg.hyper, sigma, h, ode);
  OptimizeConfig opt = cfg.opt;
  opt.seed = cfg.seed;
  out.phase("setup");

  const auto ms = multistart(prob.f, prob.g, default_init_sampler(flat_size(like)),
                             cfg.train.multistart, opt);
  const auto star = unflatten_like(like, ms.best.thetaStar);
  const auto ob = objective_Einf(star, data, cfg.hyper, sigma, h, ode);
  out.phase("optimize");

  out.addTable("trace.csv", trace_table(ms.best));
  out.add("params.json", params_to_json(star).dump(2) + "\n");
  CsvTable summary({"nodes", "samples", "d", "m", "converged", "iterations", "gradNorm",
                    "bestStart", "loss", "r1", "r2", "r3", "r4", "total"});
  std::vector<std::string> row{
      std::to_string(cfg.train.nodes), std::to_string(data.size()),
      std::to_string(data.d()),        std::to_string(data.m()),
      detail::flag(ms.best.converged), std::to_string(ms.best.iterations),
      format_double(ms.best.gradNormHistory.back()), std::to_string(ms.bestIndex)};
  detail::append(row, detail::breakdown_cells(ob));
  summary.addRow(row);
  out.addTable("summary.csv", summary);
  out.writeAll();
  return 0;
}

inline int run_ladder(const RunConfig& cfg) {
  detail::OutputBundle out("ladder", cfg);
  LadderConfig lc;
  lc.nValues = cfg.ladder.nValues;
  lc.continuumNodes = cfg.ladder.continuumNodes;
  lc.data = detail::require_data(cfg, "ladder");
  lc.hyper = cfg.hyper;
  lc.sigma = cfg.sigma;
  lc.classifier = cfg.classifier;
  lc.opt = cfg.opt;
  lc.opt.seed = cfg.seed;
  lc.warmStart = cfg.ladder.warmStart;
  out.phase("setup");

  const LadderOutcome outcome = ladder_run(lc);
  out.phase("ladder");

  CsvTable rows({"n", "ok", "iterations", "gradNorm", "loss", "r1", "r2", "r3", "r4",
                 "total", "continuumTotal", "distance", "smoothness", "note"});
  for (const auto& r : outcome.rows) {
    std::vector<std::string> row{std::to_string(r.n), detail::flag(r.ok),
                                 std::to_string(r.iterations), format_double(r.gradNorm)};
    detail::append(row, detail::breakdown_cells(r.discrete));
    detail::append(row, {format_double(r.continuumObjective), format_double(r.distance),
                         format_double(r.smoothness), r.note});
    rows.addRow(row);
  }
  out.addTable("ladder.csv", rows);

  CsvTable cont({"nodes", "ok", "iterations", "gradNorm", "loss", "r1", "r2", "r3", "r4",
                 "total", "note"});
  std::vector<std::string> crow{std::to_string(cfg.ladder.continuumNodes),
                                detail::flag(outcome.continuumOk),
                                std::to_string(outcome.continuumIterations),
                                format_double(outcome.continuumGradNorm)};
  detail::append(crow, detail::breakdown_cells(outcome.continuum));
  crow.push_back(outcome.continuumNote);
  cont.addRow(crow);
  out.addTable("continuum.csv", cont);

  if (outcome.continuumOk)
    out.add("params_continuum.json", params_to_json(outcome.limitCandidate).dump(2) + "\n");

  CsvTable fitTable({"slope", "intercept", "r2", "used", "dropped", "note"});
  std::vector<std::pair<double, double>> pairs;
  for (const auto& r : outcome.rows)
    if (r.ok && outcome.continuumOk) pairs.emplace_back(r.n, r.distance);
  try {
    const PowerLawFit fit = rate_fit(pairs);
    fitTable.addRow({format_double(fit.slope), format_double(fit.intercept),
                     format_double(fit.r2), std::to_string(fit.used),
                     std::to_string(fit.dropped), ""});
  } catch (const std::exception& e) {
    fitTable.addRow({"", "", "", "0", std::to_string(pairs.size()), e.what()});
  }
  out.addTable("ratefit.csv", fitTable);
  out.writeAll();
  return 0;
}

inline int run_euler_bound(const RunConfig& cfg) {
  detail::OutputBundle out("euler-bound", cfg);
  const Activation sigma = Activation::byName(cfg.sigma);
  const int d = cfg.check.d;
  const auto K = path_from_family(cfg.pathK.family, cfg.pathNodes, d, d,
                                  cfg.pathK.amplitude, cfg.pathK.frequency);
  const auto b = path_from_family(cfg.pathB.family, cfg.pathNodes, d, 1,
                                  cfg.pathB.amplitude, cfg.pathB.frequency);
  const Vector x = Vector::Ones(d);
  out.phase("setup");

  CsvTable rows({"n", "i", "lhs", "rhs", "holds"});
  CsvTable summary(
      {"n", "deltaN", "remainder", "driver", "kSup", "xSup", "supLhs", "allHold"});
  for (int n : cfg.check.nValues) {
    const bool nodal = cfg.check.restriction == "nodal";
    const auto Kn = nodal ? restrict_nodal(K, n) : restrict_cell_average(K, n);
    const auto bn = nodal ? restrict_nodal(b, n) : restrict_cell_average(b, n);
    const auto rep =
        euler_bound_check(K, b, Kn, bn, x, sigma, {OdeMethod::ExplicitEuler, n});
    double supLhs = 0.0;
    for (const auto& r : rep.rows) {
      supLhs = std::max(supLhs, r.lhs);
      rows.addRow({std::to_string(n), std::to_string(r.i), format_double(r.lhs),
                   format_double(r.rhs), detail::flag(r.holds)});
    }
    summary.addRow({std::to_string(n), format_double(rep.deltaN),
                    format_double(rep.remainder), format_double(rep.driver),
                    format_double(rep.kSup), format_double(rep.xSup),
                    format_double(supLhs), detail::flag(rep.allHold)});
  }
  out.phase("check");
  out.addTable("euler_rows.csv", rows);
  out.addTable("euler_summary.csv", summary);
  out.writeAll();
  return 0;
}

inline int run_grad_check(const RunConfig& cfg) {
  detail::OutputBundle out("grad-check", cfg);
  const Activation sigma = Activation::byName(cfg.sigma);
  const Classifier h = Classifier::byName(cfg.classifier);
  std::mt19937_64 rng(cfg.seed);
  // Truncation-dominated ladder: central differences show their r^2 decay
  // here instead of the roundoff floor that tiny steps would hit.
  const std::vector<double> steps{0.2, 0.1, 0.05, 0.025, 0.0125};
  out.phase("setup");

  CsvTable table({"instance", "flavor", "predicted", "gradVsDirectional", "fdRel",
                  "fdSlope", "fdR2"});
  for (int inst = 0; inst < cfg.check.instances; ++inst) {
    const auto data =
        detail::random_training(rng, cfg.check.samples, cfg.check.d, cfg.check.m);
    if (cfg.check.flavor == "discrete") {
      const auto like = DiscreteParams::zeros(cfg.train.n, cfg.check.d, cfg.check.m);
      const auto theta = detail::random_params_like(like, rng, 0.8);
      const auto xi = detail::random_params_like(like, rng, 1.0);
      const double directional =
          objective_directional(theta, xi, data, cfg.hyper, sigma, h);
      const double viaGrad = dot(gradient_En(theta, data, cfg.hyper, sigma, h), xi);
      const auto rep = fd_check(theta, xi, data, cfg.hyper, sigma, h, steps);
      const double fdRel =
          rep.errors.back().second / std::max(1.0, std::abs(directional));
      table.addRow({std::to_string(inst), "discrete", format_double(directional),
                    format_double(detail::rel_err(viaGrad, directional)),
                    format_double(fdRel), format_double(rep.fit.slope),
                    format_double(rep.fit.r2)});
    } else {
      const OdeSolveConfig ode = solver_to_ode(cfg.solver);
      const auto like = ContinuumParams::zeros(cfg.train.nodes, cfg.check.d, cfg.check.m);
      const auto theta = detail::random_smooth_params(like, rng, 0.5);
      const auto xi = detail::random_smooth_params(like, rng, 0.5);
      const double gateaux = gateaux_objective(theta, xi, data, cfg.hyper, sigma, h, ode);
      const double viaGrad = dot(gradient_Einf(theta, data, cfg.hyper, sigma, h, ode), xi);
      auto phi = [&](double r) {
        return objective_Einf(axpy(theta, r, xi), data, cfg.hyper, sigma, h, ode).total;
      };
      const auto rep = fd_check_line(phi, gateaux, steps);
      const double fdRel = rep.errors.back().second / std::max(1.0, std::abs(gateaux));
      table.addRow({std::to_string(inst), "continuum", format_double(gateaux),
                    format_double(detail::rel_err(viaGrad, gateaux)),
                    format_double(fdRel), format_double(rep.fit.slope),
                    format_double(rep.fit.r2)});
    }
  }
  out.phase("check");
  out.addTable("gradcheck.csv", table);
  out.writeAll();
  return 0;
}

inline int run_recovery_check(const RunConfig& cfg) {
  detail::OutputBundle out("recovery-check", cfg);
  const int d = cfg.check.d;
  const auto K = path_from_family(cfg.pathK.family, cfg.pathNodes, d, d,
                                  cfg.pathK.amplitude, cfg.pathK.frequency);
  out.phase("setup");
  const auto rows = recovery_check(K, cfg.hyper.tau1, cfg.check.nValues);
  out.phase("check");

  CsvTable table(
      {"n", "discreteEnergy", "continuumEnergy", "d1", "holderBound", "withinHolder"});
  for (const auto& r : rows)
    table.addRow({std::to_string(r.n), format_double(r.discreteEnergy),
                  format_double(r.continuumEnergy), format_double(r.d1),
                  format_double(r.holderBound), detail::flag(r.withinHolder)});
  out.addTable("recovery.csv", table);
  out.writeAll();
  return 0;
}

inline int run_morrey_sweep(const RunConfig& cfg) {
  detail::OutputBundle out("morrey-sweep", cfg);
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> val(-2.0, 2.0);
  out.phase("setup");

  CsvTable table({"kind", "index", "n", "d", "lhs", "rhs", "holds"});
  auto report = [&table](const char* kind, int index, const DiscreteParamPath& f) {
    const auto rep = morrey_property(f);
    table.addRow({kind, std::to_string(index), std::to_string(f.n()),
                  std::to_string(f.rows()), format_double(rep.lhsSup2),
                  format_double(rep.rhsBound), detail::flag(rep.holds)});
  };

  report("constant", 0, DiscreteParamPath::constant(5, 0.75 * Matrix::Ones(2, 2)));
  DiscreteParamPath twoPoint = DiscreteParamPath::zeros(2, 1, 1);
  twoPoint.values[1](0, 0) = 1.0;
  report("two-point", 0, twoPoint);

  for (int t = 0; t < cfg.check.trials; ++t) {
    const int n = 1 + static_cast<int>(rng() % static_cast<unsigned>(cfg.check.maxN));
    const int d = 1 + static_cast<int>(rng() % static_cast<unsigned>(cfg.check.maxD));
    const int cols = (rng() % 2 == 0) ? d : 1;
    DiscreteParamPath f = DiscreteParamPath::zeros(n, d, cols);
    for (auto& V : f.values)
      for (int r = 0; r < V.rows(); ++r)
        for (int c = 0; c < V.cols(); ++c) V(r, c) = val(rng);
    report("random", t, f);
  }
  out.phase("check");
  out.addTable("morrey.csv", table);
  out.writeAll();
  return 0;
}

inline int run_rate_fit(const RunConfig& cfg) {
  detail::OutputBundle out("rate-fit", cfg);
  std::vector<std::pair<double, double>> pairs = cfg.check.pairs;
  if (!cfg.check.pairsFile.empty()) {
    const TrainingSet loaded = parse_training_csv(read_text_file(cfg.check.pairsFile),
                                                  cfg.check.pairsFile);
    for (int s = 0; s < loaded.size(); ++s)
      pairs.emplace_back(loaded.inputs[s](0), loaded.labels[s](0));
  }
  out.phase("setup");
  const PowerLawFit fit = rate_fit(pairs);
  out.phase("fit");

  CsvTable table({"slope", "intercept", "r2", "used", "dropped"});
  table.addRow({format_double(fit.slope), format_double(fit.intercept),
                format_double(fit.r2), std::to_string(fit.used),
                std::to_string(fit.dropped)});
  out.addTable("ratefit.csv", table);
  out.writeAll();
  return 0;
}

inline int dispatch(const std::string& command, const RunConfig& cfg) {
  if (command == "train-discrete") return run_train_discrete(cfg);
  if (command == "train-continuum") return run_train_continuum(cfg);
  if (command == "ladder") return run_ladder(cfg);
  if (command == "euler-bound") return run_euler_bound(cfg);
  if (command == "grad-check") return run_grad_check(cfg);
  if (command == "recovery-check") return run_recovery_check(cfg);
  if (command == "morrey-sweep") return run_morrey_sweep(cfg);
  if (command == "rate-fit") return run_rate_fit(cfg);
  throw std::invalid_argument("unknown command: " + command);
}

}  // namespace deeplimit
