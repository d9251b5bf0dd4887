#pragma once

// Declarative run configuration. One JSON tree per run; every key is either
// recognized or rejected by name, defaults are resolved at parse time, and
// the resolved tree (the echo) is what gets hashed into the manifest.

#include <cstdint>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "deeplimit/harness.hpp"
#include "deeplimit/io.hpp"
#include "deeplimit/model.hpp"
#include "deeplimit/optimize.hpp"

namespace deeplimit {

struct PathSpec {
  std::string family = "sine";
  double amplitude = 1.0;
  double frequency = 1.0;
};

struct TrainSection {
  int n = 16;        // layer count for train-discrete
  int nodes = 33;    // path nodes for train-continuum
  int multistart = 1;
};

struct LadderSection {
  std::vector<int> nValues{4, 8, 16, 32, 64};
  int continuumNodes = 1025;
  bool warmStart = true;
};

struct SolverSection {
  std::string method = "rk4";
  int steps = 1024;
};

struct CheckSection {
  std::vector<int> nValues{4, 8, 16, 32, 64, 128, 256};
  int instances = 10;  // grad-check repetitions
  int samples = 4;     // synthetic training samples per instance
  int d = 2;
  int m = 1;
  int trials = 1000;   // morrey-sweep random paths
  int maxN = 64;
  int maxD = 4;
  std::string flavor = "discrete";     // grad-check: discrete | continuum
  std::string restriction = "nodal";   // euler-bound: nodal | average
  std::vector<std::pair<double, double>> pairs;  // rate-fit inline data
  std::string pairsFile;
};

struct RunConfig {
  std::string experiment = "run";
  std::string dataPath;
  std::string outDir = "out";
  std::uint64_t seed = 0;

  std::string sigma = "tanh";
  std::string classifier = "identity";
  HyperParams hyper;

  OptimizeConfig opt;
  SolverSection solver;
  LadderSection ladder;
  TrainSection train;
  CheckSection check;

  PathSpec pathK{"sine", 1.0, 1.0};
  PathSpec pathB{"linear", 0.3, 1.0};
  int pathNodes = 65;

  Json echo;         // fully resolved tree, deterministic key order
  std::string hash;  // fnv1a64 of echo.dump()
};

namespace detail {

inline int line_of_byte(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t k = 0; k < byte && k < text.size(); ++k)
    if (text[k] == '\n') ++line;
  return line;
}

// Tracks which keys of one JSON object were consumed; leftovers are errors.
class Section {
 public:
  Section(const Json& j, std::string name) : j_(j), name_(std::move(name)) {
    if (!j_.is_object())
      throw std::runtime_error("config: section '" + name_ + "' must be an object");
  }

  double num(const char* key, double def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number()) fail(key, "a number");
    return v->get<double>();
  }

  int integer(const char* key, int def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number_integer()) fail(key, "an integer");
    return v->get<int>();
  }

  std::uint64_t u64(const char* key, std::uint64_t def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_number_unsigned() && !v->is_number_integer()) fail(key, "an unsigned integer");
    if (v->is_number_integer() && v->get<long long>() < 0) fail(key, "an unsigned integer");
    return v->get<std::uint64_t>();
  }

  std::string str(const char* key, std::string def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_string()) fail(key, "a string");
    return v->get<std::string>();
  }

  bool boolean(const char* key, bool def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_boolean()) fail(key, "a boolean");
    return v->get<bool>();
  }

  std::vector<int> intList(const char* key, std::vector<int> def) {
    const Json* v = take(key);
    if (!v) return def;
    if (!v->is_array()) fail(key, "an array of integers");
    std::vector<int> out;
    for (const auto& e : *v) {
      if (!e.is_number_integer()) fail(key, "an array of integers");
      out.push_back(e.get<int>());
    }
    return out;
  }

  std::vector<std::pair<double, double>> pairList(const char* key) {
    const Json* v = take(key);
    std::vector<std::pair<double, double>> out;
    if (!v) return out;
    if (!v->is_array()) fail(key, "an array of [x, y] pairs");
    for (const auto& e : *v) {
      if (!e.is_array() || e.size() != 2 || !e[0].is_number() || !e[1].is_number())
        fail(key, "an array of [x, y] pairs");
      out.emplace_back(e[0].get<double>(), e[1].get<double>());
    }
    return out;
  }

  const Json* sub(const char* key) { return take(key); }

  void finish() const {
    for (const auto& item : j_.items())
      if (!seen_.count(item.key()))
        throw std::runtime_error("config: unknown key '" + item.key() + "' in section '" +
                                 name_ + "'");
  }

 private:
  const Json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  [[noreturn]] void fail(const char* key, const char* want) const {
    throw std::runtime_error("config: key '" + std::string(key) + "' in section '" + name_ +
                             "' must be " + want);
  }

  const Json& j_;
  std::string name_;
  std::set<std::string> seen_;
};

inline PathSpec parse_path_spec(const Json& j, const std::string& name, PathSpec def) {
  Section s(j, name);
  def.family = s.str("family", def.family);
  def.amplitude = s.num("amplitude", def.amplitude);
  def.frequency = s.num("frequency", def.frequency);
  s.finish();
  return def;
}

}  // namespace detail

// The echo deliberately omits the output directory: results must be
// re-runnable into a fresh directory and still byte-match, so where they
// land is not part of the run's identity.
inline Json serialize_config(const RunConfig& c) {
  Json j;
  j["experiment"] = c.experiment;
  j["data"] = c.dataPath;
  j["seed"] = c.seed;
  j["model"] = {{"sigma", c.sigma},      {"classifier", c.classifier},
                {"alpha1", c.hyper.alpha1}, {"alpha2", c.hyper.alpha2},
                {"alpha3", c.hyper.alpha3}, {"alpha4", c.hyper.alpha4},
                {"tau1", c.hyper.tau1},     {"tau2", c.hyper.tau2}};
  j["optimizer"] = {{"maxIters", c.opt.maxIters},   {"gradTol", c.opt.gradTol},
                    {"armijoC1", c.opt.armijoC1},   {"backtrack", c.opt.backtrack},
                    {"initialStep", c.opt.initialStep}, {"momentum", c.opt.momentum}};
  j["solver"] = {{"method", c.solver.method}, {"steps", c.solver.steps}};
  j["ladder"] = {{"nValues", c.ladder.nValues},
                 {"continuumNodes", c.ladder.continuumNodes},
                 {"warmStart", c.ladder.warmStart}};
  j["train"] = {{"n", c.train.n}, {"nodes", c.train.nodes}, {"multistart", c.train.multistart}};
  Json pairs = Json::array();
  for (const auto& p : c.check.pairs) pairs.push_back({p.first, p.second});
  j["check"] = {{"nValues", c.check.nValues},
                {"instances", c.check.instances},
                {"samples", c.check.samples},
                {"d", c.check.d},
                {"m", c.check.m},
                {"trials", c.check.trials},
                {"maxN", c.check.maxN},
                {"maxD", c.check.maxD},
                {"flavor", c.check.flavor},
                {"restriction", c.check.restriction},
                {"pairs", pairs},
                {"pairsFile", c.check.pairsFile}};
  j["paths"] = {{"K",
                 {{"family", c.pathK.family},
                  {"amplitude", c.pathK.amplitude},
                  {"frequency", c.pathK.frequency}}},
                {"b",
                 {{"family", c.pathB.family},
                  {"amplitude", c.pathB.amplitude},
                  {"frequency", c.pathB.frequency}}},
                {"nodes", c.pathNodes}};
  return j;
}

// Call after mutating identity-bearing fields (e.g. a seed override).
inline void refresh_echo(RunConfig& c) {
  c.echo = serialize_config(c);
  c.hash = hex64(fnv1a64(c.echo.dump()));
}

inline RunConfig parse_config_text(const std::string& text, const std::string& name) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw std::runtime_error("config parse error in " + name + " near line " +
                             std::to_string(detail::line_of_byte(text, e.byte)) + ": " +
                             e.what());
  }

  RunConfig c;
  detail::Section top(root, "(top)");
  c.experiment = top.str("experiment", c.experiment);
  c.dataPath = top.str("data", c.dataPath);
  c.outDir = top.str("out", c.outDir);
  c.seed = top.u64("seed", c.seed);

  if (const Json* j = top.sub("model")) {
    detail::Section s(*j, "model");
    c.sigma = s.str("sigma", c.sigma);
    c.classifier = s.str("classifier", c.classifier);
    c.hyper.alpha1 = s.num("alpha1", c.hyper.alpha1);
    c.hyper.alpha2 = s.num("alpha2", c.hyper.alpha2);
    c.hyper.alpha3 = s.num("alpha3", c.hyper.alpha3);
    c.hyper.alpha4 = s.num("alpha4", c.hyper.alpha4);
    c.hyper.tau1 = s.num("tau1", c.hyper.tau1);
    c.hyper.tau2 = s.num("tau2", c.hyper.tau2);
    s.finish();
  }
  if (const Json* j = top.sub("optimizer")) {
    detail::Section s(*j, "optimizer");
    c.opt.maxIters = s.integer("maxIters", c.opt.maxIters);
    c.opt.gradTol = s.num("gradTol", c.opt.gradTol);
    c.opt.armijoC1 = s.num("armijoC1", c.opt.armijoC1);
    c.opt.backtrack = s.num("backtrack", c.opt.backtrack);
    c.opt.initialStep = s.num("initialStep", c.opt.initialStep);
    c.opt.momentum = s.num("momentum", c.opt.momentum);
    s.finish();
  }
  if (const Json* j = top.sub("solver")) {
    detail::Section s(*j, "solver");
    c.solver.method = s.str("method", c.solver.method);
    c.solver.steps = s.integer("steps", c.solver.steps);
    s.finish();
  }
  if (const Json* j = top.sub("ladder")) {
    detail::Section s(*j, "ladder");
    c.ladder.nValues = s.intList("nValues", c.ladder.nValues);
    c.ladder.continuumNodes = s.integer("continuumNodes", c.ladder.continuumNodes);
    c.ladder.warmStart = s.boolean("warmStart", c.ladder.warmStart);
    s.finish();
  }
  if (const Json* j = top.sub("train")) {
    detail::Section s(*j, "train");
    c.train.n = s.integer("n", c.train.n);
    c.train.nodes = s.integer("nodes", c.train.nodes);
    c.train.multistart = s.integer("multistart", c.train.multistart);
    s.finish();
  }
  if (const Json* j = top.sub("check")) {
    detail::Section s(*j, "check");
    c.check.nValues = s.intList("nValues", c.check.nValues);
    c.check.instances = s.integer("instances", c.check.instances);
    c.check.samples = s.integer("samples", c.check.samples);
    c.check.d = s.integer("d", c.check.d);
    c.check.m = s.integer("m", c.check.m);
    c.check.trials = s.integer("trials", c.check.trials);
    c.check.maxN = s.integer("maxN", c.check.maxN);
    c.check.maxD = s.integer("maxD", c.check.maxD);
    c.check.flavor = s.str("flavor", c.check.flavor);
    c.check.restriction = s.str("restriction", c.check.restriction);
    c.check.pairs = s.pairList("pairs");
    c.check.pairsFile = s.str("pairsFile", c.check.pairsFile);
    s.finish();
  }
  if (const Json* j = top.sub("paths")) {
    detail::Section s(*j, "paths");
    if (const Json* k = s.sub("K")) c.pathK = detail::parse_path_spec(*k, "paths.K", c.pathK);
    if (const Json* b = s.sub("b")) c.pathB = detail::parse_path_spec(*b, "paths.b", c.pathB);
    c.pathNodes = s.integer("nodes", c.pathNodes);
    s.finish();
  }
  top.finish();

  // Cross-field validation: fail on the offending key before any driver runs.
  Activation::byName(c.sigma);
  Classifier::byName(c.classifier);
  c.hyper.validate();
  c.opt.validate();
  if (c.solver.method != "euler" && c.solver.method != "rk4")
    throw std::runtime_error("config: key 'method' in section 'solver' must be euler or rk4");
  if (c.solver.steps < 1)
    throw std::runtime_error("config: key 'steps' in section 'solver' must be positive");
  if (c.train.n < 1)
    throw std::runtime_error("config: key 'n' in section 'train' must be positive");
  if (c.train.nodes < 2)
    throw std::runtime_error("config: key 'nodes' in section 'train' must be at least 2");
  if (c.train.multistart < 1)
    throw std::runtime_error("config: key 'multistart' in section 'train' must be positive");
  if (c.check.flavor != "discrete" && c.check.flavor != "continuum")
    throw std::runtime_error(
        "config: key 'flavor' in section 'check' must be discrete or continuum");
  if (c.check.restriction != "nodal" && c.check.restriction != "average")
    throw std::runtime_error(
        "config: key 'restriction' in section 'check' must be nodal or average");
  for (int n : c.check.nValues)
    if (n < 1)
      throw std::runtime_error("config: key 'nValues' in section 'check' must be positive");
  if (c.pathNodes < 2)
    throw std::runtime_error("config: key 'nodes' in section 'paths' must be at least 2");

  refresh_echo(c);
  return c;
}

inline RunConfig parse_config(const std::string& path) {
  return parse_config_text(read_text_file(path), path);
}

inline OdeSolveConfig solver_to_ode(const SolverSection& s) {
  return {s.method == "euler" ? OdeMethod::ExplicitEuler : OdeMethod::Rk4, s.steps};
}

}  // namespace deeplimit
