#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "deeplimit/spaces.hpp"

using namespace deeplimit;

namespace {

Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

ContinuumParamPath line01() {
  // K(t) = t, exactly represented with two nodes
  return ContinuumParamPath({scalar(0.0), scalar(1.0)});
}

DiscreteParamPath random_path(std::mt19937_64& rng, int n, int rows, int cols,
                              double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Matrix> vals;
  for (int i = 0; i < n; ++i) {
    Matrix v(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) v(r, c) = u(rng);
    vals.push_back(v);
  }
  return DiscreteParamPath(Grid(n), std::move(vals));
}

ContinuumParamPath random_pwl(std::mt19937_64& rng, int nodes, int rows, int cols,
                              double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Matrix> vals;
  for (int j = 0; j < nodes; ++j) {
    Matrix v(rows, cols);
    for (int r = 0; r < rows; ++r)
      for (int c = 0; c < cols; ++c) v(r, c) = u(rng);
    vals.push_back(v);
  }
  return ContinuumParamPath(std::move(vals));
}

}  // namespace

TEST_CASE("step extension: constant path stays constant", "[spaces]") {
  Matrix a(2, 2);
  a << 1.0, -2.0, 0.5, 3.0;
  auto sf = extend_piecewise_constant(DiscreteParamPath::constant(5, a));
  for (double t : {0.0, 0.1, 0.3, 0.59, 0.99, 1.0})
    REQUIRE((sf.value_at(t) - a).norm() == 0.0);
}

TEST_CASE("step extension: two-cell layout", "[spaces]") {
  auto sf = extend_piecewise_constant(
      DiscreteParamPath(Grid(2), {scalar(0.0), scalar(1.0)}));
  // value at node i covers [i/2, (i+1)/2); t = 1 falls in the last cell
  REQUIRE(sf.value_at(0.0)(0, 0) == 0.0);
  REQUIRE(sf.value_at(0.25)(0, 0) == 0.0);
  REQUIRE(sf.value_at(0.499999)(0, 0) == 0.0);
  REQUIRE(sf.value_at(0.5)(0, 0) == 1.0);
  REQUIRE(sf.value_at(0.75)(0, 0) == 1.0);
  REQUIRE(sf.value_at(1.0)(0, 0) == 1.0);
}

TEST_CASE("step extension: integral over [0,1]", "[spaces]") {
  auto sf = extend_piecewise_constant(DiscreteParamPath(
      Grid(4), {scalar(1.0), scalar(2.0), scalar(3.0), scalar(4.0)}));
  REQUIRE(sf.integral()(0, 0) == Catch::Approx(2.5).margin(1e-15));
}

TEST_CASE("d1: zero path against K(t) = t", "[spaces]") {
  auto p = DiscreteParamPath::zeros(1, 1, 1);
  REQUIRE(d1_distance(p, line01()) ==
          Catch::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-14));
}

TEST_CASE("d1: cell averages of K(t) = t", "[spaces]") {
  // averages (i + 1/2)/n give per-cell mass 1/(12 n^3), total 1/(12 n^2)
  for (int n : {1, 2, 5, 8, 33}) {
    auto p = restrict_cell_average(line01(), n);
    REQUIRE(d1_distance(p, line01()) ==
            Catch::Approx(1.0 / (2.0 * std::sqrt(3.0) * n)).epsilon(1e-13));
  }
}

TEST_CASE("d1/d2: flavor and shape guards", "[spaces]") {
  auto vec = DiscreteParamPath::zeros(2, 3, 1);
  auto mat = DiscreteParamPath::zeros(2, 3, 3);
  auto fmat = ContinuumParamPath::zeros(4, 3, 3);
  auto fvec = ContinuumParamPath::zeros(4, 3, 1);
  REQUIRE_THROWS_AS(d1_distance(vec, fmat), std::invalid_argument);
  REQUIRE_THROWS_AS(d2_distance(mat, fvec), std::invalid_argument);
  auto small = ContinuumParamPath::zeros(4, 2, 2);
  REQUIRE_THROWS_AS(d1_distance(mat, small), std::invalid_argument);
}

TEST_CASE("d1: vanishes exactly on matching restrictions", "[spaces]") {
  Matrix a(2, 2);
  a << 0.3, 1.0, -0.7, 0.1;
  auto f = ContinuumParamPath::constant(9, a);
  auto p = restrict_cell_average(f, 6);
  REQUIRE(d1_distance(p, f) < 1e-14);  // zero up to roundoff
}

TEST_CASE("d1: perturbation bound against path gap", "[spaces]") {
  // | d1(p,K) - d1(p,K') | <= ||K - K'||_L2 by the triangle inequality
  std::mt19937_64 rng(7);
  for (int rep = 0; rep < 20; ++rep) {
    auto p = random_path(rng, 5, 2, 2);
    auto f = random_pwl(rng, 9, 2, 2);
    auto g = random_pwl(rng, 9, 2, 2);
    const double lhs = std::abs(d1_distance(p, f) - d1_distance(p, g));
    const double rhs = l2_distance_pwl(f, g);
    REQUIRE(lhs <= rhs + 1e-12);
  }
}

TEST_CASE("restriction: constant and linear paths", "[spaces]") {
  Matrix a(2, 2);
  a << 2.0, -1.0, 0.0, 4.0;
  auto rc = restrict_cell_average(ContinuumParamPath::constant(7, a), 5);
  for (const auto& v : rc.values) REQUIRE((v - a).norm() < 1e-14);

  auto rl = restrict_cell_average(line01(), 2);
  REQUIRE(rl.values[0](0, 0) == Catch::Approx(0.25).margin(1e-15));
  REQUIRE(rl.values[1](0, 0) == Catch::Approx(0.75).margin(1e-15));
}

TEST_CASE("restriction: sine path against Riemann oracle", "[spaces]") {
  auto f = ContinuumParamPath::sample(
      1025, [](double t) { return scalar(std::sin(2.0 * M_PI * t)); });
  const int n = 4;
  auto p = restrict_cell_average(f, n);
  const int samples = 250000;  // 1e6 midpoint samples across [0,1]
  for (int i = 0; i < n; ++i) {
    const double lo = static_cast<double>(i) / n;
    const double w = 1.0 / n / samples;
    double acc = 0.0;
    for (int k = 0; k < samples; ++k) acc += f.eval(lo + (k + 0.5) * w)(0, 0);
    REQUIRE(p.values[i](0, 0) == Catch::Approx(acc / samples).margin(1e-8));
  }
}

TEST_CASE("recovery decay: d1 of cell averages is below L/sqrt(n)", "[spaces]") {
  std::mt19937_64 rng(3);
  for (int rep = 0; rep < 10; ++rep) {
    auto f = random_pwl(rng, 17, 2, 2);
    const double lip = f.maxSlope();
    for (int n : {2, 4, 8, 16, 64}) {
      auto p = restrict_cell_average(f, n);
      REQUIRE(d1_distance(p, f) <= lip / std::sqrt(static_cast<double>(n)) + 1e-12);
    }
  }
}

TEST_CASE("param distance: zero on restrictions of constant paths", "[spaces]") {
  Matrix Ka(2, 2);
  Ka << 0.4, -0.1, 0.9, 0.2;
  Vector ba(2);
  ba << -0.3, 0.6;
  auto Kf = ContinuumParamPath::constant(9, Ka);
  auto bf = ContinuumParamPath::constant(9, ba);
  Matrix W(1, 2);
  W << 0.5, -0.25;
  Vector c(1);
  c << 0.75;
  ContinuumParams ct{Kf, bf, W, c};
  DiscreteParams dn{restrict_cell_average(Kf, 6), restrict_cell_average(bf, 6), W, c};
  REQUIRE(param_distance(dn, ct) < 1e-13);  // zero up to roundoff
}

TEST_CASE("param distance: readout gap only", "[spaces]") {
  DiscreteParams dn = DiscreteParams::zeros(4, 2, 2);
  ContinuumParams ct = ContinuumParams::zeros(5, 2, 2);
  ct.W = Matrix::Identity(2, 2);
  REQUIRE(param_distance(dn, ct) == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
}

TEST_CASE("param distance: additive composite value", "[spaces]") {
  DiscreteParams dn = DiscreteParams::zeros(1, 1, 1);
  dn.W(0, 0) = 2.0;
  dn.c(0) = 0.5;
  ContinuumParams ct{line01(), ContinuumParamPath::zeros(2, 1, 1),
                     Matrix::Identity(1, 1), Vector::Zero(1)};
  REQUIRE(param_distance(dn, ct) ==
          Catch::Approx(std::sqrt(1.0 / 3.0) + 1.0 + 0.5).epsilon(1e-14));
}

TEST_CASE("param distance: dimension mismatch throws", "[spaces]") {
  auto dn = DiscreteParams::zeros(2, 2, 1);
  auto ct = ContinuumParams::zeros(3, 3, 1);
  REQUIRE_THROWS_AS(param_distance(dn, ct), std::invalid_argument);
}

TEST_CASE("upsample: identity and constants", "[spaces]") {
  std::mt19937_64 rng(5);
  auto p = random_path(rng, 6, 2, 2);
  auto q = upsample(p, 6);
  for (int i = 0; i < 6; ++i) REQUIRE((q.values[i] - p.values[i]).norm() == 0.0);

  Matrix a(2, 1);
  a << -1.0, 2.0;
  auto up = upsample(DiscreteParamPath::constant(3, a), 17);
  for (const auto& v : up.values) REQUIRE((v - a).norm() == 0.0);
}

TEST_CASE("upsample: interpolation oracle on doubling", "[spaces]") {
  auto p = DiscreteParamPath(Grid(2), {scalar(0.0), scalar(1.0)});
  auto q = upsample(p, 4);
  // nodes 0, 1/4, 1/2, 3/4; source nodes 0 -> 0, 1/2 -> 1, flat beyond 1/2
  auto oracle = [](double t) { return t <= 0.5 ? 2.0 * t : 1.0; };
  for (int j = 0; j < 4; ++j)
    REQUIRE(q.values[j](0, 0) == Catch::Approx(oracle(j / 4.0)).margin(1e-15));
  REQUIRE_THROWS_AS(upsample(q, 2), std::invalid_argument);
}

TEST_CASE("upsample: random against interpolation oracle", "[spaces]") {
  std::mt19937_64 rng(13);
  auto p = random_path(rng, 5, 2, 2);
  auto q = upsample(p, 12);
  for (int j = 0; j < 12; ++j) {
    const double x = j * 5.0 / 12.0;
    int i = static_cast<int>(std::floor(x));
    Matrix want = (i >= 4) ? p.values[4]
                           : ((1.0 - (x - i)) * p.values[i] + (x - i) * p.values[i + 1]);
    REQUIRE((q.values[j] - want).norm() < 1e-14);
  }
}

TEST_CASE("pwl paths: eval clamps and interpolates", "[spaces]") {
  auto f = ContinuumParamPath({scalar(1.0), scalar(3.0), scalar(2.0)});
  REQUIRE(f.eval(-0.5)(0, 0) == 1.0);
  REQUIRE(f.eval(0.0)(0, 0) == 1.0);
  REQUIRE(f.eval(0.25)(0, 0) == Catch::Approx(2.0));
  REQUIRE(f.eval(0.5)(0, 0) == 3.0);
  REQUIRE(f.eval(0.75)(0, 0) == Catch::Approx(2.5));
  REQUIRE(f.eval(1.0)(0, 0) == 2.0);
  REQUIRE(f.eval(1.5)(0, 0) == 2.0);
}

TEST_CASE("distances are deterministic", "[spaces]") {
  std::mt19937_64 rng(17);
  auto p = random_path(rng, 7, 3, 3);
  auto f = random_pwl(rng, 11, 3, 3);
  const double a = d1_distance(p, f);
  const double b = d1_distance(p, f);
  REQUIRE(a == b);
}
