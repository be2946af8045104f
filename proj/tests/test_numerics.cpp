#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <numbers>

#include "stackel/numerics.hpp"

using namespace stackel;
using Catch::Approx;

TEST_CASE("time grid validates its arguments", "[numerics]") {
  CHECK_THROWS_AS(TimeGrid(0, 1, 1), ParameterError);
  CHECK_THROWS_AS(TimeGrid(1, 1, 10), ParameterError);
  CHECK_THROWS_AS(TimeGrid(0, NAN, 10), ParameterError);
  TimeGrid g(0, 2, 4);
  CHECK(g.size() == 5);
  CHECK(g.h() == 0.5);
  CHECK(g.t(4) == 2.0);
}

TEST_CASE("cubic interpolation is exact on cubics", "[numerics]") {
  TimeGrid g(0, 1, 10);
  TrajectoryGrid tr(g);
  std::vector<double> v;
  auto f = [](double t) { return 1 - 2 * t + 3 * t * t - t * t * t; };
  for (double t : g.times()) v.push_back(f(t));
  tr.add("f", v);
  for (double t : {0.0, 0.013, 0.37, 0.5, 0.951, 1.0}) CHECK(tr.at("f", t) == Approx(f(t)).margin(1e-14));
  CHECK_THROWS_AS(tr.add("f", v), ConfigError);
  CHECK_THROWS_AS(tr.at("g", 0.1), ConfigError);
  CHECK_THROWS_AS(tr.add("short", std::vector<double>(3)), ConfigError);
}

TEST_CASE("quadrature rules", "[numerics]") {
  TimeGrid g(0, 1, 10);
  std::vector<double> f;
  for (double t : g.times()) f.push_back(t * t * t);
  CHECK(quad_simpson(f, g.h()) == Approx(0.25).margin(1e-15));
  CHECK(quad_trapezoid(std::vector<double>{0, 1, 2}, 1.0) == Approx(2.0));
  CHECK_THROWS_AS(quad_simpson(std::vector<double>{0, 1, 2, 3}, 1.0), ConfigError);
  auto w = simpson_weights(10, g.h());
  double s = 0;
  for (std::size_t i = 0; i < w.size(); ++i) s += w[i] * f[i];
  CHECK(s == Approx(0.25).margin(1e-15));
}

TEST_CASE("bisection root and threshold", "[numerics]") {
  auto r = find_root_bisect([](double x) { return x * x - 2; }, 0, 2, 1e-12);
  CHECK(r.root == Approx(std::sqrt(2.0)).margin(1e-11));
  CHECK(r.iterations <= bisect_iteration_bound(0, 2, 1e-12));
  CHECK_THROWS_AS(find_root_bisect([](double x) { return x * x + 1; }, 0, 2, 1e-9), BracketError);
  auto t = find_threshold_bisect([](double x) { return x >= 0.3; }, 0, 1, 1e-6);
  CHECK(t.root >= 0.3);
  CHECK(t.root - 0.3 <= 1e-6);
  CHECK_THROWS_AS(find_threshold_bisect([](double) { return true; }, 0, 1, 1e-3), BracketError);
}

TEST_CASE("2x2 eigenvalues", "[numerics]") {
  Eigen::Matrix2d m;
  m << 2, 1, 1, 2;
  auto e = eig_2x2(m);
  CHECK(e.s1 == Approx(1));
  CHECK(e.s2 == Approx(3));
  CHECK((m * e.v2 - e.s2 * e.v2).norm() < 1e-14);
  m << 0, -1, 1, 0;
  CHECK_THROWS_AS(eig_2x2(m), SpectralError);
}

TEST_CASE("affine boundary value problem", "[numerics]") {
  // y'' = y on [0, 1], y(0) = 0, y(1) = 1 -> sinh(t)/sinh(1)
  AffineSystem sys;
  sys.dim = 2;
  sys.matrix = [](double) {
    Eigen::MatrixXd m(2, 2);
    m << 0, 1, 1, 0;
    return m;
  };
  sys.offset = [](double) { return Eigen::VectorXd::Zero(2); };
  sys.boundary = {{0, Endpoint::start, 0.0}, {0, Endpoint::end, 1.0}};
  TimeGrid g(0, 1, 200);
  BvpDiagnostics diag;
  auto tr = solve_affine_bvp(sys, g, &diag);
  for (std::size_t i = 0; i < g.size(); i += 20)
    CHECK(tr.channel(0)[i] == Approx(std::sinh(g.t(i)) / std::sinh(1.0)).margin(1e-12));
  CHECK(diag.boundary_residual < 1e-14);
  CHECK(affine_residual(sys, tr) < 1e-8);

  // y'' = -y on [0, pi] with y(0) = y(pi) = 0 has no unique solution; the
  // discrete problem is only nearly singular
  sys.matrix = [](double) {
    Eigen::MatrixXd m(2, 2);
    m << 0, 1, -1, 0;
    return m;
  };
  sys.boundary = {{0, Endpoint::start, 0.0}, {0, Endpoint::end, 0.0}};
  try {
    solve_affine_bvp(sys, TimeGrid(0, std::numbers::pi, 400), &diag);
    CHECK(diag.condition > 1e6);
  } catch (const IllPosedBvp&) {
    SUCCEED();
  }
  // y' = 0 with both conditions on the first component is exactly singular
  sys.matrix = [](double) { return Eigen::MatrixXd::Zero(2, 2); };
  CHECK_THROWS_AS(solve_affine_bvp(sys, g), IllPosedBvp);

  sys.boundary.pop_back();
  CHECK_THROWS_AS(solve_affine_bvp(sys, g), ConfigError);
}

TEST_CASE("rk4 integration and blow-up", "[numerics]") {
  TimeGrid g(0, 1, 100);
  auto ys = rk4_integrate([](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); },
                          Eigen::VectorXd::Ones(1), g, Endpoint::start);
  CHECK(ys.back()(0) == Approx(std::exp(-1.0)).margin(1e-10));
  auto back = rk4_integrate([](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(-y); },
                            Eigen::VectorXd::Ones(1), g, Endpoint::end);
  CHECK(back.front()(0) == Approx(std::exp(1.0)).margin(1e-9));
  // y' = y^2, y(0) = 1 blows up at t = 1
  CHECK_THROWS_AS(rk4_integrate([](double, const Eigen::VectorXd& y) { return Eigen::VectorXd(y.cwiseProduct(y)); },
                                Eigen::VectorXd::Ones(1), TimeGrid(0, 2, 2000), Endpoint::start),
                  IntegrationBlowup);
}

TEST_CASE("finite-difference derivative is fourth order", "[numerics]") {
  TimeGrid g(0, 1, 100);
  std::vector<double> v;
  for (double t : g.times()) v.push_back(std::sin(3 * t));
  auto d = fd_derivative(v, g.h());
  double worst = 0;
  for (std::size_t i = 0; i < v.size(); ++i) worst = std::max(worst, std::abs(d[i] - 3 * std::cos(3 * g.t(i))));
  CHECK(worst < 1e-6);
}

TEST_CASE("path sums do not depend on the worker count", "[numerics][mc]") {
  auto run = [](unsigned workers) {
    return sum_over_paths(5000, 2, workers, [](std::size_t p, double* acc) {
      auto rng = path_rng(7, p);
      std::normal_distribution<double> n;
      const double z = n(rng);
      acc[0] += z;
      acc[1] += z * z;
    });
  };
  const auto one = run(1);
  CHECK(run(3) == one);
  CHECK(run(8) == one);
  auto e = estimate_from_sums(one[0], one[1], 5000, 7);
  CHECK(std::abs(e.mean) < 4 * e.se);
  CHECK(e.se == Approx(1 / std::sqrt(5000.0)).epsilon(0.05));
}

TEST_CASE("path failures propagate", "[numerics][mc]") {
  auto boom = [](std::size_t p, double*) {
    if (p == 700) throw SimulationBlowup(p, 3);
  };
  CHECK_THROWS_AS(sum_over_paths(1000, 1, 3, boom), SimulationBlowup);
}

TEST_CASE("worker count from the environment", "[numerics][mc]") {
  setenv("STACKEL_WORKERS", "3", 1);
  CHECK(default_workers() == 3);
  setenv("STACKEL_WORKERS", "zero", 1);
  CHECK_THROWS_AS(default_workers(), ConfigError);
  setenv("STACKEL_WORKERS", "0", 1);
  CHECK_THROWS_AS(default_workers(), ConfigError);
  unsetenv("STACKEL_WORKERS");
  CHECK(default_workers() >= 1);
}

TEST_CASE("Euler-Maruyama ensemble", "[numerics][mc]") {
  TimeGrid g(0, 1, 200);
  // dx = -x dt + 0.2 dW: mean e^{-t}
  auto ens = em_paths([](double, double x) { return -x; }, [](double, double) { return 0.2; }, 1.0, g, 4000, 42, 2);
  const double se = std::sqrt(ens.variance.back() / 4000);
  CHECK(std::abs(ens.mean.back() - std::exp(-1.0)) < 4 * se + 2e-3);
  auto again = em_paths([](double, double x) { return -x; }, [](double, double) { return 0.2; }, 1.0, g, 4000, 42, 1);
  CHECK(again.terminal == ens.terminal);
  CHECK(wright_fisher(1.5) == 0.0);
  CHECK(wright_fisher(0.5) == 0.5);
}
