#include <catch_amalgamated.hpp>

#include <cmath>

#include "stackel/meanfield.hpp"

using namespace stackel;
using namespace stackel::meanfield;
using Catch::Approx;

// reference values: tests/oracles/meanfield.py
namespace oracle {
constexpr double kDerivedU0 = 1.283340223691, kDerivedX0T = 1.306316868557, kDerivedXbarT = 1.318592850046;
constexpr double kDerivedPbar0 = -1.257943627862, kDerivedJ = 1.060943123470;
constexpr double kPrintedU0 = 1.265709265389, kPrintedX0T = 1.281230336571, kPrintedXbarT = 1.302973624314;
constexpr double kPrintedPbar0 = -1.252016745901, kPrintedJ = 1.064686030002;
constexpr double kF0 = -1.498501598833;
constexpr double kDecoupledP0 = 1.498501598833;
constexpr double kQ0 = 2.412958483534, kq0 = 0.828074891859, kXhatT = 1.181894512130, kJTilde = 0.858210119094;
}  // namespace oracle

namespace {

McConfig small_mc(std::size_t paths = 2000) {
  McConfig mc;
  mc.n_paths = paths;
  mc.n_steps = 500;
  return mc;
}

}  // namespace

TEST_CASE("mean system matches the collocation oracle", "[meanfield]") {
  MfgParams p;
  TimeGrid g(0, p.T, 2000);
  auto d = mean_field_bvp(p, g, SystemForm::derived);
  CHECK(d.traj.front("u0") == Approx(oracle::kDerivedU0).margin(1e-8));
  CHECK(d.traj.back("x0") == Approx(oracle::kDerivedX0T).margin(1e-8));
  CHECK(d.traj.back("xbar") == Approx(oracle::kDerivedXbarT).margin(1e-8));
  CHECK(d.traj.front("pbar") == Approx(oracle::kDerivedPbar0).margin(1e-8));
  CHECK(equilibrium_payoff_mean(p, d) == Approx(oracle::kDerivedJ).margin(1e-8));
  CHECK(d.boundary_residual < 1e-10);
  CHECK(d.ode_residual < 1e-6);
  CHECK(d.feedback_gap < 1e-6);

  auto q = mean_field_bvp(p, g, SystemForm::printed);
  CHECK(q.traj.front("u0") == Approx(oracle::kPrintedU0).margin(1e-8));
  CHECK(q.traj.back("x0") == Approx(oracle::kPrintedX0T).margin(1e-8));
  CHECK(q.traj.back("xbar") == Approx(oracle::kPrintedXbarT).margin(1e-8));
  CHECK(q.traj.front("pbar") == Approx(oracle::kPrintedPbar0).margin(1e-8));
  CHECK(equilibrium_payoff_mean(p, q) == Approx(oracle::kPrintedJ).margin(1e-8));
  CHECK(std::abs(q.traj.back("xi")) < 1e-10);
  CHECK(std::abs(d.traj.front("xi")) < 1e-10);
}

TEST_CASE("mean solution is stable under grid refinement", "[meanfield]") {
  MfgParams p;
  auto a = mean_field_bvp(p, TimeGrid(0, p.T, 1000));
  auto b = mean_field_bvp(p, TimeGrid(0, p.T, 2000));
  CHECK(std::abs(a.traj.front("u0") - b.traj.front("u0")) < 1e-9);
  CHECK(std::abs(a.traj.back("x0") - b.traj.back("x0")) < 1e-9);
}

TEST_CASE("follower Riccati closed forms", "[meanfield]") {
  MfgParams p;
  TimeGrid g(0, p.T, 2000);
  auto F = follower_riccati(p, g);
  CHECK(F.values.front() == Approx(oracle::kF0).margin(1e-9));
  CHECK(F.values.back() == 0);
  CHECK(riccati_residual(p, F, p.r) < 1e-8);

  MfgParams lin = p;
  lin.B = 0;
  lin.r = 0;
  auto Fl = follower_riccati(lin, g);
  CHECK(Fl.values.front() == Approx(-lin.T).margin(1e-12));

  MfgParams tn = p;
  tn.r = 0;
  tn.A = 0;
  auto Ft = follower_riccati(tn, g);
  for (std::size_t i = 0; i < g.size(); i += 100)
    CHECK(Ft.values[i] == Approx(-std::tan(tn.T - g.t(i))).margin(1e-10));
}

TEST_CASE("defection Riccati closed forms", "[meanfield]") {
  MfgParams p;
  p.r = 0;
  p.A0 = 0;
  p.B0 = 2;
  p.a0 = 1;
  p.T = 0.5;
  TimeGrid g(0, p.T, 2000);
  auto Q = defection_riccati(p, 0, g);
  CHECK(Q.values.front() == Approx(std::tan(1.0)).margin(1e-10));
  CHECK(riccati_residual(p, Q, 0) < 1e-7);

  MfgParams z;
  z.B0 = 0;
  TimeGrid gz(0, z.T, 2000);
  const double k = 0.3, beta = z.r + k - 2 * z.A0;
  auto Qz = defection_riccati(z, k, gz);
  for (std::size_t i = 0; i < gz.size(); i += 200)
    CHECK(Qz.values[i] == Approx(2 / beta * (1 - std::exp(beta * (gz.t(i) - z.T)))).margin(1e-12));
  CHECK(Qz.values.front() > 0);
  CHECK_THROWS_AS(defection_riccati(z, -1, gz), ParameterError);
}

TEST_CASE("decoupled leader matches its own two-point problem", "[meanfield]") {
  MfgParams p;
  p.sigma = p.D = p.C = p.C0 = p.l = p.l0 = 0;
  TimeGrid g(0, p.T, 2000);
  auto sol = mean_field_bvp(p, g);
  AffineSystem two;
  two.dim = 2;
  two.matrix = [&](double) {
    Eigen::MatrixXd m(2, 2);
    m << p.A0, p.B0 * p.B0 / p.a0, -1, p.r - p.A0;
    return m;
  };
  two.offset = [&](double) {
    Eigen::VectorXd v(2);
    v << 0, -p.b0;
    return v;
  };
  two.boundary = {{0, Endpoint::start, p.x0_init}, {1, Endpoint::end, 0.0}};
  auto ref = solve_affine_bvp(two, g);
  double gap = 0;
  for (std::size_t i = 0; i < g.size(); ++i) gap = std::max(gap, std::abs(sol.traj["p0"][i] - ref.channel(1)[i]));
  CHECK(gap < 1e-8);
  CHECK(ref.channel(1)[0] == Approx(oracle::kDecoupledP0).margin(1e-8));
}

TEST_CASE("all-zero data gives the zero equilibrium", "[meanfield]") {
  MfgParams p;
  p.x0_init = p.xbar_init = 0;
  p.b0 = p.b = 0;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 200));
  CHECK(sol.state_scale < 1e-14);
  for (auto& n : sol.traj.names()) {
    if (n == "F") continue;  // the gain does not depend on the data
    for (double v : sol.traj[n]) CHECK(std::abs(v) < 1e-14);
  }
}

TEST_CASE("defecting leader against the oracle", "[meanfield]") {
  MfgParams p;
  TimeGrid g(0, p.T, 2000);
  auto sol = mean_field_bvp(p, g);
  auto def = defection_solution(p, 0.3, sol);
  CHECK(def.Q.front() == Approx(oracle::kQ0).margin(1e-9));
  CHECK(def.q.front() == Approx(oracle::kq0).margin(1e-8));
  auto path = defection_mean_path(p, sol, def);
  CHECK(path.back("x_hat") == Approx(oracle::kXhatT).margin(1e-8));
  CHECK(defection_payoff_mean(p, sol, def) == Approx(oracle::kJTilde).margin(1e-8));
  CHECK(zeta_residual(p, sol, def, path) < 1e-6);
  CHECK(std::abs(path.back("zeta")) < 1e-14);
}

TEST_CASE("zero-noise Monte Carlo equals the mean payoffs", "[meanfield][mc]") {
  MfgParams p;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 2000));
  auto mc = small_mc();
  mc.zero_noise = true;
  mc.n_steps = 2000;
  auto pr = mc_payoffs(p, sol, 0.3, mc);
  CHECK(pr.J0_star.n_paths == 1);
  CHECK(std::abs(pr.J0_star.mean - pr.J0_star_mean) < 1e-6);
  CHECK(std::abs(pr.J_tilde.mean - pr.J_tilde_mean) < 1e-6);
  CHECK(std::abs(pr.J_tilde_mean - oracle::kJTilde) < 1e-6);
}

TEST_CASE("punished payoff brackets", "[meanfield][mc]") {
  MfgParams p;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 1000));
  auto mc = small_mc();
  auto free = mc_payoffs(p, sol, 0.0, mc);
  CHECK(free.J_tilde.mean >= free.J0_star.mean - 3 * free.J0_star.se);
  auto harsh = mc_payoffs(p, sol, 50.0, mc);
  CHECK(harsh.J_tilde.mean < harsh.J0_star.mean);
}

TEST_CASE("Monte Carlo is reproducible across worker counts", "[meanfield][mc]") {
  MfgParams p;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 1000));
  auto mc = small_mc(1000);
  auto one = mc_payoffs(p, sol, 0.2, mc);
  mc.workers = 3;
  auto three = mc_payoffs(p, sol, 0.2, mc);
  CHECK(one.J0_star.mean == three.J0_star.mean);
  CHECK(one.J_tilde.mean == three.J_tilde.mean);
  CHECK(one.J_tilde.se == three.J_tilde.se);
  CHECK(one.mean_x_hat == three.mean_x_hat);
  mc.seed = 43;
  CHECK(mc_payoffs(p, sol, 0.2, mc).J_tilde.mean != one.J_tilde.mean);
}

TEST_CASE("first-order conditions by perturbation", "[meanfield][mc]") {
  MfgParams p;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 1000));
  auto mc = small_mc(4000);
  const auto& u0 = sol.traj["u0"];
  for (auto& v : random_perturbations(7, 2)) {
    auto e = euler_condition_check(p, sol, u0, v, mc);
    CHECK(std::abs(e.derivative) <= 3 * e.se + 1e-6);
    auto f = follower_euler_check(p, sol, v, mc);
    CHECK(std::abs(f.derivative) <= 3 * f.se + 1e-6);
  }
  auto zero = euler_condition_check(p, sol, u0, Perturbation{}, mc);
  CHECK(zero.derivative == 0);
  CHECK(follower_euler_check(p, sol, Perturbation{}, mc).derivative == 0);

  std::vector<double> shifted = u0;
  for (double& v : shifted) v += 0.5;
  auto bad = euler_condition_check(p, sol, shifted, Perturbation{1, 0, 0}, mc);
  CHECK(bad.derivative < -3 * bad.se);
}

TEST_CASE("follower feedback reproduces the mean costate", "[meanfield][mc]") {
  MfgParams p;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 1000));
  auto mc = small_mc();
  mc.zero_noise = true;
  mc.n_steps = 1000;
  auto det = follower_feedback_check(p, sol, mc);
  CHECK(det.max_abs_gap < 1e-6);
  CHECK(det.ok);
  mc.zero_noise = false;
  auto noisy = follower_feedback_check(p, sol, mc);
  CHECK(noisy.worst_gap <= 3 * noisy.worst_se + 1e-6);
  CHECK(noisy.terminal_gap < 1e-12);
}

TEST_CASE("growth-order check", "[meanfield]") {
  TimeGrid g(0, 4, 400);
  std::vector<double> grow, flat;
  for (double t : g.times()) {
    grow.push_back(std::exp(t));
    flat.push_back(1 + 0.1 * std::sin(t));
  }
  CHECK_FALSE(growth_order_check(grow, g, 1.0).ok);
  CHECK(growth_order_check(flat, g, 1.0).ok);
  CHECK(growth_order_check(flat, g, 1.0).threshold == Approx(0.5 - 1e-6));
  CHECK_THROWS_AS(growth_order_check(std::vector<double>(3), g, 1.0), ParameterError);
}

TEST_CASE("threshold in zero-noise mode matches the mean system", "[meanfield][mc]") {
  MfgParams p;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 2000));
  auto mc = small_mc();
  mc.zero_noise = true;
  mc.n_steps = 2000;
  auto r = min_k_meanfield(p, sol, mc);
  const double det = min_k_meanfield_mean(p, sol);
  CHECK(std::abs(r.search.k_min - det) <= 0.01);
  CHECK(r.search.certified);
  CHECK(r.monotone);
}

TEST_CASE("a leader without control influence has nothing to gain", "[meanfield][mc]") {
  MfgParams p;
  p.B0 = 0;
  p.sigma = 0;
  p.b0 = 5;
  auto sol = mean_field_bvp(p, TimeGrid(0, p.T, 1000));
  auto mc = small_mc();
  mc.zero_noise = true;
  auto r = min_k_meanfield(p, sol, mc);
  CHECK(r.search.k_min <= 0.02);
  CHECK(r.search.certified);
}

TEST_CASE("parameter and Monte Carlo validation", "[meanfield]") {
  MfgParams p;
  p.a0 = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  p.x0_init = 2;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  McConfig mc;
  mc.n_steps = 999;
  CHECK_THROWS_AS(mc.validate(p.T), ParameterError);
  mc = {};
  mc.n_paths = 0;
  CHECK_THROWS_AS(mc.validate(p.T), ParameterError);
}
