#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <map>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackel/error.hpp"
#include "stackel/numerics/monte_carlo.hpp"
#include "stackel/numerics/ode.hpp"
#include "stackel/numerics/quadrature.hpp"
#include "stackel/numerics/root.hpp"
#include "stackel/numerics/time_grid.hpp"
#include "stackel/penalty.hpp"

// One major firm (leader, state x0) and a continuum of minor firms (followers,
// mean state xbar). Stocks follow linear drifts with Wright-Fisher noise; each
// firm maximises a discounted quadratic payoff.
namespace stackel::meanfield {

struct MfgParams {
  double A0 = 0, B0 = 1, C0 = 0.1;
  double A = 0, B = 1, C = 0.1, D = 0.1;
  double a0 = 1, a = 1;
  double l0 = 0.2, l = 0.2;
  double b0 = 0.5, b = 0.5;
  double sigma = 0.1;
  double r = 0.05;
  double T = 1;
  double x0_init = 0.5;
  double xbar_init = 0.5;

  bool operator==(const MfgParams&) const = default;

  void validate() const {
    const std::pair<double, const char*> all[] = {
        {A0, "A0"}, {B0, "B0"}, {C0, "C0"}, {A, "A"},         {B, "B"},         {C, "C"},
        {D, "D"},   {a0, "a0"}, {a, "a"},   {l0, "l0"},       {l, "l"},         {b0, "b0"},
        {b, "b"},   {sigma, "sigma"},       {r, "r"},         {T, "T"},         {x0_init, "x0_init"},
        {xbar_init, "xbar_init"}};
    for (auto [v, f] : all)
      if (!std::isfinite(v)) throw ParameterError(std::string(f) + " must be finite", f);
    if (!(a0 > 0)) throw ParameterError("a0 must be > 0", "a0");
    if (!(a > 0)) throw ParameterError("a must be > 0", "a");
    if (!(T > 0)) throw ParameterError("T must be > 0", "T");
    if (!(r >= 0)) throw ParameterError("r must be >= 0", "r");
    if (!(sigma >= 0)) throw ParameterError("sigma must be >= 0", "sigma");
    if (x0_init < 0 || x0_init > 1) throw ParameterError("x0_init must lie in [0, 1]", "x0_init");
    if (xbar_init < 0 || xbar_init > 1) throw ParameterError("xbar_init must lie in [0, 1]", "xbar_init");
  }
};

/// Which version of the adjoint equations to use.
enum class SystemForm {
  derived,  // current-value adjoints with r-terms; leader's xi starts at 0
  printed,  // drifts scaled by exp(-r t), xi(T) = 0
};

/// Whose state drives a firm's noise coefficient.
enum class DiffusionReading {
  own_state,  // sqrt(x_j (1 - x_j)) for every firm
  literal,    // the leader's equilibrium stock drives the noise everywhere
};

/// How perturbed paths are formed in the Euler condition check.
enum class EulerCoupling {
  frozen,      // perturbation shifts the path deterministically; noise stays on the base path
  resimulate,  // perturbed paths are re-simulated with their own noise coefficient
};

struct McConfig {
  std::size_t n_paths = 10000;
  RngSeed seed = 42;
  std::size_t n_steps = 1000;
  unsigned workers = 1;
  bool zero_noise = false;
  DiffusionReading diffusion = DiffusionReading::own_state;
  EulerCoupling coupling = EulerCoupling::frozen;

  void validate(double T) const {
    if (n_paths < 1) throw ParameterError("n_paths must be >= 1", "n_paths");
    if (n_steps < 2 || n_steps % 2) throw ParameterError("Monte Carlo steps must be even and >= 2", "mc_steps");
    (void)TimeGrid(0, T, n_steps);
  }
};

enum class RiccatiKind { followerF, leaderQ };

struct RiccatiSolution {
  TimeGrid grid;
  std::vector<double> values;
  RiccatiKind kind;
};

namespace detail {

inline std::vector<double> column(const std::vector<Eigen::VectorXd>& ys, Eigen::Index j) {
  std::vector<double> v(ys.size());
  for (std::size_t i = 0; i < ys.size(); ++i) v[i] = ys[i](j);
  return v;
}

template <class F>
std::vector<Eigen::VectorXd> backward_riccati(F&& f, Eigen::VectorXd terminal, const TimeGrid& grid) {
  try {
    return rk4_integrate(f, std::move(terminal), grid, Endpoint::end, 1e8);
  } catch (const IntegrationBlowup& e) {
    throw RiccatiBlowup(e.time());
  }
}

}  // namespace detail

inline double follower_riccati_rhs(const MfgParams& p, double t, double F, SystemForm form) {
  const double k = p.B * p.B / p.a;
  if (form == SystemForm::printed) {
    const double d = std::exp(-p.r * t);
    return -(1 + d) * p.A * F + k * F * F + d;
  }
  return (p.r - 2 * p.A) * F + k * F * F + 1;
}

/// Feedback gain F in p_i = F x_i + f, integrated backward from F(T) = 0.
inline RiccatiSolution follower_riccati(const MfgParams& p, const TimeGrid& grid,
                                        SystemForm form = SystemForm::derived) {
  p.validate();
  auto ys = detail::backward_riccati(
      [&](double t, const Eigen::VectorXd& y) {
        return Eigen::VectorXd::Constant(1, follower_riccati_rhs(p, t, y(0), form));
      },
      Eigen::VectorXd::Zero(1), grid);
  return {grid, detail::column(ys, 0), RiccatiKind::followerF};
}

inline double defection_riccati_rhs(const MfgParams& p, double r_tilde, double Q) {
  return (r_tilde - 2 * p.A0) * Q - p.B0 * p.B0 / (2 * p.a0) * Q * Q - 2;
}

/// Gain Q of the defecting leader's costate zeta = Q x0 + q at rate r + k.
inline RiccatiSolution defection_riccati(const MfgParams& p, double k, const TimeGrid& grid) {
  p.validate();
  if (!(k >= 0)) throw ParameterError("penalty rate k must be >= 0", "k");
  const double rt = p.r + k;
  auto ys = detail::backward_riccati(
      [&](double, const Eigen::VectorXd& y) {
        return Eigen::VectorXd::Constant(1, defection_riccati_rhs(p, rt, y(0)));
      },
      Eigen::VectorXd::Zero(1), grid);
  return {grid, detail::column(ys, 0), RiccatiKind::leaderQ};
}

/// Max over the grid of |F' - rhs(F)| with F' by finite differences.
inline double riccati_residual(const MfgParams& p, const RiccatiSolution& s, double r_tilde,
                               SystemForm form = SystemForm::derived) {
  auto d = fd_derivative(s.values, s.grid.h());
  double worst = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double t = s.grid.t(i);
    const double f = s.kind == RiccatiKind::followerF ? follower_riccati_rhs(p, t, s.values[i], form)
                                                      : defection_riccati_rhs(p, r_tilde, s.values[i]);
    worst = std::max(worst, std::abs(d[i] - f));
  }
  return worst;
}

/// Leader equilibrium control in terms of its costates.
inline double leader_control(const MfgParams& p, double p0, double lambda) {
  return p.B0 / p.a0 * p0 - p.B * p.sigma / (p.a * p.a0) * lambda;
}

/// Mean system in (x0, xbar, pbar, p0, lambda, xi) with the leader control
/// substituted.
inline AffineSystem mean_field_system(const MfgParams& p, SystemForm form = SystemForm::derived) {
  p.validate();
  const double k = p.B * p.B / p.a;
  const double bs = p.B * p.sigma / p.a;
  // u0 = g0 p0 + g1 lambda
  const double g0 = p.B0 / p.a0, g1 = -p.B * p.sigma / (p.a * p.a0);
  Eigen::MatrixXd fwd = Eigen::MatrixXd::Zero(6, 6);
  // x0' = A0 x0 + B0 u0 + C0 xbar
  fwd(0, 0) = p.A0;
  fwd(0, 1) = p.C0;
  fwd(0, 3) = p.B0 * g0;
  fwd(0, 4) = p.B0 * g1;
  // xbar' = D x0 + (A + C) xbar - k pbar - bs u0
  fwd(1, 0) = p.D;
  fwd(1, 1) = p.A + p.C;
  fwd(1, 2) = -k;
  fwd(1, 3) = -bs * g0;
  fwd(1, 4) = -bs * g1;
  // adjoint rows without discount terms
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(6, 6);
  Eigen::VectorXd adj_off = Eigen::VectorXd::Zero(6);
  adj(2, 1) = 1 - p.l;
  adj(2, 2) = -p.A;
  adj_off(2) = p.b;
  // p0' = -A0 p0 - D lambda - (x0 - l0 xbar + b0)
  adj(3, 3) = -p.A0;
  adj(3, 4) = -p.D;
  adj(3, 0) = -1;
  adj(3, 1) = p.l0;
  adj_off(3) = -p.b0;
  // lambda' = -(A + C) lambda - C0 p0 + l0 (x0 - l0 xbar + b0) - (1 - l) xi
  adj(4, 4) = -(p.A + p.C);
  adj(4, 3) = -p.C0;
  adj(4, 0) = p.l0;
  adj(4, 1) = -p.l0 * p.l0;
  adj(4, 5) = -(1 - p.l);
  adj_off(4) = p.l0 * p.b0;
  // xi' = A xi + k lambda
  adj(5, 5) = p.A;
  adj(5, 4) = k;

  AffineSystem sys;
  sys.dim = 6;
  sys.names = {"x0", "xbar", "pbar", "p0", "lambda", "xi"};
  if (form == SystemForm::derived) {
    Eigen::MatrixXd m = fwd + adj;
    m(2, 2) += p.r;
    m(3, 3) += p.r;
    m(4, 4) += p.r;
    sys.matrix = [m](double) { return m; };
    sys.offset = [adj_off](double) { return adj_off; };
    sys.boundary = {{0, Endpoint::start, p.x0_init}, {1, Endpoint::start, p.xbar_init},
                    {2, Endpoint::end, 0.0},         {3, Endpoint::end, 0.0},
                    {4, Endpoint::end, 0.0},         {5, Endpoint::start, 0.0}};
  } else {
    const double r = p.r;
    sys.matrix = [fwd, adj, r](double t) -> Eigen::MatrixXd { return fwd + std::exp(-r * t) * adj; };
    sys.offset = [adj_off, r](double t) -> Eigen::VectorXd { return std::exp(-r * t) * adj_off; };
    sys.boundary = {{0, Endpoint::start, p.x0_init}, {1, Endpoint::start, p.xbar_init},
                    {2, Endpoint::end, 0.0},         {3, Endpoint::end, 0.0},
                    {4, Endpoint::end, 0.0},         {5, Endpoint::end, 0.0}};
  }
  return sys;
}

struct MeanFieldSolution {
  SystemForm form;
  AffineSystem system;
  // x0, xbar, pbar, p0, lambda, xi, F, fbar, u0, ui
  TrajectoryGrid traj;
  double condition = 0;
  double boundary_residual = 0;  // includes F(T) and fbar(T)
  double ode_residual = 0;
  double state_scale = 0;        // sup-norm over the six mean channels
  double feedback_gap = 0;       // max |pbar - (F xbar + fbar)|
};

/// Mean-field equilibrium: follower feedback gain, mean two-point system,
/// follower offset f and both equilibrium controls.
inline MeanFieldSolution mean_field_bvp(const MfgParams& p, const TimeGrid& grid,
                                        SystemForm form = SystemForm::derived) {
  auto sys = mean_field_system(p, form);
  BvpDiagnostics diag;
  auto traj = solve_affine_bvp(sys, grid, &diag);
  const auto F = follower_riccati(p, grid, form);
  TrajectoryGrid fgrid(grid);
  fgrid.add("F", F.values);

  const std::size_t n = grid.size();
  std::vector<double> u0(n), ui(n);
  for (std::size_t i = 0; i < n; ++i) {
    u0[i] = leader_control(p, traj["p0"][i], traj["lambda"][i]);
    ui[i] = -(p.B * traj["pbar"][i] + p.sigma * u0[i]) / p.a;
  }
  TrajectoryGrid u0grid(grid);
  u0grid.add("u0", u0);

  // follower offset f, backward from f(T) = 0
  const double k = p.B * p.B / p.a;
  const double bs = p.B * p.sigma / p.a;
  const auto& xbar = traj["xbar"];
  const auto& x0 = traj["x0"];
  auto fs = rk4_integrate(
      [&](double t, const Eigen::VectorXd& y) {
        const double Fv = fgrid.interpolate(F.values, t);
        const double xb = traj.interpolate(xbar, t), m0 = traj.interpolate(x0, t);
        const double u = u0grid.interpolate(u0, t);
        double d;
        if (form == SystemForm::derived) {
          d = (p.r - p.A + k * Fv) * y(0) + Fv * (bs * u - p.C * xb - p.D * m0) - p.l * xb + p.b;
        } else {
          const double e = std::exp(-p.r * t);
          d = (k * Fv - e * p.A) * y(0) - (p.l * e + p.C * Fv) * xb + bs * u * Fv - p.D * m0 * Fv + p.b * e;
        }
        return Eigen::VectorXd::Constant(1, d);
      },
      Eigen::VectorXd::Zero(1), grid, Endpoint::end);
  auto fbar = detail::column(fs, 0);

  MeanFieldSolution out{form, sys, traj, diag.condition, diag.boundary_residual, 0, 0, 0};
  out.boundary_residual = std::max({out.boundary_residual, std::abs(F.values.back()), std::abs(fbar.back())});
  out.ode_residual = affine_residual(sys, traj);
  for (std::size_t j = 0; j < 6; ++j)
    for (double v : traj.channel(j)) out.state_scale = std::max(out.state_scale, std::abs(v));
  for (std::size_t i = 0; i < n; ++i)
    out.feedback_gap =
        std::max(out.feedback_gap, std::abs(traj["pbar"][i] - (F.values[i] * xbar[i] + fbar[i])));
  out.traj.add("F", F.values);
  out.traj.add("fbar", std::move(fbar));
  out.traj.add("u0", std::move(u0));
  out.traj.add("ui", std::move(ui));
  return out;
}

/// Follower mean response (x0, xbar, pbar) to a given leader control. With
/// `homogeneous` set, initial stocks and the cost offset are zeroed, which
/// gives the first-order variation for a control perturbation.
inline TrajectoryGrid follower_response(const MfgParams& p, const TimeGrid& grid, const std::vector<double>& u0,
                                        SystemForm form = SystemForm::derived, bool homogeneous = false) {
  p.validate();
  const double k = p.B * p.B / p.a, bs = p.B * p.sigma / p.a;
  Eigen::MatrixXd fwd = Eigen::MatrixXd::Zero(3, 3);
  fwd(0, 0) = p.A0;
  fwd(0, 1) = p.C0;
  fwd(1, 0) = p.D;
  fwd(1, 1) = p.A + p.C;
  fwd(1, 2) = -k;
  Eigen::MatrixXd adj = Eigen::MatrixXd::Zero(3, 3);
  adj(2, 1) = 1 - p.l;
  adj(2, 2) = form == SystemForm::derived ? p.r - p.A : -p.A;
  const double bb = homogeneous ? 0.0 : p.b;
  auto ugrid = std::make_shared<TrajectoryGrid>(grid);
  ugrid->add("u", u0);
  AffineSystem sys;
  sys.dim = 3;
  sys.names = {"x0", "xbar", "pbar"};
  const double r = p.r;
  const bool printed = form == SystemForm::printed;
  sys.matrix = [fwd, adj, r, printed](double t) -> Eigen::MatrixXd {
    return fwd + (printed ? std::exp(-r * t) : 1.0) * adj;
  };
  sys.offset = [ugrid, p, bs, bb, r, printed](double t) -> Eigen::VectorXd {
    const double u = ugrid->at("u", t);
    return Eigen::Vector3d(p.B0 * u, -bs * u, (printed ? std::exp(-r * t) : 1.0) * bb);
  };
  sys.boundary = {{0, Endpoint::start, homogeneous ? 0.0 : p.x0_init},
                  {1, Endpoint::start, homogeneous ? 0.0 : p.xbar_init},
                  {2, Endpoint::end, 0.0}};
  return solve_affine_bvp(sys, grid);
}

struct DefectionSolution {
  TimeGrid grid;
  std::vector<double> Q;
  std::vector<double> q;
  double r_tilde;

  double control(const MfgParams& p, std::size_t i, double x) const {
    return p.B0 / (2 * p.a0) * (Q[i] * x + q[i]);
  }
};

/// Defecting leader's feedback (Q, q) at rate r + k against the equilibrium
/// follower mean.
inline DefectionSolution defection_solution(const MfgParams& p, double k, const MeanFieldSolution& sol) {
  if (!(k >= 0) || !std::isfinite(k)) throw ParameterError("penalty rate k must be >= 0", "k");
  const auto& grid = sol.traj.grid();
  const double rt = p.r + k, kk = p.B0 * p.B0 / (2 * p.a0);
  const auto& xbar = sol.traj["xbar"];
  auto ys = detail::backward_riccati(
      [&](double t, const Eigen::VectorXd& y) {
        const double xb = sol.traj.interpolate(xbar, t);
        Eigen::VectorXd d(2);
        d(0) = defection_riccati_rhs(p, rt, y(0));
        d(1) = (rt - p.A0 - kk * y(0)) * y(1) + (2 * p.l0 - p.C0 * y(0)) * xb - 2 * p.b0;
        return d;
      },
      Eigen::VectorXd::Zero(2), grid);
  return {grid, detail::column(ys, 0), detail::column(ys, 1), rt};
}

/// Deterministic mean path of the defecting leader: x_hat, u0_hat, zeta.
inline TrajectoryGrid defection_mean_path(const MfgParams& p, const MeanFieldSolution& sol,
                                          const DefectionSolution& def) {
  const auto& grid = sol.traj.grid();
  const double kk = p.B0 * p.B0 / (2 * p.a0);
  TrajectoryGrid qgrid(grid);
  qgrid.add("Q", def.Q);
  qgrid.add("q", def.q);
  auto ys = rk4_integrate(
      [&](double t, const Eigen::VectorXd& y) {
        const double Q = qgrid.at("Q", t), q = qgrid.at("q", t), xb = sol.traj.at("xbar", t);
        return Eigen::VectorXd::Constant(1, p.A0 * y(0) + kk * (Q * y(0) + q) + p.C0 * xb);
      },
      Eigen::VectorXd::Constant(1, p.x0_init), grid, Endpoint::start);
  auto x = detail::column(ys, 0);
  std::vector<double> u(x.size()), z(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    z[i] = def.Q[i] * x[i] + def.q[i];
    u[i] = p.B0 / (2 * p.a0) * z[i];
  }
  TrajectoryGrid out(grid);
  out.add("x_hat", std::move(x));
  out.add("u0_hat", std::move(u));
  out.add("zeta", std::move(z));
  return out;
}

/// Max |zeta' - ((r~ - A0) zeta - 2 (x_hat - l0 xbar + b0))| along the mean path.
inline double zeta_residual(const MfgParams& p, const MeanFieldSolution& sol, const DefectionSolution& def,
                            const TrajectoryGrid& path) {
  const auto& zeta = path["zeta"];
  auto d = fd_derivative(zeta, path.grid().h());
  double worst = 0;
  for (std::size_t i = 0; i < d.size(); ++i) {
    const double rhs =
        (def.r_tilde - p.A0) * zeta[i] - 2 * (path["x_hat"][i] - p.l0 * sol.traj["xbar"][i] + p.b0);
    worst = std::max(worst, std::abs(d[i] - rhs));
  }
  return worst;
}

/// Equilibrium leader payoff of the mean path (noise dropped).
inline double equilibrium_payoff_mean(const MfgParams& p, const MeanFieldSolution& sol) {
  const auto& g = sol.traj.grid();
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = sol.traj["u0"][i], y = sol.traj["x0"][i] - p.l0 * sol.traj["xbar"][i] + p.b0;
    f[i] = std::exp(-p.r * g.t(i)) * (-p.a0 * u * u + y * y);
  }
  return quad_simpson(f, g.h());
}

inline double defection_payoff_mean(const MfgParams& p, const MeanFieldSolution& sol, const DefectionSolution& def) {
  auto path = defection_mean_path(p, sol, def);
  const auto& g = sol.traj.grid();
  std::vector<double> f(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double u = path["u0_hat"][i], y = path["x_hat"][i] - p.l0 * sol.traj["xbar"][i] + p.b0;
    f[i] = std::exp(-def.r_tilde * g.t(i)) * (-p.a0 * u * u + y * y);
  }
  return quad_simpson(f, g.h());
}

namespace detail {

// Values at t = j h / 2 on the Monte Carlo grid, j = 0..2n.
inline std::vector<double> half_grid(const TrajectoryGrid& src, const std::vector<double>& v, const TimeGrid& g) {
  std::vector<double> out(2 * g.n_steps() + 1);
  for (std::size_t j = 0; j < out.size(); ++j)
    out[j] = src.interpolate(v, g.t0() + static_cast<double>(j) * g.h() / 2);
  out.back() = src.interpolate(v, g.t1());
  return out;
}

inline std::vector<double> payoff_weights(const TimeGrid& g, bool zero_noise) {
  return zero_noise ? simpson_weights(g.n_steps(), g.h()) : trapezoid_weights(g.n_steps(), g.h());
}

inline void draw_increments(std::vector<double>& dw, RngSeed seed, std::size_t path, double h, bool zero_noise) {
  if (zero_noise) {
    std::fill(dw.begin(), dw.end(), 0.0);
    return;
  }
  auto rng = path_rng(seed, path);
  std::normal_distribution<double> normal;
  const double sq = std::sqrt(h);
  for (auto& v : dw) v = sq * normal(rng);
}

// One scalar path x' = drift(j, x) with Euler-Maruyama (or RK4 without noise).
// drift and the noise coefficient are evaluated on the half grid index j.
template <class Drift, class Noise>
void integrate_path(std::vector<double>& xs, double x0, const std::vector<double>& dw, double h, bool zero_noise,
                    Drift&& drift, Noise&& noise) {
  const std::size_t n = dw.size();
  xs[0] = x0;
  double x = x0;
  for (std::size_t i = 0; i < n; ++i) {
    if (zero_noise) {
      const double k1 = drift(2 * i, x);
      const double k2 = drift(2 * i + 1, x + h / 2 * k1);
      const double k3 = drift(2 * i + 1, x + h / 2 * k2);
      const double k4 = drift(2 * i + 2, x + h * k3);
      x += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    } else {
      x += drift(2 * i, x) * h + noise(i, x) * dw[i];
    }
    xs[i + 1] = x;
  }
}

}  // namespace detail

struct PayoffPair {
  McEstimate J0_star;         // equilibrium, rate r, path-wise
  McEstimate J_tilde;         // punished defection, rate r + k
  double J0_star_mean = 0;    // equilibrium payoff of the mean path
  double J_tilde_mean = 0;    // defection payoff of the deterministic mean path
  std::vector<double> mean_x_star;  // per Monte Carlo node
  std::vector<double> mean_x_hat;
  TimeGrid grid;
};

/// Monte Carlo leader payoffs: open-loop equilibrium control at rate r versus
/// feedback defection at rate r + k, on common random numbers.
inline PayoffPair mc_payoffs(const MfgParams& p, const MeanFieldSolution& sol, double k, const McConfig& mc) {
  mc.validate(p.T);
  const TimeGrid g(0, p.T, mc.n_steps);
  const auto def = defection_solution(p, k, sol);
  TrajectoryGrid dg(sol.traj.grid());
  dg.add("Q", def.Q);
  dg.add("q", def.q);
  const auto xbar = detail::half_grid(sol.traj, sol.traj["xbar"], g);
  const auto u0 = detail::half_grid(sol.traj, sol.traj["u0"], g);
  const auto Q = detail::half_grid(dg, dg["Q"], g);
  const auto q = detail::half_grid(dg, dg["q"], g);
  const auto w = detail::payoff_weights(g, mc.zero_noise);
  const std::size_t n = g.n_steps(), nodes = n + 1;
  const double h = g.h(), rt = p.r + k, kk = p.B0 / (2 * p.a0);
  std::vector<double> disc(nodes), disc_t(nodes);
  for (std::size_t i = 0; i < nodes; ++i) {
    disc[i] = std::exp(-p.r * g.t(i));
    disc_t[i] = std::exp(-rt * g.t(i));
  }
  const std::size_t n_paths = mc.zero_noise ? 1 : mc.n_paths;
  const bool literal = mc.diffusion == DiffusionReading::literal;

  auto sums = sum_over_paths(n_paths, 4 + 2 * nodes, mc.workers, [&](std::size_t path, double* acc) {
    std::vector<double> dw(n), xs(nodes), xh(nodes);
    detail::draw_increments(dw, mc.seed, path, h, mc.zero_noise);
    detail::integrate_path(
        xs, p.x0_init, dw, h, mc.zero_noise,
        [&](std::size_t j, double x) { return p.A0 * x + p.B0 * u0[j] + p.C0 * xbar[j]; },
        [&](std::size_t, double x) { return wright_fisher(x); });
    detail::integrate_path(
        xh, p.x0_init, dw, h, mc.zero_noise,
        [&](std::size_t j, double x) { return p.A0 * x + p.B0 * kk * (Q[j] * x + q[j]) + p.C0 * xbar[j]; },
        [&](std::size_t i, double x) { return wright_fisher(literal ? xs[i] : x); });
    double js = 0, jt = 0;
    for (std::size_t i = 0; i < nodes; ++i) {
      if (!std::isfinite(xs[i]) || !std::isfinite(xh[i])) throw SimulationBlowup(path, i);
      const double ys = xs[i] - p.l0 * xbar[2 * i] + p.b0;
      const double uh = kk * (Q[2 * i] * xh[i] + q[2 * i]);
      const double yh = xh[i] - p.l0 * xbar[2 * i] + p.b0;
      js += w[i] * disc[i] * (-p.a0 * u0[2 * i] * u0[2 * i] + ys * ys);
      jt += w[i] * disc_t[i] * (-p.a0 * uh * uh + yh * yh);
      acc[4 + i] += xs[i];
      acc[4 + nodes + i] += xh[i];
    }
    acc[0] += js;
    acc[1] += js * js;
    acc[2] += jt;
    acc[3] += jt * jt;
  });
  PayoffPair out{estimate_from_sums(sums[0], sums[1], n_paths, mc.seed),
                 estimate_from_sums(sums[2], sums[3], n_paths, mc.seed),
                 equilibrium_payoff_mean(p, sol),
                 defection_payoff_mean(p, sol, def),
                 std::vector<double>(nodes),
                 std::vector<double>(nodes),
                 g};
  for (std::size_t i = 0; i < nodes; ++i) {
    out.mean_x_star[i] = sums[4 + i] / static_cast<double>(n_paths);
    out.mean_x_hat[i] = sums[4 + nodes + i] / static_cast<double>(n_paths);
  }
  return out;
}

/// Bounded test direction c0 + c1 sin(pi t / T) + c2 cos(2 pi t / T).
struct Perturbation {
  double c0 = 0, c1 = 0, c2 = 0;
  double operator()(double t, double T) const {
    const double pi = 3.14159265358979323846;
    return c0 + c1 * std::sin(pi * t / T) + c2 * std::cos(2 * pi * t / T);
  }
  bool is_zero() const { return c0 == 0 && c1 == 0 && c2 == 0; }
};

inline std::vector<Perturbation> random_perturbations(RngSeed seed, std::size_t count) {
  std::mt19937_64 rng(splitmix64(seed ^ 0x5bd1e995ULL));
  std::uniform_real_distribution<double> u(-1, 1);
  std::vector<Perturbation> out(count);
  for (auto& v : out) {
    v.c0 = u(rng);
    v.c1 = u(rng);
    v.c2 = u(rng);
  }
  return out;
}

inline std::vector<double> sample(const Perturbation& pert, const TimeGrid& g, double T) {
  std::vector<double> v(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) v[i] = pert(g.t(i), T);
  return v;
}

struct EulerEstimate {
  double derivative = 0;
  double se = 0;
  std::size_t n_paths = 0;
};

inline constexpr double kEulerTheta = 1e-4;

/// Central difference (J(u + theta v) - J(u - theta v)) / (2 theta) of the
/// leader payoff, where followers re-respond to the perturbed control.
/// `u0` is the candidate leader control on the mean-field grid.
inline EulerEstimate euler_condition_check(const MfgParams& p, const MeanFieldSolution& sol,
                                           const std::vector<double>& u0, const Perturbation& pert,
                                           const McConfig& mc, double theta = kEulerTheta) {
  mc.validate(p.T);
  const auto& dgrid = sol.traj.grid();
  if (u0.size() != dgrid.size()) throw ParameterError("candidate control does not match the grid", "u0");
  const TimeGrid g(0, p.T, mc.n_steps);
  const std::size_t n = g.n_steps(), nodes = n + 1;
  const std::size_t n_paths = mc.zero_noise ? 1 : mc.n_paths;
  if (pert.is_zero()) return {0.0, 0.0, n_paths};

  auto base = follower_response(p, dgrid, u0, sol.form);
  const auto vdir = sample(pert, dgrid, p.T);
  auto var = follower_response(p, dgrid, vdir, sol.form, true);
  TrajectoryGrid ug(dgrid);
  ug.add("u0", u0);
  ug.add("v", vdir);
  const auto uh = detail::half_grid(ug, ug["u0"], g);
  const auto vh = detail::half_grid(ug, ug["v"], g);
  const auto xb = detail::half_grid(base, base["xbar"], g);
  const auto dxb = detail::half_grid(var, var["xbar"], g);
  const auto dx0 = detail::half_grid(var, var["x0"], g);
  const auto w = detail::payoff_weights(g, mc.zero_noise);
  const double h = g.h();
  std::vector<double> disc(nodes);
  for (std::size_t i = 0; i < nodes; ++i) disc[i] = std::exp(-p.r * g.t(i));
  const bool frozen = mc.coupling == EulerCoupling::frozen;

  auto sums = sum_over_paths(n_paths, 2, mc.workers, [&](std::size_t path, double* acc) {
    std::vector<double> dw(n), xs(nodes), xp(nodes), xm(nodes);
    detail::draw_increments(dw, mc.seed, path, h, mc.zero_noise);
    auto run = [&](std::vector<double>& out, double s) {
      detail::integrate_path(
          out, p.x0_init, dw, h, mc.zero_noise,
          [&](std::size_t j, double x) {
            return p.A0 * x + p.B0 * (uh[j] + s * vh[j]) + p.C0 * (xb[j] + s * dxb[j]);
          },
          [&](std::size_t, double x) { return wright_fisher(x); });
    };
    run(xs, 0.0);
    if (frozen) {
      for (std::size_t i = 0; i < nodes; ++i) {
        xp[i] = xs[i] + theta * dx0[2 * i];
        xm[i] = xs[i] - theta * dx0[2 * i];
      }
    } else {
      run(xp, theta);
      run(xm, -theta);
    }
    double jp = 0, jm = 0;
    for (std::size_t i = 0; i < nodes; ++i) {
      const std::size_t j = 2 * i;
      const double up = uh[j] + theta * vh[j], um = uh[j] - theta * vh[j];
      const double yp = xp[i] - p.l0 * (xb[j] + theta * dxb[j]) + p.b0;
      const double ym = xm[i] - p.l0 * (xb[j] - theta * dxb[j]) + p.b0;
      jp += w[i] * disc[i] * (-p.a0 * up * up + yp * yp);
      jm += w[i] * disc[i] * (-p.a0 * um * um + ym * ym);
    }
    const double d = (jp - jm) / (2 * theta);
    acc[0] += d;
    acc[1] += d * d;
  });
  auto e = estimate_from_sums(sums[0], sums[1], n_paths, mc.seed);
  return {e.mean, e.se, n_paths};
}

/// Same central difference for a representative follower playing the
/// feedback control against the equilibrium mean field.
inline EulerEstimate follower_euler_check(const MfgParams& p, const MeanFieldSolution& sol, const Perturbation& pert,
                                          const McConfig& mc, double theta = kEulerTheta) {
  mc.validate(p.T);
  const auto& dgrid = sol.traj.grid();
  const TimeGrid g(0, p.T, mc.n_steps);
  const std::size_t n = g.n_steps(), nodes = n + 1;
  const std::size_t n_paths = mc.zero_noise ? 1 : mc.n_paths;
  if (pert.is_zero()) return {0.0, 0.0, n_paths};
  // deterministic state shift: x~' = A x~ + B v, x~(0) = 0
  AffineSystem shift;
  shift.dim = 1;
  shift.names = {"dx"};
  const double A = p.A, B = p.B, T = p.T;
  shift.matrix = [A](double) { return Eigen::MatrixXd::Constant(1, 1, A); };
  shift.offset = [B, pert, T](double t) { return Eigen::VectorXd::Constant(1, B * pert(t, T)); };
  shift.boundary = {{0, Endpoint::start, 0.0}};
  auto sh = rk4_solve(shift, dgrid);

  const auto F = detail::half_grid(sol.traj, sol.traj["F"], g);
  const auto f = detail::half_grid(sol.traj, sol.traj["fbar"], g);
  const auto u0 = detail::half_grid(sol.traj, sol.traj["u0"], g);
  const auto xb = detail::half_grid(sol.traj, sol.traj["xbar"], g);
  const auto m0 = detail::half_grid(sol.traj, sol.traj["x0"], g);
  const auto dx = detail::half_grid(sh, sh["dx"], g);
  const auto w = detail::payoff_weights(g, mc.zero_noise);
  const double h = g.h();
  std::vector<double> disc(nodes), v(2 * n + 1);
  for (std::size_t i = 0; i < nodes; ++i) disc[i] = std::exp(-p.r * g.t(i));
  for (std::size_t j = 0; j < v.size(); ++j) v[j] = pert(static_cast<double>(j) * h / 2, p.T);
  const bool frozen = mc.coupling == EulerCoupling::frozen;
  const bool literal = mc.diffusion == DiffusionReading::literal;

  auto feedback = [&](std::size_t j, double x) { return -(p.B * (F[j] * x + f[j]) + p.sigma * u0[j]) / p.a; };
  auto sums = sum_over_paths(n_paths, 2, mc.workers, [&](std::size_t path, double* acc) {
    std::vector<double> dw(n), xs(nodes), xp(nodes), xm(nodes), lead(nodes);
    detail::draw_increments(dw, mc.seed, path, h, mc.zero_noise);
    if (literal) {
      std::vector<double> dw0(n);
      detail::draw_increments(dw0, mc.seed ^ 0xa0761d6478bd642fULL, path, h, mc.zero_noise);
      detail::integrate_path(
          lead, p.x0_init, dw0, h, mc.zero_noise,
          [&](std::size_t j, double x) { return p.A0 * x + p.B0 * u0[j] + p.C0 * xb[j]; },
          [&](std::size_t, double x) { return wright_fisher(x); });
    }
    auto noise = [&](std::size_t i, double x) { return wright_fisher(literal ? lead[i] : x); };
    detail::integrate_path(
        xs, p.xbar_init, dw, h, mc.zero_noise,
        [&](std::size_t j, double x) { return p.A * x + p.B * feedback(j, x) + p.C * xb[j] + p.D * m0[j]; }, noise);
    // realised control along the base path, perturbed open-loop
    std::vector<double> ub(nodes);
    for (std::size_t i = 0; i < nodes; ++i) ub[i] = feedback(2 * i, xs[i]);
    if (frozen) {
      for (std::size_t i = 0; i < nodes; ++i) {
        xp[i] = xs[i] + theta * dx[2 * i];
        xm[i] = xs[i] - theta * dx[2 * i];
      }
    } else {
      // re-simulate with the base control sequence held open-loop
      auto run = [&](std::vector<double>& out, double s) {
        out[0] = p.xbar_init;
        double x = p.xbar_init;
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = 2 * i;
          x += (p.A * x + p.B * (ub[i] + s * v[j]) + p.C * xb[j] + p.D * m0[j]) * h + noise(i, x) * dw[i];
          out[i + 1] = x;
        }
      };
      run(xp, theta);
      run(xm, -theta);
    }
    double jp = 0, jm = 0;
    for (std::size_t i = 0; i < nodes; ++i) {
      const std::size_t j = 2 * i;
      const double up = ub[i] + theta * v[j], um = ub[i] - theta * v[j];
      const double yp = xp[i] - p.l * xb[j] + p.b, ym = xm[i] - p.l * xb[j] + p.b;
      jp += w[i] * disc[i] * (-p.a * up * up + yp * yp - 2 * p.sigma * u0[j] * up);
      jm += w[i] * disc[i] * (-p.a * um * um + ym * ym - 2 * p.sigma * u0[j] * um);
    }
    const double d = (jp - jm) / (2 * theta);
    acc[0] += d;
    acc[1] += d * d;
  });
  auto e = estimate_from_sums(sums[0], sums[1], n_paths, mc.seed);
  return {e.mean, e.se, n_paths};
}

struct FeedbackCheck {
  double max_abs_gap = 0;  // max_t |mean(F x_i + f) - pbar|
  double worst_gap = 0;    // gap at the node with the worst ratio
  double worst_se = 0;     // standard error at that node
  double worst_ratio = 0;  // max_t gap / (3 SE + 1e-6)
  double terminal_gap = 0; // |mean p_i(T)|
  bool ok = false;
};

/// Simulates followers under the feedback control and compares the sample
/// mean of F x_i + f with the mean costate pbar.
inline FeedbackCheck follower_feedback_check(const MfgParams& p, const MeanFieldSolution& sol, const McConfig& mc) {
  mc.validate(p.T);
  const TimeGrid g(0, p.T, mc.n_steps);
  const std::size_t n = g.n_steps(), nodes = n + 1;
  const std::size_t n_paths = mc.zero_noise ? 1 : mc.n_paths;
  const auto F = detail::half_grid(sol.traj, sol.traj["F"], g);
  const auto f = detail::half_grid(sol.traj, sol.traj["fbar"], g);
  const auto u0 = detail::half_grid(sol.traj, sol.traj["u0"], g);
  const auto xb = detail::half_grid(sol.traj, sol.traj["xbar"], g);
  const auto m0 = detail::half_grid(sol.traj, sol.traj["x0"], g);
  const auto pb = detail::half_grid(sol.traj, sol.traj["pbar"], g);
  const double h = g.h();
  auto sums = sum_over_paths(n_paths, 2 * nodes, mc.workers, [&](std::size_t path, double* acc) {
    std::vector<double> dw(n), xs(nodes);
    detail::draw_increments(dw, mc.seed, path, h, mc.zero_noise);
    detail::integrate_path(
        xs, p.xbar_init, dw, h, mc.zero_noise,
        [&](std::size_t j, double x) {
          const double u = -(p.B * (F[j] * x + f[j]) + p.sigma * u0[j]) / p.a;
          return p.A * x + p.B * u + p.C * xb[j] + p.D * m0[j];
        },
        [&](std::size_t, double x) { return wright_fisher(x); });
    for (std::size_t i = 0; i < nodes; ++i) {
      const double pi = F[2 * i] * xs[i] + f[2 * i];
      acc[i] += pi;
      acc[nodes + i] += pi * pi;
    }
  });
  FeedbackCheck out;
  for (std::size_t i = 0; i < nodes; ++i) {
    auto e = estimate_from_sums(sums[i], sums[nodes + i], n_paths, mc.seed);
    const double gap = std::abs(e.mean - pb[2 * i]);
    const double ratio = gap / (3 * e.se + 1e-6);
    out.max_abs_gap = std::max(out.max_abs_gap, gap);
    if (ratio > out.worst_ratio) {
      out.worst_ratio = ratio;
      out.worst_gap = gap;
      out.worst_se = e.se;
    }
    if (i == n) out.terminal_gap = std::abs(e.mean);
  }
  out.ok = out.worst_ratio <= 1;
  return out;
}

struct GrowthCheck {
  bool ok;
  double slope;
  double threshold;
};

/// Least-squares slope of log(1 + |m(t)|) over the second half of the grid,
/// compared against r_tilde / 2.
inline GrowthCheck growth_order_check(const std::vector<double>& mean, const TimeGrid& g, double r_tilde,
                                      double margin = 1e-6) {
  if (mean.size() != g.size()) throw ParameterError("trajectory does not match its grid", "trajectory");
  double st = 0, sy = 0, stt = 0, sty = 0, cnt = 0;
  const double mid = 0.5 * (g.t0() + g.t1());
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double t = g.t(i);
    if (t < mid) continue;
    const double y = std::log1p(std::abs(mean[i]));
    st += t;
    sy += y;
    stt += t * t;
    sty += t * y;
    cnt += 1;
  }
  const double slope = (cnt * sty - st * sy) / (cnt * stt - st * st);
  const double thr = r_tilde / 2 - margin;
  return {slope < thr, slope, thr};
}

struct MeanfieldPenaltyResult {
  PenaltySearchResult search;
  McEstimate J0_star;
  McEstimate J_tilde;      // at k_min
  double J0_star_mean = 0; // equilibrium payoff of the mean path
  GrowthCheck growth{};    // defection ensemble at r + k_min
  bool monotone = true;    // J~ non-increasing along the trace up to 3 SE
  std::vector<double> trace_se;  // standard error of J~ per trace entry
};

/// Smallest k with J~(k) + 3 SE < J* - 3 SE, by bisection to 0.01 in k.
inline MeanfieldPenaltyResult min_k_meanfield(const MfgParams& p, const MeanFieldSolution& sol, const McConfig& mc,
                                             double tol = 0.01) {
  MeanfieldPenaltyResult out;
  auto& r = out.search;
  r.tol = tol;
  auto base = mc_payoffs(p, sol, 0.0, mc);
  out.J0_star = base.J0_star;
  out.J0_star_mean = base.J0_star_mean;
  r.j_star = base.J0_star.mean;
  const double bar = base.J0_star.mean - 3 * base.J0_star.se;

  std::map<double, bool> seen;
  auto probe = [&](double k) {
    if (auto it = seen.find(k); it != seen.end()) return it->second;
    auto pr = k == 0 ? base : mc_payoffs(p, sol, k, mc);
    const bool ok = pr.J_tilde.mean + 3 * pr.J_tilde.se < bar;
    r.trace.push_back({k, pr.J0_star.mean, pr.J_tilde.mean, ok});
    out.trace_se.push_back(pr.J_tilde.se);
    seen[k] = ok;
    return ok;
  };

  double lo = 0, hi = 1;
  if (probe(0.0)) {
    r.k_min = 0;
    r.notes.push_back("defection does not pay even without punishment");
  } else {
    while (!probe(hi)) {
      lo = hi;
      hi *= 2;
      if (hi > 1e3) throw NoDeterrent("no penalty rate up to 1000 deters defection");
    }
    auto b = find_threshold_bisect(probe, lo, hi, tol);
    r.k_min = b.root;
    r.lo = b.lo;
    r.hi = b.hi;
    r.iterations = b.iterations;
  }
  auto fin = mc_payoffs(p, sol, r.k_min, mc);
  out.J_tilde = fin.J_tilde;
  r.j_tilde = fin.J_tilde.mean;
  r.certified = fin.J_tilde.mean + 3 * fin.J_tilde.se < bar;
  out.growth = growth_order_check(fin.mean_x_hat, fin.grid, p.r + r.k_min);
  if (!out.growth.ok)
    r.notes.push_back("growth check fails at r + k_min = " + std::to_string(p.r + r.k_min) + ": log-slope " +
                      std::to_string(out.growth.slope) + " is not below " + std::to_string(out.growth.threshold));

  // monotonicity along the trace, sorted by k
  std::vector<std::size_t> idx(r.trace.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](auto x, auto y) { return r.trace[x].k < r.trace[y].k; });
  for (std::size_t i = 1; i < idx.size(); ++i) {
    const auto &prev = r.trace[idx[i - 1]], &cur = r.trace[idx[i]];
    const double se = std::hypot(out.trace_se[idx[i - 1]], out.trace_se[idx[i]]);
    if (cur.j_tilde > prev.j_tilde + 3 * se + 1e-12) {
      out.monotone = false;
      r.notes.push_back("punished payoff increases between k = " + std::to_string(prev.k) + " and k = " +
                        std::to_string(cur.k) + " beyond Monte Carlo noise");
    }
  }
  return out;
}

/// Deterministic counterpart of min_k_meanfield on the mean system.
inline double min_k_meanfield_mean(const MfgParams& p, const MeanFieldSolution& sol, double tol = 0.01) {
  const double js = equilibrium_payoff_mean(p, sol);
  auto ok = [&](double k) { return defection_payoff_mean(p, sol, defection_solution(p, k, sol)) < js; };
  if (ok(0.0)) return 0.0;
  double lo = 0, hi = 1;
  while (!ok(hi)) {
    lo = hi;
    hi *= 2;
    if (hi > 1e3) throw NoDeterrent("no penalty rate up to 1000 deters defection");
  }
  return find_threshold_bisect(ok, lo, hi, tol).root;
}

}  // namespace stackel::meanfield
