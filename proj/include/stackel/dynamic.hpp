#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "stackel/error.hpp"
#include "stackel/numerics/eigen2.hpp"
#include "stackel/numerics/ode.hpp"
#include "stackel/numerics/quadrature.hpp"
#include "stackel/numerics/root.hpp"
#include "stackel/numerics/time_grid.hpp"
#include "stackel/penalty.hpp"

// Continuous-time duopoly with learning by doing. The follower's unit cost
// falls as cbar1 - gamma x1 where x1' = u1 - delta x1; lambda is the leader's
// costate for x1.
namespace stackel::dynamic {

struct DynamicParams {
  double a = 10;
  double b = 1;
  double cbar1 = 2;
  double c0 = 0;
  double gamma = 0.02;
  double delta = 0.1;
  double r = 0.05;
  double T = 10;
  double x1_0 = 0;

  bool operator==(const DynamicParams&) const = default;

  // leader cost is absorbed into the intercept and the follower base cost
  double a_eff() const { return a - c0; }
  double cbar_eff() const { return cbar1 - c0; }

  /// Discriminant of the state-costate matrix.
  double discriminant() const {
    const double s = r + 2 * delta;
    return s * s - 3 * gamma / b * s + 2 * gamma * gamma / (b * b);
  }
  /// The same quantity in the form r^2 + 4 delta (r + delta) - (4 gamma / b)(r + 2 delta).
  double discriminant_printed() const {
    return r * r + 4 * delta * (r + delta) - 4 * gamma / b * (r + 2 * delta);
  }

  void validate() const {
    const std::pair<double, const char*> all[] = {{a, "a"},         {b, "b"},         {cbar1, "cbar1"},
                                                  {c0, "c0"},       {gamma, "gamma"}, {delta, "delta"},
                                                  {r, "r"},         {T, "T"},         {x1_0, "x1_0"}};
    for (auto [v, f] : all)
      if (!std::isfinite(v)) throw ParameterError(std::string(f) + " must be finite", f);
    if (!(b > 0)) throw ParameterError("b must be > 0", "b");
    if (!(gamma >= 0)) throw ParameterError("gamma must be >= 0", "gamma");
    if (!(delta > 0)) throw ParameterError("delta must be > 0", "delta");
    if (!(r > 0)) throw ParameterError("r must be > 0", "r");
    if (!(T > 0)) throw ParameterError("T must be > 0", "T");
    if (!(c0 >= 0)) throw ParameterError("c0 must be >= 0", "c0");
    if (!(cbar1 >= c0)) throw ParameterError("cbar1 must be >= c0", "cbar1");
    if (gamma > cbar1) throw ParameterError("gamma must not exceed cbar1", "gamma");
    if (!(a_eff() > 0)) throw ParameterError("a must exceed c0", "a");
    if (!(x1_0 >= 0)) throw ParameterError("x1_0 must be >= 0", "x1_0");
    if (!(discriminant() > r * r))
      throw HypothesisViolation("saddle structure needs discriminant > r^2; got discriminant " +
                                std::to_string(discriminant()) + " <= r^2 = " + std::to_string(r * r));
  }
};

/// State-costate matrix and offset of (x1, lambda).
inline Eigen::Matrix2d system_matrix(const DynamicParams& p) {
  Eigen::Matrix2d m;
  m << 3 * p.gamma / (4 * p.b) - p.delta, 1 / (4 * p.b), -p.gamma * p.gamma / (4 * p.b),
      p.r + p.delta - 3 * p.gamma / (4 * p.b);
  return m;
}

inline Eigen::Vector2d system_offset(const DynamicParams& p) {
  const double a = p.a_eff(), c = p.cbar_eff();
  return {(a - 3 * c) / (4 * p.b), p.gamma * (a + c) / (4 * p.b)};
}

struct SaddleStructure {
  double Delta;          // discriminant of the system matrix
  double Delta_printed;  // alternative expression, kept for reporting
  double s1;
  double s2;
  double q1;
  double q2;
  double alpha1;
  double alpha2;
  double lambda0;  // costate at t = 0 for x1(0) = 0
};

inline SaddleStructure saddle_structure(const DynamicParams& p) {
  p.validate();
  const double a = p.a_eff(), c = p.cbar_eff(), b = p.b, g = p.gamma, T = p.T;
  SaddleStructure s{};
  s.Delta = p.discriminant();
  s.Delta_printed = p.discriminant_printed();
  const double root = std::sqrt(s.Delta);
  s.s1 = (p.r - root) / 2;
  s.s2 = (p.r + root) / 2;
  s.q1 = 4 * b * (s.s1 + p.delta - 3 * g / (4 * b));
  s.q2 = 4 * b * (s.s2 + p.delta - 3 * g / (4 * b));
  s.alpha1 = s.q1 * (a - 3 * c) - g * (a + c);
  s.alpha2 = s.q2 * (a - 3 * c) - g * (a + c);
  const double e1 = std::exp(s.s1 * T), e2 = std::exp(s.s2 * T);
  s.lambda0 = (s.q1 * s.alpha2 * s.s2 * (e1 - 1) - s.q2 * s.alpha1 * s.s1 * (e2 - 1)) /
              (4 * b * s.s1 * s.s2 * (s.q1 * e1 - s.q2 * e2));
  return s;
}

/// x1(t) = x0 + x1 e^{s1 t} + x2 e^{s2 t} and lambda(t) likewise.
struct ExpDecomposition {
  double s1, s2;
  double x0, x1, x2;
  double l0, l1, l2;

  double x(double t) const { return x0 + x1 * std::exp(s1 * t) + x2 * std::exp(s2 * t); }
  double lambda(double t) const { return l0 + l1 * std::exp(s1 * t) + l2 * std::exp(s2 * t); }
};

/// Closed-form saddle path for any x1(0): the x1(0) = 0 solution plus a
/// homogeneous mode carrying the initial stock.
inline ExpDecomposition closed_form(const DynamicParams& p, const SaddleStructure& s) {
  const double b = p.b, root = std::sqrt(s.Delta), den = 4 * b * root;
  const double u = s.alpha2 / (4 * b * s.s1), v = s.alpha1 / (4 * b * s.s2);
  ExpDecomposition d{s.s1, s.s2, (v - u) / den, (u - s.lambda0) / den, (s.lambda0 - v) / den,
                     (s.q2 * v - s.q1 * u) / den, s.q1 * (u - s.lambda0) / den, s.q2 * (s.lambda0 - v) / den};
  if (p.x1_0 != 0) {
    // K1 + K2 = 1, q1 K1 e^{s1 T} + q2 K2 e^{s2 T} = 0
    const double e1 = std::exp(s.s1 * p.T), e2 = std::exp(s.s2 * p.T);
    const double k1 = s.q2 * e2 / (s.q2 * e2 - s.q1 * e1);
    const double k2 = 1 - k1;
    d.x1 += p.x1_0 * k1;
    d.x2 += p.x1_0 * k2;
    d.l1 += p.x1_0 * s.q1 * k1;
    d.l2 += p.x1_0 * s.q2 * k2;
  }
  return d;
}

/// Pointwise controls and payoff integrands given the state and costate.
struct Pointwise {
  const DynamicParams& p;

  double X(double x) const { return p.a_eff() + p.cbar_eff() - p.gamma * x; }
  double u0(double x, double l) const { return (X(x) - l) / (2 * p.b); }
  double u1(double x, double l) const {
    return (p.a_eff() - 3 * p.cbar_eff() + 3 * p.gamma * x + l) / (4 * p.b);
  }
  double u0_hat(double x, double l) const { return (3 * X(x) - l) / (8 * p.b); }
  double u0_hat_printed(double x, double l) const {
    return (3 * (p.a_eff() + 3 * p.cbar_eff() - p.gamma * x) - l) / (8 * p.b);
  }
  // undiscounted flow profits
  double equilibrium_flow(double x, double l) const { return (X(x) * X(x) - l * l) / (8 * p.b); }
  double defection_flow(double x, double l) const {
    const double y = 3 * X(x) - l;
    return y * y / (64 * p.b);
  }
  double leader_profit(double u0v, double u1v) const {
    return u0v * (p.a_eff() - p.b * (u0v + u1v));
  }
};

struct Equilibrium {
  SaddleStructure saddle;
  ExpDecomposition path;
  TrajectoryGrid traj;  // x1, lambda, u0, u1, u0_hat, u0_hat_printed
  double x_boundary_residual;
  double lambda_boundary_residual;
  std::optional<double> kink_time;  // first time the follower cost reaches the leader's
  bool negative_control = false;
  std::vector<std::string> warnings;
};

inline Equilibrium equilibrium_trajectories(const DynamicParams& p, const TimeGrid& grid) {
  auto s = saddle_structure(p);
  auto d = closed_form(p, s);
  Pointwise pw{p};
  const std::size_t n = grid.size();
  std::vector<double> x(n), l(n), u0(n), u1(n), uh(n), uhp(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = grid.t(i);
    x[i] = d.x(t);
    l[i] = d.lambda(t);
    u0[i] = pw.u0(x[i], l[i]);
    u1[i] = pw.u1(x[i], l[i]);
    uh[i] = pw.u0_hat(x[i], l[i]);
    uhp[i] = pw.u0_hat_printed(x[i], l[i]);
  }
  Equilibrium eq{s, d, TrajectoryGrid(grid), std::abs(d.x(grid.t0()) - p.x1_0), std::abs(d.lambda(p.T)),
                 std::nullopt, false, {}};
  if (p.gamma > 0) {
    const double kink = p.cbar_eff() / p.gamma;
    for (std::size_t i = 0; i < n; ++i)
      if (x[i] >= kink) {
        eq.kink_time = grid.t(i);
        eq.warnings.push_back("follower stock reaches the cost kink x1 = " + std::to_string(kink) +
                              " at t = " + std::to_string(grid.t(i)) + "; linear-branch extrapolation");
        break;
      }
  }
  for (std::size_t i = 0; i < n && !eq.negative_control; ++i)
    if (u0[i] < 0 || u1[i] < 0 || uh[i] < 0) {
      eq.negative_control = true;
      eq.warnings.push_back("negative control at t = " + std::to_string(grid.t(i)));
    }
  eq.traj.add("x1", std::move(x));
  eq.traj.add("lambda", std::move(l));
  eq.traj.add("u0", std::move(u0));
  eq.traj.add("u1", std::move(u1));
  eq.traj.add("u0_hat", std::move(uh));
  eq.traj.add("u0_hat_printed", std::move(uhp));
  return eq;
}

inline AffineSystem equilibrium_system(const DynamicParams& p) {
  p.validate();
  Eigen::MatrixXd m = system_matrix(p);
  Eigen::VectorXd c = system_offset(p);
  AffineSystem sys;
  sys.dim = 2;
  sys.matrix = [m](double) { return m; };
  sys.offset = [c](double) { return c; };
  sys.boundary = {{0, Endpoint::start, p.x1_0}, {1, Endpoint::end, 0.0}};
  sys.names = {"x1", "lambda"};
  return sys;
}

/// Numerical two-point solve of the same system, used as an oracle.
inline TrajectoryGrid equilibrium_bvp(const DynamicParams& p, const TimeGrid& grid,
                                      BvpDiagnostics* diag = nullptr) {
  return solve_affine_bvp(equilibrium_system(p), grid, diag);
}

namespace detail {

inline TimeGrid horizon_grid(const DynamicParams& p, std::size_t n_steps) { return TimeGrid(0, p.T, n_steps); }

// Simpson quadrature of f over [t_lo, t_hi] with n_steps intervals.
template <class F>
double simpson(F&& f, double t_lo, double t_hi, std::size_t n_steps) {
  if (!(t_hi > t_lo)) return 0.0;
  if (n_steps % 2) throw ConfigError("Simpson quadrature needs an even number of steps");
  const double h = (t_hi - t_lo) / static_cast<double>(n_steps);
  double s = f(t_lo) + f(t_hi);
  for (std::size_t i = 1; i < n_steps; ++i) s += (i % 2 ? 4 : 2) * f(t_lo + static_cast<double>(i) * h);
  return s * h / 3;
}

}  // namespace detail

/// Leader payoff on the announced path, discounted at r.
inline double equilibrium_payoff(const DynamicParams& p, const TimeGrid& grid) {
  auto s = saddle_structure(p);
  auto d = closed_form(p, s);
  Pointwise pw{p};
  return detail::simpson(
      [&](double t) { return std::exp(-p.r * t) * pw.equilibrium_flow(d.x(t), d.lambda(t)); }, grid.t0(),
      grid.t1(), grid.n_steps());
}

/// How the costate is read once the penalty starts.
enum class RateReading {
  original,  // x1, lambda stay on the path computed at r
  raised,    // x1, lambda recomputed with r replaced by r + k
};

/// Leader payoff when it defects from t0 on and the third party discounts the
/// payoff after t0 by exp(-k (t - t0)).
inline double defection_payoff(const DynamicParams& p, double k, double t0, const TimeGrid& grid,
                               RateReading reading = RateReading::original) {
  p.validate();
  if (!(t0 >= 0 && t0 <= p.T)) throw ParameterError("defection time t0 must lie in [0, T]", "t0");
  if (!(k >= 0) || !std::isfinite(k)) throw ParameterError("penalty rate k must be >= 0", "k");
  auto s = saddle_structure(p);
  auto d = closed_form(p, s);
  ExpDecomposition dd = d;
  if (reading == RateReading::raised && k > 0) {
    DynamicParams q = p;
    q.r = p.r + k;
    dd = closed_form(q, saddle_structure(q));
  }
  Pointwise pw{p};
  const std::size_t n = grid.n_steps();
  double before = 0;
  if (t0 >= p.T) return equilibrium_payoff(p, grid);
  if (t0 > 0)
    before = detail::simpson(
        [&](double t) { return std::exp(-p.r * t) * pw.equilibrium_flow(d.x(t), d.lambda(t)); }, 0.0, t0, n);
  const double after = detail::simpson(
      [&](double t) {
        return std::exp(-p.r * t - k * (t - t0)) * pw.defection_flow(dd.x(t), dd.lambda(t));
      },
      t0, p.T, n);
  return before + after;
}

/// Max over the grid of the relative gap between 64 b (equilibrium flow -
/// discounted defection flow) and its expanded quadratic form (defection at 0).
inline double flow_identity_residual(const DynamicParams& p, double k, const TimeGrid& grid) {
  auto s = saddle_structure(p);
  auto d = closed_form(p, s);
  Pointwise pw{p};
  double worst = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double t = grid.t(i);
    const double x = d.x(t), l = d.lambda(t), X = pw.X(x);
    const double rho = std::exp(-k * t), disc = std::exp(-p.r * t);
    const double lhs = 64 * p.b * disc * (pw.equilibrium_flow(x, l) - rho * pw.defection_flow(x, l));
    const double rhs = disc * ((8 - 9 * rho) * X * X - (8 + rho) * l * l + 6 * rho * X * l);
    const double scale = std::max({1.0, disc * X * X, disc * l * l});
    worst = std::max(worst, std::abs(lhs - rhs) / scale);
  }
  return worst;
}

/// Coefficients of 64 b (J* - J~) written as sum_n A_n (e^{beta_n T} - 1) / beta_n.
struct GapConstants {
  std::array<double, 12> A{};
  std::array<double, 12> beta{};
  std::array<bool, 12> resonant{};
  std::array<double, 12> printed{};  // bracket values as typeset, for comparison
  double lambda_tilde = 0;
};

inline constexpr double kResonance = 1e-9;

/// (e^{beta T} - 1) / beta, with its limit T near beta = 0.
inline double exp_ratio(double beta, double T, bool* resonant = nullptr) {
  if (std::abs(beta) < kResonance) {
    if (resonant) *resonant = true;
    return T * (1 + beta * T / 2);
  }
  if (resonant) *resonant = false;
  return std::expm1(beta * T) / beta;
}

namespace detail {

inline std::array<double, 12> printed_brackets(const DynamicParams& p, const SaddleStructure& s) {
  const double b = p.b, g = p.gamma, D = s.Delta, sD = std::sqrt(D), L = s.lambda0;
  const double q1 = s.q1, q2 = s.q2, a1 = s.alpha1, a2 = s.alpha2, s1 = s.s1, s2 = s.s2;
  const double ac = p.a_eff() + p.cbar_eff();
  const double b2 = b * b;
  const double w1 = a2 / (4 * b * s1), w2 = a1 / (4 * b * s2);
  std::array<double, 12> A{};
  A[0] = -4 * L * a2 * q1 / (D * b * s1) + a1 * a1 * q1 * q1 / (D * b2 * s1 * s1) -
         a1 * a2 * q1 * q2 / (D * b2 * s1 * s2) + 16 * g * ac / sD * (L - w1) +
         g * g / D * (L * 4 * a2 / (b * s1) - a2 * a2 / (b2 * s1 * s1) + a1 * a2 / (b2 * s1 * s2));
  A[1] = 4 * L * a1 * q1 / (D * b * s2) + a1 * a1 * q2 * q2 / (D * b2 * s2 * s2) -
         a1 * a2 * q1 * q2 / (D * b2 * s1 * s2) - 16 * g * ac / sD * (L - w2) +
         g * g / D * (a1 * a2 / (b2 * s1 * s2) - 4 * a1 * L / (b * s2) - a1 * a1 / (b2 * s2 * s2));
  A[2] = -8 * L * L * q1 * q1 / D - a1 * a1 * q1 * q1 / (2 * D * b2 * s1 * s1) + 8 * g * g * L * L / D +
         g * g * a2 * a2 / (2 * D * b2 * s1 * s1);
  A[3] = -8 * L * L * q2 * q2 / D - a1 * a1 * q2 * q2 / (2 * D * b2 * s2 * s2) + 8 * g * g * L * L / D +
         g * g * a1 * a1 / (2 * D * b2 * s2 * s2);
  A[4] = 16 * L * L * q1 * q2 / D + a1 * a2 * q1 * q2 / (D * b2 * s1 * s2) - a1 * a2 * g * g / (D * b2 * s1 * s2) -
         16 * L * L * g * g / D;
  A[5] = a1 * a2 * q1 * q2 / (D * b2 * s1 * s2) - 4 * L * a1 * q2 / (D * b * s2) - 4 * L * a2 * q1 / (D * b * s1) -
         a1 * a1 * q1 * q1 / (2 * D * b2 * s1 * s1) - a1 * a1 * q2 * q2 / (2 * D * b2 * s2 * s2) + 8 * ac * ac +
         4 * g * a2 * ac / (sD * b * s1) - 4 * g * a1 * ac / (sD * b * s2) + 4 * g * g * a2 * L / (D * b * s1) +
         4 * g * g * a1 * L / (D * b * s2) + a1 * a1 * g * g / (2 * D * b2 * s1 * s1) +
         a1 * a1 * g * g / (2 * D * b2 * s2 * s2) - a1 * a2 * g * g / (D * b2 * s1 * s2);
  A[6] = a1 * a1 * q1 * q1 / (8 * D * b2 * s1 * s1) - a1 * a2 * q1 * q2 / (8 * D * b2 * s1 * s2) -
         a2 * q1 * L / (2 * D * b * s1) + 18 * g * ac / sD * (w1 - L) +
         9 * g * g / D * (a1 * a1 / (8 * b2 * s1 * s1) - a1 * a2 / (8 * b2 * s1 * s2) - a2 * L / (2 * b * s1)) +
         6 * q1 * ac / sD * (w1 - L) + 6 * g / D * (q1 + 1) * (w1 - L) * (w1 - w2);
  A[7] = a1 * a1 * q2 * q2 / (8 * D * b2 * s2 * s2) - a1 * a2 * q1 * q2 / (8 * D * b2 * s1 * s2) +
         a1 * q2 * L / (2 * D * b * s2) + (18 * g + 6 * q2) * ac / sD * (L - w2) +
         9 * g * g / D * (a1 * a1 / (8 * b2 * s2 * s2) + a1 * L / (2 * b * s2) - a1 * a2 / (8 * b2 * s1 * s2)) +
         6 * g / D * (q2 + 1) * (L - w2) * (w1 - w2);
  A[8] = -L * L * q1 * q1 / D - a1 * a1 * q1 * q1 / (16 * D * b2 * s1 * s1) -
         9 * g * g / D * (L * L + a1 * a1 / (16 * b2 * s1 * s1)) - 6 * g * q1 / D * (w1 - L * L);
  A[9] = -L * L * q2 * q2 / D - a1 * a1 * q2 * q2 / (16 * D * b2 * s2 * s2) -
         9 * g * g / D * (L * L + a1 * a1 / (16 * b2 * s2 * s2)) + 6 * g * q2 / D * (w2 - L * L);
  A[10] = 2 * L * L * q1 * q2 / D + a1 * a2 * q1 * q2 / (8 * D * b2 * s1 * s2) +
          9 * g * g / D * (2 * L * L + a1 * a2 / (8 * b2 * s1 * s2)) +
          6 * g / D * (q1 + q2) * (w1 - L) * (a1 / (4 * b * s1) - L);
  A[11] = a1 * a2 * q1 * q2 / (8 * D * b2 * s1 * s2) - L * a1 * q2 / (2 * D * b * s2) - L * a2 * q1 / (2 * D * b * s1) -
          a1 * a1 * q1 * q1 / (16 * D * b2 * s1 * s1) - a1 * a1 * q2 * q2 / (16 * D * b2 * s2 * s2) - 9 * ac * ac -
          18 * g * ac / sD * (w1 - w2) - 6 * ac / sD * (a2 * q1 / (4 * b * s1) - a1 * q2 / (4 * b * s2)) -
          9 * g * g / D *
              (a2 * L / (2 * b * s1) + a1 * L / (2 * b * s2) + a1 * a1 / (16 * b2 * s1 * s1) +
               a1 * a1 / (16 * b2 * s2 * s2) - a1 * a2 / (8 * b2 * s1 * s2)) -
          6 * g / sD * (w1 - w2) * (w1 - w2);
  return A;
}

}  // namespace detail

inline GapConstants gap_constants(const DynamicParams& p, double k) {
  auto s = saddle_structure(p);
  auto d = closed_form(p, s);
  const double g = p.gamma, ac = p.a_eff() + p.cbar_eff();
  // X = ac - gamma x1, Y = 3 X - lambda, both as exponential sums
  const double X0 = ac - g * d.x0, X1 = -g * d.x1, X2 = -g * d.x2;
  const double L0 = d.l0, L1 = d.l1, L2 = d.l2;
  const double Y0 = 3 * X0 - L0, Y1 = 3 * X1 - L1, Y2 = 3 * X2 - L2;
  const double r = p.r, s1 = s.s1, s2 = s.s2;

  GapConstants c;
  c.lambda_tilde = d.lambda(0);
  c.A = {16 * (X0 * X1 - L0 * L1), 16 * (X0 * X2 - L0 * L2), 8 * (X1 * X1 - L1 * L1),
         8 * (X2 * X2 - L2 * L2),  16 * (X1 * X2 - L1 * L2), 8 * (X0 * X0 - L0 * L0),
         -2 * Y0 * Y1,             -2 * Y0 * Y2,             -Y1 * Y1,
         -Y2 * Y2,                 -2 * Y1 * Y2,             -Y0 * Y0};
  // s1 + s2 = r, so the fifth exponent is exactly zero
  c.beta = {s1 - r,     s2 - r,     2 * s1 - r,     2 * s2 - r,     0.0,         -r,
            s1 - k - r, s2 - k - r, 2 * s1 - k - r, 2 * s2 - k - r, s1 + s2 - k - r, -(k + r)};
  for (std::size_t i = 0; i < 12; ++i) c.resonant[i] = std::abs(c.beta[i]) < kResonance;
  c.printed = detail::printed_brackets(p, s);
  return c;
}

/// 64 b (J* - J~) for defection at t = 0, assembled from the exponential terms.
/// Non-negative exactly when defection does not pay.
inline double closed_form_gap(const DynamicParams& p, double k, GapConstants* out = nullptr) {
  auto c = gap_constants(p, k);
  double sum = 0;
  for (std::size_t i = 0; i < 12; ++i) sum += c.A[i] * exp_ratio(c.beta[i], p.T);
  if (out) *out = c;
  return sum;
}

struct DynamicPenaltyResult {
  PenaltySearchResult search;
  double k_min_quadrature = 0;           // same root from quadrature payoffs
  std::array<double, 4> scan_t0{};       // defection times checked
  std::array<double, 4> scan_j_tilde{};  // punished payoff at k_min + tol
  std::array<bool, 4> scan_ok{};
  std::array<double, 4> scan_k_min{};    // threshold for each scanned t0 (quadrature)
};

namespace detail {

// Grows [lo, hi] geometrically from [1e-6, 1] until f(hi) >= 0.
template <class F>
std::pair<double, double> grow_bracket(F&& f, double cap = 1e6) {
  double lo = 1e-6, hi = 1;
  while (f(hi) < 0) {
    lo = hi;
    hi *= 2;
    if (hi > cap) throw NoDeterrent("no penalty rate up to " + std::to_string(cap) + " deters defection");
  }
  return {lo, hi};
}

}  // namespace detail

/// Root in k of closed_form_gap by bisection, cross-checked against quadrature.
inline double min_k_quadrature(const DynamicParams& p, const TimeGrid& grid, double t0 = 0, double tol = 1e-8) {
  const double jstar = equilibrium_payoff(p, grid);
  auto f = [&](double k) { return 64 * p.b * (jstar - defection_payoff(p, k, t0, grid)); };
  if (f(1e-6) >= 0) return 1e-6;
  auto [lo, hi] = detail::grow_bracket(f);
  return find_root_bisect(f, lo, hi, tol).root;
}

inline DynamicPenaltyResult min_k_dynamic(const DynamicParams& p, const TimeGrid& grid, double tol = 1e-8) {
  p.validate();
  DynamicPenaltyResult out;
  auto& r = out.search;
  r.tol = tol;
  const double jstar = equilibrium_payoff(p, grid);
  auto f = [&](double k) {
    const double v = closed_form_gap(p, k);
    r.trace.push_back({k, jstar, jstar - v / (64 * p.b), v >= 0});
    return v;
  };
  if (f(1e-6) >= 0) {
    r.k_min = r.lo = r.hi = 1e-6;
    r.notes.push_back("defection already unprofitable at the smallest bracket end");
  } else {
    auto [lo, hi] = detail::grow_bracket(f);
    auto b = find_root_bisect(f, lo, hi, tol);
    r.k_min = b.root;
    r.lo = b.lo;
    r.hi = b.hi;
    r.iterations = b.iterations;
  }
  const double kc = r.k_min + tol;
  r.j_star = jstar;
  r.j_tilde = defection_payoff(p, kc, 0, grid);
  r.certified = r.j_tilde < jstar;
  for (std::size_t i = 0; i < 4; ++i) {
    out.scan_t0[i] = p.T * static_cast<double>(i) / 4;
    out.scan_j_tilde[i] = defection_payoff(p, kc, out.scan_t0[i], grid);
    out.scan_ok[i] = out.scan_j_tilde[i] <= jstar;
    if (!out.scan_ok[i]) {
      r.certified = false;
      r.notes.push_back("defection at t0 = " + std::to_string(out.scan_t0[i]) + " still pays at k_min");
    }
  }
  out.k_min_quadrature = min_k_quadrature(p, grid, 0, tol);
  out.scan_k_min[0] = out.k_min_quadrature;
  for (std::size_t i = 1; i < 4; ++i) {
    try {
      out.scan_k_min[i] = min_k_quadrature(p, grid, out.scan_t0[i], tol);
    } catch (const NoDeterrent&) {
      out.scan_k_min[i] = std::numeric_limits<double>::infinity();
    }
  }
  return out;
}

}  // namespace stackel::dynamic
