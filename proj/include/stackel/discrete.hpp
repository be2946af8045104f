#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "stackel/error.hpp"
#include "stackel/numerics/root.hpp"
#include "stackel/penalty.hpp"

// Repeated linear-demand duopoly: leader (firm 0) and follower (firm 1) set
// outputs, price is a - b (u0 + u1).
namespace stackel::discrete {

struct DuopolyParams {
  double a = 10;
  double b = 1;
  double c0 = 1;
  double c1 = 2;
  double depreciation = 0.1;  // follower stock decay, reporting only
  double x1_0 = 0;

  bool operator==(const DuopolyParams&) const = default;

  double margin() const { return a + c1 - 2 * c0; }

  void validate() const {
    auto finite = [](double v, const char* f) {
      if (!std::isfinite(v)) throw ParameterError(std::string(f) + " must be finite", f);
    };
    finite(a, "a");
    finite(b, "b");
    finite(c0, "c0");
    finite(c1, "c1");
    if (!(a > 0)) throw ParameterError("a must be > 0", "a");
    if (!(b > 0)) throw ParameterError("b must be > 0", "b");
    if (!(c0 >= 0)) throw ParameterError("c0 must be >= 0", "c0");
    if (!(c1 >= c0)) throw ParameterError("c1 must be >= c0 (leader has the lowest cost)", "c1");
    const double scale = 1e-12 * std::max({1.0, std::abs(a), std::abs(c0), std::abs(c1)});
    if (margin() < -scale) throw ParameterError("a + c1 - 2 c0 must be >= 0", "c0");
    if (a + 2 * c0 - 3 * c1 < -scale)
      throw ParameterError("a + 2 c0 - 3 c1 must be >= 0 (nonnegative follower output)", "c1");
    if (!(depreciation >= 0)) throw ParameterError("depreciation must be >= 0", "delta");
  }
};

struct OneShotOutcome {
  double u0;
  double u1;
  double J0;
  double J1;
  bool boundary = false;  // some output was floored at 0
};

struct Defection {
  double u0_hat;
  double J0_hat;
  double delta;  // extra gain from defecting once
};

inline double leader_profit(const DuopolyParams& p, double u0, double u1) {
  return u0 * (p.a - p.b * (u0 + u1) - p.c0);
}

inline double follower_profit(const DuopolyParams& p, double u0, double u1) {
  return u1 * (p.a - p.b * (u0 + u1) - p.c1);
}

inline double best_reply_follower(const DuopolyParams& p, double u0) {
  return std::max(0.0, (p.a - p.b * u0 - p.c1) / (2 * p.b));
}

inline OneShotOutcome one_shot_equilibrium(const DuopolyParams& p) {
  p.validate();
  OneShotOutcome o{};
  const double raw0 = p.margin() / (2 * p.b);
  const double raw1 = (p.a + 2 * p.c0 - 3 * p.c1) / (4 * p.b);
  o.u0 = std::max(0.0, raw0);
  o.u1 = std::max(0.0, raw1);
  o.boundary = raw0 <= 0 || raw1 <= 0;
  o.J0 = p.margin() * p.margin() / (8 * p.b);
  o.J1 = follower_profit(p, o.u0, o.u1);
  return o;
}

inline Defection one_shot_defection(const DuopolyParams& p) {
  p.validate();
  const double m = p.margin();
  return {std::max(0.0, 3 * m / (8 * p.b)), 9 * m * m / (64 * p.b), m * m / (64 * p.b)};
}

enum class OracleMode { equilibrium, defection };

/// Grid search over leader outputs in [0, (a - c0)/b]. In equilibrium mode the
/// follower best-replies; in defection mode it keeps its equilibrium output.
inline OneShotOutcome brute_force_oracle(const DuopolyParams& p, std::size_t resolution,
                                         OracleMode mode = OracleMode::equilibrium) {
  p.validate();
  if (resolution < 1000) throw ParameterError("oracle resolution must be >= 1000", "resolution");
  const double upper = std::max(0.0, (p.a - p.c0) / p.b);
  const double frozen = std::max(0.0, (p.a + 2 * p.c0 - 3 * p.c1) / (4 * p.b));
  OneShotOutcome best{0, 0, -std::numeric_limits<double>::infinity(), 0};
  for (std::size_t i = 0; i <= resolution; ++i) {
    const double u0 = upper * static_cast<double>(i) / static_cast<double>(resolution);
    const double u1 = mode == OracleMode::equilibrium ? best_reply_follower(p, u0) : frozen;
    const double j = leader_profit(p, u0, u1);
    if (j > best.J0) best = {u0, u1, j, follower_profit(p, u0, u1)};
    if (upper == 0) break;
  }
  return best;
}

/// Follower knowledge stock under constant output u1: x' = u1 - depreciation x.
inline double follower_stock(const DuopolyParams& p, double u1, double t) {
  if (p.depreciation == 0) return p.x1_0 + u1 * t;
  const double eq = u1 / p.depreciation;
  return eq + (p.x1_0 - eq) * std::exp(-p.depreciation * t);
}

struct DiscountSchedule {
  double k;
  std::size_t m;  // first defection period, 1-based
  std::size_t N;
  std::vector<double> rho;         // rho[n-1] = factor in period n
  std::vector<double> rho_closed;  // (1 - k delta)^(n - m) form
  std::vector<double> ledger;      // leader payoff actually received per period
  double total;
  bool deposit_applied;
};

/// Per-period penalty factor for a leader that defects from period m onward.
/// The factor drops by k times the previous period's extra gain. A leader
/// defecting only in the final period forfeits a deposit equal to that gain.
inline DiscountSchedule discount_schedule(const DuopolyParams& p, double k, std::size_t m,
                                          std::size_t N, bool allow_zero_k = false) {
  p.validate();
  const auto eq = one_shot_equilibrium(p);
  const auto def = one_shot_defection(p);
  const double upper = def.delta > 0 ? 1 / def.delta : std::numeric_limits<double>::infinity();
  if (!std::isfinite(k) || k < 0 || (k == 0 && !allow_zero_k) || k >= upper)
    throw ParameterError("penalty rate k must lie in (0, " + std::to_string(upper) + "), got " +
                             std::to_string(k),
                         "k");
  if (N < 1) throw ParameterError("need at least one period", "N");
  if (m < 1 || m > N) throw ParameterError("defection period m must lie in [1, N]", "m");

  DiscountSchedule s{k, m, N, std::vector<double>(N), std::vector<double>(N), std::vector<double>(N), 0, false};
  double rho = 1;
  for (std::size_t n = 1; n <= N; ++n) {
    if (n > m) rho -= k * rho * def.delta;
    s.rho[n - 1] = rho;
    s.rho_closed[n - 1] = n <= m ? 1.0 : std::pow(1 - k * def.delta, static_cast<double>(n - m));
    s.ledger[n - 1] = n < m ? eq.J0 : rho * def.J0_hat;
  }
  if (m == N) {
    s.ledger[N - 1] -= def.delta;
    s.deposit_applied = true;
  }
  for (double v : s.ledger) s.total += v;
  return s;
}

/// Deterrence condition for x = k * delta over M = N - m + 1 defection periods:
/// (1 - x)^M >= 1 - (8/9) x M.
inline bool closed_form_condition(double x, std::size_t M) {
  const double lhs = std::pow(1 - x, static_cast<double>(M));
  const double rhs = 1 - 8.0 / 9.0 * x * static_cast<double>(M);
  const double slack = 64 * std::numeric_limits<double>::epsilon() *
                       std::max({1.0, std::abs(lhs), std::abs(rhs)});
  return lhs >= rhs - slack;
}

/// Same condition written as a payoff comparison: 9 sum_{j<M} (1-x)^j <= 8 M.
inline bool ledger_condition(double x, std::size_t M) {
  double sum = 0, f = 1;
  for (std::size_t j = 0; j < M; ++j) {
    sum += f;
    f *= 1 - x;
  }
  const double lhs = 9 * sum, rhs = 8 * static_cast<double>(M);
  return lhs <= rhs + 64 * std::numeric_limits<double>::epsilon() * rhs;
}

enum class DefectionStart { fixed, worst_case };

/// Smallest k such that the deterrence condition holds for the requested
/// defection start (a single m, or every m in [1, N-1]).
inline PenaltySearchResult min_k_discrete(const DuopolyParams& p, std::size_t N,
                                          DefectionStart mode, std::size_t m = 1) {
  p.validate();
  if (N < 2) throw ParameterError("need N >= 2 periods", "N");
  if (mode == DefectionStart::fixed && (m < 1 || m > N))
    throw ParameterError("defection period m must lie in [1, N]", "m");
  const auto eq = one_shot_equilibrium(p);
  const auto def = one_shot_defection(p);
  const double honest = static_cast<double>(N) * eq.J0;

  PenaltySearchResult r;
  r.tol = 1e-9;
  r.j_star = honest;
  if (def.delta == 0) {
    r.certified = true;
    r.j_tilde = honest;
    r.notes.push_back("no gain from defection; any k deters");
    return r;
  }
  if (mode == DefectionStart::fixed && m == N) {
    r.certified = true;
    r.j_tilde = discount_schedule(p, 0, N, N, true).total;
    r.notes.push_back("final-period defection is offset by the deposit");
    return r;
  }

  std::vector<std::size_t> starts;
  if (mode == DefectionStart::fixed)
    starts.push_back(m);
  else
    for (std::size_t s = 1; s < N; ++s) starts.push_back(s);

  auto worst_total = [&](double k) {
    double w = -std::numeric_limits<double>::infinity();
    for (auto s : starts) w = std::max(w, discount_schedule(p, k, s, N).total);
    return w;
  };
  std::map<double, bool> seen;
  auto pred = [&](double k) {
    if (auto it = seen.find(k); it != seen.end()) return it->second;
    const double x = k * def.delta;
    bool ok = true;
    for (auto s : starts) ok = ok && closed_form_condition(x, N - s + 1);
    r.trace.push_back({k, honest, worst_total(k), ok});
    seen[k] = ok;
    return ok;
  };

  const double eps = 1e-12;
  const double lo = eps, hi = 1 / def.delta - eps;
  BisectResult b;
  try {
    b = find_threshold_bisect(pred, lo, hi, r.tol);
  } catch (const BracketError&) {
    throw NoDeterrent("no penalty rate in (0, 1/delta) deters defection");
  }
  r.k_min = b.root;
  r.lo = b.lo;
  r.hi = b.hi;
  r.iterations = b.iterations;
  r.j_tilde = worst_total(r.k_min);
  r.certified = r.j_tilde <= honest * (1 + 1e-12);
  return r;
}

}  // namespace stackel::discrete
