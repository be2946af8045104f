#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <string>

#include "stackel/cli/config.hpp"
#include "stackel/cli/report.hpp"
#include "stackel/discrete.hpp"
#include "stackel/dynamic.hpp"
#include "stackel/meanfield.hpp"

namespace stackel::cli {

struct RunResult {
  Report report;
  std::string trajectory;            // trajectory.csv
  std::optional<std::string> sweep;  // sweep.csv, threshold searches only
};

namespace detail {

inline void search_keys(Report& rep, const PenaltySearchResult& r) {
  rep.set("result.k_min", r.k_min);
  rep.set("result.bracket_lo", r.lo);
  rep.set("result.bracket_hi", r.hi);
  rep.set("result.search_tol", r.tol);
  rep.set("result.iterations", r.iterations);
  rep.set("result.J_star", r.j_star);
  rep.set("result.J_tilde_at_k_min", r.j_tilde);
  rep.set("result.certified", r.certified);
  rep.warn_all(r.notes);
}

// ---- discrete ----

inline PeriodTable discrete_periods(const discrete::DuopolyParams& p, std::size_t N) {
  const auto eq = discrete::one_shot_equilibrium(p);
  PeriodTable t{{"u0", "u1", "leader_profit", "follower_profit", "follower_stock"}, {}};
  for (std::size_t n = 1; n <= N; ++n) {
    const double tn = static_cast<double>(n);
    t.rows.push_back({tn, eq.u0, eq.u1, eq.J0, eq.J1, discrete::follower_stock(p, eq.u1, tn)});
  }
  return t;
}

inline PeriodTable schedule_periods(const discrete::DiscountSchedule& s, double honest) {
  PeriodTable t{{"rho", "rho_closed", "ledger", "equilibrium_payoff"}, {}};
  for (std::size_t n = 1; n <= s.N; ++n)
    t.rows.push_back({static_cast<double>(n), s.rho[n - 1], s.rho_closed[n - 1], s.ledger[n - 1], honest});
  return t;
}

inline void run_discrete(const RunConfig& c, RunResult& out) {
  using namespace stackel::discrete;
  const auto& p = std::get<DuopolyParams>(c.params);
  p.validate();
  auto& rep = out.report;
  const auto eq = one_shot_equilibrium(p);
  const auto def = one_shot_defection(p);
  const std::size_t N = c.search.periods;
  if (N < 2) throw ParameterError("search.periods must be >= 2", "periods");
  rep.set("result.u0", eq.u0);
  rep.set("result.u1", eq.u1);
  rep.set("result.J0", eq.J0);
  rep.set("result.J1", eq.J1);
  rep.set("result.u0_hat", def.u0_hat);
  rep.set("result.J0_hat", def.J0_hat);
  rep.set("result.defection_gain", def.delta);
  if (eq.boundary) rep.warn("an equilibrium output sits on the zero boundary");
  out.trajectory = period_csv(discrete_periods(p, N));

  switch (c.action) {
    case Action::equilibrium: {
      const auto o = brute_force_oracle(p, 1000000);
      rep.set("oracle.u0", o.u0);
      rep.set("oracle.J0", o.J0);
      rep.close("oracle_u0", eq.u0, o.u0, 1e-5);
      rep.close("oracle_J0", eq.J0, o.J0, 1e-5);
      break;
    }
    case Action::defect: {
      const auto s = discount_schedule(p, c.defect.k, c.defect.m, N);
      const double honest = static_cast<double>(N) * eq.J0;
      rep.set("result.k", c.defect.k);
      rep.set("result.m", c.defect.m);
      rep.set("result.ledger_total", s.total);
      rep.set("result.honest_total", honest);
      rep.set("result.deposit_applied", s.deposit_applied);
      rep.at_most("defection_deterred", s.total, honest, honest * 1e-12);
      out.trajectory = period_csv(schedule_periods(s, eq.J0));
      break;
    }
    case Action::threshold_k: {
      const auto r = min_k_discrete(p, N, c.search.defection_start, c.search.m);
      search_keys(rep, r);
      const double honest = static_cast<double>(N) * eq.J0;
      rep.at_most("worst_ledger_at_k_min", r.j_tilde, honest, honest * 1e-12);
      if (def.delta > 0 && r.k_min > 0) {
        const double kc = std::min(r.k_min + 1e-6, 1 / def.delta * (1 - 1e-12));
        const std::size_t first = c.search.defection_start == DefectionStart::fixed ? c.search.m : 1;
        const std::size_t last = c.search.defection_start == DefectionStart::fixed ? c.search.m : N - 1;
        for (std::size_t m = first; m <= last; ++m)
          rep.at_most("ledger_m" + std::to_string(m), discount_schedule(p, kc, m, N).total, honest,
                      honest * 1e-12);
        out.trajectory = period_csv(schedule_periods(discount_schedule(p, kc, last, N), eq.J0));
      }
      out.sweep = sweep_csv(r.trace);
      break;
    }
    case Action::verify: {
      if (def.delta > 0) {
        rep.close("ratio_defection_to_gain", def.J0_hat / def.delta, 9.0, 1e-12);
        rep.close("ratio_equilibrium_to_gain", eq.J0 / def.delta, 8.0, 1e-12);
      }
      const auto o = brute_force_oracle(p, 1000000);
      const auto od = brute_force_oracle(p, 1000000, OracleMode::defection);
      rep.close("oracle_u0", eq.u0, o.u0, 1e-5);
      rep.close("oracle_J0", eq.J0, o.J0, 1e-5);
      rep.close("oracle_u0_hat", def.u0_hat, od.u0, 1e-5);
      rep.close("oracle_J0_hat", def.J0_hat, od.J0, 1e-5);
      std::size_t mismatch = 0;
      for (int i = 1; i < 100; ++i)
        for (std::size_t M = 2; M <= N; ++M)
          mismatch += closed_form_condition(i / 100.0, M) != ledger_condition(i / 100.0, M);
      rep.at_most("condition_forms_disagree", static_cast<double>(mismatch), 0, 0);
      if (def.delta > 0) {
        const auto r = min_k_discrete(p, N, DefectionStart::worst_case);
        rep.set("result.k_min_worst_case", r.k_min);
        rep.close("k_min_two_period_value", r.k_min, 2.0 / 9.0 / def.delta, 1e-6);
        rep.warn_all(r.notes);
      }
      break;
    }
  }
}

// ---- dynamic ----

inline double sup_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

inline void run_dynamic(const RunConfig& c, RunResult& out) {
  using namespace stackel::dynamic;
  const auto& p = std::get<DynamicParams>(c.params);
  p.validate();
  auto& rep = out.report;
  const TimeGrid grid(0, p.T, c.grid.steps);
  auto eq = equilibrium_trajectories(p, grid);
  const double jstar = equilibrium_payoff(p, grid);
  rep.set("result.discriminant", eq.saddle.Delta);
  rep.set("result.discriminant_alt_form", eq.saddle.Delta_printed);
  rep.set("result.s1", eq.saddle.s1);
  rep.set("result.s2", eq.saddle.s2);
  rep.set("result.lambda0", eq.saddle.lambda0);
  rep.set("result.J_star", jstar);
  if (eq.kink_time) rep.set("result.kink_time", *eq.kink_time);
  rep.warn_all(eq.warnings);

  auto closed_vs_bvp = [&]() {
    BvpDiagnostics diag;
    auto bvp = equilibrium_bvp(p, grid, &diag);
    rep.set("result.bvp_condition", diag.condition);
    rep.at_most("closed_form_vs_bvp_x1", sup_diff(eq.traj["x1"], bvp["x1"]), 0, 1e-6);
    rep.at_most("closed_form_vs_bvp_lambda", sup_diff(eq.traj["lambda"], bvp["lambda"]), 0, 1e-6);
    rep.at_most("lambda_terminal", std::abs(eq.traj.back("lambda")), 0, 1e-8);
    rep.at_most("x1_initial", eq.x_boundary_residual, 0, 1e-8);
    eq.traj.add("x1_bvp", bvp["x1"]);
    eq.traj.add("lambda_bvp", bvp["lambda"]);
  };

  switch (c.action) {
    case Action::equilibrium: closed_vs_bvp(); break;
    case Action::defect: {
      const double k = c.defect.k, t0 = c.defect.t0;
      const double jt = defection_payoff(p, k, t0, grid, c.options.rate_reading);
      rep.set("result.k", k);
      rep.set("result.t0", t0);
      rep.set("result.J_tilde", jt);
      rep.set("result.gain", jt - jstar);
      rep.at_most("identity_residual", flow_identity_residual(p, k, grid), 0, 1e-10);
      rep.at_most("defection_deterred", jt, jstar, 0);
      if (t0 == 0 && c.options.rate_reading == RateReading::original) {
        GapConstants ac;
        const double lhs = closed_form_gap(p, k, &ac);
        rep.close("closed_form_vs_quadrature", lhs, 64 * p.b * (jstar - jt), 1e-4 * std::max(1.0, std::abs(lhs)));
        if (std::any_of(ac.resonant.begin(), ac.resonant.end(), [](bool b) { return b; })) rep.warn("resonant exponent handled by its limit form");
      }
      Pointwise pw{p};
      const std::size_t n = grid.size();
      std::vector<double> ef(n), df(n), pen(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = grid.t(i), x = eq.traj["x1"][i], l = eq.traj["lambda"][i];
        ef[i] = pw.equilibrium_flow(x, l);
        df[i] = pw.defection_flow(x, l);
        pen[i] = t < t0 ? 1.0 : std::exp(-k * (t - t0));
      }
      eq.traj.add("equilibrium_flow", std::move(ef));
      eq.traj.add("defection_flow", std::move(df));
      eq.traj.add("penalty_factor", std::move(pen));
      break;
    }
    case Action::threshold_k: {
      const auto r = min_k_dynamic(p, grid);
      search_keys(rep, r.search);
      rep.set("result.k_min_quadrature", r.k_min_quadrature);
      const double kc = r.search.k_min + r.search.tol;
      rep.at_least("closed_form_at_k_min", closed_form_gap(p, kc), 0, 0);
      rep.below("quadrature_at_k_min", r.search.j_tilde, r.search.j_star);
      rep.close("closed_form_vs_quadrature_k_min", r.search.k_min, r.k_min_quadrature, 1e-6);
      for (std::size_t i = 0; i < 4; ++i) {
        const std::string tag = "t0_" + std::to_string(i) + "_of_4";
        rep.set("scan." + tag + ".t0", r.scan_t0[i]);
        rep.set("scan." + tag + ".k_min", r.scan_k_min[i]);
        rep.at_most("defection_" + tag + "_at_k_min", r.scan_j_tilde[i], r.search.j_star, 0);
      }
      out.sweep = sweep_csv(r.search.trace);
      break;
    }
    case Action::verify: {
      closed_vs_bvp();
      for (double k : {0.0, 0.1, 0.3, 1.0})
        rep.at_most("identity_residual_k" + format_number(k), flow_identity_residual(p, k, grid), 0, 1e-10);
      const TimeGrid fine(0, p.T, std::max<std::size_t>(c.grid.steps, 20000));
      const double js = equilibrium_payoff(p, fine);
      for (double k : {0.05, 0.1, 0.3, 1.0}) {
        const double lhs = closed_form_gap(p, k);
        const double q = 64 * p.b * (js - defection_payoff(p, k, 0, fine));
        rep.close("closed_form_vs_quadrature_k" + format_number(k), lhs, q, 1e-4 * std::abs(q));
      }
      break;
    }
  }
  out.trajectory = trajectory_csv(eq.traj);
}

// ---- mean field ----

inline meanfield::McConfig mc_config(const RunConfig& c, unsigned workers) {
  meanfield::McConfig mc;
  mc.n_paths = c.monte_carlo.paths;
  mc.seed = c.monte_carlo.seed;
  mc.n_steps = c.monte_carlo.steps;
  mc.workers = workers;
  mc.zero_noise = c.monte_carlo.zero_noise;
  mc.diffusion = c.monte_carlo.diffusion;
  mc.coupling = c.monte_carlo.euler_coupling;
  return mc;
}

inline void mc_keys(Report& rep, const std::string& key, const McEstimate& e) {
  rep.set(key, e.mean);
  rep.set(key + "_se", e.se);
}

inline void run_meanfield(const RunConfig& c, RunResult& out, unsigned workers) {
  using namespace stackel::meanfield;
  const auto& p = std::get<MfgParams>(c.params);
  p.validate();
  const auto mc = mc_config(c, workers);
  mc.validate(p.T);
  auto& rep = out.report;
  const TimeGrid grid(0, p.T, c.grid.steps);
  const auto sol = mean_field_bvp(p, grid, c.options.form);
  rep.set("result.u0_initial", sol.traj.front("u0"));
  rep.set("result.ui_initial", sol.traj.front("ui"));
  rep.set("result.x0_terminal", sol.traj.back("x0"));
  rep.set("result.xbar_terminal", sol.traj.back("xbar"));
  rep.set("result.F_initial", sol.traj.front("F"));
  rep.set("result.J_star_mean_path", equilibrium_payoff_mean(p, sol));
  rep.set("result.bvp_condition", sol.condition);

  auto residual_certs = [&]() {
    rep.at_most("boundary_residual", sol.boundary_residual, 0, 1e-8);
    rep.at_most("ode_residual", sol.ode_residual, 0, 1e-6 * (1 + sol.state_scale));
    rep.at_most("follower_feedback_identity", sol.feedback_gap, 0, 1e-6);
    const auto F = follower_riccati(p, grid, c.options.form);
    rep.at_most("follower_riccati_residual", riccati_residual(p, F, 0, c.options.form), 0, 1e-8);
  };

  auto defection_traj = [&](const DefectionSolution& def) {
    auto path = defection_mean_path(p, sol, def);
    TrajectoryGrid t(grid);
    t.add("Q", def.Q);
    t.add("q", def.q);
    t.add("x_hat", path["x_hat"]);
    t.add("u0_hat", path["u0_hat"]);
    t.add("zeta", path["zeta"]);
    t.add("x0", sol.traj["x0"]);
    t.add("xbar", sol.traj["xbar"]);
    t.add("u0", sol.traj["u0"]);
    return std::pair{t, path};
  };

  switch (c.action) {
    case Action::equilibrium:
      residual_certs();
      out.trajectory = trajectory_csv(sol.traj);
      break;
    case Action::defect: {
      const double k = c.defect.k;
      const auto def = defection_solution(p, k, sol);
      auto [t, path] = defection_traj(def);
      const auto Q = defection_riccati(p, k, grid);
      rep.at_most("defection_riccati_residual", riccati_residual(p, Q, p.r + k), 0, 1e-8);
      rep.at_most("zeta_identity_residual", zeta_residual(p, sol, def, path), 0, 1e-6);
      const auto pr = mc_payoffs(p, sol, k, mc);
      rep.set("result.k", k);
      rep.set("result.r_tilde", p.r + k);
      mc_keys(rep, "result.J_star", pr.J0_star);
      mc_keys(rep, "result.J_tilde", pr.J_tilde);
      rep.set("result.J_star_mean_path", pr.J0_star_mean);
      rep.set("result.J_tilde_mean_path", pr.J_tilde_mean);
      rep.set("result.n_paths", pr.J0_star.n_paths);
      rep.below("defection_deterred", pr.J_tilde.mean + 3 * pr.J_tilde.se, pr.J0_star.mean - 3 * pr.J0_star.se);
      const auto gr = growth_order_check(pr.mean_x_hat, pr.grid, p.r + k);
      rep.below("growth_order", gr.slope, (p.r + k) / 2, 1e-6);
      if (!gr.ok) rep.warn("growth check fails at r + k = " + format_number(p.r + k));
      out.trajectory = trajectory_csv(t);
      break;
    }
    case Action::threshold_k: {
      const auto r = min_k_meanfield(p, sol, mc);
      search_keys(rep, r.search);
      rep.set("result.J_star_se", r.J0_star.se);
      rep.set("result.J_tilde_at_k_min_se", r.J_tilde.se);
      rep.set("result.J_star_mean_path", r.J0_star_mean);
      rep.set("result.growth_slope", r.growth.slope);
      rep.set("result.monotone", r.monotone);
      rep.below("deterrence_at_k_min", r.J_tilde.mean + 3 * r.J_tilde.se, r.J0_star.mean - 3 * r.J0_star.se);
      rep.below("growth_order_at_k_min", r.growth.slope, (p.r + r.search.k_min) / 2, 1e-6);
      try {
        rep.set("result.k_min_mean_path", min_k_meanfield_mean(p, sol));
      } catch (const NoDeterrent& e) {
        rep.warn(std::string("mean-path search: ") + e.what());
      }
      auto [t, path] = defection_traj(defection_solution(p, r.search.k_min, sol));
      out.trajectory = trajectory_csv(t);
      out.sweep = sweep_csv(r.search.trace);
      break;
    }
    case Action::verify: {
      residual_certs();
      const auto fb = follower_feedback_check(p, sol, mc);
      rep.set("result.feedback_max_gap", fb.max_abs_gap);
      rep.at_most("feedback_mean_gap", fb.worst_gap, 0, 3 * fb.worst_se + 1e-6);
      rep.at_most("feedback_terminal", fb.terminal_gap, 0, 1e-12);
      const auto perts = random_perturbations(mc.seed, 5);
      for (std::size_t i = 0; i < perts.size(); ++i) {
        const auto e = euler_condition_check(p, sol, sol.traj["u0"], perts[i], mc);
        rep.at_most("leader_euler_" + std::to_string(i + 1), std::abs(e.derivative), 0, 3 * e.se);
        const auto f = follower_euler_check(p, sol, perts[i], mc);
        rep.at_most("follower_euler_" + std::to_string(i + 1), std::abs(f.derivative), 0, 3 * f.se);
      }
      auto shifted = sol.traj["u0"];
      for (auto& v : shifted) v += 0.5;
      const auto e = euler_condition_check(p, sol, shifted, Perturbation{1, 0, 0}, mc);
      rep.below("suboptimal_euler", e.derivative, 0, 3 * e.se);
      const auto def = defection_solution(p, c.defect.k, sol);
      auto [t, path] = defection_traj(def);
      rep.at_most("zeta_identity_residual", zeta_residual(p, sol, def, path), 0, 1e-6);
      out.trajectory = trajectory_csv(sol.traj);
      break;
    }
  }
}

}  // namespace detail

/// Runs one job. Parameter problems raise validation errors before any
/// computation; numerical failures propagate as NumericalError.
inline RunResult run(const RunConfig& c, unsigned workers = 1) {
  const auto start = std::chrono::steady_clock::now();
  RunResult out;
  out.report.set("model", to_string(c.model));
  out.report.set("action", to_string(c.action));
  out.report.flatten("config", config_json(c));
  out.report.set("workers", workers);
  switch (c.model) {
    case Model::discrete: detail::run_discrete(c, out); break;
    case Model::dynamic: detail::run_dynamic(c, out); break;
    case Model::meanfield: detail::run_meanfield(c, out, workers); break;
  }
  out.report.set("certificates.all_hold", out.report.all_hold());
  const auto secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  out.report.set("wall_time_s", secs);
  return out;
}

inline void write_outputs(const RunResult& r, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path d(dir);
  write_text((d / "report.txt").string(), r.report.str());
  write_text((d / "trajectory.csv").string(), r.trajectory);
  if (r.sweep) write_text((d / "sweep.csv").string(), *r.sweep);
}

}  // namespace stackel::cli
