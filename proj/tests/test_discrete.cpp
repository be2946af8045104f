#include <catch_amalgamated.hpp>

#include <random>

#include "stackel/discrete.hpp"

using namespace stackel;
using namespace stackel::discrete;
using Catch::Approx;

// reference values: tests/oracles/discrete.py
constexpr double kWorstCaseKMin = 0.1422222222;
constexpr double kFixedStartKMin = 0.0169451685;

TEST_CASE("benchmark one-shot outcome", "[discrete]") {
  DuopolyParams p;
  auto eq = one_shot_equilibrium(p);
  CHECK(eq.u0 == 5.0);
  CHECK(eq.u1 == Approx(1.5));
  CHECK(eq.J0 == 12.5);
  CHECK(leader_profit(p, eq.u0, eq.u1) == Approx(eq.J0));
  auto d = one_shot_defection(p);
  CHECK(d.u0_hat == 3.75);
  CHECK(d.J0_hat == Approx(14.0625));
  CHECK(d.delta == Approx(1.5625));
  CHECK(leader_profit(p, d.u0_hat, eq.u1) == Approx(d.J0_hat));
}

TEST_CASE("closed forms match the grid oracle", "[discrete]") {
  DuopolyParams p;
  auto o = brute_force_oracle(p, 1000000);
  CHECK(std::abs(o.u0 - 5) < 1e-5);
  CHECK(std::abs(o.J0 - 12.5) < 1e-5);
  auto od = brute_force_oracle(p, 1000000, OracleMode::defection);
  CHECK(std::abs(od.u0 - 3.75) < 1e-5);
  CHECK(std::abs(od.J0 - 14.0625) < 1e-5);
  CHECK_THROWS_AS(brute_force_oracle(p, 10), ParameterError);
}

TEST_CASE("payoff ratios hold for random parameters", "[discrete]") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 100; ++i) {
    DuopolyParams p;
    p.b = 0.1 + 5 * u(rng);
    p.c0 = 3 * u(rng);
    p.c1 = p.c0 + 3 * u(rng);
    p.a = 3 * p.c1 - 2 * p.c0 + 0.1 + 20 * u(rng);
    auto eq = one_shot_equilibrium(p);
    auto d = one_shot_defection(p);
    CHECK(d.J0_hat / d.delta == Approx(9).epsilon(1e-12));
    CHECK(eq.J0 / d.delta == Approx(8).epsilon(1e-12));
  }
}

TEST_CASE("parameter validation", "[discrete]") {
  DuopolyParams p;
  p.b = 0;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  p.c1 = 0.5;
  CHECK_THROWS_AS(p.validate(), ParameterError);
  p = {};
  p.a = 3;  // follower output would be negative
  CHECK_THROWS_AS(p.validate(), ParameterError);
  try {
    DuopolyParams q;
    q.b = -1;
    q.validate();
  } catch (const ParameterError& e) {
    CHECK(e.field() == "b");
  }
}

TEST_CASE("discount schedule", "[discrete]") {
  DuopolyParams p;
  auto s = discount_schedule(p, 0.1, 3, 10);
  CHECK(s.rho[0] == 1);
  CHECK(s.rho[2] == 1);
  for (std::size_t n = 0; n < 10; ++n) CHECK(s.rho[n] == Approx(s.rho_closed[n]).epsilon(1e-14));
  CHECK(s.ledger[0] == 12.5);
  CHECK(s.ledger[2] == Approx(14.0625));
  CHECK_FALSE(s.deposit_applied);
  auto last = discount_schedule(p, 0.1, 10, 10);
  CHECK(last.deposit_applied);
  CHECK(last.total == Approx(10 * 12.5));
  CHECK_THROWS_AS(discount_schedule(p, 0, 1, 10), ParameterError);
  CHECK_THROWS_AS(discount_schedule(p, 1 / 1.5625, 1, 10), ParameterError);
  CHECK_THROWS_AS(discount_schedule(p, 0.1, 11, 10), ParameterError);
}

TEST_CASE("condition forms agree", "[discrete]") {
  for (int i = 1; i < 200; ++i)
    for (std::size_t M = 1; M <= 30; ++M) CHECK(closed_form_condition(i / 200.0, M) == ledger_condition(i / 200.0, M));
}

TEST_CASE("worst-case threshold equals the two-period value", "[discrete]") {
  DuopolyParams p;
  auto r = min_k_discrete(p, 10, DefectionStart::worst_case);
  CHECK(std::abs(r.k_min - kWorstCaseKMin) < 1e-6);
  CHECK(r.certified);
  for (std::size_t m = 1; m < 10; ++m)
    CHECK(discount_schedule(p, r.k_min + 1e-6, m, 10).total <= 10 * 12.5 * (1 + 1e-12));
  // just below the threshold the final two-period defection pays
  CHECK(discount_schedule(p, r.k_min - 1e-4, 9, 10).total > 10 * 12.5);
}

TEST_CASE("fixed-start threshold", "[discrete]") {
  DuopolyParams p;
  auto r = min_k_discrete(p, 10, DefectionStart::fixed, 1);
  CHECK(std::abs(r.k_min - kFixedStartKMin) < 1e-8);
  CHECK(r.certified);
  auto last = min_k_discrete(p, 10, DefectionStart::fixed, 10);
  CHECK(last.k_min == 0);
  CHECK_FALSE(last.notes.empty());
}

TEST_CASE("no gain from defection means any k deters", "[discrete]") {
  DuopolyParams p;
  p.a = 1;
  p.c0 = 1;
  p.c1 = 1;  // zero margin: nothing to gain
  CHECK(one_shot_defection(p).delta == 0);
  auto r = min_k_discrete(p, 10, DefectionStart::worst_case);
  CHECK(r.certified);
  CHECK(r.k_min == 0);
  CHECK_FALSE(r.notes.empty());
}

TEST_CASE("follower stock", "[discrete]") {
  DuopolyParams p;
  CHECK(follower_stock(p, 1.75, 0) == 0);
  CHECK(follower_stock(p, 1.75, 1e6) == Approx(17.5));
  p.depreciation = 0;
  CHECK(follower_stock(p, 1.75, 2) == Approx(3.5));
}
