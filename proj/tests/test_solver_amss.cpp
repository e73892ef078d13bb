#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "sovdef/params.hpp"
#include "sovdef/solver_amss.hpp"

using namespace sovdef;

namespace {

EconomyParams params_with(ShockChain chain, DebtGrid grid) {
    EconomyParams p{Preferences{}, std::move(chain), OfferSchedule::equiprobable(0.0, 0.3, 0.3, 1), std::move(grid)};
    p.validate();
    return p;
}

}  // namespace

TEST(Amss, ConstantSpendingStaysDebtFree) {
    const auto params = params_with(make_chain({0.1}, Matrix(1, 1.0)), DebtGrid::uniform(0.0, 0.4, 41));
    const auto sol = solve_amss(params, {0.0, 0.4});
    EXPECT_EQ(sol.policy_debt(0, 0), 0);
    EXPECT_NEAR(sol.policy_revenue(0, 0), 0.1, 1e-15);
    const Economy e(params.prefs);
    EXPECT_NEAR(sol.value(0, 0), (e.period_payoff(1.0, 0.1) - 0.1) / 0.03, 1e-7);
}

TEST(Amss, BruteForcePolicyEnumeration) {
    Matrix p(2);
    p(0, 0) = 0.7, p(0, 1) = 0.3, p(1, 0) = 0.4, p(1, 1) = 0.6;
    const auto chain = make_chain({0.08, 0.16}, p);
    const DebtGrid grid{{0.0, 0.2, 0.4}};
    const auto params = params_with(chain, grid);
    SolverOptions opt;
    opt.value_tol = 1e-13;
    const auto sol = solve_amss(params, {0.0, 0.4}, opt);
    Table<double> beta_price(2, 3, 0.97);
    const auto best = oracle::enumerate_policies(params, beta_price, {});
    const std::size_t ns = 6, nb = 3;
    for (std::size_t s = 0; s < ns; ++s) EXPECT_NEAR(sol.value(s / nb, s % nb), best[s], 1e-8) << s;
}

TEST(Amss, ValueFallsWithDebtAndChoicesRespectLimits) {
    ModelSpec m;
    m.grid.points = 80;
    const auto params = m.build();
    const auto sol = solve_amss(params, {0.0, 0.3});
    EXPECT_LT(sol.residual, 1e-9);
    for (std::size_t g = 0; g < sol.n_g(); ++g) {
        for (std::size_t b = 1; b < sol.n_b(); ++b) {
            const double a = sol.value(g, b - 1), c = sol.value(g, b);
            if (!is_infeasible(a) && !is_infeasible(c)) { EXPECT_LE(c, a + 1e-9); }
        }
        for (std::size_t b = 0; b < sol.n_b(); ++b) {
            const int j = sol.policy_debt(g, b);
            if (j < 0) continue;
            EXPECT_LE(params.grid[static_cast<std::size_t>(j)], 0.3 + 1e-12);
            EXPECT_LE(static_cast<std::size_t>(j), sol.effective_last[g]);
        }
    }
}

TEST(Amss, HigherSpendingMeansHigherRevenue) {
    ModelSpec m;
    m.grid.points = 80;
    const auto sol = solve_amss(m.build(), {0.0, 0.4});
    // revenue rises with g at given debt
    for (std::size_t b = 0; b < sol.n_b(); b += 10)
        for (std::size_t g = 1; g < sol.n_g(); ++g) {
            if (sol.policy_debt(g, b) < 0 || sol.policy_debt(g - 1, b) < 0) continue;
            EXPECT_GE(sol.policy_revenue(g, b), sol.policy_revenue(g - 1, b) - 1e-12);
        }
}

TEST(Amss, RejectsEmptyLimits) {
    ModelSpec m;
    m.grid.points = 20;
    const auto params = m.build();
    EXPECT_THROW(solve_amss(params, {0.3, 0.1}), std::invalid_argument);
    EXPECT_THROW(solve_amss(params, {0.5, 0.6}), std::invalid_argument);
}
