#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "oracle.hpp"
#include "sovdef/params.hpp"
#include "sovdef/solver_amss.hpp"
#include "sovdef/solver_ed.hpp"

using namespace sovdef;

namespace {

ShockChain two_state(double g_lo, double g_hi) {
    Matrix p(2);
    p(0, 0) = 0.7, p(0, 1) = 0.3, p(1, 0) = 0.4, p(1, 1) = 0.6;
    return make_chain({g_lo, g_hi}, p);
}

EconomyParams small_params(ShockChain chain, DebtGrid grid, OfferSchedule offers) {
    EconomyParams p{Preferences{}, std::move(chain), std::move(offers), std::move(grid)};
    p.validate();
    return p;
}

EconomyParams medium_params(double lambda = 0.47, int points = 60) {
    ModelSpec m;
    m.offers.lambda = lambda;
    m.grid.points = points;
    return m.build();
}

const EDSolution& medium() {
    static const EDSolution sol = solve(medium_params());
    return sol;
}

const EDSolution& medium_no_offers() {
    static const EDSolution sol = solve(medium_params(0.0));
    return sol;
}

}  // namespace

TEST(EdOracle, SinglePointGridIsDiscountedFlow) {
    const auto chain = two_state(0.08, 0.16);
    const auto params = small_params(chain, DebtGrid{{0.0}}, OfferSchedule::equiprobable(0.0, 0.3, 0.3, 1));
    SolverOptions opt;
    opt.value_tol = 1e-13;
    const auto sol = solve(params, opt);
    const Economy e(params.prefs);
    std::vector<double> flow(2);
    for (std::size_t g = 0; g < 2; ++g) flow[g] = e.period_payoff(1.0, chain.g_values[g]) - chain.g_values[g];
    const auto v = oracle::discounted(chain, 0.97, flow);
    for (std::size_t g = 0; g < 2; ++g) {
        EXPECT_NEAR(sol.v_repay(g, 0), v[g], 1e-8);
        EXPECT_FALSE(sol.defaults(g, 0));
    }
    // constant spending reduces to a geometric sum
    const auto flat = small_params(make_chain({0.1}, Matrix(1, 1.0)), DebtGrid{{0.0}},
                                   OfferSchedule::equiprobable(0.0, 0.3, 0.3, 1));
    const auto s1 = solve(flat, opt);
    EXPECT_NEAR(s1.v_repay(0, 0), (e.period_payoff(1.0, 0.1) - 0.1) / (1.0 - 0.97), 1e-8);
}

TEST(EdOracle, BruteForcePolicyEnumerationWithoutOffers) {
    const auto chain = two_state(0.08, 0.16);
    const DebtGrid grid{{0.0, 0.2, 0.4}};
    const auto params = small_params(chain, grid, OfferSchedule::equiprobable(0.0, 0.3, 0.3, 1));
    SolverOptions opt;
    opt.value_tol = 1e-13;
    const auto sol = solve(params, opt);
    const EdBellman ops(params);

    // autarky is absorbing without offers
    std::vector<double> aflow(2);
    for (std::size_t g = 0; g < 2; ++g) aflow[g] = ops.autarky_flow(g);
    const auto v0 = oracle::discounted(chain, params.prefs.beta, aflow);
    const auto best = oracle::enumerate_policies(params, sol.price_repay, v0);
    for (std::size_t s = 0; s < best.size(); ++s) {
        const std::size_t g = s / 3, b = s % 3;
        EXPECT_NEAR(std::max(sol.v_repay(g, b), sol.v_autarky(g, b)), best[s], 1e-8) << "g=" << g << " b=" << b;
        EXPECT_NEAR(sol.v_autarky(g, b), v0[g], 1e-8);
    }
}

TEST(EdOracle, NoDefaultMatchesRiskFreeBenchmark) {
    const auto params = medium_params(0.47, 40);
    SolverOptions opt;
    opt.allow_default = false;
    opt.value_tol = 1e-11;
    const auto ed = solve(params, opt);
    const auto amss = solve_amss(params, DebtLimits{params.grid.front(), params.grid.back()}, opt);
    for (double p : ed.price_repay.data) EXPECT_DOUBLE_EQ(p, 0.97);
    for (std::size_t g = 0; g < ed.n_g(); ++g)
        for (std::size_t b = 0; b < ed.n_b(); ++b) {
            const double a = ed.v_repay(g, b), c = amss.value(g, b);
            ASSERT_EQ(is_infeasible(a), is_infeasible(c)) << g << "," << b;
            if (!is_infeasible(a)) { EXPECT_NEAR(a, c, 1e-8); }
        }
}

TEST(EdOracle, AutarkyLinearSolveWithoutOffers) {
    const auto& sol = medium_no_offers();
    const EdBellman ops(sol.params);
    std::vector<double> flow(sol.n_g());
    for (std::size_t g = 0; g < sol.n_g(); ++g) flow[g] = ops.autarky_flow(g);
    const auto v0 = oracle::discounted(sol.params.chain, sol.params.prefs.beta, flow);
    for (std::size_t g = 0; g < sol.n_g(); ++g)
        for (std::size_t b = 0; b < sol.n_b(); ++b) EXPECT_NEAR(sol.v_autarky(g, b), v0[g], 1e-7);
}

TEST(SecondaryPrice, ClosedFormUnderIidFullAcceptance) {
    const auto chain = tauchen(0.114, 0.0, 0.037, 5, 2.0);
    ASSERT_TRUE(chain.iid);
    const auto params = small_params(chain, DebtGrid::uniform(0.0, 0.4, 5), OfferSchedule::equiprobable(0.47, 0.55, 0.55, 1));
    const EdBellman ops(params);
    Table<std::uint8_t> accept(chain.size(), params.grid.size(), 1);
    Table<double> p0;
    ops.secondary_price(accept, p0, 1e-15);
    const double q = 0.97 * 0.47 * 0.55 / (1.0 - 0.97 + 0.97 * 0.47);
    EXPECT_NEAR(q, 0.51604, 1e-5);
    for (double x : p0.data) EXPECT_NEAR(x, q, 1e-10);
}

TEST(SecondaryPrice, ZeroWithoutOffers) {
    for (double q : medium_no_offers().price_autarky.data) EXPECT_EQ(q, 0.0);
}

TEST(Prices, WithinBounds) {
    const auto& sol = medium();
    const auto& o = sol.params.offers;
    const double cap = 0.97 * o.lambda * o.mean_delta() / (1.0 - 0.97);
    for (double q : sol.price_autarky.data) {
        EXPECT_GE(q, 0.0);
        EXPECT_LE(q, cap + 1e-12);
    }
    for (double p : sol.price_repay.data) {
        EXPECT_GE(p, 0.0);
        EXPECT_LE(p, 0.97 + 1e-15);
    }
}

TEST(Prices, AccessPriceFallsWithDebtSingleOffer) {
    ModelSpec m;
    m.offers = OfferSpec{0.1, 0.3, 0.3, 1};
    m.grid.points = 60;
    const auto sol = solve(m.build());
    for (std::size_t g = 0; g < sol.n_g(); ++g)
        for (std::size_t b = 1; b < sol.n_b(); ++b)
            EXPECT_LE(sol.price_repay(g, b), sol.price_repay(g, b - 1) + 1e-10) << "g=" << g << " b=" << b;
}

TEST(Thresholds, HoldWithoutOffers) {
    const auto& sol = medium_no_offers();
    EXPECT_TRUE(sol.threshold_violations.empty());
    EXPECT_TRUE(check_no_fund_raising(sol).empty());
}

TEST(Thresholds, DefaultSetIsUpperRightWithoutOffers) {
    const auto& sol = medium_no_offers();
    for (std::size_t g = 0; g < sol.n_g(); ++g)
        for (std::size_t b = 0; b < sol.n_b(); ++b) {
            if (!sol.defaults(g, b)) continue;
            if (g + 1 < sol.n_g()) { EXPECT_TRUE(sol.defaults(g + 1, b)); }
            if (b + 1 < sol.n_b()) { EXPECT_TRUE(sol.defaults(g, b + 1)); }
        }
}

TEST(Solver, MonotoneSearchEqualsFullSearch) {
    const auto params = medium_params(0.47, 50);
    SolverOptions a, b;
    b.monotone_search = false;
    const auto sa = solve(params, a), sb = solve(params, b);
    EXPECT_LT(detail::sup_diff(sa.v_repay, sb.v_repay), 1e-8);
    EXPECT_LT(detail::sup_diff(sa.price_repay, sb.price_repay), 1e-8);
    EXPECT_EQ(sa.default_flag.data, sb.default_flag.data);
    EXPECT_EQ(sa.policy_debt.data, sb.policy_debt.data);
}

TEST(Solver, RepayValueNonIncreasingInDebt) {
    for (const EDSolution* s : {&medium(), &medium_no_offers()}) {
        const std::size_t z = s->params.grid.zero_index();
        for (std::size_t g = 0; g < s->n_g(); ++g) {
            EXPECT_FALSE(s->defaults(g, z));
            for (std::size_t b = z + 1; b < s->n_b(); ++b) {
                const double a = s->v_repay(g, b - 1), c = s->v_repay(g, b);
                if (is_infeasible(a) || is_infeasible(c)) continue;
                EXPECT_LE(c, a + 1e-9);
            }
        }
    }
}

TEST(Solver, ConvergedAndConsistent) {
    const auto& sol = medium();
    EXPECT_TRUE(sol.convergence.converged);
    const EdBellman ops(sol.params);
    Table<std::uint8_t> d, acc;
    ops.decisions(sol.v_repay, sol.v_autarky, true, d, acc);
    EXPECT_EQ(d.data, sol.default_flag.data);
    EXPECT_EQ(acc.data, sol.accept.data);
    Table<double> p1;
    ops.access_price(sol.default_flag, sol.price_autarky, p1, sol.convergence.mixed);
    EXPECT_LT(detail::sup_diff(p1, sol.price_repay), 1e-9);
}

TEST(Solver, RejectsInvalidParameters) {
    auto p = medium_params(0.47, 20);
    p.prefs.beta = 1.2;
    EXPECT_THROW(solve(p), std::invalid_argument);
}
