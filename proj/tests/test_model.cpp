#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

#include "sovdef/model.hpp"

using namespace sovdef;

namespace {

Preferences base() { return Preferences{}; }

// Independent bisection on dz/dn = kappa - H'(1-n) + H''(1-n) n, written
// out for sigma = 2 without touching the library.
double peak_oracle(double c1, double kappa) {
    auto dz = [&](double n) {
        const double l = 1.0 - n;
        return kappa - c1 / (l * l) - 2.0 * c1 / (l * l * l) * n;
    };
    double lo = 0.0, hi = 1.0 - std::sqrt(c1 / kappa);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (dz(mid) > 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

}  // namespace

TEST(Surplus, BalancedAtHalfLabor) {
    const Economy e(base());
    // H'(0.5) = 0.6, (1 - 0.6) * 0.5 = 0.2
    EXPECT_NEAR(e.surplus(1.0, 0.5, 0.2), 0.0, 1e-15);
}

TEST(Surplus, ZeroLaborIsMinusSpending) {
    const Economy e(base());
    for (double g : {0.0, 0.05, 0.2}) EXPECT_DOUBLE_EQ(e.surplus(0.998, 0.0, g), -g);
}

TEST(Surplus, SatiationGivesMinusSpending) {
    const Economy e(base());
    const double n_sat = 1.0 - std::sqrt(0.15);
    EXPECT_NEAR(e.satiation_labor(1.0), n_sat, 1e-14);
    EXPECT_NEAR(n_sat, 0.61270, 1e-5);
    EXPECT_NEAR(e.surplus(1.0, n_sat, 0.1), -0.1, 1e-14);
}

TEST(Surplus, FullLaborRejected) {
    const Economy e(base());
    EXPECT_THROW(e.surplus(1.0, 1.0, 0.1), std::domain_error);
}

TEST(Surplus, ConcaveAndDecreasingBeyondPeak) {
    const Economy e(base());
    const double peak = e.laffer_peak(1.0);
    const int n = 200;
    const double h = (1.0 - 1e-3 - peak) / n;
    for (int i = 1; i < n; ++i) {
        const double x = peak + i * h;
        const double f0 = e.surplus(1.0, x - h, 0.1), f1 = e.surplus(1.0, x, 0.1), f2 = e.surplus(1.0, x + h, 0.1);
        EXPECT_LT(f2 - f1, 0.0) << "at n=" << x;
        EXPECT_LT(f2 - 2.0 * f1 + f0, 0.0) << "at n=" << x;
    }
}

TEST(LafferPeak, MatchesBisectionOnDerivative) {
    const Economy e(base());
    EXPECT_NEAR(e.laffer_peak(1.0), peak_oracle(0.15, 1.0), 1e-12);
    EXPECT_NEAR(e.laffer_peak(0.998), peak_oracle(0.15, 0.998), 1e-12);
}

TEST(LafferPeak, IndependentOfSpending) {
    const Economy e(base());
    EXPECT_EQ(e.laffer_peak(1.0, 0.0), e.laffer_peak(1.0, 0.3));
}

TEST(LafferPeak, ApproachesOneAsLeisureWeightVanishes) {
    double prev = 0.0;
    for (double c1 : {0.15, 0.05, 0.01, 1e-3, 1e-4, 1e-6}) {
        Preferences p = base();
        p.c1 = c1;
        const double peak = Economy(p).laffer_peak(1.0);
        EXPECT_GT(peak, prev);
        prev = peak;
    }
    EXPECT_GT(prev, 0.98);
}

TEST(LaborFromRevenue, Endpoints) {
    const Economy e(base());
    EXPECT_NEAR(e.labor_from_revenue(1.0, 0.0), 1.0 - std::sqrt(0.15), 1e-14);
    EXPECT_NEAR(e.labor_from_revenue(0.998, 0.0), 1.0 - std::sqrt(0.15 / 0.998), 1e-14);
    // revenue is flat at the peak, so n is only recovered to about sqrt(eps)
    const double n_top = e.labor_from_revenue(1.0, e.max_revenue(1.0));
    EXPECT_NEAR(e.revenue_at(1.0, n_top), e.max_revenue(1.0), 1e-15);
    EXPECT_NEAR(n_top, e.laffer_peak(1.0), 1e-7);
}

TEST(LaborFromRevenue, InvertsSurplusExample) {
    const Economy e(base());
    EXPECT_NEAR(e.labor_from_revenue(1.0, 0.2), 0.5, 1e-12);
}

TEST(LaborFromRevenue, RejectsOutOfRange) {
    const Economy e(base());
    EXPECT_THROW(e.labor_from_revenue(1.0, e.max_revenue(1.0) * 1.01), InfeasibleRevenue);
    EXPECT_THROW(e.labor_from_revenue(1.0, -0.01), std::domain_error);
}

TEST(LaborFromRevenue, RoundTrip) {
    const Economy e(base());
    for (double kappa : {1.0, 0.998}) {
        const double rmax = e.max_revenue(kappa);
        for (int i = 0; i <= 100; ++i) {
            const double r = rmax * i / 100.0;
            const double n = e.labor_from_revenue(kappa, r);
            EXPECT_GE(n, e.laffer_peak(kappa) - 1e-12);
            EXPECT_LE(n, e.satiation_labor(kappa) + 1e-15);
            EXPECT_NEAR(e.revenue_at(kappa, n), r, 1e-10);
        }
    }
}

TEST(LaborFromRevenue, PicksUtilityMaximizingRoot) {
    const Economy e(base());
    const double r = 0.15;
    const double n = e.labor_from_revenue(1.0, r);
    // the other root lies below the peak
    double lo = 0.0, hi = e.laffer_peak(1.0);
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (e.revenue_at(1.0, mid) < r ? lo : hi) = mid;
    }
    const Preferences p = base();
    const double w_chosen = n + p.leisure_utility(1.0 - n);
    const double w_other = lo + p.leisure_utility(1.0 - lo);
    EXPECT_GT(w_chosen, w_other);
}

TEST(PeriodPayoff, SatiationValue) {
    const Economy e(base());
    const Preferences p = base();
    const double n = 1.0 - std::sqrt(0.15);
    EXPECT_NEAR(e.period_payoff(1.0, 0.0), n + p.leisure_utility(1.0 - n), 1e-14);
}

TEST(PeriodPayoff, NonIncreasingAndConcave) {
    const Economy e(base());
    const double rmax = e.max_revenue(1.0);
    double prev = e.period_payoff(1.0, 0.0);
    for (int i = 1; i < 100; ++i) {
        const double w = e.period_payoff(1.0, rmax * i / 99.0);
        EXPECT_LE(w, prev);
        prev = w;
    }
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.0, rmax);
    for (int i = 0; i < 500; ++i) {
        const double a = u(rng), b = u(rng);
        EXPECT_GE(e.period_payoff(1.0, 0.5 * (a + b)) + 1e-12,
                  0.5 * (e.period_payoff(1.0, a) + e.period_payoff(1.0, b)));
    }
}

TEST(PeriodPayoff, TableAgreesWithBisection) {
    const Economy e(base());
    for (double kappa : {1.0, 0.998}) {
        const PayoffTable t(e, kappa);
        for (int i = 0; i <= 400; ++i) {
            const double r = t.max_revenue() * i / 400.0;
            EXPECT_NEAR(t.payoff(r), e.period_payoff(kappa, r), 1e-12);
        }
    }
}

TEST(Autarky, NoSpendingNoDistortion) {
    const Economy e(base());
    const auto a = e.autarky_allocation(0.0);
    EXPECT_NEAR(a.n, e.satiation_labor(0.998), 1e-14);
    EXPECT_NEAR(a.tax, 0.0, 1e-13);
}

TEST(Autarky, BalancesBudgetAtMeanSpending) {
    const Economy e(base());
    const auto a = e.autarky_allocation(0.114);
    EXPECT_GE(a.n, e.laffer_peak(0.998));
    EXPECT_NEAR(e.surplus(0.998, a.n, 0.114), 0.0, 1e-12);
    EXPECT_EQ(Economy::autarky_marginal_utility(0.114), 1.0);
}

TEST(Tax, DecreasingInLaborOnBranch) {
    const Economy e(base());
    const double lo = e.laffer_peak(1.0), hi = e.satiation_labor(1.0);
    for (int i = 0; i < 50; ++i) {
        const double n1 = lo + (hi - lo) * i / 50.0, n2 = lo + (hi - lo) * (i + 1) / 50.0;
        EXPECT_GT(e.tax_rate(1.0, n1), e.tax_rate(1.0, n2));
    }
}

TEST(Multiplier, HandValue) {
    const Economy e(base());
    // H' = 0.6, H'' = -2.4: nu = -0.4 / (0.4 - 1.2)
    EXPECT_NEAR(e.multiplier(0.5), 0.5, 1e-14);
}

TEST(Multiplier, ZeroAtSatiation) {
    const Economy e(base());
    EXPECT_NEAR(e.multiplier(e.satiation_labor(1.0)), 0.0, 1e-14);
}

TEST(Multiplier, DivergesAtPeak) {
    const Economy e(base());
    const double peak = e.laffer_peak(1.0);
    EXPECT_THROW(e.multiplier(peak), LafferSingularity);
    EXPECT_GT(e.multiplier(peak + 1e-8), 1e4);
}

TEST(Multiplier, DecreasingInLaborIncreasingInRevenue) {
    const Economy e(base());
    const double lo = e.laffer_peak(1.0) + 1e-6, hi = e.satiation_labor(1.0);
    double prev = std::numeric_limits<double>::infinity();
    for (int i = 0; i <= 50; ++i) {
        const double nu = e.multiplier(lo + (hi - lo) * i / 50.0);
        EXPECT_LT(nu, prev);
        prev = nu;
    }
    prev = -1.0;
    const double rmax = e.max_revenue(1.0);
    for (int i = 0; i < 50; ++i) {
        const double nu = e.multiplier(e.labor_from_revenue(1.0, rmax * i / 50.0));
        EXPECT_GT(nu, prev);
        prev = nu;
    }
}

TEST(Preferences, RejectsInvalid) {
    Preferences p = base();
    p.beta = 1.2;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = base();
    p.c1 = 1.5;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    p = base();
    p.sigma = 1.0;
    EXPECT_THROW(p.validate(), std::invalid_argument);
    EXPECT_NO_THROW(base().validate());
}
