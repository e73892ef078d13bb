#pragma once

// Static per-period economics of the quasi-linear economy:
//   u(c, l) = c + H(l),  H(l) = c1 * l^(1-sigma) / (1-sigma),
// with output kappa_phi * n and a linear labor tax. Everything here is a
// pure function of immutable preferences.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace sovdef {

/// Thrown when a revenue target lies beyond the top of the Laffer curve.
class InfeasibleRevenue : public std::domain_error {
public:
    InfeasibleRevenue(double revenue, double max_revenue)
        : std::domain_error("revenue " + std::to_string(revenue) +
                            " exceeds Laffer maximum " + std::to_string(max_revenue)),
          revenue_(revenue), max_revenue_(max_revenue) {}
    double revenue() const { return revenue_; }
    double max_revenue() const { return max_revenue_; }

private:
    double revenue_;
    double max_revenue_;
};

/// Thrown when the multiplier is evaluated at (or beyond) the Laffer peak.
class LafferSingularity : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct Preferences {
    double c1 = 0.15;     // leisure weight, H'(1) = c1
    double sigma = 2.0;   // leisure curvature
    double beta = 0.97;
    double kappa = 0.998; // productivity in financial autarky

    // H and its first three derivatives, l = leisure in (0, 1].
    double leisure_utility(double l) const {
        return c1 * std::pow(l, 1.0 - sigma) / (1.0 - sigma);
    }
    double leisure_mu(double l) const { return c1 * std::pow(l, -sigma); }
    double leisure_mu_slope(double l) const { return -sigma * c1 * std::pow(l, -sigma - 1.0); }
    double leisure_mu_curvature(double l) const {
        return sigma * (sigma + 1.0) * c1 * std::pow(l, -sigma - 2.0);
    }

    /// Throws std::invalid_argument when the parameters leave the admissible region.
    void validate() const {
        auto fail = [](const std::string& what) { throw std::invalid_argument("preferences: " + what); };
        if (!(c1 > 0.0)) fail("c1 must be positive");
        if (!(sigma > 0.0) || std::abs(sigma - 1.0) < 1e-12) fail("sigma must be positive and != 1");
        if (!(beta > 0.0 && beta < 1.0)) fail("beta must lie in (0,1)");
        if (!(kappa > 0.0 && kappa <= 1.0)) fail("kappa must lie in (0,1]");
        if (!(c1 < 1.0)) fail("H'(1) = c1 must be < 1");
        if (!(c1 < kappa)) fail("c1 must be below kappa, otherwise autarky raises no revenue");
        // 2H''(l) < H'''(l)(1-l) on (0,1), checked on a grid.
        for (int i = 1; i < 1000; ++i) {
            const double l = i / 1000.0;
            if (!(2.0 * leisure_mu_slope(l) < leisure_mu_curvature(l) * (1.0 - l)))
                fail("curvature condition 2H''(l) < H'''(l)(1-l) fails at l=" + std::to_string(l));
        }
    }
};

struct LaborAllocation {
    double n = 0.0;
    double tax = 0.0;
    double revenue = 0.0;
    double leisure_value = 0.0;
};

/// Preferences plus cached Laffer-curve data for the two productivities
/// that occur in the model (1 with market access, kappa in autarky).
class Economy {
public:
    explicit Economy(const Preferences& prefs) : prefs_(prefs) {
        prefs_.validate();
        access_ = make_laffer(1.0);
        autarky_ = make_laffer(prefs_.kappa);
    }

    const Preferences& prefs() const { return prefs_; }
    double beta() const { return prefs_.beta; }
    double kappa() const { return prefs_.kappa; }

    /// z(kappa, n, g) = (kappa - H'(1-n)) n - g.
    double surplus(double kappa_phi, double n, double g) const {
        check_kappa(kappa_phi);
        if (!(n >= 0.0 && n < 1.0)) throw std::domain_error("surplus: labor must lie in [0,1)");
        return revenue_at(kappa_phi, n) - g;
    }

    /// Labor at which tax revenue (and hence the surplus) peaks; the additive
    /// g shift does not move it.
    double laffer_peak(double kappa_phi, double /*g*/ = 0.0) const { return laffer(kappa_phi).peak; }

    /// Zero-tax labor, H'(1-n) = kappa_phi.
    double satiation_labor(double kappa_phi) const { return laffer(kappa_phi).satiation; }

    double max_revenue(double kappa_phi) const { return laffer(kappa_phi).max_revenue; }

    /// Labor raising `revenue` on the utility-maximizing side of the Laffer
    /// curve, n in [peak, satiation]. Bisection to 1e-13 in n.
    double labor_from_revenue(double kappa_phi, double revenue) const {
        const Laffer lf = laffer(kappa_phi);
        if (revenue < 0.0) throw std::domain_error("labor_from_revenue: negative revenue");
        if (revenue > lf.max_revenue) {
            if (revenue > lf.max_revenue * (1.0 + 1e-13) + 1e-15) throw InfeasibleRevenue(revenue, lf.max_revenue);
            return lf.peak;
        }
        if (revenue == 0.0) return lf.satiation;
        double lo = std::min(lf.peak + 1e-12, lf.satiation);
        double hi = lf.satiation;
        // revenue_at is decreasing on [lo, hi]
        if (revenue_at(kappa_phi, lo) <= revenue) return lo;
        while (hi - lo > 1e-13) {
            const double mid = 0.5 * (lo + hi);
            if (revenue_at(kappa_phi, mid) > revenue)
                lo = mid;
            else
                hi = mid;
        }
        return 0.5 * (lo + hi);
    }

    /// W_kappa(R) = kappa n(R) + H(1 - n(R)); the flow payoff is W - g.
    double period_payoff(double kappa_phi, double revenue) const {
        const double n = labor_from_revenue(kappa_phi, revenue);
        return kappa_phi * n + prefs_.leisure_utility(1.0 - n);
    }

    double tax_rate(double kappa_phi, double n) const {
        return 1.0 - prefs_.leisure_mu(1.0 - n) / kappa_phi;
    }

    LaborAllocation allocation(double kappa_phi, double n) const {
        LaborAllocation a;
        a.n = n;
        a.tax = tax_rate(kappa_phi, n);
        a.revenue = revenue_at(kappa_phi, n);
        a.leisure_value = prefs_.leisure_utility(1.0 - n);
        return a;
    }

    /// Balanced-budget allocation under autarky productivity.
    LaborAllocation autarky_allocation(double g) const {
        return allocation(prefs_.kappa, labor_from_revenue(prefs_.kappa, g));
    }

    /// W_kappa(g) - g, or throws InfeasibleRevenue.
    double autarky_flow(double g) const { return period_payoff(prefs_.kappa, g) - g; }

    /// Marginal utility of consumption in autarky; identically one here.
    static constexpr double autarky_marginal_utility(double /*g*/) { return 1.0; }

    /// Shadow cost of the implementability constraint as a function of labor,
    /// nu(n) = -(kappa - H'(1-n)) / (kappa - H'(1-n) + H''(1-n) n).
    double multiplier(double n, double kappa_phi = 1.0) const {
        const Laffer lf = laffer(kappa_phi);
        const double l = 1.0 - n;
        const double num = kappa_phi - prefs_.leisure_mu(l);
        const double den = num + prefs_.leisure_mu_slope(l) * n;
        if (n <= lf.peak || !(den < 0.0))
            throw LafferSingularity("multiplier: labor " + std::to_string(n) + " at or below Laffer peak " +
                                    std::to_string(lf.peak));
        return -num / den;
    }

    double revenue_at(double kappa_phi, double n) const {
        return (kappa_phi - prefs_.leisure_mu(1.0 - n)) * n;
    }

    /// d revenue / d n.
    double revenue_slope(double kappa_phi, double n) const {
        const double l = 1.0 - n;
        return kappa_phi - prefs_.leisure_mu(l) + prefs_.leisure_mu_slope(l) * n;
    }

private:
    struct Laffer {
        double kappa = 1.0;
        double peak = 0.0;
        double satiation = 0.0;
        double max_revenue = 0.0;
    };

    static void check_kappa(double kappa_phi) {
        if (!(kappa_phi > 0.0 && kappa_phi <= 1.0)) throw std::domain_error("productivity must lie in (0,1]");
    }

    Laffer make_laffer(double kappa_phi) const {
        check_kappa(kappa_phi);
        Laffer lf;
        lf.kappa = kappa_phi;
        lf.satiation = 1.0 - std::pow(prefs_.c1 / kappa_phi, 1.0 / prefs_.sigma);
        // revenue_slope is strictly decreasing in n, positive at 0 and negative at satiation
        double lo = 0.0, hi = lf.satiation;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (revenue_slope(kappa_phi, mid) > 0.0)
                lo = mid;
            else
                hi = mid;
        }
        lf.peak = 0.5 * (lo + hi);
        lf.max_revenue = revenue_at(kappa_phi, lf.peak);
        return lf;
    }

    Laffer laffer(double kappa_phi) const {
        if (kappa_phi == access_.kappa) return access_;
        if (kappa_phi == autarky_.kappa) return autarky_;
        return make_laffer(kappa_phi);
    }

    Preferences prefs_;
    Laffer access_;
    Laffer autarky_;
};

/// Fast W_kappa(R) for the Bellman hot path: tabulated labor, linear
/// interpolation, then Newton polishing on the revenue equation. Agrees with
/// Economy::period_payoff to ~1e-13.
class PayoffTable {
public:
    PayoffTable() = default;
    PayoffTable(const Economy& econ, double kappa_phi, std::size_t points = 1u << 13)
        : prefs_(econ.prefs()), kappa_(kappa_phi) {
        max_revenue_ = econ.max_revenue(kappa_phi);
        peak_ = econ.laffer_peak(kappa_phi);
        satiation_ = econ.satiation_labor(kappa_phi);
        step_ = max_revenue_ / static_cast<double>(points - 1);
        labor_.resize(points);
        for (std::size_t i = 0; i < points; ++i)
            labor_[i] = econ.labor_from_revenue(kappa_phi, std::min(max_revenue_, step_ * static_cast<double>(i)));
        payoff_at_zero_ = kappa_ * satiation_ + prefs_.leisure_utility(1.0 - satiation_);
    }

    double max_revenue() const { return max_revenue_; }
    double kappa() const { return kappa_; }
    bool feasible(double revenue) const { return revenue <= max_revenue_; }

    double labor(double revenue) const {
        if (revenue <= 0.0) return satiation_;
        const double x = revenue / step_;
        std::size_t i = static_cast<std::size_t>(x);
        if (i >= labor_.size() - 1) i = labor_.size() - 2;
        const double w = x - static_cast<double>(i);
        double n = labor_[i] + w * (labor_[i + 1] - labor_[i]);
        for (int k = 0; k < 2; ++k) {
            const double l = 1.0 - n;
            const double mu = prefs_.c1 * std::pow(l, -prefs_.sigma);
            const double f = (kappa_ - mu) * n - revenue;
            const double df = kappa_ - mu - prefs_.sigma * mu / l * n;
            if (!(df < 0.0)) break;
            const double next = n - f / df;
            if (!(next >= peak_ && next <= satiation_)) break;
            n = next;
            if (std::abs(f) < 1e-15) break;
        }
        return n;
    }

    /// W_kappa(R); caller guarantees revenue <= max_revenue().
    double payoff(double revenue) const {
        if (revenue <= 0.0) return payoff_at_zero_;
        const double n = labor(revenue);
        return kappa_ * n + prefs_.leisure_utility(1.0 - n);
    }

private:
    Preferences prefs_;
    double kappa_ = 1.0;
    double max_revenue_ = 0.0;
    double peak_ = 0.0;
    double satiation_ = 0.0;
    double step_ = 1.0;
    double payoff_at_zero_ = 0.0;
    std::vector<double> labor_;
};

}  // namespace sovdef
