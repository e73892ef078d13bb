#pragma once

// Simulated equilibrium paths and the period-by-period implementability
// check on them.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sovdef/model.hpp"
#include "sovdef/solver_amss.hpp"
#include "sovdef/solver_ed.hpp"
#include "sovdef/stochastic.hpp"

namespace sovdef {

/// One trajectory, stored as parallel per-period arrays. `debt` is the
/// stock outstanding at the start of period t (the frozen defaulted stock in
/// autarky) and `debt_next` is B_{t+1}.
struct SimPath {
    std::vector<int> g_index;
    std::vector<double> g;
    std::vector<std::uint8_t> access_prev;  // phi_{t-1}
    std::vector<std::uint8_t> access;       // phi_t
    std::vector<int> debt_index;
    std::vector<double> debt;
    std::vector<int> debt_next_index;
    std::vector<double> debt_next;
    std::vector<OfferEvent> event;
    std::vector<double> delta;              // payoff-relevant repayment fraction, 0 in autarky
    std::vector<std::uint8_t> defaulted;    // d_t
    std::vector<std::uint8_t> accepted;     // a_t
    std::vector<double> revenue;
    std::vector<double> tax;
    std::vector<double> labor;
    std::vector<double> output;
    std::vector<double> price;              // P1 with access, P0 in autarky
    std::vector<double> spread;
    std::vector<double> transfer;
    std::vector<double> multiplier;
    std::vector<double> snap_error;         // |delta B - nearest grid point| on re-entry, else 0

    std::size_t size() const { return g.size(); }

    void reserve(std::size_t n) {
        g_index.reserve(n); g.reserve(n); access_prev.reserve(n); access.reserve(n);
        debt_index.reserve(n); debt.reserve(n); debt_next_index.reserve(n); debt_next.reserve(n);
        event.reserve(n); delta.reserve(n); defaulted.reserve(n); accepted.reserve(n);
        revenue.reserve(n); tax.reserve(n); labor.reserve(n); output.reserve(n); price.reserve(n);
        spread.reserve(n); transfer.reserve(n); multiplier.reserve(n); snap_error.reserve(n);
    }
};

struct SimStart {
    int g_index = -1;  // -1: middle state
    int debt_index = -1;  // -1: the zero-debt point
    bool access = true;
};

namespace detail {

struct PeriodRecord {
    int g_index = 0;
    bool access_prev = true, access = true, defaulted = false, accepted = false;
    int debt_index = 0, debt_next_index = 0;
    OfferEvent event;
    double delta = 1.0, revenue = 0.0, price = 0.0, snap = 0.0;
    double kappa_phi = 1.0;
};

inline double safe_multiplier(const Economy& econ, double n, double kappa_phi) {
    try {
        return econ.multiplier(n, kappa_phi);
    } catch (const LafferSingularity&) {
        return std::numeric_limits<double>::infinity();
    }
}

inline void push_record(SimPath& path, const PeriodRecord& r, const EconomyParams& params, const Economy& econ,
                        const PayoffTable& access_payoff, const PayoffTable& autarky_payoff) {
    const auto& grid = params.grid;
    const double gv = params.chain.g_values[static_cast<std::size_t>(r.g_index)];
    const double n = r.access ? access_payoff.labor(r.revenue) : autarky_payoff.labor(r.revenue);
    path.g_index.push_back(r.g_index);
    path.g.push_back(gv);
    path.access_prev.push_back(r.access_prev);
    path.access.push_back(r.access);
    path.debt_index.push_back(r.debt_index);
    path.debt.push_back(grid[static_cast<std::size_t>(r.debt_index)]);
    path.debt_next_index.push_back(r.debt_next_index);
    path.debt_next.push_back(grid[static_cast<std::size_t>(r.debt_next_index)]);
    path.event.push_back(r.event);
    path.delta.push_back(r.access ? r.delta : 0.0);
    path.defaulted.push_back(r.defaulted);
    path.accepted.push_back(r.accepted);
    path.revenue.push_back(r.revenue);
    path.tax.push_back(econ.tax_rate(r.kappa_phi, n));
    path.labor.push_back(n);
    path.output.push_back(r.kappa_phi * n);
    path.price.push_back(r.price);
    path.spread.push_back(r.price > 0.0 ? 1.0 / r.price - 1.0 / params.prefs.beta
                                        : std::numeric_limits<double>::infinity());
    const double t = r.access ? r.revenue + r.price * path.debt_next.back() - gv - r.delta * path.debt.back() : 0.0;
    path.transfer.push_back(t);
    path.multiplier.push_back(safe_multiplier(econ, n, r.kappa_phi));
    path.snap_error.push_back(r.snap);
}

inline std::size_t start_g(const ShockChain& chain, const SimStart& s) {
    return s.g_index >= 0 ? static_cast<std::size_t>(s.g_index) : chain.size() / 2;
}

}  // namespace detail

/// Simulation context for the economy with default: owns the repayment
/// continuation table needed to re-optimize after a restructuring.
class EdSimulator {
public:
    explicit EdSimulator(const EDSolution& sol)
        : sol_(sol), ops_(sol.params), access_(ops_.economy(), 1.0), autarky_(ops_.economy(), sol.params.prefs.kappa) {
        ops_.continuation(sol.v_repay, sol.v_autarky, sol.options.allow_default, ev_);
    }

    const EDSolution& solution() const { return sol_; }
    const EdBellman& ops() const { return ops_; }

    /// Period outcome given the start-of-period state and repayment event.
    detail::PeriodRecord step(std::size_t g, std::size_t b, bool access_prev, const OfferEvent& ev) const {
        detail::PeriodRecord r;
        r.g_index = static_cast<int>(g);
        r.access_prev = access_prev;
        r.debt_index = static_cast<int>(b);
        r.event = ev;
        const auto& params = sol_.params;
        const double gv = params.chain.g_values[g];
        if (access_prev) {
            if (sol_.defaults(g, b) || sol_.policy_debt(g, b) < 0) {
                r.defaulted = true;
                fill_autarky(r, g, b, gv);
            } else {
                r.access = true;
                r.delta = 1.0;
                r.debt_next_index = sol_.policy_debt(g, b);
                r.revenue = sol_.policy_revenue(g, b);
                r.price = sol_.price_repay(g, static_cast<std::size_t>(r.debt_next_index));
            }
            return r;
        }
        if (ev.kind == OfferEvent::Kind::offer && sol_.accepts(g, static_cast<std::size_t>(ev.index), b)) {
            const double owed = ev.delta * params.grid[b];
            const RepayChoice c = ops_.bellman_repay(ev_, sol_.price_repay, g, owed);
            if (c.feasible()) {
                r.accepted = true;
                r.access = true;
                r.delta = ev.delta;
                r.debt_next_index = c.debt_index;
                r.revenue = c.revenue;
                r.price = sol_.price_repay(g, static_cast<std::size_t>(c.debt_index));
                r.snap = std::abs(owed - params.grid[params.grid.nearest(owed)]);
                return r;
            }
        }
        fill_autarky(r, g, b, gv);
        return r;
    }

    void record(SimPath& path, const detail::PeriodRecord& r) const {
        detail::push_record(path, r, sol_.params, ops_.economy(), access_, autarky_);
    }

    SimPath simulate(std::size_t horizon, std::size_t burn_in, std::uint64_t seed, const SimStart& start = {}) const {
        if (!(horizon > burn_in)) throw std::invalid_argument("simulate: horizon must exceed burn_in");
        const auto& params = sol_.params;
        Rng rng(seed);
        std::size_t g = detail::start_g(params.chain, start);
        std::size_t b = start.debt_index >= 0 ? static_cast<std::size_t>(start.debt_index) : params.grid.zero_index();
        bool access_prev = start.access;
        OfferEvent ev{access_prev ? OfferEvent::Kind::access : OfferEvent::Kind::no_offer, -1, access_prev ? 1.0 : 0.0};
        SimPath path;
        path.reserve(horizon - burn_in);
        for (std::size_t t = 0; t < horizon; ++t) {
            const detail::PeriodRecord r = step(g, b, access_prev, ev);
            if (t >= burn_in) record(path, r);
            const PeriodDraw d = draw_period(params.chain, params.offers, g, r.access, rng);
            g = d.g_next;
            ev = d.event;
            b = static_cast<std::size_t>(r.debt_next_index);
            access_prev = r.access;
        }
        return path;
    }

private:
    void fill_autarky(detail::PeriodRecord& r, std::size_t g, std::size_t b, double gv) const {
        r.access = false;
        r.delta = 0.0;
        r.debt_next_index = static_cast<int>(b);
        r.revenue = gv;
        r.kappa_phi = sol_.params.prefs.kappa;
        r.price = sol_.price_autarky(g, b);
    }

    const EDSolution& sol_;
    EdBellman ops_;
    PayoffTable access_;
    PayoffTable autarky_;
    Table<double> ev_;
};

inline SimPath simulate(const EDSolution& sol, std::size_t horizon, std::size_t burn_in, std::uint64_t seed,
                        const SimStart& start = {}) {
    return EdSimulator(sol).simulate(horizon, burn_in, seed, start);
}

/// Risk-free benchmark path. Uses the same draw sequence as the economy
/// with default, so equal seeds give equal spending paths.
class AmssSimulator {
public:
    explicit AmssSimulator(const AMSSSolution& sol)
        : sol_(sol), econ_(sol.params.prefs), access_(econ_, 1.0), autarky_(econ_, sol.params.prefs.kappa) {}

    detail::PeriodRecord step(std::size_t g, std::size_t b) const {
        detail::PeriodRecord r;
        r.g_index = static_cast<int>(g);
        r.debt_index = static_cast<int>(b);
        r.delta = 1.0;
        const int j = sol_.policy_debt(g, b);
        if (j < 0) throw std::runtime_error("AMSS simulation reached a state with an empty feasible set");
        r.debt_next_index = j;
        r.revenue = sol_.policy_revenue(g, b);
        r.price = sol_.params.prefs.beta;
        return r;
    }

    void record(SimPath& path, const detail::PeriodRecord& r) const {
        detail::push_record(path, r, sol_.params, econ_, access_, autarky_);
    }

    SimPath simulate(std::size_t horizon, std::size_t burn_in, std::uint64_t seed, const SimStart& start = {}) const {
        if (!(horizon > burn_in)) throw std::invalid_argument("simulate: horizon must exceed burn_in");
        const auto& params = sol_.params;
        Rng rng(seed);
        std::size_t g = detail::start_g(params.chain, start);
        std::size_t b = start.debt_index >= 0 ? static_cast<std::size_t>(start.debt_index) : params.grid.zero_index();
        SimPath path;
        path.reserve(horizon - burn_in);
        for (std::size_t t = 0; t < horizon; ++t) {
            const detail::PeriodRecord r = step(g, b);
            if (t >= burn_in) record(path, r);
            const PeriodDraw d = draw_period(params.chain, params.offers, g, true, rng);
            g = d.g_next;
            b = static_cast<std::size_t>(r.debt_next_index);
        }
        return path;
    }

    /// Rollout along a given sequence of spending states.
    SimPath follow(const std::vector<std::size_t>& g_states, std::size_t debt_index) const {
        SimPath path;
        std::size_t b = debt_index;
        for (std::size_t g : g_states) {
            const detail::PeriodRecord r = step(g, b);
            record(path, r);
            b = static_cast<std::size_t>(r.debt_next_index);
        }
        return path;
    }

    const Economy& economy() const { return econ_; }

private:
    const AMSSSolution& sol_;
    Economy econ_;
    PayoffTable access_;
    PayoffTable autarky_;
};

inline SimPath simulate_amss(const AMSSSolution& sol, std::size_t horizon, std::size_t burn_in, std::uint64_t seed,
                             const SimStart& start = {}) {
    return AmssSimulator(sol).simulate(horizon, burn_in, seed, start);
}

/// Per-period implementability check.
struct ImplementabilityReport {
    struct Violation {
        std::size_t t = 0;
        std::string what;
        double amount = 0.0;
    };
    std::vector<double> slack;  // Z_t + phi_t (p_t B_{t+1} - delta_t B_t) = lump-sum transfer
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
};

/// Checks, for every t: the budget inequality Z_t + phi_t (p_t B_{t+1} -
/// delta_t B_t) >= -tol with Z_t recomputed from the recorded tax and labor;
/// the equilibrium tax formula; B_{t+1} = B_t in autarky; the access law of
/// motion; that the recorded price matches the solution's tables; and that
/// the recorded transfer equals the slack.
inline ImplementabilityReport validate_implementability(const SimPath& path, const EDSolution& sol, double tol = 1e-9) {
    ImplementabilityReport rep;
    const Economy econ(sol.params.prefs);
    const double kappa = sol.params.prefs.kappa;
    rep.slack.resize(path.size());
    for (std::size_t t = 0; t < path.size(); ++t) {
        const bool phi = path.access[t] != 0;
        const double kphi = phi ? 1.0 : kappa;
        const double z = path.tax[t] * kphi * path.labor[t] - path.g[t];
        const double slack = z + (phi ? path.price[t] * path.debt_next[t] - path.delta[t] * path.debt[t] : 0.0);
        rep.slack[t] = slack;
        auto flag = [&](const std::string& what, double amount) { rep.violations.push_back({t, what, amount}); };
        if (slack < -tol) flag("budget", slack);
        if (!phi && std::abs(slack) > tol) flag("autarky budget not balanced", slack);
        if (!phi && path.debt_next_index[t] != path.debt_index[t]) flag("debt changed in autarky", path.debt_next[t] - path.debt[t]);
        const double tax_eq = econ.tax_rate(kphi, path.labor[t]);
        if (std::abs(tax_eq - path.tax[t]) > tol) flag("tax off the household labor condition", path.tax[t] - tax_eq);
        if (path.tax[t] < -tol) flag("negative tax", path.tax[t]);
        if (std::abs(path.transfer[t] - slack) > tol) flag("transfer differs from budget slack", path.transfer[t] - slack);
        const bool phi_prev = path.access_prev[t] != 0;
        const bool law = phi_prev ? phi == !path.defaulted[t] : phi == (path.accepted[t] != 0);
        if (!law) flag("access law of motion", 0.0);
        if (t + 1 < path.size()) {
            if (path.access_prev[t + 1] != path.access[t]) flag("access flag not carried forward", 0.0);
            if (path.debt_index[t + 1] != path.debt_next_index[t]) flag("debt not carried forward", 0.0);
        }
        const std::size_t g = static_cast<std::size_t>(path.g_index[t]);
        const double p_table = phi ? sol.price_repay(g, static_cast<std::size_t>(path.debt_next_index[t]))
                                   : sol.price_autarky(g, static_cast<std::size_t>(path.debt_index[t]));
        if (std::abs(p_table - path.price[t]) > tol) flag("price differs from equilibrium table", path.price[t] - p_table);
    }
    return rep;
}

}  // namespace sovdef
