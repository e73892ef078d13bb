#pragma once

// Invariant suite replayed on a stored solution: Bellman and price fixed
// points, decision consistency, bounds, and implementability of simulated
// paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "sovdef/experiments.hpp"
#include "sovdef/sim.hpp"
#include "sovdef/solver_amss.hpp"
#include "sovdef/solver_ed.hpp"

namespace sovdef {

struct Check {
    std::string name;
    bool ok = true;
    double value = 0.0;   // residual, count or bound excess
    double tolerance = 0.0;
    bool informational = false;  // reported, never fails the suite
};

struct ValidationReport {
    std::vector<Check> checks;
    bool ok() const {
        return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.ok || c.informational; });
    }
    void add(std::string name, double value, double tol, bool informational = false) {
        checks.push_back({std::move(name), value <= tol, value, tol, informational});
    }
};

struct ValidateSpec {
    int paths = 20;
    std::size_t periods = 2000;
    std::size_t burn_in = 500;
    std::uint64_t seed = 20140101;
    double implementability_tol = 1e-9;
};

inline ValidationReport validate_solution(const EDSolution& sol, const ValidateSpec& spec = {}) {
    ValidationReport rep;
    const EdBellman ops(sol.params);
    const auto& opt = sol.options;
    const auto& params = sol.params;
    const std::size_t ng = sol.n_g(), nb = sol.n_b();
    const double beta = params.prefs.beta;

    Table<double> ev, v1, rev;
    Table<int> pol;
    ops.continuation(sol.v_repay, sol.v_autarky, opt.allow_default, ev);
    ops.bellman_repay_all(ev, sol.price_repay, v1, pol, rev, opt.threads);
    rep.add("repay Bellman residual", detail::sup_diff(v1, sol.v_repay), 10.0 * opt.value_tol);
    long infeasible_mismatch = 0;
    for (std::size_t i = 0; i < v1.data.size(); ++i)
        if (is_infeasible(v1.data[i]) != is_infeasible(sol.v_repay.data[i])) ++infeasible_mismatch;
    rep.add("repay feasibility pattern mismatches", static_cast<double>(infeasible_mismatch), 0.0);
    if (opt.allow_default) {
        Table<double> v0;
        ops.bellman_autarky(sol.v_repay, sol.v_autarky, v0);
        rep.add("autarky Bellman residual", detail::sup_diff(v0, sol.v_autarky), 10.0 * opt.value_tol);
    }

    Table<std::uint8_t> dflag, accept;
    ops.decisions(sol.v_repay, sol.v_autarky, opt.allow_default, dflag, accept);
    long flips = 0;
    for (std::size_t i = 0; i < dflag.data.size(); ++i) flips += dflag.data[i] != sol.default_flag.data[i];
    for (std::size_t i = 0; i < accept.data.size(); ++i) flips += accept.data[i] != sol.accept.data[i];
    rep.add("decisions inconsistent with values", static_cast<double>(flips), 0.0);

    if (opt.allow_default) {
        Table<double> p0 = sol.price_autarky, p1;
        ops.secondary_price(sol.accept, p0, opt.p0_tol);
        rep.add("secondary price fixed point residual", detail::sup_diff(p0, sol.price_autarky), 1e-9);
        ops.access_price(sol.default_flag, sol.price_autarky, p1, sol.convergence.mixed);
        rep.add("access price fixed point residual", detail::sup_diff(p1, sol.price_repay), 10.0 * opt.price_tol);
    }

    const std::size_t z = params.grid.zero_index();
    long zero_defaults = 0;
    for (std::size_t g = 0; g < ng; ++g) zero_defaults += sol.defaults(g, z);
    rep.add("defaults at zero debt", static_cast<double>(zero_defaults), 0.0);

    double rise = 0.0;
    for (std::size_t g = 0; g < ng; ++g)
        for (std::size_t b = z + 1; b < nb; ++b) {
            const double a = sol.v_repay(g, b - 1), c = sol.v_repay(g, b);
            if (is_infeasible(a) || is_infeasible(c)) continue;
            rise = std::max(rise, c - a);
        }
    rep.add("repay value increase in B", rise, 10.0 * opt.value_tol);

    const auto& offers = params.offers;
    const double p0_cap = beta * offers.lambda * offers.mean_delta() / (1.0 - beta);
    double p0_excess = 0.0, p1_excess = 0.0;
    for (double q : sol.price_autarky.data) p0_excess = std::max({p0_excess, -q, q - p0_cap});
    for (double p : sol.price_repay.data) p1_excess = std::max({p1_excess, -p, p - beta});
    rep.add("secondary price outside [0, beta lambda E[delta]/(1-beta)]", p0_excess, 1e-12);
    rep.add("access price outside [0, beta]", p1_excess, 1e-12);

    const Economy econ(params.prefs);
    double flow_max = 0.0;
    for (std::size_t g = 0; g < ng; ++g) {
        const double gv = params.chain.g_values[g];
        flow_max = std::max({flow_max, std::abs(econ.period_payoff(1.0, 0.0) - gv)});
        if (!is_infeasible(ops.autarky_flow(g))) flow_max = std::max(flow_max, std::abs(ops.autarky_flow(g)));
        const double rmax = ops.access_payoff().max_revenue();
        flow_max = std::max(flow_max, std::abs(econ.period_payoff(1.0, rmax) - gv));
    }
    const double vbound = flow_max / (1.0 - beta);
    double v_excess = 0.0;
    for (const auto* t : {&sol.v_repay, &sol.v_autarky})
        for (double v : t->data)
            if (!is_infeasible(v)) v_excess = std::max(v_excess, std::abs(v) - vbound);
    rep.add("finite values above max|flow|/(1-beta)", v_excess, 1e-9);

    rep.add("threshold violations", static_cast<double>(sol.threshold_violations.size()), 0.0, true);
    rep.add("mixed default cells", static_cast<double>(sol.convergence.mixed.size()), 0.0, true);

    const EdSimulator sim(sol);
    long bad_paths = 0, bad_periods = 0;
    for (int r = 0; r < spec.paths; ++r) {
        const SimPath p = sim.simulate(spec.periods + spec.burn_in, spec.burn_in,
                                       Rng::seed_for(spec.seed, static_cast<std::uint64_t>(r)));
        const auto iv = validate_implementability(p, sol, spec.implementability_tol);
        if (!iv.ok()) {
            ++bad_paths;
            bad_periods += static_cast<long>(iv.violations.size());
        }
    }
    rep.add("simulated paths failing implementability", static_cast<double>(bad_paths), 0.0);
    rep.add("implementability violations", static_cast<double>(bad_periods), 0.0);
    return rep;
}

inline ValidationReport validate_solution(const AMSSSolution& sol) {
    ValidationReport rep;
    const std::size_t ng = sol.n_g(), nb = sol.n_b();
    const std::size_t z = sol.params.grid.zero_index();
    double rise = 0.0;
    long outside = 0;
    for (std::size_t g = 0; g < ng; ++g)
        for (std::size_t b = 0; b < nb; ++b) {
            const int j = sol.policy_debt(g, b);
            if (j >= 0 && (static_cast<std::size_t>(j) < sol.first_admissible || static_cast<std::size_t>(j) > sol.last_admissible))
                ++outside;
            if (b > z && !is_infeasible(sol.value(g, b)) && !is_infeasible(sol.value(g, b - 1)))
                rise = std::max(rise, sol.value(g, b) - sol.value(g, b - 1));
        }
    rep.add("value increase in B", rise, 1e-9);
    rep.add("debt choices outside the limits", static_cast<double>(outside), 0.0);
    rep.add("value iteration residual", sol.residual, 1e-8);
    rep.add("states with an empty feasible set", static_cast<double>(sol.infeasible_states), 0.0, true);
    return rep;
}

}  // namespace sovdef
