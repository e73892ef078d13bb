#pragma once

// Risk-free debt benchmark: bonds always trade at beta and the government
// is confined to exogenous debt limits.

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "sovdef/model.hpp"
#include "sovdef/parallel.hpp"
#include "sovdef/params.hpp"
#include "sovdef/solver_ed.hpp"
#include "sovdef/table.hpp"

namespace sovdef {

struct DebtLimits {
    double b_min = 0.0;
    double b_max = 0.4;
};

struct AMSSSolution {
    EconomyParams params;
    DebtLimits limits;
    Table<double> value;
    Table<int> policy_debt;  // -1 where no admissible choice is feasible
    Table<double> policy_revenue;
    std::size_t first_admissible = 0;  // grid index range inside the limits
    std::size_t last_admissible = 0;
    std::vector<std::size_t> effective_last;  // per g: largest B' keeping every successor feasible
    long sweeps = 0;
    double residual = 0.0;
    long infeasible_states = 0;

    std::size_t n_g() const { return params.chain.size(); }
    std::size_t n_b() const { return params.grid.size(); }
};

inline AMSSSolution solve_amss(const EconomyParams& params, const DebtLimits& limits, const SolverOptions& opt = {}) {
    params.validate();
    if (!(limits.b_max >= limits.b_min)) throw std::invalid_argument("solve_amss: b_max < b_min");
    const auto& grid = params.grid;
    const auto& chain = params.chain;
    const std::size_t ng = chain.size(), nb = grid.size();
    const double beta = params.prefs.beta;
    const Economy econ(params.prefs);
    const PayoffTable payoff(econ, 1.0);

    AMSSSolution sol;
    sol.params = params;
    sol.limits = limits;
    std::size_t lo = nb, hi = 0;
    for (std::size_t j = 0; j < nb; ++j)
        if (grid[j] >= limits.b_min - 1e-14 && grid[j] <= limits.b_max + 1e-14) {
            lo = std::min(lo, j);
            hi = std::max(hi, j);
        }
    if (lo > hi) throw std::invalid_argument("solve_amss: no grid point inside the debt limits");
    sol.first_admissible = lo;
    sol.last_admissible = hi;

    Table<double> v(ng, nb, 0.0), vn(ng, nb), ev(ng, nb);
    Table<int> pol(ng, nb, -1);
    Table<double> rev(ng, nb, 0.0);
    const double top = payoff.payoff(0.0);

    auto expect = [&](const Table<double>& val) {
        for (std::size_t g = 0; g < ng; ++g)
            for (std::size_t j = 0; j < nb; ++j) {
                // any reachable state without a feasible choice rules B' out
                double e = 0.0;
                bool bad = false;
                for (std::size_t gp = 0; gp < ng; ++gp) {
                    const double pr = chain.prob(g, gp);
                    if (pr == 0.0) continue;
                    bad = bad || is_infeasible(val(gp, j));
                    e += pr * val(gp, j);
                }
                ev(g, j) = bad ? kInfeasible : e;
            }
    };

    double diff = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < opt.max_inner; ++sweep) {
        expect(v);
#pragma omp parallel for schedule(dynamic, 16) num_threads(thread_count(opt.threads))
        for (long cell = 0; cell < static_cast<long>(ng * nb); ++cell) {
            const std::size_t g = static_cast<std::size_t>(cell) / nb, b = static_cast<std::size_t>(cell) % nb;
            const double gv = chain.g_values[g];
            const double need = gv + grid[b];
            double best = kInfeasible;
            int arg = -1;
            double arg_rev = 0.0;
            for (std::size_t j = lo; j <= hi; ++j) {
                const double cont = ev(g, j);
                if (is_infeasible(cont)) continue;
                if (top - gv + beta * cont < best) continue;
                const double r = std::max(0.0, need - beta * grid[j]);
                if (r > payoff.max_revenue()) continue;
                const double val = payoff.payoff(r) - gv + beta * cont;
                if (val > best) {
                    best = val;
                    arg = static_cast<int>(j);
                    arg_rev = r;
                }
            }
            vn(g, b) = arg < 0 ? kInfeasible : best;
            pol(g, b) = arg;
            rev(g, b) = arg < 0 ? std::numeric_limits<double>::quiet_NaN() : arg_rev;
        }
        diff = detail::sup_diff(vn, v);
        std::swap(v, vn);
        ++sol.sweeps;
        if (diff < opt.value_tol) break;
        for (int h = 0; h < opt.howard_steps; ++h) {
            expect(v);
            for (std::size_t g = 0; g < ng; ++g)
                for (std::size_t b = 0; b < nb; ++b) {
                    // a choice that turned infeasible is left to the next maximization
                    const int j = pol(g, b);
                    const double cont = j < 0 ? kInfeasible : ev(g, static_cast<std::size_t>(j));
                    vn(g, b) = is_infeasible(cont) ? v(g, b)
                                                   : payoff.payoff(rev(g, b)) - chain.g_values[g] + beta * cont;
                }
            std::swap(v, vn);
        }
    }
    if (!(diff < opt.value_tol)) throw NonConvergence("solve_amss: value iteration did not converge", {diff});
    sol.value = std::move(v);
    sol.policy_debt = std::move(pol);
    sol.policy_revenue = std::move(rev);
    sol.residual = diff;
    for (int j : sol.policy_debt.data)
        if (j < 0) ++sol.infeasible_states;
    sol.effective_last.assign(ng, lo);
    for (std::size_t g = 0; g < ng; ++g)
        for (std::size_t j = lo; j <= hi; ++j) {
            bool ok = true;
            for (std::size_t gp = 0; gp < ng && ok; ++gp)
                ok = chain.prob(g, gp) == 0.0 || !is_infeasible(sol.value(gp, j));
            if (ok) sol.effective_last[g] = j;
        }
    return sol;
}

}  // namespace sovdef
