#pragma once

#include <cmath>

#include "sovdef/model.hpp"
#include "sovdef/stochastic.hpp"

namespace sovdef {

/// Value assigned to states whose feasible set is empty (forced default).
inline constexpr double kInfeasible = -1e12;
/// Anything below this is treated as infeasible.
inline constexpr double kInfeasibleCutoff = -1e11;

inline bool is_infeasible(double v) { return v < kInfeasibleCutoff; }

struct EconomyParams {
    Preferences prefs;
    ShockChain chain;
    OfferSchedule offers;
    DebtGrid grid;

    void validate() const {
        prefs.validate();
        validate_chain(chain);
        offers.validate();
        grid.validate();
    }
};

struct SolverOptions {
    double value_tol = 1e-9;   // sup-norm, inner value iteration
    double price_tol = 1e-10;  // sup-norm, outer price loop
    double damping = 0.5;      // weight on the implied price
    int max_outer = 500;
    int max_inner = 20000;     // maximization sweeps per inner solve
    int howard_steps = 30;     // policy-evaluation sweeps after each maximization
    double p0_tol = 1e-12;     // secondary-market price fixed point
    bool allow_default = true;
    bool monotone_search = true;  // divide-and-conquer maximization over B'
    bool mix_cycles = true;       // price a single cycling default cell with a mixed strategy
    int threads = 0;           // 0 = OpenMP default
};

/// Parametrization of the quantitative experiments.
struct ShockSpec {
    double mu = 0.114;
    double rho = 0.56;
    double sigma_eps = 0.037;
    int n_states = 11;
    double span = 2.5;
    double half_width = 0.1125;  // grid half-width in units of the process; overrides span when > 0
    ShockScale scale = ShockScale::level;

    double effective_span() const {
        return half_width > 0.0 ? half_width / (sigma_eps / std::sqrt(1.0 - rho * rho)) : span;
    }
    ShockChain build() const { return tauchen(mu, rho, sigma_eps, n_states, effective_span(), scale); }
};

struct OfferSpec {
    double lambda = 0.47;
    double delta_min = 0.10;
    double delta_max = 0.55;
    int count = 10;

    OfferSchedule build() const { return OfferSchedule::equiprobable(lambda, delta_min, delta_max, count); }
};

struct GridSpec {
    double b_min = 0.0;
    double b_max = 0.4;
    int points = 800;

    DebtGrid build() const { return DebtGrid::uniform(b_min, b_max, points); }
};

struct ModelSpec {
    Preferences prefs;
    ShockSpec shocks;
    OfferSpec offers;
    GridSpec grid;

    EconomyParams build() const {
        EconomyParams p{prefs, shocks.build(), offers.build(), grid.build()};
        p.validate();
        return p;
    }
};

}  // namespace sovdef
