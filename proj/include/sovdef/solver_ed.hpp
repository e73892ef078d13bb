#pragma once

// Economy with default: value iteration over (g, B) nested inside a damped
// fixed point on bond prices.
//
// Tables are indexed [g][b]. With market access the government repays B,
// chooses B' on the grid and collects R = max(0, g + B - P1(g,B') B'); any
// excess bond proceeds are rebated lump sum. In autarky the budget is
// balanced at productivity kappa and the defaulted stock B stays frozen until
// an accepted offer delta converts it into delta * B of regular debt.

#include <algorithm>
#include <deque>
#include <cmath>
#include <cstdint>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "sovdef/model.hpp"
#include "sovdef/parallel.hpp"
#include "sovdef/params.hpp"
#include "sovdef/stochastic.hpp"
#include "sovdef/table.hpp"

namespace sovdef {

class NonConvergence : public std::runtime_error {
public:
    NonConvergence(const std::string& what, std::vector<double> residuals)
        : std::runtime_error(what), residuals_(std::move(residuals)) {}
    const std::vector<double>& residuals() const { return residuals_; }

private:
    std::vector<double> residuals_;
};

/// Default cell priced with a mixed strategy: lenders expect default with
/// probability prob; gap is V1 - V0 at the cell after the indifference search.
struct MixedDefault {
    std::size_t g = 0;
    std::size_t b = 0;
    double prob = 0.0;
    double gap = 0.0;
};

struct ConvergenceLog {
    int outer_iterations = 0;
    long max_sweeps = 0;
    long eval_sweeps = 0;
    std::vector<double> price_residuals;
    double value_residual = 0.0;
    bool converged = false;
    bool cycle_detected = false;
    std::vector<MixedDefault> mixed;
};

struct ThresholdViolation {
    std::size_t g = 0;
    std::size_t b = 0;
    enum class Kind { default_not_threshold, accept_not_threshold } kind = Kind::default_not_threshold;
};

struct EDSolution {
    EconomyParams params;
    SolverOptions options;
    Table<double> v_repay;
    Table<double> v_autarky;
    Table<double> price_repay;    // P1(g, B')
    Table<double> price_autarky;  // P0(g, B)
    Table<int> policy_debt;       // B' index, -1 when the feasible set is empty
    Table<double> policy_revenue;
    Table<std::uint8_t> default_flag;
    Table<std::uint8_t> accept;   // row g * n_offers + k
    std::vector<double> threshold_g;  // +inf when never defaulting
    Table<double> threshold_delta;    // -inf when no offer is accepted
    std::vector<ThresholdViolation> threshold_violations;
    ConvergenceLog convergence;

    std::size_t n_g() const { return params.chain.size(); }
    std::size_t n_b() const { return params.grid.size(); }
    std::size_t n_offers() const { return params.offers.size(); }
    bool defaults(std::size_t g, std::size_t b) const { return default_flag(g, b) != 0; }
    bool accepts(std::size_t g, std::size_t k, std::size_t b) const { return accept(g * n_offers() + k, b) != 0; }
};

/// Result of the repayment Bellman operator at one state.
struct RepayChoice {
    double value = kInfeasible;
    int debt_index = -1;
    double revenue = std::numeric_limits<double>::quiet_NaN();
    bool feasible() const { return debt_index >= 0; }
};

/// Bellman operators of the economy with default, bound to one
/// parametrization.
class EdBellman {
public:
    explicit EdBellman(const EconomyParams& params)
        : params_(params), econ_(params.prefs), access_(econ_, 1.0), autarky_(econ_, params.prefs.kappa) {
        params_.validate();
        const std::size_t ng = params_.chain.size(), nb = params_.grid.size(), nd = params_.offers.size();
        autarky_flow_.resize(ng);
        for (std::size_t g = 0; g < ng; ++g) {
            const double gv = params_.chain.g_values[g];
            autarky_flow_[g] = gv <= econ_.max_revenue(econ_.kappa()) ? econ_.autarky_flow(gv) : kInfeasible;
        }
        offer_bracket_.resize(nd * nb);
        for (std::size_t k = 0; k < nd; ++k)
            for (std::size_t b = 0; b < nb; ++b)
                offer_bracket_[k * nb + b] = params_.grid.bracket(params_.offers.deltas[k] * params_.grid[b]);
    }

    const EconomyParams& params() const { return params_; }
    const Economy& economy() const { return econ_; }
    const PayoffTable& access_payoff() const { return access_; }
    double autarky_flow(std::size_t g) const { return autarky_flow_[g]; }
    double beta() const { return params_.prefs.beta; }

    /// ev(g, B') = E[max(V1(g',B'), V0(g',B')) | g], or E[V1] without default.
    void continuation(const Table<double>& v1, const Table<double>& v0, bool allow_default, Table<double>& ev) const {
        const auto& chain = params_.chain;
        const std::size_t ng = chain.size(), nb = params_.grid.size();
        ev = Table<double>(ng, nb, 0.0);
        // a successor without any feasible choice, however unlikely, rules B' out
        Table<std::uint8_t> bad(ng, nb, 0);
        std::vector<double> best(nb);
        for (std::size_t gp = 0; gp < ng; ++gp) {
            for (std::size_t b = 0; b < nb; ++b)
                best[b] = allow_default ? std::max(v1(gp, b), v0(gp, b)) : v1(gp, b);
            for (std::size_t g = 0; g < ng; ++g) {
                const double p = chain.prob(g, gp);
                if (p == 0.0) continue;
                double* out = ev.row(g);
                for (std::size_t b = 0; b < nb; ++b) {
                    out[b] += p * best[b];
                    if (is_infeasible(best[b])) bad(g, b) = 1;
                }
            }
        }
        for (std::size_t i = 0; i < ev.data.size(); ++i)
            if (bad.data[i] || is_infeasible(ev.data[i])) ev.data[i] = kInfeasible;
    }

    /// V1(g, delta_k * B_b) by linear interpolation in B.
    double restructured_value(const Table<double>& v1, std::size_t g, std::size_t k, std::size_t b) const {
        const auto [lo, w] = offer_bracket_[k * params_.grid.size() + b];
        return interpolate(v1, g, lo, w);
    }

    double interpolate(const Table<double>& v1, std::size_t g, std::size_t lo, double w) const {
        const double a = v1(g, lo);
        if (w == 0.0 || v1.cols == 1) return a;
        const double c = v1(g, lo + 1);
        if (w == 1.0) return c;
        if (is_infeasible(a) || is_infeasible(c)) return kInfeasible;
        return (1.0 - w) * a + w * c;
    }

    /// V1 at an arbitrary debt level.
    double value_repay_at(const Table<double>& v1, std::size_t g, double debt) const {
        const auto [lo, w] = params_.grid.bracket(debt);
        return interpolate(v1, g, lo, w);
    }

    /// Repayment Bellman operator at (g, B) for arbitrary B: maximizes
    /// W1(R) - g + beta ev(g, B') over the grid.
    RepayChoice bellman_repay(const Table<double>& ev, const Table<double>& p1, std::size_t g, double debt,
                              int hint = -1) const {
        const std::size_t nb = params_.grid.size();
        const double gv = params_.chain.g_values[g];
        const double need = gv + debt;
        const double beta = params_.prefs.beta;
        const double rmax = access_.max_revenue();
        const double top = access_.payoff(0.0) - gv;
        const double* evr = ev.row(g);
        const double* pr = p1.row(g);
        RepayChoice best;
        auto consider = [&](std::size_t j) {
            const double cont = evr[j];
            if (is_infeasible(cont)) return;
            const double bound = top + beta * cont;
            if (bound < best.value) return;
            double r = need - pr[j] * params_.grid[j];
            if (r < 0.0) r = 0.0;
            if (r > rmax) return;
            const double v = access_.payoff(r) - gv + beta * cont;
            if (v > best.value || (v == best.value && static_cast<int>(j) < best.debt_index)) {
                best.value = v;
                best.debt_index = static_cast<int>(j);
                best.revenue = r;
            }
        };
        if (hint >= 0 && static_cast<std::size_t>(hint) < nb) consider(static_cast<std::size_t>(hint));
        for (std::size_t j = 0; j < nb; ++j) consider(j);
        if (is_infeasible(best.value)) return RepayChoice{};
        return best;
    }

    /// Repayment Bellman operator on the whole grid. Debt choices dominated
    /// in both bond proceeds P1 B' and continuation value are dropped; on the
    /// remaining frontier the objective W1(max(0, g + B - Q)) + beta c has
    /// increasing differences in (B, Q) because W1 is concave, so the
    /// smallest maximizer is monotone in B and a divide-and-conquer search
    /// applies.
    void bellman_repay_all(const Table<double>& ev, const Table<double>& p1, Table<double>& value, Table<int>& policy,
                           Table<double>& revenue, int threads = 0) const {
        const std::size_t ng = params_.chain.size(), nb = params_.grid.size();
        value = Table<double>(ng, nb, kInfeasible);
        policy = Table<int>(ng, nb, -1);
        revenue = Table<double>(ng, nb, std::numeric_limits<double>::quiet_NaN());
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count(threads))
        for (long gi = 0; gi < static_cast<long>(ng); ++gi) {
            const std::size_t g = static_cast<std::size_t>(gi);
            const std::vector<std::size_t> frontier = debt_frontier(ev, p1, g);
            if (frontier.empty()) continue;
            search(ev, p1, g, frontier, 0, nb - 1, 0, frontier.size() - 1, value, policy, revenue);
        }
    }

    /// Debt choices not dominated in (proceeds, continuation), ordered by
    /// increasing proceeds.
    std::vector<std::size_t> debt_frontier(const Table<double>& ev, const Table<double>& p1, std::size_t g) const {
        const std::size_t nb = params_.grid.size();
        std::vector<std::size_t> idx;
        idx.reserve(nb);
        for (std::size_t j = 0; j < nb; ++j)
            if (!is_infeasible(ev(g, j))) idx.push_back(j);
        auto proceeds = [&](std::size_t j) { return p1(g, j) * params_.grid[j]; };
        // by proceeds descending, then continuation descending, then index
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
            const double qa = proceeds(a), qb = proceeds(b);
            if (qa != qb) return qa > qb;
            if (ev(g, a) != ev(g, b)) return ev(g, a) > ev(g, b);
            return a < b;
        });
        std::vector<std::size_t> out;
        double best_c = -std::numeric_limits<double>::infinity();
        for (std::size_t j : idx) {
            if (ev(g, j) > best_c) {
                out.push_back(j);
                best_c = ev(g, j);
            }
        }
        std::reverse(out.begin(), out.end());
        return out;
    }

    /// Repayment value under a fixed debt choice.
    double evaluate_repay(const Table<double>& ev, const Table<double>& p1, std::size_t g, double debt,
                          int debt_index) const {
        if (debt_index < 0) return kInfeasible;
        const double gv = params_.chain.g_values[g];
        const double cont = ev(g, static_cast<std::size_t>(debt_index));
        if (is_infeasible(cont)) return kInfeasible;
        double r = gv + debt - p1(g, static_cast<std::size_t>(debt_index)) * params_.grid[static_cast<std::size_t>(debt_index)];
        if (r < 0.0) r = 0.0;
        if (r > access_.max_revenue()) return kInfeasible;
        return access_.payoff(r) - gv + params_.prefs.beta * cont;
    }

    /// Autarky Bellman operator for every (g, B).
    void bellman_autarky(const Table<double>& v1, const Table<double>& v0, Table<double>& out) const {
        const auto& chain = params_.chain;
        const auto& offers = params_.offers;
        const std::size_t ng = chain.size(), nb = params_.grid.size(), nd = offers.size();
        const double beta = params_.prefs.beta, lambda = offers.lambda;
        // inner(g', b) = lambda sum_k pi_k max(V1(g', delta_k b), V0(g', b)) + (1 - lambda) V0(g', b)
        Table<double> inner(ng, nb);
        for (std::size_t gp = 0; gp < ng; ++gp) {
            for (std::size_t b = 0; b < nb; ++b) {
                const double stay = v0(gp, b);
                double offer_part = 0.0;
                if (lambda > 0.0)
                    for (std::size_t k = 0; k < nd; ++k)
                        offer_part += offers.probs[k] * std::max(restructured_value(v1, gp, k, b), stay);
                inner(gp, b) = lambda * offer_part + (1.0 - lambda) * stay;
            }
        }
        out = Table<double>(ng, nb);
        for (std::size_t g = 0; g < ng; ++g) {
            for (std::size_t b = 0; b < nb; ++b) {
                if (is_infeasible(autarky_flow_[g])) {
                    out(g, b) = kInfeasible;
                    continue;
                }
                double e = 0.0;
                for (std::size_t gp = 0; gp < ng; ++gp) e += chain.prob(g, gp) * inner(gp, b);
                const double v = autarky_flow_[g] + beta * e;
                out(g, b) = is_infeasible(v) ? kInfeasible : v;
            }
        }
    }

    /// Secondary-market price: per B the fixed point of
    /// q = lambda beta E[sum_k pi_k a delta_k] + beta E[(1 - lambda sum_k pi_k a) q].
    void secondary_price(const Table<std::uint8_t>& accept, Table<double>& p0, double tol) const {
        const auto& chain = params_.chain;
        const auto& offers = params_.offers;
        const std::size_t ng = chain.size(), nb = params_.grid.size(), nd = offers.size();
        const double beta = params_.prefs.beta, lambda = offers.lambda;
        if (p0.rows != ng || p0.cols != nb) p0 = Table<double>(ng, nb, 0.0);
        std::vector<double> recovery(ng), stay(ng), q(ng), next(ng);
        for (std::size_t b = 0; b < nb; ++b) {
            for (std::size_t gp = 0; gp < ng; ++gp) {
                double acc = 0.0, acc_delta = 0.0;
                for (std::size_t k = 0; k < nd; ++k) {
                    if (accept(gp * nd + k, b)) {
                        acc += offers.probs[k];
                        acc_delta += offers.probs[k] * offers.deltas[k];
                    }
                }
                recovery[gp] = lambda * acc_delta;
                stay[gp] = 1.0 - lambda * acc;
            }
            for (std::size_t g = 0; g < ng; ++g) q[g] = p0(g, b);
            for (long it = 0; it < 100000; ++it) {
                double diff = 0.0;
                for (std::size_t g = 0; g < ng; ++g) {
                    double e = 0.0;
                    for (std::size_t gp = 0; gp < ng; ++gp) e += chain.prob(g, gp) * (recovery[gp] + stay[gp] * q[gp]);
                    next[g] = beta * e;
                    diff = std::max(diff, std::abs(next[g] - q[g]));
                }
                q.swap(next);
                if (diff < tol) break;
            }
            for (std::size_t g = 0; g < ng; ++g) p0(g, b) = q[g];
        }
    }

    /// P1(g, B') = beta E[(1 - d(g',B')) + d(g',B') P0(g',B') | g].
    void access_price(const Table<std::uint8_t>& dflag, const Table<double>& p0, Table<double>& p1,
                      const std::vector<MixedDefault>& mixed = {}) const {
        const auto& chain = params_.chain;
        const std::size_t ng = chain.size(), nb = params_.grid.size();
        const double beta = params_.prefs.beta;
        Table<double> dprob(ng, nb);
        for (std::size_t i = 0; i < dprob.data.size(); ++i) dprob.data[i] = dflag.data[i] ? 1.0 : 0.0;
        for (const auto& m : mixed) dprob(m.g, m.b) = m.prob;
        p1 = Table<double>(ng, nb, 0.0);
        for (std::size_t g = 0; g < ng; ++g)
            for (std::size_t b = 0; b < nb; ++b) {
                double e = 0.0;
                for (std::size_t gp = 0; gp < ng; ++gp) {
                    const double d = dprob(gp, b);
                    e += chain.prob(g, gp) * ((1.0 - d) + d * Economy::autarky_marginal_utility(0.0) * p0(gp, b));
                }
                p1(g, b) = beta * e;
            }
    }

    void decisions(const Table<double>& v1, const Table<double>& v0, bool allow_default, Table<std::uint8_t>& dflag,
                   Table<std::uint8_t>& accept) const {
        const std::size_t ng = params_.chain.size(), nb = params_.grid.size(), nd = params_.offers.size();
        dflag = Table<std::uint8_t>(ng, nb, 0);
        accept = Table<std::uint8_t>(ng * nd, nb, 0);
        if (!allow_default) return;
        for (std::size_t g = 0; g < ng; ++g)
            for (std::size_t b = 0; b < nb; ++b) {
                // ties go to repayment and acceptance
                dflag(g, b) = v1(g, b) < v0(g, b) ? 1 : 0;
                for (std::size_t k = 0; k < nd; ++k)
                    accept(g * nd + k, b) = restructured_value(v1, g, k, b) >= v0(g, b) ? 1 : 0;
            }
    }

private:
    void search(const Table<double>& ev, const Table<double>& p1, std::size_t g, const std::vector<std::size_t>& frontier,
                std::size_t b_lo, std::size_t b_hi, std::size_t k_lo, std::size_t k_hi, Table<double>& value,
                Table<int>& policy, Table<double>& revenue) const {
        if (b_lo > b_hi) return;
        const std::size_t b = b_lo + (b_hi - b_lo) / 2;
        const double gv = params_.chain.g_values[g];
        const double need = gv + params_.grid[b];
        const double beta = params_.prefs.beta;
        const double rmax = access_.max_revenue();
        const double top = access_.payoff(0.0) - gv;
        double best = kInfeasible, best_r = 0.0;
        std::size_t best_k = k_hi + 1;
        for (std::size_t k = k_lo; k <= k_hi; ++k) {
            const std::size_t j = frontier[k];
            const double cont = ev(g, j);
            if (top + beta * cont < best) continue;
            double r = need - p1(g, j) * params_.grid[j];
            if (r < 0.0) r = 0.0;
            if (r > rmax) continue;
            const double v = access_.payoff(r) - gv + beta * cont;
            if (v > best) {
                best = v;
                best_k = k;
                best_r = r;
            }
        }
        std::size_t split_lo = k_lo, split_hi = k_hi;
        if (best_k <= k_hi) {
            value(g, b) = best;
            policy(g, b) = static_cast<int>(frontier[best_k]);
            revenue(g, b) = best_r;
            split_lo = best_k;
            split_hi = best_k;
        }
        // infeasible at b: every larger B is infeasible too, smaller B keeps the full range
        if (best_k > k_hi) {
            if (b > b_lo) search(ev, p1, g, frontier, b_lo, b - 1, k_lo, k_hi, value, policy, revenue);
            return;
        }
        if (b > b_lo) search(ev, p1, g, frontier, b_lo, b - 1, k_lo, split_hi, value, policy, revenue);
        if (b < b_hi) search(ev, p1, g, frontier, b + 1, b_hi, split_lo, k_hi, value, policy, revenue);
    }

    EconomyParams params_;
    Economy econ_;
    PayoffTable access_;
    PayoffTable autarky_;
    std::vector<double> autarky_flow_;
    std::vector<std::pair<std::size_t, double>> offer_bracket_;
};

namespace detail {

inline double sup_diff(const Table<double>& a, const Table<double>& b) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const double x = a.data[i], y = b.data[i];
        if (is_infeasible(x) && is_infeasible(y)) continue;
        d = std::max(d, std::abs(x - y));
    }
    return d;
}

struct InnerState {
    Table<double> v1, v0, ev;
    Table<int> policy;
    Table<double> revenue;
};

/// Value iteration given access prices, with policy-evaluation sweeps
/// between maximizations. Returns the final sup-norm residual.
inline double solve_values(const EdBellman& ops, const Table<double>& p1, const SolverOptions& opt, InnerState& s,
                           ConvergenceLog& log) {
    const auto& params = ops.params();
    const std::size_t ng = params.chain.size(), nb = params.grid.size();
    const double beta = params.prefs.beta;
    Table<double> v1n(ng, nb), v0n(ng, nb);
    if (s.policy.rows != ng) s.policy = Table<int>(ng, nb, -1);
    if (s.revenue.rows != ng) s.revenue = Table<double>(ng, nb, 0.0);
    double diff = std::numeric_limits<double>::infinity();
    for (int sweep = 0; sweep < opt.max_inner; ++sweep) {
        ops.continuation(s.v1, s.v0, opt.allow_default, s.ev);
        if (opt.monotone_search) {
            ops.bellman_repay_all(s.ev, p1, v1n, s.policy, s.revenue, opt.threads);
        } else {
#pragma omp parallel for schedule(dynamic, 16) num_threads(thread_count(opt.threads))
            for (long cell = 0; cell < static_cast<long>(ng * nb); ++cell) {
                const std::size_t g = static_cast<std::size_t>(cell) / nb, b = static_cast<std::size_t>(cell) % nb;
                const RepayChoice c = ops.bellman_repay(s.ev, p1, g, params.grid[b], s.policy(g, b));
                v1n(g, b) = c.value;
                s.policy(g, b) = c.debt_index;
                s.revenue(g, b) = c.revenue;
            }
        }
        if (opt.allow_default)
            ops.bellman_autarky(s.v1, s.v0, v0n);
        else
            v0n = Table<double>(ng, nb, kInfeasible);
        diff = std::max(sup_diff(v1n, s.v1), sup_diff(v0n, s.v0));
        std::swap(s.v1, v1n);
        std::swap(s.v0, v0n);
        ++log.max_sweeps;
        if (diff < opt.value_tol) break;
        for (int h = 0; h < opt.howard_steps; ++h) {
            ops.continuation(s.v1, s.v0, opt.allow_default, s.ev);
            for (std::size_t g = 0; g < ng; ++g)
                for (std::size_t b = 0; b < nb; ++b) {
                    const int j = s.policy(g, b);
                    if (j < 0) {
                        v1n(g, b) = kInfeasible;
                        continue;
                    }
                    // a choice that turned infeasible is left to the next maximization;
                    // marking it here could lock in a spurious infeasible set
                    const double cont = s.ev(g, static_cast<std::size_t>(j));
                    v1n(g, b) = is_infeasible(cont)
                                    ? s.v1(g, b)
                                    : ops.access_payoff().payoff(s.revenue(g, b)) - params.chain.g_values[g] + beta * cont;
                }
            if (opt.allow_default) ops.bellman_autarky(s.v1, s.v0, v0n);
            std::swap(s.v1, v1n);
            if (opt.allow_default) std::swap(s.v0, v0n);
            ++log.eval_sweeps;
        }
    }
    if (!(diff < opt.value_tol))
        throw NonConvergence("value iteration did not reach tolerance", {diff});
    return diff;
}


}  // namespace detail

/// Threshold structure of the default and acceptance policies.
struct ThresholdReport {
    std::vector<double> g_bar;         // smallest defaulting g per B, +inf if none
    Table<double> delta_hat;           // largest accepted delta per (g, B), -inf if none
    std::vector<ThresholdViolation> violations;
};

inline ThresholdReport extract_thresholds(const EconomyParams& params, const Table<std::uint8_t>& dflag,
                                          const Table<std::uint8_t>& accept) {
    const std::size_t ng = params.chain.size(), nb = params.grid.size(), nd = params.offers.size();
    const double inf = std::numeric_limits<double>::infinity();
    ThresholdReport rep;
    rep.g_bar.assign(nb, inf);
    rep.delta_hat = Table<double>(ng, nb, -inf);
    for (std::size_t b = 0; b < nb; ++b) {
        std::size_t first = ng;
        for (std::size_t g = 0; g < ng; ++g)
            if (dflag(g, b)) {
                first = g;
                break;
            }
        if (first < ng) {
            rep.g_bar[b] = params.chain.g_values[first];
            for (std::size_t g = first; g < ng; ++g)
                if (!dflag(g, b)) rep.violations.push_back({g, b, ThresholdViolation::Kind::default_not_threshold});
        }
        for (std::size_t g = 0; g < ng; ++g) {
            int last = -1;
            for (std::size_t k = 0; k < nd; ++k)
                if (accept(g * nd + k, b)) last = static_cast<int>(k);
            if (last < 0) continue;
            rep.delta_hat(g, b) = params.offers.deltas[static_cast<std::size_t>(last)];
            for (int k = 0; k < last; ++k)
                if (!accept(g * nd + static_cast<std::size_t>(k), b)) {
                    rep.violations.push_back({g, b, ThresholdViolation::Kind::accept_not_threshold});
                    break;
                }
        }
    }
    return rep;
}

inline ThresholdReport extract_thresholds(const EDSolution& sol) {
    return extract_thresholds(sol.params, sol.default_flag, sol.accept);
}

namespace detail {

struct OuterState {
    InnerState inner;
    Table<double> p1, p0, p1_implied;
    Table<std::uint8_t> dflag, accept;
    std::deque<Table<std::uint8_t>> history;  // recent default tables
};

inline std::uint64_t decision_hash(const Table<std::uint8_t>& dflag, const Table<std::uint8_t>& accept) {
    std::uint64_t h = 1469598103934665603ull;
    for (auto x : dflag.data) h = (h ^ x) * 1099511628211ull;
    for (auto x : accept.data) h = (h ^ x) * 1099511628211ull;
    return h;
}

/// Damped price iteration. Returns true once the implied access price is
/// within price_tol of the one used for the values. With detect_cycles set
/// it also stops (returning false) as soon as the decision tables have
/// repeated, without being constant, over two full periods of length
/// 2..max_period; `history` then
/// holds the default tables of the last period.
inline bool price_loop(const EdBellman& ops, const SolverOptions& opt, OuterState& s, ConvergenceLog& log,
                       const std::vector<MixedDefault>& mixed, int max_iter, bool detect_cycles,
                       std::size_t max_period = 20) {
    std::vector<std::uint64_t> hashes;
    for (int it = 0; it < max_iter; ++it) {
        log.value_residual = solve_values(ops, s.p1, opt, s.inner, log);
        ++log.outer_iterations;
        ops.decisions(s.inner.v1, s.inner.v0, opt.allow_default, s.dflag, s.accept);
        if (!opt.allow_default) {
            log.price_residuals.push_back(0.0);
            return true;
        }
        ops.secondary_price(s.accept, s.p0, opt.p0_tol);
        ops.access_price(s.dflag, s.p0, s.p1_implied, mixed);
        const double residual = sup_diff(s.p1_implied, s.p1);
        log.price_residuals.push_back(residual);
        if (residual < opt.price_tol) return true;
        s.history.push_back(s.dflag);
        if (s.history.size() > max_period) s.history.pop_front();
        if (detect_cycles) {
            hashes.push_back(decision_hash(s.dflag, s.accept));
            const std::size_t n = hashes.size();
            for (std::size_t per = 2; per <= max_period && 2 * per <= n; ++per) {
                bool repeats = true;
                bool constant = true;
                for (std::size_t k = 0; k < per && repeats; ++k) {
                    repeats = hashes[n - 1 - k] == hashes[n - 1 - k - per];
                    constant = constant && hashes[n - 1 - k] == hashes[n - 1];
                }
                if (repeats && !constant) {
                    while (s.history.size() > per) s.history.pop_front();
                    return false;
                }
            }
        }
        for (std::size_t i = 0; i < s.p1.data.size(); ++i)
            s.p1.data[i] = (1.0 - opt.damping) * s.p1.data[i] + opt.damping * s.p1_implied.data[i];
    }
    return false;
}

/// Default cells whose decision changed within the recorded history.
inline std::vector<std::pair<std::size_t, std::size_t>> flipping_cells(const OuterState& s) {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    if (s.history.empty()) return out;
    const auto& ref = s.history.back();
    for (std::size_t i = 0; i < ref.data.size(); ++i)
        for (const auto& h : s.history)
            if (h.data[i] != ref.data[i]) {
                out.emplace_back(i / ref.cols, i % ref.cols);
                break;
            }
    return out;
}

}  // namespace detail

/// Solves the economy with default. Throws NonConvergence when the price
/// loop exhausts max_outer iterations.
///
/// On a grid the damped price loop can cycle because a single default
/// decision flips back and forth with the price it induces. With
/// opt.mix_cycles set, such a cell is priced with the default probability
/// that leaves the government indifferent (Illinois root search on
/// V1 - V0); the pure policy at the cell keeps the tie rule.
inline EDSolution solve(const EconomyParams& params, const SolverOptions& opt = {}) {
    EdBellman ops(params);
    const std::size_t ng = params.chain.size(), nb = params.grid.size();
    const double beta = params.prefs.beta;

    detail::OuterState os;
    os.inner.v1 = Table<double>(ng, nb, 0.0);
    os.inner.v0 = Table<double>(ng, nb, opt.allow_default ? 0.0 : kInfeasible);
    os.p1 = Table<double>(ng, nb, beta);
    os.p0 = Table<double>(ng, nb, 0.0);

    EDSolution sol;
    sol.params = params;
    sol.options = opt;
    ConvergenceLog& log = sol.convergence;
    log.converged = detail::price_loop(ops, opt, os, log, {}, opt.max_outer, opt.mix_cycles);
    if (!log.converged && opt.mix_cycles && log.outer_iterations < opt.max_outer) {
        log.cycle_detected = true;
        const auto cells = detail::flipping_cells(os);
        if (cells.size() != 1) {
            std::ostringstream msg;
            msg << "price loop cycles with " << cells.size() << " flipping default cells; only one can be mixed";
            throw NonConvergence(msg.str(), log.price_residuals);
        }
        const auto [cg, cb] = cells.front();
        const int budget = std::max(50, opt.max_outer);
        auto gap_at = [&](double d, detail::OuterState& st) {
            st = os;
            st.history.clear();
            if (!detail::price_loop(ops, opt, st, log, {{cg, cb, d, 0.0}}, budget, false)) {
                std::ostringstream msg;
                msg << "price loop did not converge with default probability " << d << " at the cycling cell";
                throw NonConvergence(msg.str(), log.price_residuals);
            }
            return st.inner.v1(cg, cb) - st.inner.v0(cg, cb);
        };
        detail::OuterState lo_state, hi_state, mid_state;
        double lo = 0.0, hi = 1.0;
        double f_lo = gap_at(lo, lo_state), f_hi = gap_at(hi, hi_state);
        if (f_lo * f_hi > 0.0) {
            std::ostringstream msg;
            msg << "no indifference point at the cycling cell (gap " << f_lo << " at 0, " << f_hi << " at 1)";
            throw NonConvergence(msg.str(), log.price_residuals);
        }
        double d = lo, f = f_lo;
        detail::OuterState* best = &lo_state;
        if (std::abs(f_hi) < std::abs(f_lo)) {
            d = hi;
            f = f_hi;
            best = &hi_state;
        }
        int side = 0;
        for (int it = 0; it < 100 && std::abs(f) > 10.0 * opt.value_tol && hi - lo > 1e-13; ++it) {
            d = (lo * f_hi - hi * f_lo) / (f_hi - f_lo);
            f = gap_at(d, mid_state);
            best = &mid_state;
            if (f * f_hi > 0.0) {
                hi = d;
                f_hi = f;
                if (side == 1) f_lo *= 0.5;
                side = 1;
            } else {
                lo = d;
                f_lo = f;
                if (side == -1) f_hi *= 0.5;
                side = -1;
            }
        }
        os = std::move(*best);
        log.mixed.push_back({cg, cb, d, f});
        log.converged = true;
    }
    if (!log.converged) {
        std::ostringstream msg;
        msg << "price loop did not converge after " << log.outer_iterations << " outer iterations; last residual "
            << (log.price_residuals.empty() ? 0.0 : log.price_residuals.back());
        throw NonConvergence(msg.str(), log.price_residuals);
    }

    sol.v_repay = std::move(os.inner.v1);
    sol.v_autarky = std::move(os.inner.v0);
    sol.price_repay = std::move(os.p1);
    sol.price_autarky = std::move(os.p0);
    sol.policy_debt = std::move(os.inner.policy);
    sol.policy_revenue = std::move(os.inner.revenue);
    sol.default_flag = std::move(os.dflag);
    sol.accept = std::move(os.accept);
    ThresholdReport th = extract_thresholds(sol);
    sol.threshold_g = std::move(th.g_bar);
    sol.threshold_delta = std::move(th.delta_hat);
    sol.threshold_violations = std::move(th.violations);
    return sol;
}

/// Default states (B > 0) in which some debt choice would raise more than
/// the outstanding stock, i.e. max_B' P1(g,B') B' > B + tol.
struct FundRaisingViolation {
    std::size_t g = 0;
    std::size_t b = 0;
    double max_proceeds = 0.0;
};

inline std::vector<FundRaisingViolation> check_no_fund_raising(const EDSolution& sol, double tol = 1e-12) {
    std::vector<FundRaisingViolation> out;
    const auto& grid = sol.params.grid;
    for (std::size_t g = 0; g < sol.n_g(); ++g) {
        double best = 0.0;
        for (std::size_t j = 0; j < sol.n_b(); ++j) best = std::max(best, sol.price_repay(g, j) * grid[j]);
        for (std::size_t b = 0; b < sol.n_b(); ++b)
            if (grid[b] > 0.0 && sol.defaults(g, b) && best > grid[b] + tol) out.push_back({g, b, best});
    }
    return out;
}

/// Largest bond revenue max_B' P1(g,B') B' and where it is attained.
inline std::pair<std::size_t, double> max_bond_revenue(const EDSolution& sol, std::size_t g) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t j = 0; j < sol.n_b(); ++j) {
        const double v = sol.price_repay(g, j) * sol.params.grid[j];
        if (v > best) {
            best = v;
            arg = j;
        }
    }
    return {arg, best};
}

/// E_g[sum_k pi_k delta_k a(g,k,B)] per B, expectation under the
/// stationary distribution of g.
inline std::vector<double> mean_recovery_rate(const EDSolution& sol) {
    const auto& offers = sol.params.offers;
    const auto& pi = sol.params.chain.stationary;
    std::vector<double> out(sol.n_b(), 0.0);
    for (std::size_t b = 0; b < sol.n_b(); ++b)
        for (std::size_t g = 0; g < sol.n_g(); ++g)
            for (std::size_t k = 0; k < sol.n_offers(); ++k)
                if (sol.accepts(g, k, b)) out[b] += pi[g] * offers.probs[k] * offers.deltas[k];
    return out;
}

/// Share of repaying states whose chosen B' is strictly inside the grid.
inline double interior_policy_share(const EDSolution& sol, std::size_t g_lo, std::size_t g_hi, std::size_t b_lo,
                                    std::size_t b_hi) {
    long total = 0, interior = 0;
    for (std::size_t g = g_lo; g <= g_hi; ++g)
        for (std::size_t b = b_lo; b <= b_hi; ++b) {
            if (sol.defaults(g, b) || sol.policy_debt(g, b) < 0) continue;
            ++total;
            const int j = sol.policy_debt(g, b);
            if (j > 0 && j < static_cast<int>(sol.n_b()) - 1) ++interior;
        }
    return total == 0 ? 0.0 : static_cast<double>(interior) / static_cast<double>(total);
}

}  // namespace sovdef
