#pragma once

// Monte Carlo moments, the renegotiation table, impulse responses, default
// episodes and the multiplier diagnostics, all built on simulated paths.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "sovdef/parallel.hpp"
#include "sovdef/sim.hpp"
#include "sovdef/solver_amss.hpp"
#include "sovdef/solver_ed.hpp"

namespace sovdef {

struct McSpec {
    int replications = 500;
    std::size_t periods = 2000;   // kept after burn-in
    std::size_t burn_in = 500;
    std::uint64_t seed = 20140101;
    int threads = 0;

    std::size_t horizon() const { return periods + burn_in; }
};

namespace stats {

inline double mean(const std::vector<double>& x) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

/// Sample standard deviation (n - 1); zero for fewer than two points.
inline double sd(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = mean(x);
    double s = 0.0;
    for (double v : x) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(x.size() - 1));
}

/// Linear-interpolation quantile (type 7).
inline double quantile(std::vector<double> x, double q) {
    if (x.empty()) return std::numeric_limits<double>::quiet_NaN();
    std::sort(x.begin(), x.end());
    const double h = q * static_cast<double>(x.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, x.size() - 1);
    return x[lo] + (h - static_cast<double>(lo)) * (x[hi] - x[lo]);
}

inline double median(const std::vector<double>& x) { return quantile(x, 0.5); }

}  // namespace stats

/// Binned counts; the smoothing itself is left to the plotting side, which
/// gets a Silverman bandwidth along with the counts.
struct Histogram {
    double lo = 0.0;
    double hi = 1.0;
    std::vector<long> counts;
    long total = 0;
    long outside = 0;
    double mean = 0.0;
    double sd = 0.0;
    double bandwidth = 0.0;

    double width() const { return (hi - lo) / static_cast<double>(counts.size()); }
    double mass(std::size_t i) const { return total > 0 ? static_cast<double>(counts[i]) / static_cast<double>(total) : 0.0; }
};

inline Histogram make_histogram(const std::vector<double>& x, double lo, double hi, std::size_t bins) {
    if (!(hi > lo) || bins == 0) throw std::invalid_argument("make_histogram: empty range");
    Histogram h;
    h.lo = lo;
    h.hi = hi;
    h.counts.assign(bins, 0);
    for (double v : x) {
        if (v < lo || v > hi) {
            ++h.outside;
            continue;
        }
        std::size_t i = static_cast<std::size_t>((v - lo) / h.width());
        if (i >= bins) i = bins - 1;
        ++h.counts[i];
        ++h.total;
    }
    h.mean = stats::mean(x);
    h.sd = stats::sd(x);
    h.bandwidth = x.size() > 1 ? 1.06 * h.sd * std::pow(static_cast<double>(x.size()), -0.2) : 0.0;
    return h;
}

struct ReplicationMoments {
    long periods = 0;
    long defaults = 0;
    long access_periods = 0;
    double ed_tax_sd = 0.0;      // access periods only
    double amss_tax_sd = 0.0;
    double ed_mean_spread = 0.0;
    double tax_sd_low = 0.0, tax_sd_high = 0.0;  // split at the pooled median debt/output
    double spread_low = 0.0, spread_high = 0.0;
    long n_low = 0, n_high = 0;
};

struct MomentReport {
    McSpec spec;
    long periods = 0;
    long defaults = 0;
    long access_periods = 0;
    double default_frequency = 0.0;          // defaults per simulated period
    double default_frequency_access = 0.0;   // defaults per period entered with access
    double median_debt_output = 0.0;
    double ed_tax_sd = 0.0;                  // average over replications
    double amss_tax_sd = 0.0;
    double tax_sd_ratio = 0.0;
    double mean_tax_sd_low = 0.0, mean_tax_sd_high = 0.0;
    double mean_spread_low = 0.0, mean_spread_high = 0.0;
    std::vector<ReplicationMoments> replications;
    std::vector<Histogram> ed_debt_output;   // per g state, access periods, spread <= spread_cap
    std::vector<Histogram> amss_debt_output;
    double spread_cap = 0.5;
    long dropped_high_spread = 0;
};

namespace detail {

struct RepData {
    ReplicationMoments m;
    std::vector<double> by, tax, spread;     // ED access periods
    std::vector<int> g;
    std::vector<double> amss_by;
    std::vector<int> amss_g;
};

}  // namespace detail

/// Replication r uses seed master ^ r for both economies, so both see the
/// same spending path.
inline MomentReport mc_moments(const EDSolution& ed, const AMSSSolution& amss, const McSpec& spec,
                               std::size_t histogram_bins = 60, double histogram_max = 0.6, double spread_cap = 0.5) {
    if (spec.replications <= 0) throw std::invalid_argument("mc_moments: no replications");
    const std::size_t ng = ed.n_g();
    std::vector<detail::RepData> data(static_cast<std::size_t>(spec.replications));
    const EdSimulator esim(ed);
    const AmssSimulator asim(amss);
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count(spec.threads))
    for (int r = 0; r < spec.replications; ++r) {
        auto& d = data[static_cast<std::size_t>(r)];
        const std::uint64_t seed = Rng::seed_for(spec.seed, static_cast<std::uint64_t>(r));
        const SimPath p = esim.simulate(spec.horizon(), spec.burn_in, seed);
        const SimPath q = asim.simulate(spec.horizon(), spec.burn_in, seed);
        d.m.periods = static_cast<long>(p.size());
        std::vector<double> amss_tax;
        for (std::size_t t = 0; t < p.size(); ++t) {
            if (p.defaulted[t]) ++d.m.defaults;
            if (p.access_prev[t]) ++d.m.access_periods;
            if (p.access[t]) {
                d.by.push_back(p.debt[t] / p.output[t]);
                d.tax.push_back(p.tax[t]);
                d.spread.push_back(p.spread[t]);
                d.g.push_back(p.g_index[t]);
            }
        }
        for (std::size_t t = 0; t < q.size(); ++t) {
            amss_tax.push_back(q.tax[t]);
            d.amss_by.push_back(q.debt[t] / q.output[t]);
            d.amss_g.push_back(q.g_index[t]);
        }
        d.m.ed_tax_sd = stats::sd(d.tax);
        d.m.amss_tax_sd = stats::sd(amss_tax);
        d.m.ed_mean_spread = stats::mean(d.spread);
    }

    MomentReport rep;
    rep.spec = spec;
    rep.spread_cap = spread_cap;
    std::vector<double> pooled;
    for (const auto& d : data) {
        rep.periods += d.m.periods;
        rep.defaults += d.m.defaults;
        rep.access_periods += d.m.access_periods;
        pooled.insert(pooled.end(), d.by.begin(), d.by.end());
    }
    rep.default_frequency = static_cast<double>(rep.defaults) / static_cast<double>(rep.periods);
    rep.default_frequency_access =
        rep.access_periods > 0 ? static_cast<double>(rep.defaults) / static_cast<double>(rep.access_periods) : 0.0;
    rep.median_debt_output = stats::median(pooled);

    std::vector<double> ed_sd, amss_sd, sd_lo, sd_hi, sp_lo, sp_hi;
    std::vector<std::vector<double>> ed_by_g(ng), amss_by_g(ng);
    for (auto& d : data) {
        std::vector<double> tl, th, sl, sh;
        for (std::size_t i = 0; i < d.by.size(); ++i) {
            if (d.by[i] <= rep.median_debt_output) {
                tl.push_back(d.tax[i]);
                sl.push_back(d.spread[i]);
            } else {
                th.push_back(d.tax[i]);
                sh.push_back(d.spread[i]);
            }
            if (d.spread[i] > rep.spread_cap)
                ++rep.dropped_high_spread;
            else
                ed_by_g[static_cast<std::size_t>(d.g[i])].push_back(d.by[i]);
        }
        for (std::size_t i = 0; i < d.amss_by.size(); ++i) amss_by_g[static_cast<std::size_t>(d.amss_g[i])].push_back(d.amss_by[i]);
        d.m.n_low = static_cast<long>(tl.size());
        d.m.n_high = static_cast<long>(th.size());
        d.m.tax_sd_low = stats::sd(tl);
        d.m.tax_sd_high = stats::sd(th);
        d.m.spread_low = tl.empty() ? 0.0 : stats::mean(sl);
        d.m.spread_high = th.empty() ? 0.0 : stats::mean(sh);
        ed_sd.push_back(d.m.ed_tax_sd);
        amss_sd.push_back(d.m.amss_tax_sd);
        if (tl.size() > 1) {
            sd_lo.push_back(d.m.tax_sd_low);
            sp_lo.push_back(d.m.spread_low);
        }
        if (th.size() > 1) {
            sd_hi.push_back(d.m.tax_sd_high);
            sp_hi.push_back(d.m.spread_high);
        }
        rep.replications.push_back(d.m);
    }
    rep.ed_tax_sd = stats::mean(ed_sd);
    rep.amss_tax_sd = stats::mean(amss_sd);
    rep.tax_sd_ratio = rep.amss_tax_sd > 0.0 ? rep.ed_tax_sd / rep.amss_tax_sd : std::numeric_limits<double>::quiet_NaN();
    rep.mean_tax_sd_low = stats::mean(sd_lo);
    rep.mean_tax_sd_high = stats::mean(sd_hi);
    rep.mean_spread_low = stats::mean(sp_lo);
    rep.mean_spread_high = stats::mean(sp_hi);
    for (std::size_t g = 0; g < ng; ++g) {
        rep.ed_debt_output.push_back(make_histogram(ed_by_g[g], 0.0, histogram_max, histogram_bins));
        rep.amss_debt_output.push_back(make_histogram(amss_by_g[g], 0.0, histogram_max, histogram_bins));
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Renegotiation statistics

struct DefaultSpell {
    std::size_t replication = 0;
    std::size_t start = 0;        // period of default
    long length = 0;              // default period through re-entry period
    double debt_output = 0.0;     // defaulted stock over output in the default period
    double delta = 0.0;           // accepted repayment fraction
};

/// Completed default spells on a path; spells still open at the end are
/// dropped.
inline std::vector<DefaultSpell> default_spells(const SimPath& p, std::size_t replication = 0) {
    std::vector<DefaultSpell> out;
    bool open = false;
    DefaultSpell cur;
    for (std::size_t t = 0; t < p.size(); ++t) {
        if (p.defaulted[t]) {
            open = true;
            cur = DefaultSpell{};
            cur.replication = replication;
            cur.start = t;
            cur.debt_output = p.debt[t] / p.output[t];
        } else if (p.accepted[t] && open) {
            cur.length = static_cast<long>(t - cur.start) + 1;
            cur.delta = p.delta[t];
            out.push_back(cur);
            open = false;
        }
    }
    return out;
}

struct RenegotiationRow {
    double lambda = 0.0;
    double default_frequency = 0.0;
    double avg_accepted_delta = 0.0;
    double duration_high = 0.0;   // inclusive count
    double duration_low = 0.0;
    double median_debt_output = 0.0;
    long spells = 0;
    long spells_high = 0;
    long spells_low = 0;
    long threshold_violations = 0;
    int outer_iterations = 0;
    long mixed_cells = 0;
};

inline RenegotiationRow renegotiation_row(const EDSolution& sol, const McSpec& spec) {
    const EdSimulator sim(sol);
    std::vector<std::vector<DefaultSpell>> per(static_cast<std::size_t>(spec.replications));
    std::vector<long> defaults(per.size(), 0), periods(per.size(), 0);
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count(spec.threads))
    for (int r = 0; r < spec.replications; ++r) {
        const SimPath p = sim.simulate(spec.horizon(), spec.burn_in, Rng::seed_for(spec.seed, static_cast<std::uint64_t>(r)));
        per[static_cast<std::size_t>(r)] = default_spells(p, static_cast<std::size_t>(r));
        periods[static_cast<std::size_t>(r)] = static_cast<long>(p.size());
        for (auto d : p.defaulted) defaults[static_cast<std::size_t>(r)] += d;
    }
    RenegotiationRow row;
    row.lambda = sol.params.offers.lambda;
    row.threshold_violations = static_cast<long>(sol.threshold_violations.size());
    row.outer_iterations = sol.convergence.outer_iterations;
    row.mixed_cells = static_cast<long>(sol.convergence.mixed.size());
    std::vector<DefaultSpell> all;
    for (const auto& v : per) all.insert(all.end(), v.begin(), v.end());
    row.default_frequency = static_cast<double>(std::accumulate(defaults.begin(), defaults.end(), 0L)) /
                            static_cast<double>(std::accumulate(periods.begin(), periods.end(), 0L));
    row.spells = static_cast<long>(all.size());
    if (all.empty()) return row;
    std::vector<double> ratio, delta;
    for (const auto& s : all) {
        ratio.push_back(s.debt_output);
        delta.push_back(s.delta);
    }
    row.median_debt_output = stats::median(ratio);
    row.avg_accepted_delta = stats::mean(delta);
    double hi = 0.0, lo = 0.0;
    for (const auto& s : all) {
        if (s.debt_output > row.median_debt_output) {
            hi += static_cast<double>(s.length);
            ++row.spells_high;
        } else {
            lo += static_cast<double>(s.length);
            ++row.spells_low;
        }
    }
    row.duration_high = row.spells_high ? hi / static_cast<double>(row.spells_high) : 0.0;
    row.duration_low = row.spells_low ? lo / static_cast<double>(row.spells_low) : 0.0;
    return row;
}

/// Re-solves the economy for each offer-arrival probability.
inline std::vector<RenegotiationRow> renegotiation_table(const EconomyParams& params, const std::vector<double>& lambdas,
                                                         const McSpec& spec, const SolverOptions& opt = {}) {
    std::vector<RenegotiationRow> rows;
    for (double lam : lambdas) {
        EconomyParams p = params;
        p.offers.lambda = lam;
        rows.push_back(renegotiation_row(solve(p, opt), spec));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// Impulse responses

struct ImpulsePanel {
    std::vector<double> g;
    std::vector<int> g_index;
    std::vector<double> debt, surplus, tax, multiplier;
    std::vector<std::uint8_t> access;
};

struct ImpulseResponse {
    ImpulsePanel ed;
    ImpulsePanel amss;
};

/// Nearest grid state for each requested spending level. Values outside the
/// grid hull are rejected.
inline std::vector<std::size_t> map_to_states(const ShockChain& chain, const std::vector<double>& g_path) {
    const auto& gv = chain.g_values;
    const double lo = *std::min_element(gv.begin(), gv.end()), hi = *std::max_element(gv.begin(), gv.end());
    std::vector<std::size_t> out;
    for (double x : g_path) {
        if (!(x >= lo && x <= hi))
            throw std::invalid_argument("impulse_response: spending " + std::to_string(x) + " outside the grid hull");
        std::size_t best = 0;
        for (std::size_t i = 1; i < gv.size(); ++i)
            if (std::abs(gv[i] - x) < std::abs(gv[best] - x)) best = i;
        out.push_back(best);
    }
    return out;
}

/// Low spending except for a few high periods (t counted from 1).
inline std::vector<double> paper_spending_path(std::size_t length = 20, double low = 0.0915, double high = 0.159) {
    std::vector<double> g(length, low);
    for (std::size_t t = 2; t <= 4 && t <= length; ++t) g[t - 1] = high;
    return g;
}

namespace detail {

inline void push_panel(ImpulsePanel& panel, const SimPath& p) {
    for (std::size_t t = 0; t < p.size(); ++t) {
        panel.g.push_back(p.g[t]);
        panel.g_index.push_back(p.g_index[t]);
        panel.debt.push_back(p.debt[t]);
        panel.surplus.push_back(p.revenue[t] - p.g[t]);
        panel.tax.push_back(p.tax[t]);
        panel.multiplier.push_back(p.multiplier[t]);
        panel.access.push_back(p.access[t]);
    }
}

}  // namespace detail

/// Policy rollout from zero debt along a fixed spending path. The economy
/// with default receives no offers along the way.
inline ImpulseResponse impulse_response(const EDSolution& ed, const AMSSSolution& amss, const std::vector<double>& g_path) {
    const auto states = map_to_states(ed.params.chain, g_path);
    ImpulseResponse out;
    const EdSimulator esim(ed);
    SimPath ep;
    std::size_t b = ed.params.grid.zero_index();
    bool access_prev = true;
    for (std::size_t g : states) {
        const OfferEvent ev{access_prev ? OfferEvent::Kind::access : OfferEvent::Kind::no_offer, -1, access_prev ? 1.0 : 0.0};
        const auto r = esim.step(g, b, access_prev, ev);
        esim.record(ep, r);
        b = static_cast<std::size_t>(r.debt_next_index);
        access_prev = r.access;
    }
    detail::push_panel(out.ed, ep);
    const AmssSimulator asim(amss);
    detail::push_panel(out.amss, asim.follow(states, amss.params.grid.zero_index()));
    return out;
}

// ---------------------------------------------------------------------------
// Default episodes

struct EpisodeSpec {
    std::size_t access_before = 6;
    std::size_t exclusion_after = 4;
    std::size_t half_window = 4;     // window t = -4 .. 4
    std::size_t max_episodes = 1000;
};

struct Episode {
    std::size_t replication = 0;
    std::size_t t0 = 0;
    std::vector<double> g, ed_tax, amss_tax;   // aligned on the window
    int g_index0 = 0;
    int debt_index0 = 0;                       // defaulted stock at t0
    std::vector<int> g_states;                 // t0 .. t0 + exclusion_after
};

struct QuantileBand {
    std::vector<double> q25, q50, q75;
};

struct EpisodePanel {
    EpisodeSpec spec;
    std::vector<int> offsets;
    std::vector<Episode> episodes;
    QuantileBand g, ed_tax, amss_tax;
    std::size_t count() const { return episodes.size(); }
};

inline QuantileBand band(const std::vector<std::vector<double>>& rows, std::size_t width) {
    QuantileBand b;
    for (std::size_t i = 0; i < width; ++i) {
        std::vector<double> col;
        for (const auto& r : rows) col.push_back(r[i]);
        b.q25.push_back(stats::quantile(col, 0.25));
        b.q50.push_back(stats::median(col));
        b.q75.push_back(stats::quantile(col, 0.75));
    }
    return b;
}

/// Default episodes preceded by access_before periods of access and followed
/// by exclusion_after periods of exclusion, aligned at the default date.
inline EpisodePanel episode_windows(const EDSolution& ed, const AMSSSolution& amss, const McSpec& mc,
                                    const EpisodeSpec& spec = {}) {
    EpisodePanel panel;
    panel.spec = spec;
    const long h = static_cast<long>(spec.half_window);
    for (long o = -h; o <= h; ++o) panel.offsets.push_back(static_cast<int>(o));
    const EdSimulator esim(ed);
    const AmssSimulator asim(amss);
    const std::size_t need_before = std::max(spec.access_before, spec.half_window);
    const std::size_t need_after = std::max(spec.exclusion_after, spec.half_window);
    for (int r = 0; r < mc.replications && panel.episodes.size() < spec.max_episodes; ++r) {
        const std::uint64_t seed = Rng::seed_for(mc.seed, static_cast<std::uint64_t>(r));
        const SimPath p = esim.simulate(mc.horizon(), mc.burn_in, seed);
        const SimPath q = asim.simulate(mc.horizon(), mc.burn_in, seed);
        for (std::size_t t = need_before; t + need_after < p.size(); ++t) {
            if (!p.defaulted[t]) continue;
            bool ok = true;
            for (std::size_t k = 1; k <= spec.access_before; ++k) ok = ok && p.access[t - k];
            for (std::size_t k = 1; k <= spec.exclusion_after; ++k) ok = ok && !p.access[t + k];
            if (!ok) continue;
            Episode e;
            e.replication = static_cast<std::size_t>(r);
            e.t0 = t;
            e.g_index0 = p.g_index[t];
            e.debt_index0 = p.debt_index[t];
            for (long o = -h; o <= h; ++o) {
                const std::size_t s = static_cast<std::size_t>(static_cast<long>(t) + o);
                e.g.push_back(p.g[s]);
                e.ed_tax.push_back(p.tax[s]);
                e.amss_tax.push_back(q.tax[s]);
            }
            for (std::size_t k = 0; k <= spec.exclusion_after; ++k) e.g_states.push_back(p.g_index[t + k]);
            panel.episodes.push_back(std::move(e));
            if (panel.episodes.size() >= spec.max_episodes) break;
        }
    }
    std::vector<std::vector<double>> g, et, at;
    for (const auto& e : panel.episodes) {
        g.push_back(e.g);
        et.push_back(e.ed_tax);
        at.push_back(e.amss_tax);
    }
    const std::size_t w = panel.offsets.size();
    if (!panel.episodes.empty()) {
        panel.g = band(g, w);
        panel.ed_tax = band(et, w);
        panel.amss_tax = band(at, w);
    }
    return panel;
}

// ---------------------------------------------------------------------------
// Counterfactual without default

/// Repayment forced for `horizon` periods, then back to the equilibrium
/// continuation; prices are left unchanged. A state where repayment is
/// impossible (no choice keeps revenue below the Laffer peak) falls back to
/// the equilibrium autarky value, and a path that reaches one is flagged.
class NoDefaultOverlay {
public:
    NoDefaultOverlay(const EDSolution& sol, std::size_t horizon = 5) : sol_(sol), ops_(sol.params) {
        const std::size_t ng = sol.n_g(), nb = sol.n_b();
        value_.resize(horizon);
        policy_.resize(horizon);
        revenue_.resize(horizon);
        Table<double> ev;
        ops_.continuation(sol.v_repay, sol.v_autarky, sol.options.allow_default, ev);
        for (std::size_t k = horizon; k-- > 0;) {
            ops_.bellman_repay_all(ev, sol.price_repay, value_[k], policy_[k], revenue_[k], sol.options.threads);
            Table<double> v = value_[k];
            for (std::size_t i = 0; i < v.data.size(); ++i)
                if (is_infeasible(v.data[i])) v.data[i] = sol.v_autarky.data[i];
            ev = Table<double>(ng, nb, 0.0);
            for (std::size_t g = 0; g < ng; ++g)
                for (std::size_t j = 0; j < nb; ++j) {
                    double e = 0.0;
                    for (std::size_t gp = 0; gp < ng; ++gp) e += sol.params.chain.prob(g, gp) * v(gp, j);
                    ev(g, j) = is_infeasible(e) ? kInfeasible : e;
                }
        }
    }

    std::size_t horizon() const { return value_.size(); }
    const Table<double>& value(std::size_t k) const { return value_[k]; }

    struct Path {
        std::vector<double> tax, revenue, debt;
        bool feasible = true;
    };

    /// Forced-repayment path from (g_states[0], debt_index) along the given
    /// spending states.
    Path follow(const std::vector<int>& g_states, std::size_t debt_index) const {
        const Economy& econ = ops_.economy();
        const PayoffTable& pay = ops_.access_payoff();
        Path out;
        std::size_t b = debt_index;
        for (std::size_t k = 0; k < g_states.size() && k < horizon(); ++k) {
            const std::size_t g = static_cast<std::size_t>(g_states[k]);
            const int j = policy_[k](g, b);
            out.debt.push_back(sol_.params.grid[b]);
            if (j < 0 || is_infeasible(value_[k](g, b))) {
                out.feasible = false;
                out.tax.push_back(std::numeric_limits<double>::quiet_NaN());
                out.revenue.push_back(std::numeric_limits<double>::quiet_NaN());
                break;
            }
            const double r = revenue_[k](g, b);
            out.revenue.push_back(r);
            out.tax.push_back(econ.tax_rate(1.0, pay.labor(r)));
            b = static_cast<std::size_t>(j);
        }
        return out;
    }

private:
    const EDSolution& sol_;
    EdBellman ops_;
    std::vector<Table<double>> value_;
    std::vector<Table<int>> policy_;
    std::vector<Table<double>> revenue_;
};

struct CounterfactualEpisode {
    std::size_t episode = 0;
    bool feasible0 = true;           // repayment possible at the default date
    bool feasible_path = true;       // ... and along the whole realized overlay path
    double actual_tax0 = 0.0;
    double counterfactual_tax0 = std::numeric_limits<double>::quiet_NaN();
    double revenue_bound0 = 0.0;     // g + B - max_B' P1 B'
    std::vector<double> tax;
};

struct CounterfactualReport {
    std::vector<CounterfactualEpisode> episodes;
    QuantileBand tax;                // over t = 0 .. horizon-1, episodes feasible along the path
    long infeasible0 = 0;
    long infeasible_path = 0;
    long higher = 0;                 // feasible at t = 0 and counterfactual tax0 > actual tax0
    double share_higher = 0.0;       // higher / all episodes
    double share_higher_feasible = 0.0;  // higher / episodes feasible at t = 0
};

inline CounterfactualReport counterfactual_no_default(const EDSolution& sol, const EpisodePanel& panel,
                                                      std::size_t horizon = 5) {
    const NoDefaultOverlay overlay(sol, horizon);
    CounterfactualReport rep;
    std::vector<std::vector<double>> rows;
    long feasible0 = 0;
    const std::size_t h = panel.spec.half_window;
    for (std::size_t i = 0; i < panel.episodes.size(); ++i) {
        const auto& e = panel.episodes[i];
        CounterfactualEpisode c;
        c.episode = i;
        c.actual_tax0 = e.ed_tax[h];
        const auto path = overlay.follow(e.g_states, static_cast<std::size_t>(e.debt_index0));
        c.tax = path.tax;
        c.feasible0 = !path.tax.empty() && !std::isnan(path.tax.front());
        c.feasible_path = path.feasible && path.tax.size() == std::min(horizon, e.g_states.size());
        if (c.feasible0) c.counterfactual_tax0 = path.tax.front();
        const std::size_t g0 = static_cast<std::size_t>(e.g_index0);
        c.revenue_bound0 = sol.params.chain.g_values[g0] + sol.params.grid[static_cast<std::size_t>(e.debt_index0)] -
                           max_bond_revenue(sol, g0).second;
        if (c.feasible0) {
            ++feasible0;
            if (c.counterfactual_tax0 > c.actual_tax0) ++rep.higher;
        } else {
            ++rep.infeasible0;
        }
        if (c.feasible_path)
            rows.push_back(c.tax);
        else
            ++rep.infeasible_path;
        rep.episodes.push_back(std::move(c));
    }
    if (!rows.empty()) rep.tax = band(rows, rows.front().size());
    const double n = static_cast<double>(panel.episodes.size());
    rep.share_higher = n > 0 ? static_cast<double>(rep.higher) / n : 0.0;
    rep.share_higher_feasible = feasible0 ? static_cast<double>(rep.higher) / static_cast<double>(feasible0) : 0.0;
    return rep;
}

// ---------------------------------------------------------------------------
// Multiplier diagnostics

struct MartingaleTest {
    long observations = 0;
    double mean = 0.0;     // average of the forecast error
    double se = 0.0;       // across replication means
    double t_stat() const { return se > 0.0 ? mean / se : (mean == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()); }
    bool within(double k) const { return std::abs(mean) <= k * se; }
};

namespace detail {

inline MartingaleTest summarize(const std::vector<std::vector<double>>& per_rep) {
    MartingaleTest out;
    std::vector<double> all, means;
    for (const auto& v : per_rep) {
        if (v.empty()) continue;
        all.insert(all.end(), v.begin(), v.end());
        means.push_back(stats::mean(v));
    }
    out.observations = static_cast<long>(all.size());
    if (all.empty()) return out;
    out.mean = stats::mean(all);
    // replication means weighted equally would change the estimand; use the
    // pooled mean with a cluster-robust standard error instead
    double s = 0.0;
    for (const auto& v : per_rep) {
        double e = 0.0;
        for (double x : v) e += x - out.mean;
        s += e * e;
    }
    out.se = std::sqrt(s) / static_cast<double>(all.size());
    return out;
}

}  // namespace detail

/// nu_{t+1} - nu_t in the risk-free economy, over periods with positive
/// revenue and an interior debt choice at t (strictly inside both the
/// exogenous limits and the largest choice that keeps every successor
/// state feasible). Only date-t information selects
/// the sample.
inline MartingaleTest amss_multiplier_martingale(const AMSSSolution& sol, const McSpec& mc) {
    std::vector<std::vector<double>> per(static_cast<std::size_t>(mc.replications));
    const AmssSimulator sim(sol);
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count(mc.threads))
    for (int r = 0; r < mc.replications; ++r) {
        const SimPath p = sim.simulate(mc.horizon(), mc.burn_in, Rng::seed_for(mc.seed, static_cast<std::uint64_t>(r)));
        auto& out = per[static_cast<std::size_t>(r)];
        for (std::size_t t = 0; t + 1 < p.size(); ++t) {
            const auto j = static_cast<std::size_t>(p.debt_next_index[t]);
            const auto g = static_cast<std::size_t>(p.g_index[t]);
            if (j <= sol.first_admissible || j >= std::min(sol.last_admissible, sol.effective_last[g])) continue;
            if (!(p.revenue[t] > 0.0)) continue;
            out.push_back(p.multiplier[t + 1] - p.multiplier[t]);
        }
    }
    return detail::summarize(per);
}

/// Elasticity of P1(g, .) at grid point j by centered differences.
inline double price_elasticity(const EDSolution& sol, std::size_t g, std::size_t j) {
    const auto& grid = sol.params.grid;
    const std::size_t lo = j > 0 ? j - 1 : j, hi = j + 1 < sol.n_b() ? j + 1 : j;
    const double p = sol.price_repay(g, j);
    if (hi == lo || p <= 0.0) return 0.0;
    const double slope = (sol.price_repay(g, hi) - sol.price_repay(g, lo)) / (grid[hi] - grid[lo]);
    return slope * grid[j] / p;
}

/// nu_{t+1} - nu_t (1 + elasticity of P1 at B_{t+1}) on repayment periods of
/// an economy without offers. Periods with zero revenue, a corner debt
/// choice or a kink in P1 around B_{t+1} are skipped; the only date-t+1
/// selection is repayment, which the relation conditions on.
inline MartingaleTest ed_markup_law(const EDSolution& sol, const McSpec& mc, double max_abs_elasticity = 1.0) {
    std::vector<std::vector<double>> per(static_cast<std::size_t>(mc.replications));
    const EdSimulator sim(sol);
    const std::size_t nb = sol.n_b();
#pragma omp parallel for schedule(dynamic, 1) num_threads(thread_count(mc.threads))
    for (int r = 0; r < mc.replications; ++r) {
        const SimPath p = sim.simulate(mc.horizon(), mc.burn_in, Rng::seed_for(mc.seed, static_cast<std::uint64_t>(r)));
        auto& out = per[static_cast<std::size_t>(r)];
        for (std::size_t t = 0; t + 1 < p.size(); ++t) {
            if (!p.access[t] || !p.access[t + 1] || p.accepted[t] || p.defaulted[t + 1]) continue;
            const auto j = static_cast<std::size_t>(p.debt_next_index[t]);
            if (j == 0 || j + 1 >= nb) continue;
            if (!(p.revenue[t] > 0.0)) continue;
            const auto g = static_cast<std::size_t>(p.g_index[t]);
            const double eps = price_elasticity(sol, g, j);
            if (std::abs(eps) > max_abs_elasticity) continue;
            out.push_back(p.multiplier[t + 1] - p.multiplier[t] * (1.0 + eps));
        }
    }
    return detail::summarize(per);
}

}  // namespace sovdef
