// Batch front end: solve, simulate and report, all driven by one config.

#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sovdef/config.hpp"
#include "sovdef/experiments.hpp"
#include "sovdef/io.hpp"
#include "sovdef/validate.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace sovdef;

namespace {

constexpr const char* kOutEnv = "SOVDEF_OUT_DIR";

enum Exit { ok = 0, failure = 1, config_error = 2, no_convergence = 3, invalid = 4 };

struct Common {
    std::string config_path;
    std::string out;
    std::optional<std::uint64_t> seed;
    int threads = 0;
    std::vector<std::string> overrides;
    std::string ed_bundle, amss_bundle;
};

struct Run {
    RunConfig cfg;
    std::string command;
    fs::path out;
    std::uint64_t hash = 0;

    std::string provenance() const {
        return "sovdef command=" + command + " config_hash=" + hash_hex(hash) + " seed=" + std::to_string(cfg.mc.seed) +
               " format=1";
    }
    std::string path(const std::string& name) const { return (out / name).string(); }
    CsvWriter csv(const std::string& name, const std::vector<std::string>& header) const {
        return CsvWriter(path(name), provenance(), header);
    }
    void write_json(const std::string& name, json j) const {
        j["config_hash"] = hash_hex(hash);
        j["seed"] = cfg.mc.seed;
        j["command"] = command;
        std::ofstream f(path(name), std::ios::binary);
        f << j.dump(2) << "\n";
        if (!f) throw std::runtime_error("error writing " + path(name));
    }
};

Run prepare(const std::string& command, const Common& c) {
    Run run;
    run.command = command;
    if (!c.config_path.empty()) run.cfg = load_config(c.config_path);
    for (const auto& o : c.overrides) apply_override(run.cfg, o);
    if (c.seed) run.cfg.mc.seed = *c.seed;
    run.cfg.solver.threads = c.threads;
    run.cfg.mc.threads = c.threads;
    validate(run.cfg);
    if (!c.out.empty())
        run.out = c.out;
    else if (const char* env = std::getenv(kOutEnv); env && *env)
        run.out = env;
    else
        run.out = run.cfg.out_dir;
    fs::create_directories(run.out);
    run.hash = config_hash(run.cfg);
    std::ofstream(run.path("config.toml"), std::ios::binary) << to_toml(run.cfg);
    return run;
}

void log(const std::string& msg) { std::cerr << "[sovdef] " << msg << std::endl; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json convergence_json(const EDSolution& s) {
    const auto& c = s.convergence;
    json mixed = json::array();
    for (const auto& m : c.mixed)
        mixed.push_back({{"g_index", m.g}, {"b_index", m.b}, {"default_probability", m.prob}, {"gap", m.gap}});
    return {{"converged", c.converged},
            {"outer_iterations", c.outer_iterations},
            {"maximization_sweeps", c.max_sweeps},
            {"evaluation_sweeps", c.eval_sweeps},
            {"value_residual", c.value_residual},
            {"price_residuals", c.price_residuals},
            {"cycle_detected", c.cycle_detected},
            {"mixed_cells", mixed},
            {"threshold_violations", s.threshold_violations.size()},
            {"fund_raising_violations", check_no_fund_raising(s).size()}};
}

EDSolution get_ed(const Run& run, const Common& c, bool write_bundle = false) {
    if (!c.ed_bundle.empty()) {
        auto loaded = load_ed_bundle(c.ed_bundle);
        if (loaded.config_hash != run.hash) log("note: solution bundle was produced by config " + hash_hex(loaded.config_hash));
        loaded.solution.options.threads = run.cfg.solver.threads;
        return std::move(loaded.solution);
    }
    const auto t0 = std::chrono::steady_clock::now();
    EDSolution s = solve(run.cfg.params(), run.cfg.solver);
    log("solved economy with default in " + std::to_string(seconds_since(t0)) + " s, " +
        std::to_string(s.convergence.outer_iterations) + " price iterations");
    if (write_bundle) save_bundle(run.path("ed_solution.bin"), s, run.hash);
    return s;
}

AMSSSolution get_amss(const Run& run, const Common& c, bool write_bundle = false) {
    if (!c.amss_bundle.empty()) {
        auto loaded = load_amss_bundle(c.amss_bundle);
        return std::move(loaded.solution);
    }
    AMSSSolution s = solve_amss(run.cfg.params(), run.cfg.amss_limits, run.cfg.solver);
    if (write_bundle) save_bundle(run.path("amss_solution.bin"), s, run.hash);
    return s;
}

void write_ed_tables(const Run& run, const EDSolution& s) {
    const auto& grid = s.params.grid;
    const auto& gv = s.params.chain.g_values;
    auto t = run.csv("ed_tables.csv", {"table", "g_index", "g", "b_index", "B", "value"});
    auto emit = [&](const char* name, auto&& value) {
        for (std::size_t g = 0; g < s.n_g(); ++g)
            for (std::size_t b = 0; b < s.n_b(); ++b) t.row(name, g, gv[g], b, grid[b], value(g, b));
    };
    emit("v_repay", [&](std::size_t g, std::size_t b) { return s.v_repay(g, b); });
    emit("v_autarky", [&](std::size_t g, std::size_t b) { return s.v_autarky(g, b); });
    emit("price_repay", [&](std::size_t g, std::size_t b) { return s.price_repay(g, b); });
    emit("price_autarky", [&](std::size_t g, std::size_t b) { return s.price_autarky(g, b); });
    emit("policy_debt", [&](std::size_t g, std::size_t b) {
        const int j = s.policy_debt(g, b);
        return j < 0 ? std::numeric_limits<double>::quiet_NaN() : grid[static_cast<std::size_t>(j)];
    });
    emit("policy_revenue", [&](std::size_t g, std::size_t b) { return s.policy_revenue(g, b); });
    emit("default", [&](std::size_t g, std::size_t b) { return s.defaults(g, b) ? 1.0 : 0.0; });
    emit("threshold_delta", [&](std::size_t g, std::size_t b) { return s.threshold_delta(g, b); });
    t.close();

    auto a = run.csv("ed_accept.csv", {"g_index", "g", "offer_index", "delta", "b_index", "B", "accept"});
    for (std::size_t g = 0; g < s.n_g(); ++g)
        for (std::size_t k = 0; k < s.n_offers(); ++k)
            for (std::size_t b = 0; b < s.n_b(); ++b)
                a.row(g, gv[g], k, s.params.offers.deltas[k], b, grid[b], s.accepts(g, k, b) ? 1 : 0);
    a.close();

    const auto recovery = mean_recovery_rate(s);
    auto th = run.csv("ed_thresholds.csv", {"b_index", "B", "g_bar", "mean_recovery_rate"});
    for (std::size_t b = 0; b < s.n_b(); ++b) th.row(b, grid[b], s.threshold_g[b], recovery[b]);
    th.close();
}

int cmd_solve(const Common& c) {
    Run run = prepare("solve", c);
    EDSolution s = get_ed(run, c, true);
    write_ed_tables(run, s);
    run.write_json("ed_convergence.json", convergence_json(s));
    return ok;
}

int cmd_solve_amss(const Common& c) {
    Run run = prepare("solve-amss", c);
    AMSSSolution s = get_amss(run, c, true);
    const auto& grid = s.params.grid;
    const auto& gv = s.params.chain.g_values;
    auto t = run.csv("amss_tables.csv", {"table", "g_index", "g", "b_index", "B", "value"});
    for (std::size_t g = 0; g < s.n_g(); ++g)
        for (std::size_t b = 0; b < s.n_b(); ++b) t.row("value", g, gv[g], b, grid[b], s.value(g, b));
    for (std::size_t g = 0; g < s.n_g(); ++g)
        for (std::size_t b = 0; b < s.n_b(); ++b) {
            const int j = s.policy_debt(g, b);
            t.row("policy_debt", g, gv[g], b, grid[b], j < 0 ? std::numeric_limits<double>::quiet_NaN() : grid[static_cast<std::size_t>(j)]);
        }
    for (std::size_t g = 0; g < s.n_g(); ++g)
        for (std::size_t b = 0; b < s.n_b(); ++b) t.row("policy_revenue", g, gv[g], b, grid[b], s.policy_revenue(g, b));
    t.close();
    std::vector<double> eff;
    for (auto j : s.effective_last) eff.push_back(grid[j]);
    run.write_json("amss_convergence.json", {{"sweeps", s.sweeps},
                                             {"residual", s.residual},
                                             {"infeasible_states", s.infeasible_states},
                                             {"b_min", s.limits.b_min},
                                             {"b_max", s.limits.b_max},
                                             {"effective_upper_limit", eff}});
    return ok;
}

void write_path_rows(CsvWriter& w, const char* economy, int rep, const SimPath& p) {
    for (std::size_t t = 0; t < p.size(); ++t)
        w.row(economy, rep, t, p.g_index[t], p.g[t], static_cast<int>(p.access_prev[t]), static_cast<int>(p.access[t]),
              p.debt[t], p.debt_next[t], p.delta[t], static_cast<int>(p.defaulted[t]), static_cast<int>(p.accepted[t]),
              p.revenue[t], p.tax[t], p.labor[t], p.output[t], p.price[t], p.spread[t], p.transfer[t], p.multiplier[t],
              p.snap_error[t]);
}

int cmd_simulate(const Common& c) {
    Run run = prepare("simulate", c);
    const EDSolution ed = get_ed(run, c);
    const AMSSSolution amss = get_amss(run, c);
    const EdSimulator esim(ed);
    const AmssSimulator asim(amss);
    auto w = run.csv("sim_paths.csv", {"economy", "replication", "t", "g_index", "g", "access_prev", "access", "debt",
                                       "debt_next", "delta", "default", "accept", "revenue", "tax", "labor", "output",
                                       "price", "spread", "transfer", "multiplier", "snap_error"});
    long violations = 0;
    for (int r = 0; r < run.cfg.paths_to_write; ++r) {
        const auto seed = Rng::seed_for(run.cfg.mc.seed, static_cast<std::uint64_t>(r));
        const SimPath p = esim.simulate(run.cfg.mc.horizon(), run.cfg.mc.burn_in, seed);
        violations += static_cast<long>(validate_implementability(p, ed).violations.size());
        write_path_rows(w, "ed", r, p);
        write_path_rows(w, "amss", r, asim.simulate(run.cfg.mc.horizon(), run.cfg.mc.burn_in, seed));
    }
    w.close();
    run.write_json("sim_summary.json", {{"paths", run.cfg.paths_to_write}, {"implementability_violations", violations}});
    return violations == 0 ? ok : invalid;
}

int cmd_moments(const Common& c) {
    Run run = prepare("moments", c);
    const EDSolution ed = get_ed(run, c);
    const AMSSSolution amss = get_amss(run, c);
    const auto& cfg = run.cfg;
    const MomentReport m = mc_moments(ed, amss, cfg.mc, static_cast<std::size_t>(cfg.histogram_bins), cfg.histogram_max,
                                      cfg.spread_cap);
    auto s = run.csv("moments.csv", {"metric", "value"});
    s.row("replications", cfg.mc.replications);
    s.row("periods", m.periods);
    s.row("defaults", m.defaults);
    s.row("default_frequency", m.default_frequency);
    s.row("default_frequency_access", m.default_frequency_access);
    s.row("median_debt_output", m.median_debt_output);
    s.row("ed_tax_sd", m.ed_tax_sd);
    s.row("amss_tax_sd", m.amss_tax_sd);
    s.row("tax_sd_ratio", m.tax_sd_ratio);
    s.row("tax_sd_low_debt", m.mean_tax_sd_low);
    s.row("tax_sd_high_debt", m.mean_tax_sd_high);
    s.row("spread_low_debt", m.mean_spread_low);
    s.row("spread_high_debt", m.mean_spread_high);
    s.row("spread_cap", m.spread_cap);
    s.row("dropped_high_spread", m.dropped_high_spread);
    s.close();

    auto h = run.csv("histograms.csv", {"economy", "g_index", "g", "bin", "bin_lo", "bin_hi", "count", "mass", "total",
                                        "outside", "bandwidth"});
    const auto& gv = ed.params.chain.g_values;
    auto emit = [&](const char* economy, const std::vector<Histogram>& hs) {
        for (std::size_t g = 0; g < hs.size(); ++g) {
            const auto& x = hs[g];
            for (std::size_t i = 0; i < x.counts.size(); ++i)
                h.row(economy, g, gv[g], i, x.lo + x.width() * static_cast<double>(i),
                      x.lo + x.width() * static_cast<double>(i + 1), x.counts[i], x.mass(i), x.total, x.outside, x.bandwidth);
        }
    };
    emit("ed", m.ed_debt_output);
    emit("amss", m.amss_debt_output);
    h.close();

    auto sc = run.csv("scatter.csv", {"replication", "debt_class", "tax_sd", "mean_spread", "observations"});
    for (std::size_t r = 0; r < m.replications.size(); ++r) {
        const auto& x = m.replications[r];
        if (x.n_low > 1) sc.row(r, "low", x.tax_sd_low, x.spread_low, x.n_low);
        if (x.n_high > 1) sc.row(r, "high", x.tax_sd_high, x.spread_high, x.n_high);
    }
    sc.close();
    return ok;
}

int cmd_irf(const Common& c) {
    Run run = prepare("irf", c);
    const EDSolution ed = get_ed(run, c);
    const AMSSSolution amss = get_amss(run, c);
    const ImpulseResponse ir = impulse_response(ed, amss, run.cfg.irf_path);
    auto w = run.csv("irf.csv", {"economy", "t", "g", "debt", "surplus", "tax", "multiplier", "access"});
    auto emit = [&](const char* economy, const ImpulsePanel& p) {
        for (std::size_t t = 0; t < p.g.size(); ++t)
            w.row(economy, t + 1, p.g[t], p.debt[t], p.surplus[t], p.tax[t], p.multiplier[t], static_cast<int>(p.access[t]));
    };
    emit("ed", ir.ed);
    emit("amss", ir.amss);
    w.close();
    return ok;
}

int cmd_episodes(const Common& c) {
    Run run = prepare("episodes", c);
    const EDSolution ed = get_ed(run, c);
    const AMSSSolution amss = get_amss(run, c);
    const EpisodePanel panel = episode_windows(ed, amss, run.cfg.mc, run.cfg.episodes);
    const CounterfactualReport cf =
        counterfactual_no_default(ed, panel, static_cast<std::size_t>(run.cfg.counterfactual_horizon));

    auto e = run.csv("episodes.csv", {"episode", "replication", "t0", "offset", "g", "ed_tax", "amss_tax"});
    for (std::size_t i = 0; i < panel.episodes.size(); ++i) {
        const auto& x = panel.episodes[i];
        for (std::size_t k = 0; k < panel.offsets.size(); ++k)
            e.row(i, x.replication, x.t0, panel.offsets[k], x.g[k], x.ed_tax[k], x.amss_tax[k]);
    }
    e.close();

    auto b = run.csv("episode_bands.csv", {"series", "offset", "q25", "q50", "q75", "episodes"});
    auto emit = [&](const char* name, const QuantileBand& q, const std::vector<int>& offsets, std::size_t n) {
        for (std::size_t k = 0; k < q.q50.size(); ++k) b.row(name, offsets[k], q.q25[k], q.q50[k], q.q75[k], n);
    };
    emit("g", panel.g, panel.offsets, panel.count());
    emit("ed_tax", panel.ed_tax, panel.offsets, panel.count());
    emit("amss_tax", panel.amss_tax, panel.offsets, panel.count());
    std::vector<int> cf_offsets;
    for (std::size_t k = 0; k < cf.tax.q50.size(); ++k) cf_offsets.push_back(static_cast<int>(k));
    emit("counterfactual_tax", cf.tax, cf_offsets, panel.count() - static_cast<std::size_t>(cf.infeasible_path));
    b.close();

    auto w = run.csv("counterfactual.csv", {"episode", "feasible0", "feasible_path", "actual_tax0", "counterfactual_tax0",
                                            "revenue_bound0"});
    for (const auto& x : cf.episodes)
        w.row(x.episode, x.feasible0 ? 1 : 0, x.feasible_path ? 1 : 0, x.actual_tax0, x.counterfactual_tax0, x.revenue_bound0);
    w.close();

    run.write_json("episodes_summary.json", {{"episodes", panel.count()},
                                             {"requested", run.cfg.episodes.max_episodes},
                                             {"counterfactual_infeasible_at_0", cf.infeasible0},
                                             {"counterfactual_infeasible_on_path", cf.infeasible_path},
                                             {"counterfactual_higher_at_0", cf.higher},
                                             {"share_higher", cf.share_higher},
                                             {"share_higher_among_feasible", cf.share_higher_feasible}});
    if (panel.count() < run.cfg.episodes.max_episodes)
        log("found " + std::to_string(panel.count()) + " qualifying episodes (requested " +
            std::to_string(run.cfg.episodes.max_episodes) + ")");
    return ok;
}

int cmd_reneg(const Common& c) {
    Run run = prepare("reneg-table", c);
    const auto rows = renegotiation_table(run.cfg.params(), run.cfg.reneg_lambdas, run.cfg.mc, run.cfg.solver);
    auto w = run.csv("reneg_table.csv", {"lambda", "avg_accepted_delta", "duration_high", "duration_low",
                                         "default_frequency", "median_debt_output", "spells", "spells_high", "spells_low",
                                         "threshold_violations", "mixed_cells"});
    for (const auto& r : rows)
        w.row(r.lambda, r.avg_accepted_delta, r.duration_high, r.duration_low, r.default_frequency, r.median_debt_output,
              r.spells, r.spells_high, r.spells_low, r.threshold_violations, r.mixed_cells);
    w.close();
    return ok;
}

int cmd_validate(const Common& c) {
    Run run = prepare("validate", c);
    if (c.ed_bundle.empty() && c.amss_bundle.empty())
        throw ConfigError("--solution", 0, "validate needs --solution and/or --amss-solution");
    json checks = json::array();
    bool all_ok = true;
    auto w = run.csv("validation.csv", {"solution", "check", "value", "tolerance", "ok", "informational"});
    auto record = [&](const char* which, const ValidationReport& rep) {
        for (const auto& ch : rep.checks) {
            w.row(which, ch.name, ch.value, ch.tolerance, ch.ok ? 1 : 0, ch.informational ? 1 : 0);
            checks.push_back({{"solution", which}, {"check", ch.name}, {"value", ch.value}, {"tolerance", ch.tolerance},
                              {"ok", ch.ok}, {"informational", ch.informational}});
        }
        all_ok = all_ok && rep.ok();
    };
    if (!c.ed_bundle.empty()) {
        auto loaded = load_ed_bundle(c.ed_bundle);
        loaded.solution.options.threads = run.cfg.solver.threads;
        ValidateSpec spec;
        spec.seed = run.cfg.mc.seed;
        record("ed", validate_solution(loaded.solution, spec));
    }
    if (!c.amss_bundle.empty()) record("amss", validate_solution(load_amss_bundle(c.amss_bundle).solution));
    w.close();
    run.write_json("validation.json", {{"ok", all_ok}, {"checks", checks}});
    log(all_ok ? "all invariants hold" : "invariant violations found, see validation.csv");
    return all_ok ? ok : invalid;
}

void error_report(const std::string& kind, const std::string& message, const std::string& field = "", long line = 0) {
    json j{{"status", "error"}, {"kind", kind}, {"message", message}};
    if (!field.empty()) j["field"] = field;
    if (line > 0) j["line"] = line;
    std::cerr << j.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimal taxation with endogenous default: solver and experiments"};
    app.require_subcommand(1);
    Common common;

    struct Sub {
        const char* name;
        const char* help;
        int (*fn)(const Common&);
    };
    const std::vector<Sub> subs{
        {"solve", "solve the economy with default; writes a bundle, tables and a convergence log", cmd_solve},
        {"solve-amss", "solve the risk-free benchmark", cmd_solve_amss},
        {"simulate", "write simulated paths of both economies", cmd_simulate},
        {"moments", "Monte Carlo moments, debt/output histograms and the tax/spread scatter", cmd_moments},
        {"irf", "responses to a deterministic spending path", cmd_irf},
        {"episodes", "default episode windows and the no-default counterfactual", cmd_episodes},
        {"reneg-table", "renegotiation statistics across offer arrival rates", cmd_reneg},
        {"validate", "replay stored solutions through the invariant suite", cmd_validate},
    };
    int (*chosen)(const Common&) = nullptr;
    for (const auto& s : subs) {
        auto* sc = app.add_subcommand(s.name, s.help);
        sc->add_option("--config,-c", common.config_path, "TOML run configuration")->check(CLI::ExistingFile);
        sc->add_option("--out,-o", common.out, std::string("output directory (default: $") + kOutEnv + " or output.dir)");
        sc->add_option("--seed", common.seed, "master seed for Monte Carlo streams");
        sc->add_option("--threads", common.threads, "worker threads (0: runtime default)");
        sc->add_option("--solution", common.ed_bundle, "economy-with-default bundle to reuse")->check(CLI::ExistingFile);
        sc->add_option("--amss-solution", common.amss_bundle, "risk-free bundle to reuse")->check(CLI::ExistingFile);
        sc->add_option("overrides", common.overrides, "KEY=VALUE config overrides");
        sc->callback([&chosen, fn = s.fn] { chosen = fn; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }
    try {
        return chosen(common);
    } catch (const ConfigError& e) {
        error_report("config", e.what(), e.field(), e.line());
        return config_error;
    } catch (const NonConvergence& e) {
        error_report("non_convergence", e.what());
        return no_convergence;
    } catch (const BundleError& e) {
        error_report("bundle", e.what());
        return failure;
    } catch (const std::exception& e) {
        error_report("runtime", e.what());
        return failure;
    }
}
