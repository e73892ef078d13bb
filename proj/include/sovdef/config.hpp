#pragma once

// Run configuration: one TOML file plus KEY=VALUE overrides fully
// determine a run. Unknown keys are errors.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#define TOML_EXCEPTIONS 1
#include "tomlplusplus/toml.hpp"

#include "sovdef/experiments.hpp"
#include "sovdef/params.hpp"
#include "sovdef/solver_amss.hpp"

namespace sovdef {

class ConfigError : public std::runtime_error {
public:
    ConfigError(const std::string& field, long line, const std::string& what)
        : std::runtime_error(format(field, line, what)), field_(field), line_(line) {}
    const std::string& field() const { return field_; }
    long line() const { return line_; }

private:
    static std::string format(const std::string& field, long line, const std::string& what) {
        std::string s;
        if (line > 0) s += "line " + std::to_string(line) + ": ";
        if (!field.empty()) s += field + ": ";
        return s + what;
    }
    std::string field_;
    long line_;
};

struct RunConfig {
    ModelSpec model;
    SolverOptions solver;
    DebtLimits amss_limits;
    McSpec mc;
    EpisodeSpec episodes;
    std::vector<double> reneg_lambdas{0.2, 0.4, 0.6, 0.8, 1.0};
    std::vector<double> irf_path = paper_spending_path();
    double spread_cap = 0.5;
    int histogram_bins = 60;
    double histogram_max = 0.6;
    int counterfactual_horizon = 5;
    int paths_to_write = 1;     // replications dumped by `simulate`
    std::string out_dir = "out";

    EconomyParams params() const { return model.build(); }
};

namespace detail {

inline std::string fmt17(double x) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    std::string s(buf);
    // keep it a TOML float
    if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
    return s;
}

/// One config key: how to read it from a TOML node and how to print it.
struct Field {
    std::function<void(const toml::node&)> set;
    std::function<std::string()> get;
};

inline double as_double(const toml::node& n) {
    if (auto v = n.value<double>()) return *v;
    throw std::invalid_argument("expected a number");
}

inline long long as_int(const toml::node& n) {
    if (n.is_integer()) return *n.value<long long>();
    throw std::invalid_argument("expected an integer");
}

inline bool as_bool(const toml::node& n) {
    if (n.is_boolean()) return *n.value<bool>();
    throw std::invalid_argument("expected true or false");
}

inline std::string as_string(const toml::node& n) {
    if (n.is_string()) return *n.value<std::string>();
    throw std::invalid_argument("expected a string");
}

inline std::vector<double> as_doubles(const toml::node& n) {
    const auto* arr = n.as_array();
    if (!arr) throw std::invalid_argument("expected an array of numbers");
    std::vector<double> out;
    for (const auto& x : *arr) out.push_back(as_double(x));
    return out;
}

inline std::map<std::string, Field> fields(RunConfig& c) {
    std::map<std::string, Field> f;
    auto dbl = [&f](const std::string& key, double& x) {
        f[key] = {[&x](const toml::node& n) { x = as_double(n); }, [&x] { return fmt17(x); }};
    };
    auto integer = [&f](const std::string& key, auto& x) {
        using T = std::remove_reference_t<decltype(x)>;
        f[key] = {[&x](const toml::node& n) {
                      const long long v = as_int(n);
                      if constexpr (std::is_unsigned_v<T>)
                          if (v < 0) throw std::invalid_argument("must be non-negative");
                      x = static_cast<T>(v);
                  },
                  [&x] { return std::to_string(x); }};
    };
    auto boolean = [&f](const std::string& key, bool& x) {
        f[key] = {[&x](const toml::node& n) { x = as_bool(n); }, [&x] { return std::string(x ? "true" : "false"); }};
    };
    auto list = [&f](const std::string& key, std::vector<double>& x) {
        f[key] = {[&x](const toml::node& n) { x = as_doubles(n); },
                  [&x] {
                      std::string s = "[";
                      for (std::size_t i = 0; i < x.size(); ++i) s += (i ? ", " : "") + fmt17(x[i]);
                      return s + "]";
                  }};
    };

    dbl("preferences.c1", c.model.prefs.c1);
    dbl("preferences.sigma", c.model.prefs.sigma);
    dbl("preferences.beta", c.model.prefs.beta);
    dbl("preferences.kappa", c.model.prefs.kappa);

    dbl("shocks.mu", c.model.shocks.mu);
    dbl("shocks.rho", c.model.shocks.rho);
    dbl("shocks.sigma_eps", c.model.shocks.sigma_eps);
    integer("shocks.states", c.model.shocks.n_states);
    dbl("shocks.span", c.model.shocks.span);
    dbl("shocks.half_width", c.model.shocks.half_width);
    auto& scale = c.model.shocks.scale;
    f["shocks.scale"] = {[&scale](const toml::node& n) {
                             const std::string s = as_string(n);
                             if (s == "level")
                                 scale = ShockScale::level;
                             else if (s == "log")
                                 scale = ShockScale::log;
                             else
                                 throw std::invalid_argument("must be \"level\" or \"log\"");
                         },
                         [&scale] { return std::string(scale == ShockScale::level ? "\"level\"" : "\"log\""); }};

    dbl("offers.lambda", c.model.offers.lambda);
    dbl("offers.delta_min", c.model.offers.delta_min);
    dbl("offers.delta_max", c.model.offers.delta_max);
    integer("offers.count", c.model.offers.count);

    dbl("grid.b_min", c.model.grid.b_min);
    dbl("grid.b_max", c.model.grid.b_max);
    integer("grid.points", c.model.grid.points);

    dbl("amss.b_min", c.amss_limits.b_min);
    dbl("amss.b_max", c.amss_limits.b_max);

    dbl("solver.value_tol", c.solver.value_tol);
    dbl("solver.price_tol", c.solver.price_tol);
    dbl("solver.damping", c.solver.damping);
    integer("solver.max_outer", c.solver.max_outer);
    integer("solver.max_inner", c.solver.max_inner);
    integer("solver.howard_steps", c.solver.howard_steps);
    dbl("solver.p0_tol", c.solver.p0_tol);
    boolean("solver.allow_default", c.solver.allow_default);
    boolean("solver.monotone_search", c.solver.monotone_search);
    boolean("solver.mix_cycles", c.solver.mix_cycles);

    integer("monte_carlo.replications", c.mc.replications);
    integer("monte_carlo.periods", c.mc.periods);
    integer("monte_carlo.burn_in", c.mc.burn_in);
    integer("monte_carlo.seed", c.mc.seed);

    integer("episodes.access_before", c.episodes.access_before);
    integer("episodes.exclusion_after", c.episodes.exclusion_after);
    integer("episodes.half_window", c.episodes.half_window);
    integer("episodes.max_episodes", c.episodes.max_episodes);
    integer("episodes.counterfactual_horizon", c.counterfactual_horizon);

    list("experiments.reneg_lambdas", c.reneg_lambdas);
    list("experiments.irf_path", c.irf_path);
    dbl("experiments.spread_cap", c.spread_cap);
    integer("experiments.histogram_bins", c.histogram_bins);
    dbl("experiments.histogram_max", c.histogram_max);
    integer("experiments.paths_to_write", c.paths_to_write);

    auto& dir = c.out_dir;
    f["output.dir"] = {[&dir](const toml::node& n) { dir = as_string(n); },
                       [&dir] { return "\"" + dir + "\""; }};
    return f;
}

inline long line_of(const toml::node& n) { return static_cast<long>(n.source().begin.line); }

inline void apply(RunConfig& c, const toml::table& tbl) {
    auto f = fields(c);
    for (const auto& [section, node] : tbl) {
        const std::string sec(section.str());
        const auto* sub = node.as_table();
        if (!sub) throw ConfigError(sec, line_of(node), "expected a [section]");
        for (const auto& [key, value] : *sub) {
            const std::string name = sec + "." + std::string(key.str());
            const auto it = f.find(name);
            if (it == f.end()) throw ConfigError(name, line_of(value), "unknown key");
            try {
                it->second.set(value);
            } catch (const std::invalid_argument& e) {
                throw ConfigError(name, line_of(value), e.what());
            }
        }
    }
}

}  // namespace detail

/// Range checks; throws ConfigError naming the offending field.
inline void validate(const RunConfig& c) {
    auto fail = [](const std::string& field, const std::string& what) { throw ConfigError(field, 0, what); };
    const auto& p = c.model.prefs;
    if (!(p.beta > 0.0 && p.beta < 1.0)) fail("preferences.beta", "must lie in (0, 1)");
    if (!(p.kappa > 0.0 && p.kappa <= 1.0)) fail("preferences.kappa", "must lie in (0, 1]");
    if (!(p.c1 > 0.0 && p.c1 < 1.0 && p.c1 < p.kappa)) fail("preferences.c1", "need 0 < c1 < min(1, kappa)");
    if (!(p.sigma > 0.0) || std::abs(p.sigma - 1.0) < 1e-12) fail("preferences.sigma", "must be positive and != 1");
    try {
        c.model.prefs.validate();
    } catch (const std::invalid_argument& e) {
        fail("preferences", e.what());
    }
    const auto& s = c.model.shocks;
    if (!(std::abs(s.rho) < 1.0)) fail("shocks.rho", "must lie in (-1, 1)");
    if (!(s.sigma_eps > 0.0)) fail("shocks.sigma_eps", "must be positive");
    if (s.n_states < 2) fail("shocks.states", "need at least 2");
    if (!(s.span > 0.0)) fail("shocks.span", "must be positive");
    if (s.half_width < 0.0) fail("shocks.half_width", "must be non-negative (0 disables it)");
    const auto& o = c.model.offers;
    if (!(o.lambda >= 0.0 && o.lambda <= 1.0)) fail("offers.lambda", "must lie in [0, 1]");
    if (o.count < 1) fail("offers.count", "need at least 1");
    if (!(o.delta_min >= 0.0 && o.delta_max < 1.0 && o.delta_min <= o.delta_max))
        fail("offers.delta_min", "need 0 <= delta_min <= delta_max < 1");
    if (o.count > 1 && !(o.delta_max > o.delta_min)) fail("offers.delta_max", "must exceed delta_min");
    const auto& g = c.model.grid;
    if (g.points < 1) fail("grid.points", "need at least 1");
    if (!(g.b_min <= 0.0 && g.b_max >= 0.0 && g.b_max > g.b_min)) fail("grid.b_max", "need b_min <= 0 <= b_max, b_min < b_max");
    if (!(c.amss_limits.b_max >= c.amss_limits.b_min)) fail("amss.b_max", "must be >= amss.b_min");
    const auto& v = c.solver;
    if (!(v.value_tol > 0.0)) fail("solver.value_tol", "must be positive");
    if (!(v.price_tol > 0.0)) fail("solver.price_tol", "must be positive");
    if (!(v.p0_tol > 0.0)) fail("solver.p0_tol", "must be positive");
    if (!(v.damping > 0.0 && v.damping <= 1.0)) fail("solver.damping", "must lie in (0, 1]");
    if (v.max_outer < 1) fail("solver.max_outer", "must be positive");
    if (v.max_inner < 1) fail("solver.max_inner", "must be positive");
    if (v.howard_steps < 0) fail("solver.howard_steps", "must be non-negative");
    if (c.mc.replications < 1) fail("monte_carlo.replications", "must be positive");
    if (c.mc.periods < 1) fail("monte_carlo.periods", "must be positive");
    if (c.episodes.half_window < 1) fail("episodes.half_window", "must be positive");
    if (c.counterfactual_horizon < 1) fail("episodes.counterfactual_horizon", "must be positive");
    for (double l : c.reneg_lambdas)
        if (!(l >= 0.0 && l <= 1.0)) fail("experiments.reneg_lambdas", "entries must lie in [0, 1]");
    if (c.irf_path.empty()) fail("experiments.irf_path", "must not be empty");
    if (!(c.spread_cap > 0.0)) fail("experiments.spread_cap", "must be positive");
    if (c.histogram_bins < 1) fail("experiments.histogram_bins", "must be positive");
    if (!(c.histogram_max > 0.0)) fail("experiments.histogram_max", "must be positive");
    if (c.paths_to_write < 0) fail("experiments.paths_to_write", "must be non-negative");
    try {
        (void)c.model.build();
    } catch (const std::invalid_argument& e) {
        fail("model", e.what());
    }
}

/// KEY=VALUE with VALUE in TOML syntax, e.g. offers.lambda=0.8 or
/// experiments.reneg_lambdas=[0.2,0.4].
inline void apply_override(RunConfig& c, std::string_view assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos || eq == 0) throw ConfigError(std::string(assignment), 0, "override must be KEY=VALUE");
    const std::string key(assignment.substr(0, eq));
    const std::string value(assignment.substr(eq + 1));
    auto f = detail::fields(c);
    const auto it = f.find(key);
    if (it == f.end()) throw ConfigError(key, 0, "unknown key");
    toml::table t;
    try {
        t = toml::parse("v = " + value);
    } catch (const toml::parse_error& e) {
        // bare words are taken as strings
        t = toml::table{};
        t.insert("v", value);
    }
    try {
        it->second.set(*t.get("v"));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(key, 0, e.what());
    }
}

inline RunConfig parse_config(std::string_view text, std::string_view source = "config") {
    RunConfig c;
    toml::table tbl;
    try {
        tbl = toml::parse(text, source);
    } catch (const toml::parse_error& e) {
        throw ConfigError("", static_cast<long>(e.source().begin.line), std::string(e.description()));
    }
    detail::apply(c, tbl);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    RunConfig c;
    toml::table tbl;
    try {
        tbl = toml::parse_file(path);
    } catch (const toml::parse_error& e) {
        throw ConfigError("", static_cast<long>(e.source().begin.line), std::string(e.description()));
    }
    detail::apply(c, tbl);
    return c;
}

/// Every key in a fixed order; parsing this text gives back the same config.
inline std::string to_toml(const RunConfig& c) {
    RunConfig copy = c;
    const auto f = detail::fields(copy);
    std::ostringstream out;
    std::string section;
    for (const auto& [name, field] : f) {
        const auto dot = name.find('.');
        const std::string sec = name.substr(0, dot);
        if (sec != section) {
            if (!section.empty()) out << "\n";
            out << "[" << sec << "]\n";
            section = sec;
        }
        out << name.substr(dot + 1) << " = " << field.get() << "\n";
    }
    return out.str();
}

/// FNV-1a over the canonical text; the output directory is left out so
/// moving outputs does not change the hash.
inline std::uint64_t config_hash(const RunConfig& c) {
    RunConfig copy = c;
    copy.out_dir.clear();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : to_toml(copy)) h = (h ^ ch) * 1099511628211ull;
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace sovdef
