#pragma once

// CSV emission and the binary solution bundle.

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

#include "sovdef/solver_amss.hpp"
#include "sovdef/solver_ed.hpp"

namespace sovdef {

// ---------------------------------------------------------------------------
// CSV

/// A comment line with the provenance, one header row, then rows. Floats
/// are printed with 17 significant digits so they read back exactly.
class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& provenance, const std::vector<std::string>& header)
        : out_(path, std::ios::binary), path_(path), columns_(header.size()) {
        if (!out_) throw std::runtime_error("cannot open " + path + " for writing");
        if (!provenance.empty()) out_ << "# " << provenance << "\n";
        for (std::size_t i = 0; i < header.size(); ++i) out_ << (i ? "," : "") << header[i];
        out_ << "\n";
    }

    template <class... Ts>
    void row(const Ts&... cells) {
        if (sizeof...(cells) != columns_) throw std::logic_error(path_ + ": row width does not match the header");
        std::size_t i = 0;
        ((out_ << (i++ ? "," : "") << cell(cells)), ...);
        out_ << "\n";
    }

    void close() {
        out_.close();
        if (!out_) throw std::runtime_error("error writing " + path_);
    }

    static std::string cell(double x) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", x);
        return buf;
    }
    static std::string cell(const std::string& s) { return s; }
    static std::string cell(const char* s) { return s; }
    template <class T>
    static std::enable_if_t<std::is_integral_v<T>, std::string> cell(T x) {
        return std::to_string(x);
    }

private:
    std::ofstream out_;
    std::string path_;
    std::size_t columns_;
};

// ---------------------------------------------------------------------------
// Binary bundle: magic, format version, kind, config hash, then the fields
// in declaration order. Little-endian hosts only.

inline constexpr char kBundleMagic[8] = {'S', 'O', 'V', 'D', 'E', 'F', 'B', 'N'};
inline constexpr std::uint32_t kBundleVersion = 1;

enum class BundleKind : std::uint32_t { ed = 1, amss = 2 };

class BundleError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

class BinOut {
public:
    explicit BinOut(const std::string& path) : out_(path, std::ios::binary), path_(path) {
        static_assert(std::endian::native == std::endian::little, "bundle format is little-endian");
        if (!out_) throw BundleError("cannot open " + path + " for writing");
    }
    template <class T>
    void pod(const T& x) {
        static_assert(std::is_trivially_copyable_v<T>);
        out_.write(reinterpret_cast<const char*>(&x), sizeof(T));
    }
    template <class T>
    void vec(const std::vector<T>& v) {
        pod(static_cast<std::uint64_t>(v.size()));
        if (!v.empty()) out_.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(T)));
    }
    template <class T>
    void table(const Table<T>& t) {
        pod(static_cast<std::uint64_t>(t.rows));
        pod(static_cast<std::uint64_t>(t.cols));
        vec(t.data);
    }
    void close() {
        out_.close();
        if (!out_) throw BundleError("error writing " + path_);
    }

private:
    std::ofstream out_;
    std::string path_;
};

class BinIn {
public:
    explicit BinIn(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw BundleError("cannot open " + path);
    }
    template <class T>
    T pod() {
        T x{};
        in_.read(reinterpret_cast<char*>(&x), sizeof(T));
        if (!in_) throw BundleError(path_ + ": truncated bundle");
        return x;
    }
    template <class T>
    std::vector<T> vec() {
        const auto n = pod<std::uint64_t>();
        if (n > (std::uint64_t{1} << 32)) throw BundleError(path_ + ": implausible array length");
        std::vector<T> v(static_cast<std::size_t>(n));
        if (n) in_.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(T)));
        if (!in_) throw BundleError(path_ + ": truncated bundle");
        return v;
    }
    template <class T>
    Table<T> table() {
        Table<T> t;
        t.rows = static_cast<std::size_t>(pod<std::uint64_t>());
        t.cols = static_cast<std::size_t>(pod<std::uint64_t>());
        t.data = vec<T>();
        if (t.data.size() != t.rows * t.cols) throw BundleError(path_ + ": table shape mismatch");
        return t;
    }
    void expect_end() {
        in_.peek();
        if (!in_.eof()) throw BundleError(path_ + ": trailing bytes after bundle");
    }

private:
    std::ifstream in_;
    std::string path_;
};

inline void write_header(BinOut& o, BundleKind kind, std::uint64_t config_hash) {
    for (char c : kBundleMagic) o.pod(c);
    o.pod(kBundleVersion);
    o.pod(static_cast<std::uint32_t>(kind));
    o.pod(config_hash);
}

inline std::uint64_t read_header(BinIn& in, BundleKind kind) {
    for (char c : kBundleMagic)
        if (in.pod<char>() != c) throw BundleError("not a solution bundle");
    const auto version = in.pod<std::uint32_t>();
    if (version != kBundleVersion) throw BundleError("unsupported bundle version " + std::to_string(version));
    const auto k = in.pod<std::uint32_t>();
    if (k != static_cast<std::uint32_t>(kind)) throw BundleError("bundle holds a different solution kind");
    return in.pod<std::uint64_t>();
}

inline void write_params(BinOut& o, const EconomyParams& p) {
    o.pod(p.prefs.c1);
    o.pod(p.prefs.sigma);
    o.pod(p.prefs.beta);
    o.pod(p.prefs.kappa);
    o.vec(p.chain.g_values);
    o.vec(p.chain.transition.data);
    o.pod(p.offers.lambda);
    o.vec(p.offers.deltas);
    o.vec(p.offers.probs);
    o.vec(p.grid.b_values);
}

inline EconomyParams read_params(BinIn& in) {
    EconomyParams p;
    p.prefs.c1 = in.pod<double>();
    p.prefs.sigma = in.pod<double>();
    p.prefs.beta = in.pod<double>();
    p.prefs.kappa = in.pod<double>();
    auto g = in.vec<double>();
    Matrix m(g.size());
    m.data = in.vec<double>();
    if (m.data.size() != g.size() * g.size()) throw BundleError("transition matrix shape mismatch");
    p.chain = make_chain(std::move(g), std::move(m));
    p.offers.lambda = in.pod<double>();
    p.offers.deltas = in.vec<double>();
    p.offers.probs = in.vec<double>();
    p.grid.b_values = in.vec<double>();
    try {
        p.validate();
    } catch (const std::invalid_argument& e) {
        throw BundleError(std::string("bundle parameters invalid: ") + e.what());
    }
    return p;
}

inline void write_options(BinOut& o, const SolverOptions& s) {
    o.pod(s.value_tol);
    o.pod(s.price_tol);
    o.pod(s.damping);
    o.pod(static_cast<std::int64_t>(s.max_outer));
    o.pod(static_cast<std::int64_t>(s.max_inner));
    o.pod(static_cast<std::int64_t>(s.howard_steps));
    o.pod(s.p0_tol);
    o.pod(static_cast<std::uint8_t>(s.allow_default));
    o.pod(static_cast<std::uint8_t>(s.monotone_search));
    o.pod(static_cast<std::uint8_t>(s.mix_cycles));
}

inline SolverOptions read_options(BinIn& in) {
    SolverOptions s;
    s.value_tol = in.pod<double>();
    s.price_tol = in.pod<double>();
    s.damping = in.pod<double>();
    s.max_outer = static_cast<int>(in.pod<std::int64_t>());
    s.max_inner = static_cast<int>(in.pod<std::int64_t>());
    s.howard_steps = static_cast<int>(in.pod<std::int64_t>());
    s.p0_tol = in.pod<double>();
    s.allow_default = in.pod<std::uint8_t>() != 0;
    s.monotone_search = in.pod<std::uint8_t>() != 0;
    s.mix_cycles = in.pod<std::uint8_t>() != 0;
    return s;
}

}  // namespace detail

inline void save_bundle(const std::string& path, const EDSolution& sol, std::uint64_t config_hash) {
    detail::BinOut o(path);
    detail::write_header(o, BundleKind::ed, config_hash);
    detail::write_params(o, sol.params);
    detail::write_options(o, sol.options);
    o.table(sol.v_repay);
    o.table(sol.v_autarky);
    o.table(sol.price_repay);
    o.table(sol.price_autarky);
    o.table(sol.policy_debt);
    o.table(sol.policy_revenue);
    o.table(sol.default_flag);
    o.table(sol.accept);
    const auto& c = sol.convergence;
    o.pod(static_cast<std::int64_t>(c.outer_iterations));
    o.pod(static_cast<std::int64_t>(c.max_sweeps));
    o.pod(static_cast<std::int64_t>(c.eval_sweeps));
    o.vec(c.price_residuals);
    o.pod(c.value_residual);
    o.pod(static_cast<std::uint8_t>(c.converged));
    o.pod(static_cast<std::uint8_t>(c.cycle_detected));
    o.pod(static_cast<std::uint64_t>(c.mixed.size()));
    for (const auto& m : c.mixed) {
        o.pod(static_cast<std::uint64_t>(m.g));
        o.pod(static_cast<std::uint64_t>(m.b));
        o.pod(m.prob);
        o.pod(m.gap);
    }
    o.close();
}

inline void save_bundle(const std::string& path, const AMSSSolution& sol, std::uint64_t config_hash) {
    detail::BinOut o(path);
    detail::write_header(o, BundleKind::amss, config_hash);
    detail::write_params(o, sol.params);
    o.pod(sol.limits.b_min);
    o.pod(sol.limits.b_max);
    o.table(sol.value);
    o.table(sol.policy_debt);
    o.table(sol.policy_revenue);
    o.pod(static_cast<std::uint64_t>(sol.first_admissible));
    o.pod(static_cast<std::uint64_t>(sol.last_admissible));
    std::vector<std::uint64_t> eff(sol.effective_last.begin(), sol.effective_last.end());
    o.vec(eff);
    o.pod(static_cast<std::int64_t>(sol.sweeps));
    o.pod(sol.residual);
    o.pod(static_cast<std::int64_t>(sol.infeasible_states));
    o.close();
}

struct LoadedEd {
    EDSolution solution;
    std::uint64_t config_hash = 0;
};

struct LoadedAmss {
    AMSSSolution solution;
    std::uint64_t config_hash = 0;
};

inline LoadedEd load_ed_bundle(const std::string& path) {
    detail::BinIn in(path);
    LoadedEd out;
    out.config_hash = detail::read_header(in, BundleKind::ed);
    EDSolution& s = out.solution;
    s.params = detail::read_params(in);
    s.options = detail::read_options(in);
    s.v_repay = in.table<double>();
    s.v_autarky = in.table<double>();
    s.price_repay = in.table<double>();
    s.price_autarky = in.table<double>();
    s.policy_debt = in.table<int>();
    s.policy_revenue = in.table<double>();
    s.default_flag = in.table<std::uint8_t>();
    s.accept = in.table<std::uint8_t>();
    auto& c = s.convergence;
    c.outer_iterations = static_cast<int>(in.pod<std::int64_t>());
    c.max_sweeps = static_cast<long>(in.pod<std::int64_t>());
    c.eval_sweeps = static_cast<long>(in.pod<std::int64_t>());
    c.price_residuals = in.vec<double>();
    c.value_residual = in.pod<double>();
    c.converged = in.pod<std::uint8_t>() != 0;
    c.cycle_detected = in.pod<std::uint8_t>() != 0;
    const auto n_mixed = in.pod<std::uint64_t>();
    for (std::uint64_t i = 0; i < n_mixed; ++i) {
        MixedDefault m;
        m.g = static_cast<std::size_t>(in.pod<std::uint64_t>());
        m.b = static_cast<std::size_t>(in.pod<std::uint64_t>());
        m.prob = in.pod<double>();
        m.gap = in.pod<double>();
        c.mixed.push_back(m);
    }
    in.expect_end();
    const std::size_t ng = s.n_g(), nb = s.n_b();
    auto shape = [&](std::size_t r, std::size_t cols, std::size_t rr, std::size_t cc, const char* what) {
        if (r != rr || cols != cc) throw BundleError(std::string("bundle table ") + what + " has the wrong shape");
    };
    shape(s.v_repay.rows, s.v_repay.cols, ng, nb, "v_repay");
    shape(s.v_autarky.rows, s.v_autarky.cols, ng, nb, "v_autarky");
    shape(s.price_repay.rows, s.price_repay.cols, ng, nb, "price_repay");
    shape(s.price_autarky.rows, s.price_autarky.cols, ng, nb, "price_autarky");
    shape(s.policy_debt.rows, s.policy_debt.cols, ng, nb, "policy_debt");
    shape(s.policy_revenue.rows, s.policy_revenue.cols, ng, nb, "policy_revenue");
    shape(s.default_flag.rows, s.default_flag.cols, ng, nb, "default_flag");
    shape(s.accept.rows, s.accept.cols, ng * s.n_offers(), nb, "accept");
    ThresholdReport th = extract_thresholds(s);
    s.threshold_g = std::move(th.g_bar);
    s.threshold_delta = std::move(th.delta_hat);
    s.threshold_violations = std::move(th.violations);
    return out;
}

inline LoadedAmss load_amss_bundle(const std::string& path) {
    detail::BinIn in(path);
    LoadedAmss out;
    out.config_hash = detail::read_header(in, BundleKind::amss);
    AMSSSolution& s = out.solution;
    s.params = detail::read_params(in);
    s.limits.b_min = in.pod<double>();
    s.limits.b_max = in.pod<double>();
    s.value = in.table<double>();
    s.policy_debt = in.table<int>();
    s.policy_revenue = in.table<double>();
    s.first_admissible = static_cast<std::size_t>(in.pod<std::uint64_t>());
    s.last_admissible = static_cast<std::size_t>(in.pod<std::uint64_t>());
    const auto eff = in.vec<std::uint64_t>();
    s.effective_last.assign(eff.begin(), eff.end());
    s.sweeps = static_cast<long>(in.pod<std::int64_t>());
    s.residual = in.pod<double>();
    s.infeasible_states = static_cast<long>(in.pod<std::int64_t>());
    in.expect_end();
    const std::size_t ng = s.n_g(), nb = s.n_b();
    if (s.value.rows != ng || s.value.cols != nb || s.policy_debt.rows != ng || s.policy_debt.cols != nb ||
        s.policy_revenue.rows != ng || s.policy_revenue.cols != nb || s.effective_last.size() != ng)
        throw BundleError("amss bundle tables have the wrong shape");
    return out;
}

}  // namespace sovdef
