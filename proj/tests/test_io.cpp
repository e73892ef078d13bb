#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "sovdef/config.hpp"
#include "sovdef/io.hpp"
#include "sovdef/validate.hpp"

using namespace sovdef;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "sovdef_test_io";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

RunConfig small_config() {
    RunConfig c;
    c.model.grid.points = 40;
    return c;
}

}  // namespace

TEST(Config, CanonicalTextRoundTrips) {
    RunConfig c;
    c.model.offers.lambda = 0.31;
    c.model.prefs.beta = 0.95;
    c.reneg_lambdas = {0.1, 0.3};
    c.mc.seed = 77;
    c.model.shocks.scale = ShockScale::log;
    const std::string text = to_toml(c);
    const RunConfig back = parse_config(text);
    EXPECT_EQ(to_toml(back), text);
    EXPECT_EQ(config_hash(back), config_hash(c));
    EXPECT_DOUBLE_EQ(back.model.offers.lambda, 0.31);
    EXPECT_EQ(back.model.shocks.scale, ShockScale::log);
}

TEST(Config, HashIgnoresOutputDirButNotParameters) {
    RunConfig a, b;
    b.out_dir = "elsewhere";
    EXPECT_EQ(config_hash(a), config_hash(b));
    b.model.offers.lambda = 0.4;
    EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, UnknownKeyReportsLine) {
    const std::string text = "[offers]\ncount = 10\nlamda = 0.5\n";
    try {
        parse_config(text);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 3);
        EXPECT_EQ(e.field(), "offers.lamda");
    }
}

TEST(Config, UnknownSectionRejected) {
    EXPECT_THROW(parse_config("[offer]\nlambda = 0.5\n"), ConfigError);
}

TEST(Config, OutOfRangeBetaRejected) {
    const RunConfig c = parse_config("[preferences]\nbeta = 1.2\n");
    try {
        validate(c);
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.field(), "preferences.beta");
    }
}

TEST(Config, WrongTypeRejected) {
    EXPECT_THROW(parse_config("[grid]\npoints = \"many\"\n"), ConfigError);
}

TEST(Config, OverridesApply) {
    RunConfig c;
    apply_override(c, "offers.lambda=0.2");
    apply_override(c, "grid.points=101");
    apply_override(c, "experiments.reneg_lambdas=[0.5, 1.0]");
    apply_override(c, "shocks.scale=log");
    EXPECT_DOUBLE_EQ(c.model.offers.lambda, 0.2);
    EXPECT_EQ(c.model.grid.points, 101);
    ASSERT_EQ(c.reneg_lambdas.size(), 2u);
    EXPECT_EQ(c.model.shocks.scale, ShockScale::log);
    EXPECT_THROW(apply_override(c, "offers.lambada=0.2"), ConfigError);
    EXPECT_THROW(apply_override(c, "offers.lambda"), ConfigError);
    apply_override(c, "offers.lambda=1.5");
    EXPECT_THROW(validate(c), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
    for (const char* name : {"paper.toml", "paper_high_offers.toml", "smoke.toml"}) {
        const fs::path p = fs::path(SOVDEF_SOURCE_DIR) / "configs" / name;
        RunConfig c;
        ASSERT_NO_THROW(c = load_config(p.string())) << name;
        EXPECT_NO_THROW(validate(c)) << name;
    }
    const RunConfig paper = load_config((fs::path(SOVDEF_SOURCE_DIR) / "configs" / "paper.toml").string());
    EXPECT_EQ(config_hash(paper), config_hash(RunConfig{})) << "paper.toml should spell out the defaults";
}

TEST(Csv, SeventeenDigitsAndProvenance) {
    const auto path = scratch("digits.csv");
    CsvWriter w(path.string(), "config_hash=abc seed=1", {"x", "n"});
    w.row(0.1, 3);
    w.close();
    const std::string text = slurp(path);
    EXPECT_EQ(text, "# config_hash=abc seed=1\nx,n\n0.10000000000000001,3\n");
    EXPECT_THROW(w.row(1.0), std::logic_error);
}

TEST(Bundle, EdRoundTripIsExact) {
    const RunConfig c = small_config();
    const auto sol = solve(c.params(), c.solver);
    const auto path = scratch("ed.bin");
    save_bundle(path.string(), sol, config_hash(c));
    const auto loaded = load_ed_bundle(path.string());
    EXPECT_EQ(loaded.config_hash, config_hash(c));
    const auto& s = loaded.solution;
    EXPECT_EQ(s.v_repay.data, sol.v_repay.data);
    EXPECT_EQ(s.v_autarky.data, sol.v_autarky.data);
    EXPECT_EQ(s.price_repay.data, sol.price_repay.data);
    EXPECT_EQ(s.price_autarky.data, sol.price_autarky.data);
    EXPECT_EQ(s.policy_debt.data, sol.policy_debt.data);
    EXPECT_EQ(s.default_flag.data, sol.default_flag.data);
    EXPECT_EQ(s.accept.data, sol.accept.data);
    EXPECT_EQ(s.params.grid.b_values, sol.params.grid.b_values);
    EXPECT_EQ(s.params.chain.g_values, sol.params.chain.g_values);
    EXPECT_EQ(s.convergence.mixed.size(), sol.convergence.mixed.size());
    EXPECT_EQ(s.threshold_violations.size(), sol.threshold_violations.size());

    ValidateSpec vs;
    vs.paths = 4;
    vs.periods = 500;
    vs.burn_in = 100;
    const auto rep = validate_solution(s, vs);
    for (const auto& chk : rep.checks) EXPECT_TRUE(chk.ok || chk.informational) << chk.name << " " << chk.value;
    EXPECT_TRUE(rep.ok());

    // the same path from the original and the reloaded solution
    const auto a = EdSimulator(sol).simulate(400, 0, 5), b = EdSimulator(s).simulate(400, 0, 5);
    EXPECT_EQ(a.tax, b.tax);
}

TEST(Bundle, AmssRoundTripIsExact) {
    const RunConfig c = small_config();
    const auto sol = solve_amss(c.params(), c.amss_limits, c.solver);
    const auto path = scratch("amss.bin");
    save_bundle(path.string(), sol, 42);
    const auto loaded = load_amss_bundle(path.string());
    EXPECT_EQ(loaded.config_hash, 42u);
    EXPECT_EQ(loaded.solution.value.data, sol.value.data);
    EXPECT_EQ(loaded.solution.policy_debt.data, sol.policy_debt.data);
    EXPECT_EQ(loaded.solution.effective_last, sol.effective_last);
    EXPECT_TRUE(validate_solution(loaded.solution).ok());
}

TEST(Bundle, RejectsWrongKindAndCorruption) {
    const RunConfig c = small_config();
    const auto sol = solve_amss(c.params(), c.amss_limits, c.solver);
    const auto path = scratch("kind.bin");
    save_bundle(path.string(), sol, 1);
    EXPECT_THROW(load_ed_bundle(path.string()), BundleError);

    std::string bytes = slurp(path);
    bytes[0] = 'X';
    const auto bad = scratch("bad.bin");
    std::ofstream(bad, std::ios::binary) << bytes;
    EXPECT_THROW(load_amss_bundle(bad.string()), BundleError);

    const auto cut = scratch("cut.bin");
    std::ofstream(cut, std::ios::binary) << slurp(path).substr(0, 200);
    EXPECT_THROW(load_amss_bundle(cut.string()), BundleError);
    EXPECT_THROW(load_amss_bundle(scratch("missing.bin").string()), BundleError);
}
