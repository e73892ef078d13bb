#pragma once

// Discretized exogenous environment: the spending chain, the offer lattice,
// the debt grid, and reproducible random streams.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace sovdef {

/// Row-major square matrix stored flat.
struct Matrix {
    std::size_t n = 0;
    std::vector<double> data;

    Matrix() = default;
    explicit Matrix(std::size_t dim, double fill = 0.0) : n(dim), data(dim * dim, fill) {}
    double& operator()(std::size_t i, std::size_t j) { return data[i * n + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * n + j]; }
    const double* row(std::size_t i) const { return data.data() + i * n; }
};

struct ShockChain {
    std::vector<double> g_values;  // ascending
    Matrix transition;
    std::vector<double> stationary;
    bool iid = false;

    std::size_t size() const { return g_values.size(); }
    double prob(std::size_t i, std::size_t j) const { return transition(i, j); }
};

/// Whether the AR(1) runs in g itself or in log g.
enum class ShockScale { level, log };

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

/// Left eigenvector for the unit eigenvalue by power iteration.
inline std::vector<double> stationary_distribution(const Matrix& transition, double tol = 1e-12,
                                                   long max_iter = 1'000'000) {
    const std::size_t n = transition.n;
    std::vector<double> pi(n, 1.0 / static_cast<double>(n)), next(n);
    for (long it = 0; it < max_iter; ++it) {
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) next[j] += pi[i] * transition(i, j);
        const double total = std::accumulate(next.begin(), next.end(), 0.0);
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            next[j] /= total;
            diff = std::max(diff, std::abs(next[j] - pi[j]));
        }
        pi.swap(next);
        if (diff < tol) return pi;
    }
    throw std::runtime_error("stationary_distribution: power iteration did not converge");
}

inline bool rows_identical(const Matrix& m) {
    for (std::size_t i = 1; i < m.n; ++i)
        for (std::size_t j = 0; j < m.n; ++j)
            if (m(i, j) != m(0, j)) return false;
    return true;
}

inline void validate_chain(const ShockChain& chain) {
    const std::size_t n = chain.size();
    if (n == 0 || chain.transition.n != n) throw std::invalid_argument("chain: dimension mismatch");
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            if (chain.transition(i, j) < 0.0) throw std::invalid_argument("chain: negative transition entry");
            s += chain.transition(i, j);
        }
        if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("chain: row does not sum to one");
        if (i > 0 && !(chain.g_values[i] > chain.g_values[i - 1]))
            throw std::invalid_argument("chain: g values must be strictly increasing");
    }
}

/// Builds a chain from explicit states and transition matrix.
inline ShockChain make_chain(std::vector<double> g_values, Matrix transition) {
    ShockChain chain;
    chain.g_values = std::move(g_values);
    chain.transition = std::move(transition);
    validate_chain(chain);
    chain.stationary = stationary_distribution(chain.transition);
    chain.iid = rows_identical(chain.transition);
    return chain;
}

/// Tauchen discretization of x' = (1-rho) mu + rho x + sigma_eps eps on an
/// equally spaced grid spanning +-span unconditional standard deviations.
/// With ShockScale::log the process is in log g and `mu` is the level whose
/// log is the unconditional mean; otherwise `mu` is the mean of g itself.
inline ShockChain tauchen(double mu, double rho, double sigma_eps, int n_states, double span,
                          ShockScale scale = ShockScale::level) {
    if (!(std::abs(rho) < 1.0)) throw std::invalid_argument("tauchen: |rho| must be < 1");
    if (!(sigma_eps > 0.0)) throw std::invalid_argument("tauchen: sigma_eps must be positive");
    if (n_states < 2) throw std::invalid_argument("tauchen: need at least two states");
    if (!(span > 0.0)) throw std::invalid_argument("tauchen: span must be positive");
    if (scale == ShockScale::log && !(mu > 0.0)) throw std::invalid_argument("tauchen: log scale needs mu > 0");

    const std::size_t n = static_cast<std::size_t>(n_states);
    const double center = scale == ShockScale::log ? std::log(mu) : mu;
    const double sd = sigma_eps / std::sqrt(1.0 - rho * rho);
    const double lo = center - span * sd;
    const double step = 2.0 * span * sd / static_cast<double>(n - 1);

    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo + step * static_cast<double>(i);
    // symmetric about the center, up to rounding
    for (std::size_t i = 0; i < n / 2; ++i) {
        const double half = 0.5 * (x[n - 1 - i] - x[i]);
        x[i] = center - half;
        x[n - 1 - i] = center + half;
    }
    if (n % 2 == 1) x[n / 2] = center;

    Matrix p(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double mean = (1.0 - rho) * center + rho * x[i];
        for (std::size_t j = 0; j < n; ++j) {
            const double upper = (x[j] + 0.5 * step - mean) / sigma_eps;
            const double lower = (x[j] - 0.5 * step - mean) / sigma_eps;
            if (j == 0)
                p(i, j) = normal_cdf(upper);
            else if (j == n - 1)
                p(i, j) = normal_cdf(-lower);
            else
                p(i, j) = normal_cdf(upper) - normal_cdf(lower);
        }
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += p(i, j);
        for (std::size_t j = 0; j < n; ++j) p(i, j) /= s;
    }

    std::vector<double> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i] = scale == ShockScale::log ? std::exp(x[i]) : x[i];
    if (g.front() <= 0.0) throw std::invalid_argument("tauchen: grid produces non-positive spending");
    return make_chain(std::move(g), std::move(p));
}

struct OfferSchedule {
    double lambda = 0.0;
    std::vector<double> deltas;  // strictly increasing, each < 1
    std::vector<double> probs;

    std::size_t size() const { return deltas.size(); }

    double mean_delta() const {
        double m = 0.0;
        for (std::size_t k = 0; k < deltas.size(); ++k) m += deltas[k] * probs[k];
        return m;
    }

    void validate() const {
        if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("offers: lambda must lie in [0,1]");
        if (deltas.empty() || deltas.size() != probs.size())
            throw std::invalid_argument("offers: deltas and probs must be non-empty and equally long");
        double s = 0.0;
        for (std::size_t k = 0; k < deltas.size(); ++k) {
            if (!(deltas[k] >= 0.0 && deltas[k] < 1.0)) throw std::invalid_argument("offers: delta must lie in [0,1)");
            if (k > 0 && !(deltas[k] > deltas[k - 1])) throw std::invalid_argument("offers: deltas must increase");
            if (probs[k] < 0.0) throw std::invalid_argument("offers: negative probability");
            s += probs[k];
        }
        if (std::abs(s - 1.0) > 1e-12) throw std::invalid_argument("offers: probabilities must sum to one");
    }

    /// `count` equiprobable, equally spaced repayment fractions.
    static OfferSchedule equiprobable(double lambda, double delta_min, double delta_max, int count) {
        if (count < 1) throw std::invalid_argument("offers: count must be >= 1");
        OfferSchedule s;
        s.lambda = lambda;
        for (int k = 0; k < count; ++k) {
            const double d = count == 1 ? delta_min
                                        : delta_min + (delta_max - delta_min) * k / static_cast<double>(count - 1);
            s.deltas.push_back(d);
            s.probs.push_back(1.0 / count);
        }
        s.validate();
        return s;
    }
};

struct DebtGrid {
    std::vector<double> b_values;

    std::size_t size() const { return b_values.size(); }
    double operator[](std::size_t i) const { return b_values[i]; }
    double front() const { return b_values.front(); }
    double back() const { return b_values.back(); }

    std::size_t zero_index() const {
        return static_cast<std::size_t>(std::find(b_values.begin(), b_values.end(), 0.0) - b_values.begin());
    }

    void validate() const {
        if (b_values.empty()) throw std::invalid_argument("debt grid: empty");
        int zeros = 0;
        for (std::size_t i = 0; i < b_values.size(); ++i) {
            if (b_values[i] == 0.0) ++zeros;
            if (i > 0 && !(b_values[i] > b_values[i - 1])) throw std::invalid_argument("debt grid: must ascend");
        }
        if (zeros != 1) throw std::invalid_argument("debt grid: must contain 0 exactly once");
    }

    static DebtGrid uniform(double b_min, double b_max, int points) {
        if (points < 1) throw std::invalid_argument("debt grid: need at least one point");
        DebtGrid grid;
        if (points == 1) {
            grid.b_values = {b_min};
        } else {
            for (int i = 0; i < points; ++i)
                grid.b_values.push_back(b_min + (b_max - b_min) * i / static_cast<double>(points - 1));
        }
        // snap the point nearest to zero onto it
        auto it = std::min_element(grid.b_values.begin(), grid.b_values.end(),
                                   [](double a, double b) { return std::abs(a) < std::abs(b); });
        if (std::abs(*it) < 1e-12 * std::max(1.0, b_max - b_min)) *it = 0.0;
        grid.validate();
        return grid;
    }

    /// Bracketing index and weight for linear interpolation; clamps outside
    /// the grid.
    std::pair<std::size_t, double> bracket(double b) const {
        if (b_values.size() == 1 || b <= b_values.front()) return {0, 0.0};
        if (b >= b_values.back()) return {b_values.size() - 2, 1.0};
        const auto it = std::upper_bound(b_values.begin(), b_values.end(), b);
        const std::size_t hi = static_cast<std::size_t>(it - b_values.begin());
        const std::size_t lo = hi - 1;
        return {lo, (b - b_values[lo]) / (b_values[hi] - b_values[lo])};
    }

    std::size_t nearest(double b) const {
        const auto [lo, w] = bracket(b);
        if (b_values.size() == 1) return 0;
        return w < 0.5 ? lo : lo + 1;
    }
};

/// Seedable 64-bit stream. Replication r of a Monte Carlo run uses
/// master_seed ^ r. Uniforms take the top 53 bits of each draw so the
/// sequence is identical on every standard library.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    static std::uint64_t seed_for(std::uint64_t master_seed, std::uint64_t replication) {
        return master_seed ^ replication;
    }
    static Rng for_replication(std::uint64_t master_seed, std::uint64_t replication) {
        return Rng(seed_for(master_seed, replication));
    }
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

/// Index drawn from a discrete distribution by inverse CDF.
inline std::size_t draw_index(const double* probs, std::size_t n, double u) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        acc += probs[j];
        if (u < acc) return j;
    }
    // u landed in the rounding gap above the last cumulative sum
    for (std::size_t j = n; j-- > 0;)
        if (probs[j] > 0.0) return j;
    return n - 1;
}

/// Repayment event at the start of a period.
struct OfferEvent {
    enum class Kind { access, no_offer, offer };
    Kind kind = Kind::access;
    int index = -1;      // into OfferSchedule::deltas when kind == offer
    double delta = 1.0;  // 1 under access; 0 for no offer
};

struct PeriodDraw {
    std::size_t g_next = 0;
    OfferEvent event;
};

/// Draws next period's spending state and repayment event. Always consumes
/// three uniforms so spending paths do not depend on the access history.
inline PeriodDraw draw_period(const ShockChain& chain, const OfferSchedule& offers, std::size_t g_index,
                              bool access_prev, Rng& rng) {
    const double u_g = rng.uniform();
    const double u_arrival = rng.uniform();
    const double u_delta = rng.uniform();
    PeriodDraw out;
    out.g_next = draw_index(chain.transition.row(g_index), chain.size(), u_g);
    if (access_prev) {
        out.event = OfferEvent{OfferEvent::Kind::access, -1, 1.0};
    } else if (u_arrival < offers.lambda) {
        const std::size_t k = draw_index(offers.probs.data(), offers.size(), u_delta);
        out.event = OfferEvent{OfferEvent::Kind::offer, static_cast<int>(k), offers.deltas[k]};
    } else {
        out.event = OfferEvent{OfferEvent::Kind::no_offer, -1, 0.0};
    }
    return out;
}

}  // namespace sovdef
