#include "divopt/sde_sim.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>
#include <vector>

#include <boost/random/normal_distribution.hpp>

#include "divopt/error.hpp"
#include "divopt/numerics.hpp"

namespace divopt {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

PathRng::PathRng(std::uint64_t seed, std::uint64_t stream) {
    std::uint64_t mix = seed;
    const std::uint64_t seed_key = splitmix64(mix);
    std::uint64_t state = seed_key ^ (stream * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL);
    splitmix64(state);
    for (auto& word : s_) word = splitmix64(state);
}

void validate(const SimConfig& cfg) {
    std::ostringstream os;
    if (!(cfg.x0 >= 0.0)) os << "x0 must be >= 0; ";
    if (!(cfg.b > 0.0)) os << "b must be > 0; ";
    if (!(cfg.T > 0.0)) os << "T must be > 0; ";
    if (!(cfg.h > 0.0)) os << "h must be > 0; ";
    if (cfg.T > 0.0 && cfg.h > cfg.T / 100.0 * (1.0 + 1e-12)) os << "h must be <= T/100; ";
    if (cfg.n_paths < 1) os << "n_paths must be >= 1; ";
    if (cfg.fixed_retention && !(*cfg.fixed_retention > 0.0 && *cfg.fixed_retention <= 1.0))
        os << "fixed retention must lie in (0, 1]; ";
    if (!os.str().empty()) throw OutOfRange("invalid simulation config: " + os.str());
}

Simulator::Simulator(const ModelParams& params, const Coefficients& coeffs)
    : params_(params), table_(coeffs, params) {}

PathResult Simulator::simulate_path(const SimConfig& cfg, PathRng& rng) const {
    PathResult out;
    double r = cfg.x0;
    if (r > cfg.b) {
        out.discounted_dividends = r - cfg.b;
        r = cfg.b;
    }
    if (r <= 0.0) {
        out.ruined = true;
        return out;
    }

    boost::random::normal_distribution<double> normal;
    // A local copy keeps the generator state in registers across the loop.
    PathRng gen = rng;
    const double h = cfg.h;
    const double sqrt_h = std::sqrt(h);
    const double sigma = cfg.zero_volatility ? 0.0 : params_.sigma;
    const double step_discount = std::exp(-params_.c * h);
    const auto steps = static_cast<std::int64_t>(std::llround(cfg.T / h));
    const double b = cfg.b;
    const double mu = params_.mu;
    const double a = params_.a;
    const double delta = params_.delta;
    const bool fixed = cfg.fixed_retention.has_value();
    const double fixed_u = fixed ? *cfg.fixed_retention : 1.0;

    double discount = 1.0;
    double dividends = 0.0;
    for (std::int64_t k = 0; k < steps; ++k) {
        const double u = fixed ? fixed_u : table_(r);
        const double drift = (mu - a * u) * u - delta;
        const double z = normal(gen);
        const double next = r + drift * h + sigma * u * sqrt_h * z;
        if (next <= 0.0) {
            out.ruined = true;
            out.tau = (static_cast<double>(k) + r / (r - next)) * h;
            break;
        }
        // Branch-free reflection: the overshoot sign is close to a coin flip
        // while the reserve sits at the barrier.
        dividends += discount * std::max(next - b, 0.0);
        r = std::min(next, b);
        discount *= step_discount;
    }
    rng = gen;
    out.discounted_dividends += dividends;
    return out;
}

MCEstimate Simulator::estimate(const SimConfig& cfg, int workers) const {
    validate(cfg);
    const auto n = static_cast<std::size_t>(cfg.n_paths);
    std::vector<double> ruined(n);
    std::vector<double> dividends(n);

    auto run_block = [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            PathRng rng(cfg.seed, i);
            const auto path = simulate_path(cfg, rng);
            ruined[i] = path.ruined ? 1.0 : 0.0;
            dividends[i] = path.discounted_dividends;
        }
    };

    workers = std::clamp(workers, 1, static_cast<int>(std::min<std::size_t>(n, 256)));
    if (workers == 1) {
        run_block(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (int w = 0; w < workers; ++w) {
            const std::size_t begin = std::min(n, w * chunk);
            const std::size_t end = std::min(n, begin + chunk);
            pool.emplace_back(run_block, begin, end);
        }
        for (auto& t : pool) t.join();
    }

    MCEstimate est;
    est.n_paths = cfg.n_paths;
    est.h = cfg.h;
    const double nd = static_cast<double>(n);
    est.ruin_prob = numerics::pairwise_sum(ruined) / nd;
    est.value = numerics::pairwise_sum(dividends) / nd;
    if (n > 1) {
        // Indicator variance has a closed form; dividends use centred squares.
        est.ruin_se = std::sqrt(est.ruin_prob * (1.0 - est.ruin_prob) * nd / (nd - 1.0) / nd);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (dividends[i] - est.value) * (dividends[i] - est.value);
        est.value_se = std::sqrt(numerics::pairwise_sum(sq) / (nd - 1.0) / nd);
    }
    // Dividends after T are at most the reserve on hand plus the maximal drift
    // paid out forever, discounted from T.
    est.truncation_bound = std::exp(-params_.c * cfg.T) * (cfg.b + params_.drift(1.0) / params_.c);
    return est;
}

}  // namespace divopt
