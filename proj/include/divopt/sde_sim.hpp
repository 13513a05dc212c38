#pragma once

#include <cstdint>
#include <limits>
#include <optional>

#include "divopt/closed_form.hpp"
#include "divopt/model.hpp"

namespace divopt {

/**
 * xoshiro256++ generator. One instance per path, seeded from (seed, path
 * index) through SplitMix64, so a path's draws never depend on which worker
 * simulates it.
 */
class PathRng {
public:
    using result_type = std::uint64_t;

    PathRng(std::uint64_t seed, std::uint64_t stream);

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const std::uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept { return (x << k) | (x >> (64 - k)); }
    std::uint64_t s_[4];
};

struct SimConfig {
    double x0 = 0.0;             ///< initial reserve; anything above b is paid out at t = 0
    double b = 0.0;              ///< dividend barrier
    double T = 0.0;              ///< horizon
    double h = 1e-3;             ///< Euler step
    std::int64_t n_paths = 1;
    std::uint64_t seed = 0;
    std::optional<double> fixed_retention;  ///< diagnostic: constant U instead of U*(x)
    bool zero_volatility = false;           ///< diagnostic: sigma forced to 0
};

/// Throws OutOfRange on x0 < 0, b <= 0, h <= 0, h > T/100 or n_paths < 1.
void validate(const SimConfig& cfg);

struct PathResult {
    bool ruined = false;
    double tau = 0.0;  ///< ruin time when ruined
    double discounted_dividends = 0.0;
};

struct MCEstimate {
    double ruin_prob = 0.0;
    double ruin_se = 0.0;
    double value = 0.0;
    double value_se = 0.0;
    std::int64_t n_paths = 0;
    double h = 0.0;
    /// Bound on the discounted dividends lost by stopping at T.
    double truncation_bound = 0.0;
};

/// Euler-Maruyama simulator of the barrier-reflected, zero-absorbed reserve.
class Simulator {
public:
    Simulator(const ModelParams& params, const Coefficients& coeffs);

    PathResult simulate_path(const SimConfig& cfg, PathRng& rng) const;

    /// Bit-identical for a fixed config whatever `workers` is.
    MCEstimate estimate(const SimConfig& cfg, int workers = 1) const;

    double retention_at(double x) const noexcept { return table_(x); }

private:
    ModelParams params_;
    RetentionTable table_;
};

}  // namespace divopt
