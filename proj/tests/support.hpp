#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "divopt/closed_form.hpp"
#include "divopt/model.hpp"

namespace divopt::testing {

inline double rel_err(double got, double want) {
    return std::abs(got - want) / std::max(std::abs(want), 1e-300);
}

/// Random parameter sets that satisfy every model invariant, drawn from
/// ranges where all closed-form exponentials stay well inside double range.
class ParamFuzzer {
public:
    explicit ParamFuzzer(std::uint64_t seed) : rng_(seed) {}

    ModelParams next() {
        for (;;) {
            ModelParams p;
            p.mu = uniform(0.5, 4.0);
            p.a = uniform(0.02, 0.45) * p.mu;
            p.l = uniform(0.15, 0.9);
            p.sigma = std::sqrt(uniform(2.0, 100.0));
            p.c = uniform(0.01, 0.15);
            const double delta_cap = std::min(0.5 * p.mu * p.l, p.mu * p.l - p.a * p.l * p.l);
            p.delta = uniform(0.0, 0.8) * delta_cap;
            if (check_invariants(p).empty()) return p;
        }
    }

private:
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }
    std::mt19937_64 rng_;
};

/// Independent route to the interior retention and the middle integral:
/// RK4 on eta' = (2a/sigma^2)(G - eta)(eta - H)/eta together with
/// J' = c / (mu eta / 2 - delta) from (x1, l). Returns samples on a uniform
/// grid of `steps` intervals over [x1, x2].
struct RetentionOde {
    std::vector<double> x;
    std::vector<double> eta;
    std::vector<double> J;

    RetentionOde(const Coefficients& k, const ModelParams& p, int steps) {
        const double h = (k.x2 - k.x1) / steps;
        const double s2 = p.sigma2();
        auto f = [&](double e) {
            return std::pair{(2.0 * p.a / s2) * (k.G - e) * (e - k.H) / e, p.c / (0.5 * p.mu * e - p.delta)};
        };
        double e = p.l;
        double j = 0.0;
        for (int i = 0; i <= steps; ++i) {
            x.push_back(k.x1 + i * h);
            eta.push_back(e);
            J.push_back(j);
            if (i == steps) break;
            const auto [k1e, k1j] = f(e);
            const auto [k2e, k2j] = f(e + 0.5 * h * k1e);
            const auto [k3e, k3j] = f(e + 0.5 * h * k2e);
            const auto [k4e, k4j] = f(e + h * k3e);
            e += h / 6.0 * (k1e + 2 * k2e + 2 * k3e + k4e);
            j += h / 6.0 * (k1j + 2 * k2j + 2 * k3j + k4j);
        }
    }

    /// int_{x_i}^{x2} c / (mu eta / 2 - delta) dy
    double middle(std::size_t i) const { return J.back() - J[i]; }
};

/// max over u in [l, 1] of sigma^2 u^2 g2 / 2 + (mu u - a u^2 - delta) g1, by
/// dense scan plus golden-section refinement (no closed-form maximiser).
inline double generator_max(double g1, double g2, const ModelParams& p) {
    auto q = [&](double u) { return 0.5 * p.sigma2() * u * u * g2 + (p.mu * u - p.a * u * u - p.delta) * g1; };
    const int n = 64;
    int best = 0;
    double best_v = q(p.l);
    for (int i = 1; i <= n; ++i) {
        const double v = q(p.l + (1.0 - p.l) * i / n);
        if (v > best_v) {
            best_v = v;
            best = i;
        }
    }
    double lo = p.l + (1.0 - p.l) * std::max(0, best - 1) / n;
    double hi = p.l + (1.0 - p.l) * std::min(n, best + 1) / n;
    const double r = 0.5 * (std::sqrt(5.0) - 1.0);
    for (int it = 0; it < 60; ++it) {
        const double m1 = hi - r * (hi - lo);
        const double m2 = lo + r * (hi - lo);
        if (q(m1) < q(m2))
            lo = m1;
        else
            hi = m2;
    }
    return std::max({best_v, q(0.5 * (lo + hi))});
}

/// Shooting solution of max_u L g = 0 on [0, b] with g(0) = 0, g'(b) = 1.
/// g'' is recovered at every stage by bisecting generator_max(g1, g2) = c g
/// in g2, so nothing from the closed form is reused.
struct HjbShooting {
    std::vector<double> x;
    std::vector<double> g;
    std::vector<double> g1;

    HjbShooting(const ModelParams& p, double b, int steps) {
        const double h = b / steps;
        auto g2_of = [&](double gv, double g1v) {
            double lo = -1e3 * std::max(1.0, std::abs(g1v));
            double hi = 1e3 * std::max(1.0, std::abs(g1v));
            for (int it = 0; it < 64; ++it) {
                const double mid = 0.5 * (lo + hi);
                if (generator_max(g1v, mid, p) - p.c * gv > 0.0)
                    hi = mid;
                else
                    lo = mid;
            }
            return 0.5 * (lo + hi);
        };
        double gv = 0.0;
        double dv = 1.0;
        for (int i = 0; i <= steps; ++i) {
            x.push_back(i * h);
            g.push_back(gv);
            g1.push_back(dv);
            if (i == steps) break;
            const double k1g = dv, k1d = g2_of(gv, dv);
            const double k2g = dv + 0.5 * h * k1d, k2d = g2_of(gv + 0.5 * h * k1g, k2g);
            const double k3g = dv + 0.5 * h * k2d, k3d = g2_of(gv + 0.5 * h * k2g, k3g);
            const double k4g = dv + h * k3d, k4d = g2_of(gv + h * k3g, k4g);
            gv += h / 6.0 * (k1g + 2 * k2g + 2 * k3g + k4g);
            dv += h / 6.0 * (k1d + 2 * k2d + 2 * k3d + k4d);
        }
        const double scale = 1.0 / g1.back();
        for (auto& v : g) v *= scale;
        for (auto& v : g1) v *= scale;
    }
};

/// Explicit central differences for the survival probability on a
/// uniform grid, with a time step far inside the stability limit.
inline double explicit_survival_at_barrier(double b, double T, const ModelParams& p, const Coefficients& k,
                                           int ny) {
    const double dy = b / ny;
    double max_diff = 0.0;
    std::vector<double> diff(ny + 1), drift(ny + 1);
    for (int i = 0; i <= ny; ++i) {
        const double u = retention(i * dy, k, p);
        diff[i] = 0.5 * p.sigma2() * u * u;
        drift[i] = p.mu * u - p.a * u * u - p.delta;
        max_diff = std::max(max_diff, diff[i]);
    }
    const int nt = static_cast<int>(std::ceil(T / (0.4 * dy * dy / max_diff)));
    const double dt = T / nt;
    std::vector<double> phi(ny + 1, 1.0), next(ny + 1);
    phi[0] = 0.0;
    for (int n = 0; n < nt; ++n) {
        next[0] = 0.0;
        for (int i = 1; i < ny; ++i)
            next[i] = phi[i] + dt * (diff[i] * (phi[i + 1] - 2 * phi[i] + phi[i - 1]) / (dy * dy) +
                                     drift[i] * (phi[i + 1] - phi[i - 1]) / (2 * dy));
        // Reflecting end via a ghost node: phi[ny+1] = phi[ny-1].
        next[ny] = phi[ny] + dt * diff[ny] * 2.0 * (phi[ny - 1] - phi[ny]) / (dy * dy);
        phi.swap(next);
    }
    return phi[ny];
}

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("divopt_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::string slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

/// Rows of a CSV file, skipping `#` comment lines and the header row.
inline std::vector<std::vector<std::string>> csv_rows(const std::filesystem::path& path) {
    std::ifstream in(path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        if (!header_seen) {
            header_seen = true;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (!line.empty() && line.back() == ',') cells.emplace_back();
        rows.push_back(cells);
    }
    return rows;
}

}  // namespace divopt::testing
