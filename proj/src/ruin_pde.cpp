#include "divopt/ruin_pde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "divopt/error.hpp"
#include "divopt/numerics.hpp"

namespace divopt {

namespace {

constexpr double kRangeSlack = 1e-6;
constexpr int kRannacherHalfSteps = 4;

// LU factors of a constant tridiagonal matrix, reused for every time step.
class TridiagonalFactor {
public:
    TridiagonalFactor(std::vector<double> lower, const std::vector<double>& diag, const std::vector<double>& upper)
        : lower_(std::move(lower)), inv_pivot_(diag.size()), upper_ratio_(diag.size()) {
        double pivot = diag[0];
        inv_pivot_[0] = 1.0 / pivot;
        for (std::size_t i = 1; i < diag.size(); ++i) {
            upper_ratio_[i] = upper[i - 1] * inv_pivot_[i - 1];
            pivot = diag[i] - lower_[i] * upper_ratio_[i];
            inv_pivot_[i] = 1.0 / pivot;
        }
    }

    void solve(std::span<const double> rhs, std::span<double> out) const {
        const std::size_t n = inv_pivot_.size();
        out[0] = rhs[0] * inv_pivot_[0];
        for (std::size_t i = 1; i < n; ++i) out[i] = (rhs[i] - lower_[i] * out[i - 1]) * inv_pivot_[i];
        for (std::size_t i = n - 1; i-- > 0;) out[i] -= upper_ratio_[i + 1] * out[i + 1];
    }

private:
    std::vector<double> lower_;
    std::vector<double> inv_pivot_;
    std::vector<double> upper_ratio_;
};

// Spatial operator L psi = D(y) psi_yy + M(y) psi_y on interior nodes.
struct SpatialOperator {
    std::vector<double> lower, diag, upper;  // indexed by node, interior entries only
    double neumann_w1 = 0.0;                 // psi_N = w1 psi_{N-1} + w2 psi_{N-2}
    double neumann_w2 = 0.0;
};

SpatialOperator build_operator(const std::vector<double>& y, const ModelParams& params, const Coefficients& coeffs) {
    const std::size_t N = y.size() - 1;
    SpatialOperator op;
    op.lower.assign(N + 1, 0.0);
    op.diag.assign(N + 1, 0.0);
    op.upper.assign(N + 1, 0.0);
    for (std::size_t i = 1; i < N; ++i) {
        const double u = retention(y[i], coeffs, params);
        const double diffusion = 0.5 * u * u * params.sigma2();
        const double drift = params.drift(u);
        const double h0 = y[i] - y[i - 1];
        const double h1 = y[i + 1] - y[i];
        if (std::abs(drift) * std::max(h0, h1) / diffusion > 2.0) {
            std::ostringstream os;
            os << "cell Peclet number " << std::abs(drift) * std::max(h0, h1) / diffusion << " > 2 at y = " << y[i]
               << "; refine the spatial grid";
            throw GridTooCoarse(os.str());
        }
        const double s = h0 + h1;
        const double d2m = 2.0 / (h0 * s);
        const double d2p = 2.0 / (h1 * s);
        const double d1m = -h1 / (h0 * s);
        const double d1p = h0 / (h1 * s);
        op.lower[i] = diffusion * d2m + drift * d1m;
        op.upper[i] = diffusion * d2p + drift * d1p;
        op.diag[i] = -(diffusion * (d2m + d2p) + drift * (d1m + d1p));
    }
    // Second-order one-sided derivative at y_N from nodes N, N-1, N-2.
    const double hN = y[N] - y[N - 1];
    const double hM = y[N - 1] - y[N - 2];
    const double s = hN + hM;
    const double cN = (2.0 * hN + hM) / (hN * s);
    const double cN1 = -s / (hN * hM);
    const double cN2 = hN / (hM * s);
    op.neumann_w1 = -cN1 / cN;
    op.neumann_w2 = -cN2 / cN;
    return op;
}

// (I - theta dt L) on the unknowns y_1..y_{N-1}, with psi_N eliminated.
TridiagonalFactor implicit_matrix(const SpatialOperator& op, double theta_dt) {
    const std::size_t n = op.diag.size() - 2;
    std::vector<double> lo(n), di(n), up(n);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t i = k + 1;
        lo[k] = -theta_dt * op.lower[i];
        di[k] = 1.0 - theta_dt * op.diag[i];
        up[k] = -theta_dt * op.upper[i];
    }
    di[n - 1] += up[n - 1] * op.neumann_w1;
    lo[n - 1] += up[n - 1] * op.neumann_w2;
    up[n - 1] = 0.0;
    return TridiagonalFactor(std::move(lo), di, up);
}

void check_range(std::span<const double> psi, double t) {
    for (std::size_t i = 0; i < psi.size(); ++i) {
        if (!(psi[i] >= -kRangeSlack && psi[i] <= 1.0 + kRangeSlack)) {
            std::ostringstream os;
            os << "ruin probability left [0, 1]: psi = " << psi[i] << " at node " << i << ", t = " << t;
            throw Instability(os.str());
        }
    }
}

}  // namespace

void validate_grid(const PdeGrid& grid) {
    std::ostringstream os;
    if (grid.ny < 64) os << "ny = " << grid.ny << " < 64; ";
    if (grid.nt < 64) os << "nt = " << grid.nt << " < 64; ";
    if (!(grid.b > 0.0)) os << "b must be > 0; ";
    if (!(grid.T > 0.0)) os << "T must be > 0; ";
    if (!os.str().empty()) throw OutOfRange("invalid PDE grid: " + os.str());
}

std::vector<double> spatial_nodes(const PdeGrid& grid, const Coefficients& coeffs) {
    validate_grid(grid);
    const double b = grid.b;
    const double dy = grid.dy();
    std::vector<double> breaks{0.0};
    for (double x : {coeffs.x1, coeffs.x2}) {
        if (x - breaks.back() >= 0.5 * dy && b - x >= 0.5 * dy) breaks.push_back(x);
    }
    breaks.push_back(b);

    const std::size_t segments = breaks.size() - 1;
    std::vector<int> cells(segments);
    int total = 0;
    std::size_t widest = 0;
    for (std::size_t s = 0; s < segments; ++s) {
        const double len = breaks[s + 1] - breaks[s];
        cells[s] = std::max(1, static_cast<int>(std::lround(grid.ny * len / b)));
        total += cells[s];
        if (len > breaks[widest + 1] - breaks[widest]) widest = s;
    }
    cells[widest] += grid.ny - total;

    std::vector<double> y;
    y.reserve(static_cast<std::size_t>(grid.ny) + 1);
    for (std::size_t s = 0; s < segments; ++s) {
        const double h = (breaks[s + 1] - breaks[s]) / cells[s];
        for (int j = 0; j < cells[s]; ++j) y.push_back(breaks[s] + j * h);
    }
    y.push_back(b);
    return y;
}

PdeGrid GridPolicy::grid_for(double b, double T) const {
    PdeGrid g;
    g.ny = ny;
    g.b = b;
    g.T = T;
    g.nt = nt.value_or(std::max(64, static_cast<int>(std::ceil(T / (b / ny) - 1e-9))));
    return g;
}

SurvivalSolution::SurvivalSolution(PdeGrid grid, std::vector<double> nodes, std::vector<double> psi,
                                   std::vector<double> phi, int stored_slices, ModelParams params,
                                   Coefficients coeffs)
    : grid_(grid), nodes_(std::move(nodes)), psi_(std::move(psi)), phi_(std::move(phi)), slices_(stored_slices),
      params_(params), coeffs_(coeffs) {}

double SurvivalSolution::slice_time(int j) const {
    if (j < 0 || j >= slices_) throw OutOfRange("slice index out of range");
    if (slices_ == grid_.nt + 1) return j * grid_.dt();
    return j == 0 ? 0.0 : grid_.T;
}

std::span<const double> SurvivalSolution::slice(int j) const {
    if (j < 0 || j >= slices_) throw OutOfRange("slice index out of range");
    const std::size_t n = nodes_.size();
    return std::span<const double>(psi_).subspan(static_cast<std::size_t>(j) * n, n);
}

double SurvivalSolution::interpolate(const std::vector<double>& store, double t, double x) const {
    const double t_tol = 1e-9 * std::max(1.0, grid_.T);
    int j = -1;
    if (slices_ == grid_.nt + 1) {
        const double k = std::round(t / grid_.dt());
        if (k >= 0 && k <= grid_.nt && std::abs(k * grid_.dt() - t) <= t_tol) j = static_cast<int>(k);
    } else {
        if (std::abs(t) <= t_tol) j = 0;
        if (std::abs(t - grid_.T) <= t_tol) j = slices_ - 1;
    }
    if (j < 0) {
        std::ostringstream os;
        os << "t = " << t << " is not a stored time of the ruin solution";
        throw OutOfRange(os.str());
    }
    const double b = grid_.b;
    if (!(x >= -1e-12 * b && x <= b * (1.0 + 1e-12))) {
        std::ostringstream os;
        os << "x = " << x << " outside [0, " << b << "]";
        throw OutOfRange(os.str());
    }
    x = std::clamp(x, 0.0, b);
    const auto v = std::span<const double>(store).subspan(static_cast<std::size_t>(j) * nodes_.size(), nodes_.size());
    const auto it = std::upper_bound(nodes_.begin(), nodes_.end(), x);
    if (it == nodes_.end()) return v.back();
    const std::size_t i = static_cast<std::size_t>(it - nodes_.begin());
    if (i == 0) return v[0];
    const double w = (x - nodes_[i - 1]) / (nodes_[i] - nodes_[i - 1]);
    return (1.0 - w) * v[i - 1] + w * v[i];
}

double SurvivalSolution::ruin(double t, double x) const { return interpolate(psi_, t, x); }

double SurvivalSolution::survival(double t, double x) const { return interpolate(phi_, t, x); }

SurvivalSolution solve_survival(double b, double T, const ModelParams& params, const Coefficients& coeffs,
                                const PdeGrid& grid_in, History history) {
    PdeGrid grid = grid_in;
    grid.b = b;
    grid.T = T;
    validate_grid(grid);
    if (!(b >= coeffs.x2)) {
        std::ostringstream os;
        os << "solve_survival: barrier " << b << " below x2 = " << coeffs.x2;
        throw OutOfRange(os.str());
    }
    auto y = spatial_nodes(grid, coeffs);
    const std::size_t N = y.size() - 1;
    const auto op = build_operator(y, params, coeffs);
    const double dt = grid.dt();
    // Implicit Euler over dt/2 and Crank-Nicolson over dt share I - (dt/2) L.
    const auto lhs = implicit_matrix(op, 0.5 * dt);

    const int slices = history == History::full ? grid.nt + 1 : 2;
    // Ruin and survival are marched side by side: each keeps its own small
    // values accurate, which 1 - (the other) would round away.
    std::vector<double> psi_store(static_cast<std::size_t>(slices) * (N + 1));
    std::vector<double> phi_store(psi_store.size());
    std::vector<double> psi(N + 1, 0.0), phi(N + 1, 1.0);
    psi[0] = 1.0;
    phi[0] = 0.0;
    int stored = 0;
    auto keep = [&](int step) {
        if (history == History::full || step == 0 || step == grid.nt) {
            const auto at = static_cast<std::ptrdiff_t>(stored * (N + 1));
            std::copy(psi.begin(), psi.end(), psi_store.begin() + at);
            std::copy(phi.begin(), phi.end(), phi_store.begin() + at);
            ++stored;
        }
    };
    keep(0);

    std::vector<double> rhs(N - 1);
    std::vector<double> next(N - 1);
    auto advance = [&](std::vector<double>& v, const TridiagonalFactor& m, double explicit_dt) {
        for (std::size_t i = 1; i < N; ++i) {
            const double lv = op.lower[i] * v[i - 1] + op.diag[i] * v[i] + op.upper[i] * v[i + 1];
            rhs[i - 1] = v[i] + explicit_dt * lv;
        }
        // Implicit share of the Dirichlet value at y = 0.
        rhs[0] += 0.5 * dt * op.lower[1] * v[0];
        m.solve(rhs, next);
        std::copy(next.begin(), next.end(), v.begin() + 1);
        v[N] = op.neumann_w1 * v[N - 1] + op.neumann_w2 * v[N - 2];
    };

    int step = 0;
    double t = 0.0;
    for (int h = 0; h < kRannacherHalfSteps; ++h) {
        advance(psi, lhs, 0.0);
        advance(phi, lhs, 0.0);
        t += 0.5 * dt;
        check_range(psi, t);
        if (h % 2 == 1) keep(++step);
    }
    for (; step < grid.nt;) {
        advance(psi, lhs, 0.5 * dt);
        advance(phi, lhs, 0.5 * dt);
        t += dt;
        check_range(psi, t);
        keep(++step);
    }
    return SurvivalSolution(grid, std::move(y), std::move(psi_store), std::move(phi_store), slices, params,
                            coeffs);
}

double ruin_probability(const SurvivalSolution& sol, double x, double T) {
    return std::clamp(sol.ruin(T, x), 0.0, 1.0);
}

double ruin_at_barrier(double b, double T, const ModelParams& params, const Coefficients& coeffs,
                       const GridPolicy& policy) {
    const auto sol = solve_survival(b, T, params, coeffs, policy.grid_for(b, T), History::final_only);
    return ruin_probability(sol, b, T);
}

std::string to_string(Regime regime) {
    return regime == Regime::unconstrained ? "unconstrained" : "constrained";
}

BarrierResult constrained_barrier(double epsilon, double T, double b0, const ModelParams& params,
                                  const Coefficients& coeffs, const GridPolicy& policy) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw OutOfRange("epsilon must lie in (0, 1)");
    if (!(T > 0.0)) throw OutOfRange("T must be > 0");
    BarrierResult out;
    auto psi_at = [&](double b) {
        ++out.solves;
        return ruin_at_barrier(b, T, params, coeffs, policy);
    };
    const double tol = policy.psi_tol;
    out.psi_b0 = psi_at(b0);
    if (out.psi_b0 <= epsilon) {
        out.b = b0;
        out.psi = out.psi_b0;
        out.regime = Regime::unconstrained;
        return out;
    }
    out.regime = Regime::constrained;

    const double b_max = policy.b_max.value_or(1024.0 * b0);
    double lo = b0, psi_lo = out.psi_b0;
    double hi = b0, psi_hi = out.psi_b0;
    while (psi_hi >= epsilon) {
        if (hi >= b_max) {
            std::ostringstream os;
            os << "doubling search reached b_max = " << b_max << " with psi = " << psi_hi << " >= epsilon = " << epsilon;
            throw NonBracketing(os.str(), b_max, psi_hi);
        }
        lo = hi;
        psi_lo = psi_hi;
        hi = std::min(2.0 * hi, b_max);
        psi_hi = psi_at(hi);
    }
    if (std::abs(psi_hi - epsilon) <= tol) {
        out.b = hi;
        out.psi = psi_hi;
        return out;
    }

    const double b_tol = 1e-6 * b0;
    double best_b = hi, best_psi = psi_hi;
    auto consider = [&](double b, double psi) {
        if (std::abs(psi - epsilon) < std::abs(best_psi - epsilon)) {
            best_b = b;
            best_psi = psi;
        }
    };
    bool monotone = true;
    while (hi - lo > b_tol) {
        const double mid = 0.5 * (lo + hi);
        const double psi_mid = psi_at(mid);
        consider(mid, psi_mid);
        if (psi_mid > psi_lo || psi_mid < psi_hi) {
            monotone = false;
            break;
        }
        if (std::abs(psi_mid - epsilon) <= tol) {
            out.b = mid;
            out.psi = psi_mid;
            return out;
        }
        if (psi_mid > epsilon) {
            lo = mid;
            psi_lo = psi_mid;
        } else {
            hi = mid;
            psi_hi = psi_mid;
        }
    }

    if (!monotone) {
        // Running-minimum envelope over a uniform scan of the current bracket.
        out.monotone_fallback = true;
        out.notes.push_back("psi(T, b) not monotone in the bisection bracket; used envelope scan");
        constexpr int kScan = 64;
        double envelope = psi_lo;
        double prev_b = lo, prev_env = psi_lo;
        for (int k = 1; k <= kScan; ++k) {
            const double b = lo + (hi - lo) * k / kScan;
            const double psi = k == kScan ? psi_hi : psi_at(b);
            consider(b, psi);
            envelope = std::min(envelope, psi);
            if (envelope <= epsilon) {
                const double w = (prev_env - epsilon) / (prev_env - envelope);
                const double guess = prev_b + w * (b - prev_b);
                consider(guess, psi_at(guess));
                break;
            }
            prev_b = b;
            prev_env = envelope;
        }
    }

    if (std::abs(best_psi - epsilon) <= tol) {
        out.b = best_b;
        out.psi = best_psi;
        return out;
    }
    std::ostringstream os;
    os << "constrained barrier: |psi - epsilon| = " << std::abs(best_psi - epsilon) << " > " << tol
       << " at best iterate b = " << best_b;
    throw ToleranceNotMet(os.str(), best_b, best_psi - epsilon);
}

double risk_capital(double epsilon, const SurvivalSolution& sol, double T, double psi_tol) {
    const double b = sol.grid().b;
    const double psi_b = ruin_probability(sol, b, T);
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw Unsolvable("risk_capital: epsilon must lie in (0, 1)");
    if (epsilon <= psi_b) {
        if (psi_b - epsilon <= psi_tol) return b;
        std::ostringstream os;
        os << "risk_capital: epsilon = " << epsilon << " below psi(T, b) = " << psi_b
           << "; no reserve in (0, b] attains it";
        throw Unsolvable(os.str());
    }
    auto psi = [&](double x) { return ruin_probability(sol, x, T); };
    const auto r = numerics::bisect(psi, epsilon, 0.0, b, 1e-12 * b, 1e-3 * psi_tol);
    if (!r.converged || std::abs(r.residual) > psi_tol) {
        std::ostringstream os;
        os << "risk_capital: bisection stopped at x = " << r.root << " with |psi - epsilon| = " << std::abs(r.residual);
        throw ToleranceNotMet(os.str(), r.root, r.residual);
    }
    return r.root;
}

double risk_capital(double epsilon, double b_star, double T, const ModelParams& params,
                    const Coefficients& coeffs, const GridPolicy& policy) {
    const auto sol = solve_survival(b_star, T, params, coeffs, policy.grid_for(b_star, T), History::final_only);
    return risk_capital(epsilon, sol, T, policy.psi_tol);
}

}  // namespace divopt
