#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace divopt::numerics {

struct BisectionResult {
    double root;
    double residual;  ///< f(root) - target
    int iterations;
    bool converged;
};

/**
 * Bisection for f(x) = target on [lo, hi] where f is monotone (either
 * direction). Stops once the bracket is narrower than `x_tol` or
 * |f - target| <= `f_tol`. A bracket that does not straddle `target`
 * returns `converged == false` with the nearer endpoint.
 */
template <class F>
BisectionResult bisect(F&& f, double target, double lo, double hi, double x_tol, double f_tol = 0.0,
                       int max_iter = 200) {
    double f_lo = f(lo) - target;
    double f_hi = f(hi) - target;
    if (f_lo == 0.0) return {lo, 0.0, 0, true};
    if (f_hi == 0.0) return {hi, 0.0, 0, true};
    if ((f_lo > 0.0) == (f_hi > 0.0)) {
        const bool lo_better = std::abs(f_lo) <= std::abs(f_hi);
        return {lo_better ? lo : hi, lo_better ? f_lo : f_hi, 0, false};
    }
    const bool increasing = f_lo < 0.0;
    double mid = 0.5 * (lo + hi);
    double f_mid = f_lo;
    int it = 0;
    for (; it < max_iter; ++it) {
        mid = 0.5 * (lo + hi);
        f_mid = f(mid) - target;
        if (std::abs(f_mid) <= f_tol || f_mid == 0.0) return {mid, f_mid, it + 1, true};
        if ((f_mid < 0.0) == increasing)
            lo = mid;
        else
            hi = mid;
        if (hi - lo <= x_tol) {
            mid = 0.5 * (lo + hi);
            return {mid, f(mid) - target, it + 1, true};
        }
    }
    return {mid, f_mid, it, false};
}

/// Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored. The system must
/// be diagonally dominant (no pivoting).
void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> rhs,
                       std::span<double> out, std::vector<double>& scratch);

/// Pairwise summation; result depends only on the order of `values`.
double pairwise_sum(std::span<const double> values);

/// Standard normal CDF and upper tail, both accurate in the far tails.
double normal_cdf(double x);
double normal_sf(double x);

}  // namespace divopt::numerics
