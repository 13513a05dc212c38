#include "divopt/numerics.hpp"

#include <numbers>

namespace divopt::numerics {

void solve_tridiagonal(std::span<const double> lower, std::span<const double> diag,
                       std::span<const double> upper, std::span<const double> rhs,
                       std::span<double> out, std::vector<double>& scratch) {
    const std::size_t n = diag.size();
    scratch.resize(n);
    double beta = diag[0];
    out[0] = rhs[0] / beta;
    for (std::size_t i = 1; i < n; ++i) {
        scratch[i] = upper[i - 1] / beta;
        beta = diag[i] - lower[i] * scratch[i];
        out[i] = (rhs[i] - lower[i] * out[i - 1]) / beta;
    }
    for (std::size_t i = n - 1; i-- > 0;) out[i] -= scratch[i + 1] * out[i + 1];
}

double pairwise_sum(std::span<const double> values) {
    const std::size_t n = values.size();
    if (n <= 8) {
        double s = 0.0;
        for (double v : values) s += v;
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(values.first(half)) + pairwise_sum(values.subspan(half));
}

// erfc from libm is correctly rounded to a few ulp over the whole line, which
// keeps the relative error small in the tails where 1 - Phi underflows naively.
double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_sf(double x) { return 0.5 * std::erfc(x / std::numbers::sqrt2); }

}  // namespace divopt::numerics
