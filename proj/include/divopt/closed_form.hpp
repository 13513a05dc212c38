#pragma once

#include <vector>

#include "divopt/model.hpp"

namespace divopt {

/**
 * Constants of the piecewise solution of the dividend/reinsurance HJB
 * equation. The reserve axis splits into
 *
 *   [0, x1]   retention pinned at l,      g = A (e^{alpha1 x} - e^{beta1 x})
 *   (x1, x2)  interior retention eta(x),  g = g(x2) exp(-int_x^{x2} c / (mu eta / 2 - delta))
 *   [x2, b]   full retention,             g = B e^{alpha2 x} + C e^{beta2 x}
 *   (b, inf)  affine tail,                g = x - b + g(b)
 *
 * (alpha1, beta1) solve  sigma^2 l^2 t^2 / 2 + (mu l - a l^2 - delta) t - c = 0,
 * (alpha2, beta2) solve  sigma^2 t^2 / 2 + (mu - a - delta) t - c = 0,
 * G > 1 > l > H > 0 are the roots of  2 a mu u^2 - (2 c sigma^2 + mu^2 + 4 a delta) u + 2 delta mu.
 */
struct Coefficients {
    double alpha1 = 0.0;
    double beta1 = 0.0;
    double alpha2 = 0.0;
    double beta2 = 0.0;
    double G = 0.0;
    double H = 0.0;
    double K = 0.0;
    double x1 = 0.0;
    double x2 = 0.0;
};

/// Barrier-dependent constants of the value function.
struct ValueCoeffs {
    double b = 0.0;
    double A = 0.0;
    double B = 0.0;
    double C = 0.0;
};

struct ValueDerivatives {
    double first = 0.0;
    double second = 0.0;
};

struct HjbResult {
    double residual = 0.0;   ///< max_U [sigma^2 U^2 g''/2 + (mu U - a U^2 - delta) g' - c g]
    double maximizer = 0.0;  ///< arg max over [l, 1]
};

/// Throws DomainError if a switching point cannot be formed.
Coefficients compute_coefficients(const ModelParams& params);

/// Interior retention on [x1, x2]: the u in [l, 1] solving
/// (G-u)^{G/(G-H)} (u-H)^{-H/(G-H)} = K exp(-2a (x - x1) / sigma^2).
double eta(double x, const Coefficients& coeffs, const ModelParams& params);

/// d eta / dx = (2a / sigma^2) (G - eta)(eta - H) / eta.
double eta_slope(double u, const Coefficients& coeffs, const ModelParams& params);

/// Optimal feedback retention U*(x): l below x1, eta between, 1 from x2 on.
double retention(double x, const Coefficients& coeffs, const ModelParams& params);

/// int_x^{x2} c / (mu eta(y) / 2 - delta) dy for x in [x1, x2], integrated in
/// the retention variable so no root solves are needed.
double middle_integral(double x, const Coefficients& coeffs, const ModelParams& params);

/// Same integral expressed from a lower retention level u = eta(x).
double middle_integral_from_retention(double u, const Coefficients& coeffs, const ModelParams& params);

/// Requires b >= x2.
ValueCoeffs value_coeffs(double b, const Coefficients& coeffs, const ModelParams& params);

/// g(x, b). Boundary points x1, x2 evaluate on the outer branches.
double value(double x, const ValueCoeffs& vc, const Coefficients& coeffs, const ModelParams& params);

/// (g', g'') by branch-wise differentiation; at x = b returns g''(b-).
ValueDerivatives value_derivatives(double x, const ValueCoeffs& vc, const Coefficients& coeffs,
                                   const ModelParams& params);

/// g''(b-) for the barrier b, i.e. the curvature just below the barrier.
double curvature_below_barrier(double b, const Coefficients& coeffs, const ModelParams& params);

/// Barrier b0 > x2 at which g''(b0-) = 0.
double unconstrained_barrier(const Coefficients& coeffs, const ModelParams& params);

HjbResult hjb_residual(double x, const ValueCoeffs& vc, const Coefficients& coeffs,
                       const ModelParams& params);

/// Generator maximised over U in [l, 1] for given (g, g', g'').
HjbResult maximize_generator(double g, double g1, double g2, const ModelParams& params);

/// Lower bound on the ruin probability by time T of the reserve reflected at b0:
/// 4 [1 - Phi(b0 / (l sigma sqrt T))]^2 exp(-(mu - a - delta)^2 T / sigma^2).
double ruin_lower_bound(double b0, double T, const ModelParams& params);

/**
 * Tabulated U*(x) for hot loops. eta is sampled on a uniform grid over
 * [x1, x2] and interpolated with cubic Hermite polynomials using the exact
 * slope, so the interpolation error is far below the root-solve tolerance.
 */
class RetentionTable {
public:
    RetentionTable(const Coefficients& coeffs, const ModelParams& params, int nodes = 4096);

    double operator()(double x) const noexcept {
        if (x <= x1_) return l_;
        if (x >= x2_) return 1.0;
        const double s = (x - x1_) * inv_step_;
        std::size_t i = static_cast<std::size_t>(s);
        if (i >= values_.size() - 1) i = values_.size() - 2;
        const double t = s - static_cast<double>(i);
        const double t2 = t * t;
        const double t3 = t2 * t;
        const double h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
        const double h10 = t3 - 2.0 * t2 + t;
        const double h01 = -2.0 * t3 + 3.0 * t2;
        const double h11 = t3 - t2;
        return h00 * values_[i] + h10 * step_ * slopes_[i] + h01 * values_[i + 1] +
               h11 * step_ * slopes_[i + 1];
    }

private:
    double x1_;
    double x2_;
    double l_;
    double step_;
    double inv_step_;
    std::vector<double> values_;
    std::vector<double> slopes_;
};

}  // namespace divopt
