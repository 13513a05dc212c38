#include "divopt/closed_form.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "divopt/error.hpp"
#include "divopt/numerics.hpp"

namespace divopt {

namespace {

constexpr double kEtaTol = 1e-12;
constexpr double kQuadRelTol = 1e-10;

struct QuadraticRoots {
    double positive;
    double negative;
};

// Roots of q t^2 / 2 + k t - c = 0 with q, c > 0. The positive root is taken
// from the product of roots to avoid cancellation when k^2 >> 2 q c.
QuadraticRoots characteristic_roots(double q, double k, double c) {
    const double s = std::sqrt(k * k + 2.0 * c * q);
    if (k >= 0.0) {
        const double neg = (-k - s) / q;
        return {2.0 * c / (k + s), neg};
    }
    const double pos = (-k + s) / q;
    return {pos, -2.0 * c / (s - k)};
}

// Log of the left side of the implicit retention identity; strictly
// decreasing in u on (H, G).
double eta_log_form(double u, const Coefficients& k) {
    const double gh = k.G - k.H;
    return k.G / gh * std::log(k.G - u) - k.H / gh * std::log(u - k.H);
}

double v_smooth_fit(double t, const ModelParams& p) { return -p.c + (0.5 * p.mu - p.delta) * t; }

double upper_branch(double x, const ValueCoeffs& vc, const Coefficients& k) {
    return vc.B * std::exp(k.alpha2 * x) + vc.C * std::exp(k.beta2 * x);
}

}  // namespace

Coefficients compute_coefficients(const ModelParams& params) {
    validate(params);
    const auto& p = params;
    const double s2 = p.sigma2();
    Coefficients k;

    const auto r1 = characteristic_roots(s2 * p.l * p.l, p.drift(p.l), p.c);
    k.alpha1 = r1.positive;
    k.beta1 = r1.negative;
    const auto r2 = characteristic_roots(s2, p.drift(1.0), p.c);
    k.alpha2 = r2.positive;
    k.beta2 = r2.negative;

    const double S = 2.0 * p.c * s2 + p.mu * p.mu + 4.0 * p.a * p.delta;
    const double disc = S * S - 16.0 * p.a * p.mu * p.mu * p.delta;
    if (!(disc >= 0.0)) throw DomainError("negative discriminant for (G, H)");
    k.G = (S + std::sqrt(disc)) / (4.0 * p.a * p.mu);
    k.H = p.delta / (p.a * k.G);

    const double half_drift_l = 0.5 * p.mu * p.l - p.delta;
    const double num = p.c - k.beta1 * half_drift_l;
    const double den = p.c - k.alpha1 * half_drift_l;
    if (!(num > 0.0 && den > 0.0 && num / den > 1.0)) {
        std::ostringstream os;
        os << "x1 log argument (" << num << ")/(" << den << ") not > 1";
        throw DomainError(os.str());
    }
    k.x1 = std::log(num / den) / (k.alpha1 - k.beta1);

    if (!(k.G > 1.0 && k.H < p.l)) {
        std::ostringstream os;
        os << "x2 log arguments invalid: G = " << k.G << ", H = " << k.H;
        throw DomainError(os.str());
    }
    const double gh = k.G - k.H;
    const double width = k.G / gh * std::log((k.G - p.l) / (k.G - 1.0)) -
                         k.H / gh * std::log((p.l - k.H) / (1.0 - k.H));
    k.x2 = k.x1 + s2 / (2.0 * p.a) * width;
    k.K = std::exp(eta_log_form(p.l, k));
    return k;
}

double eta(double x, const Coefficients& coeffs, const ModelParams& params) {
    if (!(x >= coeffs.x1 && x <= coeffs.x2)) {
        std::ostringstream os;
        os << "eta: x = " << x << " outside [" << coeffs.x1 << ", " << coeffs.x2 << "]";
        throw OutOfRange(os.str());
    }
    if (x == coeffs.x1) return params.l;
    if (x == coeffs.x2) return 1.0;
    const double target =
        eta_log_form(params.l, coeffs) - 2.0 * params.a / params.sigma2() * (x - coeffs.x1);
    auto f = [&](double u) { return eta_log_form(u, coeffs); };
    return numerics::bisect(f, target, params.l, 1.0, kEtaTol).root;
}

double eta_slope(double u, const Coefficients& coeffs, const ModelParams& params) {
    return 2.0 * params.a / params.sigma2() * (coeffs.G - u) * (u - coeffs.H) / u;
}

double retention(double x, const Coefficients& coeffs, const ModelParams& params) {
    if (x <= coeffs.x1) return params.l;
    if (x >= coeffs.x2) return 1.0;
    return eta(x, coeffs, params);
}

double middle_integral_from_retention(double u, const Coefficients& coeffs, const ModelParams& params) {
    if (!(u >= params.l && u <= 1.0)) throw OutOfRange("middle_integral: retention outside [l, 1]");
    if (u >= 1.0) return 0.0;
    const double G = coeffs.G;
    const double H = coeffs.H;
    const double jac = params.sigma2() / (2.0 * params.a) / (G - H);
    auto integrand = [&](double t) {
        return params.c / (0.5 * params.mu * t - params.delta) * jac * (G / (G - t) + H / (t - H));
    };
    using Quad = boost::math::quadrature::gauss_kronrod<double, 31>;
    return Quad::integrate(integrand, u, 1.0, 15, kQuadRelTol);
}

double middle_integral(double x, const Coefficients& coeffs, const ModelParams& params) {
    return middle_integral_from_retention(eta(x, coeffs, params), coeffs, params);
}

ValueCoeffs value_coeffs(double b, const Coefficients& k, const ModelParams& params) {
    if (!(b >= k.x2)) {
        std::ostringstream os;
        os << "value_coeffs: barrier " << b << " below x2 = " << k.x2;
        throw OutOfRange(os.str());
    }
    // Rows: c g(x2) = (mu/2 - delta) g'(x2) and g'(b) = 1.
    const double m11 = v_smooth_fit(k.alpha2, params) * std::exp(k.alpha2 * k.x2);
    const double m12 = v_smooth_fit(k.beta2, params) * std::exp(k.beta2 * k.x2);
    const double m21 = k.alpha2 * std::exp(k.alpha2 * b);
    const double m22 = k.beta2 * std::exp(k.beta2 * b);
    const double det = m11 * m22 - m12 * m21;
    if (!std::isfinite(det) || det == 0.0) throw SingularSystem("value_coeffs: singular smooth-fit system", det);

    ValueCoeffs vc;
    vc.b = b;
    vc.B = -m12 / det;
    vc.C = m11 / det;
    const double g_x2 = upper_branch(k.x2, vc, k);
    const double lower_at_x1 = std::exp(k.alpha1 * k.x1) - std::exp(k.beta1 * k.x1);
    vc.A = g_x2 * std::exp(-middle_integral_from_retention(params.l, k, params)) / lower_at_x1;
    return vc;
}

double value(double x, const ValueCoeffs& vc, const Coefficients& k, const ModelParams& params) {
    if (x <= 0.0) return 0.0;
    if (x <= k.x1) return vc.A * (std::exp(k.alpha1 * x) - std::exp(k.beta1 * x));
    if (x < k.x2) return upper_branch(k.x2, vc, k) * std::exp(-middle_integral(x, k, params));
    if (x <= vc.b) return upper_branch(x, vc, k);
    return x - vc.b + upper_branch(vc.b, vc, k);
}

ValueDerivatives value_derivatives(double x, const ValueCoeffs& vc, const Coefficients& k,
                                   const ModelParams& params) {
    if (x <= k.x1) {
        const double ea = std::exp(k.alpha1 * x);
        const double eb = std::exp(k.beta1 * x);
        return {vc.A * (k.alpha1 * ea - k.beta1 * eb),
                vc.A * (k.alpha1 * k.alpha1 * ea - k.beta1 * k.beta1 * eb)};
    }
    if (x < k.x2) {
        // g = g(x2) exp(-I(x)) with I' = -w, w = c / (mu eta / 2 - delta).
        const double u = eta(x, k, params);
        const double g = upper_branch(k.x2, vc, k) * std::exp(-middle_integral_from_retention(u, k, params));
        const double denom = 0.5 * params.mu * u - params.delta;
        const double w = params.c / denom;
        const double w_prime = -params.c * 0.5 * params.mu * eta_slope(u, k, params) / (denom * denom);
        const double g1 = g * w;
        return {g1, g1 * w + g * w_prime};
    }
    if (x <= vc.b) {
        const double ea = std::exp(k.alpha2 * x);
        const double eb = std::exp(k.beta2 * x);
        return {vc.B * k.alpha2 * ea + vc.C * k.beta2 * eb,
                vc.B * k.alpha2 * k.alpha2 * ea + vc.C * k.beta2 * k.beta2 * eb};
    }
    return {1.0, 0.0};
}

double curvature_below_barrier(double b, const Coefficients& k, const ModelParams& params) {
    const double va = v_smooth_fit(k.alpha2, params);
    const double vb = v_smooth_fit(k.beta2, params);
    const double e1 = std::exp(k.beta2 * k.x2 + k.alpha2 * b);
    const double e2 = std::exp(k.alpha2 * k.x2 + k.beta2 * b);
    const double num = k.alpha2 * k.alpha2 * vb * e1 - k.beta2 * k.beta2 * va * e2;
    const double den = vb * e1 * k.alpha2 - va * e2 * k.beta2;
    return num / den;
}

double unconstrained_barrier(const Coefficients& k, const ModelParams& params) {
    const double va = v_smooth_fit(k.alpha2, params);
    const double vb = v_smooth_fit(k.beta2, params);
    const double arg = k.beta2 * k.beta2 * va / (k.alpha2 * k.alpha2 * vb);
    if (!(arg > 0.0) || !std::isfinite(arg)) {
        std::ostringstream os;
        os << "unconstrained barrier: log argument " << arg << " not positive";
        throw DomainError(os.str());
    }
    const double b0 = k.x2 + std::log(arg) / (k.alpha2 - k.beta2);
    if (!(b0 > k.x2)) {
        std::ostringstream os;
        os << "unconstrained barrier " << b0 << " not above x2 = " << k.x2;
        throw DomainError(os.str());
    }
    const double curvature = value_derivatives(b0, value_coeffs(b0, k, params), k, params).second;
    if (!(std::abs(curvature) <= 1e-9)) {
        std::ostringstream os;
        os << "unconstrained barrier: g''(b0-) = " << curvature << " not zero";
        throw DomainError(os.str());
    }
    return b0;
}

HjbResult maximize_generator(double g, double g1, double g2, const ModelParams& p) {
    const double quad = 0.5 * p.sigma2() * g2 - p.a * g1;
    const double lin = p.mu * g1;
    const double cst = -p.delta * g1 - p.c * g;
    auto at = [&](double u) { return (quad * u + lin) * u + cst; };
    double u;
    if (quad < 0.0) {
        u = std::clamp(-lin / (2.0 * quad), p.l, 1.0);
    } else {
        u = at(1.0) >= at(p.l) ? 1.0 : p.l;
    }
    return {at(u), u};
}

HjbResult hjb_residual(double x, const ValueCoeffs& vc, const Coefficients& k, const ModelParams& params) {
    const auto d = value_derivatives(x, vc, k, params);
    return maximize_generator(value(x, vc, k, params), d.first, d.second, params);
}

double ruin_lower_bound(double b0, double T, const ModelParams& params) {
    if (!(b0 >= 0.0)) throw OutOfRange("ruin_lower_bound: b0 must be >= 0");
    if (!(T > 0.0)) throw OutOfRange("ruin_lower_bound: T must be > 0");
    const double tail = numerics::normal_sf(b0 / (params.l * params.sigma * std::sqrt(T)));
    const double k = params.drift(1.0);
    const double log_bound = std::log(4.0) + 2.0 * std::log(tail) - k * k * T / params.sigma2();
    return std::exp(log_bound);
}

RetentionTable::RetentionTable(const Coefficients& coeffs, const ModelParams& params, int nodes)
    : x1_(coeffs.x1), x2_(coeffs.x2), l_(params.l) {
    nodes = std::max(nodes, 2);
    step_ = (x2_ - x1_) / (nodes - 1);
    inv_step_ = step_ > 0.0 ? 1.0 / step_ : 0.0;
    values_.resize(static_cast<std::size_t>(nodes));
    slopes_.resize(values_.size());
    for (int i = 0; i < nodes; ++i) {
        const double x = i == nodes - 1 ? x2_ : x1_ + i * step_;
        const double u = eta(x, coeffs, params);
        values_[static_cast<std::size_t>(i)] = u;
        slopes_[static_cast<std::size_t>(i)] = eta_slope(u, coeffs, params);
    }
}

}  // namespace divopt
