#include "divopt/policy.hpp"

#include <sstream>

#include "divopt/error.hpp"

namespace divopt {

PolicySolution::PolicySolution(ModelParams params, Coefficients coeffs, Regime regime, double b0, double b_star,
                               double epsilon, double T, double risk_capital, double solvency,
                               ValueCoeffs vc_star, ValueCoeffs vc_b0)
    : params_(params), coeffs_(coeffs), regime_(regime), b0_(b0), b_star_(b_star), epsilon_(epsilon), T_(T),
      risk_capital_(risk_capital), solvency_(solvency), vc_star_(vc_star), vc_b0_(vc_b0) {}

double PolicySolution::value_at(double x) const {
    if (x > b_star_) return x - b_star_ + value(b_star_, vc_star_, coeffs_, params_);
    return value(x, vc_star_, coeffs_, params_);
}

double PolicySolution::retention_at(double x) const { return retention(x, coeffs_, params_); }

namespace {

template <class F>
auto stage(const char* name, F&& body) {
    try {
        return body();
    } catch (const InvariantViolation& e) {
        throw StageError(name, e.what(), true);
    } catch (const ConfigError& e) {
        throw StageError(name, e.what(), true);
    } catch (const Error& e) {
        throw StageError(name, e.what(), false);
    }
}

}  // namespace

PolicySolution solve_policy(const ModelParams& params, double epsilon, double T, const GridPolicy& grid) {
    if (!(epsilon > 0.0 && epsilon < 1.0)) throw StageError("input", "epsilon must lie in (0, 1)", true);
    if (!(T > 0.0)) throw StageError("input", "horizon T must be > 0", true);

    const auto coeffs = stage("coefficients", [&] { return compute_coefficients(params); });
    const double b0 = stage("unconstrained_barrier", [&] { return unconstrained_barrier(coeffs, params); });
    const auto barrier =
        stage("constrained_barrier", [&] { return constrained_barrier(epsilon, T, b0, params, coeffs, grid); });
    const auto vc_star = stage("value_coeffs", [&] { return value_coeffs(barrier.b, coeffs, params); });
    const auto vc_b0 = barrier.b == b0 ? vc_star : stage("value_coeffs", [&] { return value_coeffs(b0, coeffs, params); });

    const auto sol = stage("risk_capital", [&] {
        return solve_survival(barrier.b, T, params, coeffs, grid.grid_for(barrier.b, T), History::final_only);
    });
    const double psi_star = ruin_probability(sol, barrier.b, T);
    // In the unconstrained regime psi(T, b0) may sit well below epsilon; the
    // risk capital is then the reserve at which psi reaches epsilon.
    const double capital = stage("risk_capital", [&] { return risk_capital(epsilon, sol, T, grid.psi_tol); });

    PolicySolution out(params, coeffs, barrier.regime, b0, barrier.b, epsilon, T, capital, 1.0 - psi_star, vc_star,
                       vc_b0);
    out.warnings = barrier.notes;
    if (!(barrier.b >= b0)) {
        std::ostringstream os;
        os << "b* = " << barrier.b << " below b0 = " << b0;
        out.warnings.push_back(os.str());
    }
    if (!(barrier.b > coeffs.x2)) {
        std::ostringstream os;
        os << "b* = " << barrier.b << " not above x2 = " << coeffs.x2;
        out.warnings.push_back(os.str());
    }
    return out;
}

double value_ratio(double x, const PolicySolution& sol) {
    if (!(x > 0.0)) throw OutOfRange("value_ratio undefined at x <= 0 (both values vanish)");
    const auto& k = sol.coeffs();
    const auto& p = sol.params();
    if (sol.regime() == Regime::unconstrained) return 1.0;
    return value(x, sol.value_coeffs_star(), k, p) / value(x, sol.value_coeffs_b0(), k, p);
}

}  // namespace divopt
