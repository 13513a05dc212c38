#pragma once

#include <string>
#include <vector>

#include "divopt/closed_form.hpp"
#include "divopt/model.hpp"
#include "divopt/ruin_pde.hpp"

namespace divopt {

/// Optimal barrier policy under the ruin constraint P(ruin by T | start at b) <= epsilon.
class PolicySolution {
public:
    PolicySolution(ModelParams params, Coefficients coeffs, Regime regime, double b0, double b_star,
                   double epsilon, double T, double risk_capital, double solvency, ValueCoeffs vc_star,
                   ValueCoeffs vc_b0);

    Regime regime() const noexcept { return regime_; }
    double b0() const noexcept { return b0_; }
    double b_star() const noexcept { return b_star_; }
    double epsilon() const noexcept { return epsilon_; }
    double horizon() const noexcept { return T_; }
    double risk_capital() const noexcept { return risk_capital_; }
    /// 1 - psi(T, b*).
    double solvency() const noexcept { return solvency_; }

    const ModelParams& params() const noexcept { return params_; }
    const Coefficients& coeffs() const noexcept { return coeffs_; }
    const ValueCoeffs& value_coeffs_star() const noexcept { return vc_star_; }
    const ValueCoeffs& value_coeffs_b0() const noexcept { return vc_b0_; }

    /// V(x) = g(x, b*); above b* the excess is paid out at once:
    /// V(x) = x - b* + V(b*).
    double value_at(double x) const;
    double retention_at(double x) const;

    /// Consistency checks that failed numerically (b* < b0, b* <= x2).
    std::vector<std::string> warnings;

private:
    ModelParams params_;
    Coefficients coeffs_;
    Regime regime_;
    double b0_;
    double b_star_;
    double epsilon_;
    double T_;
    double risk_capital_;
    double solvency_;
    ValueCoeffs vc_star_;
    ValueCoeffs vc_b0_;
};

/// Runs coefficients -> b0 -> constrained barrier -> value coefficients ->
/// risk capital. Failures are rethrown as StageError naming the stage.
PolicySolution solve_policy(const ModelParams& params, double epsilon, double T, const GridPolicy& grid);

/// g(x, b*) / g(x, b0); throws OutOfRange at x <= 0 where both vanish.
double value_ratio(double x, const PolicySolution& sol);

}  // namespace divopt
