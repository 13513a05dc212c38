#pragma once

#include <optional>
#include <string>
#include <vector>

namespace divopt {

/// Where a parameter set came from before normalisation. Informational only;
/// every computation reads the normal-form fields of ModelParams.
struct Provenance {
    std::optional<double> mu1;      ///< pre-penalty drift
    std::optional<double> p;        ///< preferred reinsurance level
    std::optional<double> lambda;   ///< claim intensity
    std::optional<double> loading;  ///< safety loading of the premium
    std::optional<double> m1;       ///< E[X]
    std::optional<double> m2;       ///< E[X^2]
};

/**
 * Normal-form constants of the controlled reserve
 *
 *   dR = (mu U - a U^2 - delta) dt + sigma U dW - dL,   U in [l, 1],
 *
 * discounted at rate c.
 */
struct ModelParams {
    double mu = 0.0;     ///< drift per unit retention
    double a = 0.0;      ///< penalty rate for deviating from the preferred level
    double delta = 0.0;  ///< constant drain
    double sigma = 0.0;  ///< volatility per unit retention
    double l = 0.0;      ///< minimum admissible retention
    double c = 0.0;      ///< discount rate
    Provenance provenance{};

    double sigma2() const noexcept { return sigma * sigma; }

    /// Drift of the reserve under retention u.
    double drift(double u) const noexcept { return mu * u - a * u * u - delta; }
};

/// (mu1, p, a) form before the penalty term is expanded.
struct RawModelInputs {
    double mu1 = 0.0;
    double p = 0.0;
    double a = 0.0;
};

struct CramerLundbergInputs {
    double lambda = 0.0;
    double loading = 0.0;
    double m1 = 0.0;
    double m2 = 0.0;
};

struct DiffusionApproximation {
    double mu1;
    double sigma;
};

/// Every violated invariant, in declaration order. Empty means valid.
std::vector<std::string> check_invariants(const ModelParams& params);

/// Returns `params` unchanged if valid; throws InvariantViolation listing
/// every failed constraint otherwise.
const ModelParams& validate(const ModelParams& params);

/// mu = mu1 + 2 a p, delta = a p^2. Throws InvariantViolation if `raw` or the
/// result is invalid.
ModelParams derive_params(const RawModelInputs& raw, double sigma, double l, double c);

/// mu1 = loading * lambda * m1, sigma = sqrt(lambda * m2).
DiffusionApproximation from_cramer_lundberg(const CramerLundbergInputs& cl);

/// The parameter set used throughout the numerical examples:
/// mu = 2, sigma^2 = 50, l = 0.5, a = 0.1, delta = 0.01, c = 0.05.
ModelParams reference_params();

}  // namespace divopt
