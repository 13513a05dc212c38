#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace divopt {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// One or more parameter invariants failed. `violations()` lists all of them
/// in declaration order; `what()` names the first.
class InvariantViolation : public Error {
public:
    explicit InvariantViolation(std::vector<std::string> violations);

    const std::vector<std::string>& violations() const noexcept { return violations_; }

private:
    std::vector<std::string> violations_;
};

/// A closed-form expression left its real domain (nonpositive log argument etc.).
class DomainError : public Error {
public:
    using Error::Error;
};

/// Argument outside the interval an operation is defined on.
class OutOfRange : public Error {
public:
    using Error::Error;
};

class SingularSystem : public Error {
public:
    SingularSystem(const std::string& what, double determinant)
        : Error(what), determinant_(determinant) {}
    double determinant() const noexcept { return determinant_; }

private:
    double determinant_;
};

/// The finite-difference grid cannot resolve the advection term.
class GridTooCoarse : public Error {
public:
    using Error::Error;
};

/// A survival solve left [-1e-6, 1 + 1e-6].
class Instability : public Error {
public:
    using Error::Error;
};

/// Upward doubling for the constrained barrier ran past `b_max`.
class NonBracketing : public Error {
public:
    NonBracketing(const std::string& what, double b_max, double psi_at_b_max)
        : Error(what), b_max_(b_max), psi_at_b_max_(psi_at_b_max) {}
    double b_max() const noexcept { return b_max_; }
    double psi_at_b_max() const noexcept { return psi_at_b_max_; }

private:
    double b_max_;
    double psi_at_b_max_;
};

/// A root search stopped without meeting its tolerance.
class ToleranceNotMet : public Error {
public:
    ToleranceNotMet(const std::string& what, double best_iterate, double best_residual)
        : Error(what), best_iterate_(best_iterate), best_residual_(best_residual) {}
    double best_iterate() const noexcept { return best_iterate_; }
    double best_residual() const noexcept { return best_residual_; }

private:
    double best_iterate_;
    double best_residual_;
};

/// The requested risk level is not attainable on (0, b].
class Unsolvable : public Error {
public:
    using Error::Error;
};

/// Bad user configuration (missing/unknown keys, conflicting groups, bad ranges).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Wraps a failure from one stage of the policy pipeline.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& message, bool is_config_error)
        : Error("[" + stage + "] " + message), stage_(std::move(stage)),
          config_error_(is_config_error) {}
    const std::string& stage() const noexcept { return stage_; }
    bool is_config_error() const noexcept { return config_error_; }

private:
    std::string stage_;
    bool config_error_;
};

}  // namespace divopt
