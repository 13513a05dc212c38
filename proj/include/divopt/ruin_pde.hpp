#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "divopt/closed_form.hpp"
#include "divopt/model.hpp"

namespace divopt {

/**
 * Discretisation of [0, T] x [0, b]. `ny` counts spatial cells at nominal
 * spacing dy = b / ny; the node set is piecewise uniform with nodes placed
 * exactly on the retention switch points x1 and x2 (see `spatial_nodes`).
 */
struct PdeGrid {
    int ny = 800;
    int nt = 0;
    double b = 0.0;
    double T = 0.0;

    double dy() const noexcept { return b / ny; }
    double dt() const noexcept { return T / nt; }
};

/// Throws OutOfRange unless ny >= 64, nt >= 64 and b, T > 0.
void validate_grid(const PdeGrid& grid);

/// Node positions for `grid`: [0, x1] , [x1, x2], [x2, b] each split into
/// equal cells whose counts are proportional to the segment lengths.
std::vector<double> spatial_nodes(const PdeGrid& grid, const Coefficients& coeffs);

/// Numeric controls shared by every survival solve of a pipeline run.
struct GridPolicy {
    int ny = 800;
    std::optional<int> nt;  ///< default: max(64, ceil(T / dy))
    std::optional<double> b_max;  ///< default: 1024 * b0
    double psi_tol = 1e-4;

    PdeGrid grid_for(double b, double T) const;
};

/**
 * psi(t_j, y_i) = P(ruin by t_j | R_0 = y_i) under the barrier-b policy,
 * stored for the full-step times t_j = j * dt (j = 0..nt) unless only the
 * final slice was requested. The survival probability phi = 1 - psi is
 * stored alongside from its own solve, so tiny values of either survive.
 */
class SurvivalSolution {
public:
    SurvivalSolution(PdeGrid grid, std::vector<double> nodes, std::vector<double> psi, std::vector<double> phi,
                     int stored_slices, ModelParams params, Coefficients coeffs);

    const PdeGrid& grid() const noexcept { return grid_; }
    const std::vector<double>& nodes() const noexcept { return nodes_; }
    const ModelParams& params() const noexcept { return params_; }
    const Coefficients& coeffs() const noexcept { return coeffs_; }

    int slices() const noexcept { return slices_; }
    /// Time of stored slice `j`.
    double slice_time(int j) const;
    /// Ruin probabilities of stored slice `j` over `nodes()`.
    std::span<const double> slice(int j) const;
    std::span<const double> final_slice() const { return slice(slices_ - 1); }

    /// psi(t, x): exact slice lookup in t, linear interpolation in x.
    double ruin(double t, double x) const;
    /// phi(t, x), same lookup.
    double survival(double t, double x) const;

private:
    double interpolate(const std::vector<double>& store, double t, double x) const;

    PdeGrid grid_;
    std::vector<double> nodes_;
    std::vector<double> psi_;
    std::vector<double> phi_;
    int slices_;
    ModelParams params_;
    Coefficients coeffs_;
};

enum class History { full, final_only };

/**
 * Crank-Nicolson solve of
 *
 *   psi_t = sigma^2 U*(y)^2 / 2 psi_yy + (mu U*(y) - a U*(y)^2 - delta) psi_y,
 *   psi(0, y) = 0 (y > 0), psi(t, 0) = 1, psi_y(t, b) = 0,
 *
 * with four implicit-Euler half steps at the start to damp the corner where
 * the initial and boundary data disagree.
 */
SurvivalSolution solve_survival(double b, double T, const ModelParams& params, const Coefficients& coeffs,
                                const PdeGrid& grid, History history = History::full);

/// psi(T, x) clamped to [0, 1].
double ruin_probability(const SurvivalSolution& sol, double x, double T);

/// psi(T, b) for initial reserve b under the barrier-b policy.
double ruin_at_barrier(double b, double T, const ModelParams& params, const Coefficients& coeffs,
                       const GridPolicy& policy);

enum class Regime { unconstrained, constrained };

std::string to_string(Regime regime);

struct BarrierResult {
    double b = 0.0;
    Regime regime = Regime::unconstrained;
    double psi = 0.0;      ///< psi(T, b) at the returned barrier
    double psi_b0 = 0.0;   ///< psi(T, b0)
    int solves = 0;
    bool monotone_fallback = false;
    std::vector<std::string> notes;
};

/// Smallest barrier b >= b0 whose ruin probability by T (started at b) is at
/// most epsilon; b0 itself when that already holds.
BarrierResult constrained_barrier(double epsilon, double T, double b0, const ModelParams& params,
                                  const Coefficients& coeffs, const GridPolicy& policy);

/// The x in (0, b] with psi(T, x) = epsilon on the given solution.
double risk_capital(double epsilon, const SurvivalSolution& sol, double T, double psi_tol = 1e-4);

/// Convenience overload that solves the survival PDE at `b_star` first.
double risk_capital(double epsilon, double b_star, double T, const ModelParams& params,
                    const Coefficients& coeffs, const GridPolicy& policy);

}  // namespace divopt
