#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "divopt/closed_form.hpp"
#include "divopt/error.hpp"
#include "divopt/ruin_pde.hpp"
#include "support.hpp"

using namespace divopt;

namespace {

struct Fixture {
    ModelParams p = reference_params();
    Coefficients k = compute_coefficients(p);
    double b0 = unconstrained_barrier(k, p);
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "grid nodes sit on the switch points") {
    for (int ny : {64, 100, 800, 1601}) {
        PdeGrid g{ny, 100, 40.0, 10.0};
        const auto nodes = spatial_nodes(g, k);
        REQUIRE(nodes.size() == static_cast<std::size_t>(ny + 1));
        CHECK(nodes.front() == 0.0);
        CHECK(nodes.back() == 40.0);
        CHECK(std::count(nodes.begin(), nodes.end(), k.x1) == 1);
        CHECK(std::count(nodes.begin(), nodes.end(), k.x2) == 1);
        for (std::size_t i = 1; i < nodes.size(); ++i) {
            CHECK(nodes[i] > nodes[i - 1]);
            // Cells stay within a factor two of the nominal spacing.
            CHECK(nodes[i] - nodes[i - 1] < 2.0 * g.dy());
            CHECK(nodes[i] - nodes[i - 1] > 0.5 * g.dy());
        }
    }
}

TEST_CASE_FIXTURE(Fixture, "survival solution is a probability, monotone in reserve and time") {
    const double b = 30.0;
    const double T = 20.0;
    GridPolicy gp;
    gp.ny = 400;
    const auto sol = solve_survival(b, T, p, k, gp.grid_for(b, T));
    REQUIRE(sol.slices() == sol.grid().nt + 1);
    for (int j = 0; j < sol.slices(); ++j) {
        const auto psi = sol.slice(j);
        CHECK(psi[0] == 1.0);
        for (double v : psi) {
            CHECK(v >= -1e-6);
            CHECK(v <= 1.0 + 1e-6);
        }
    }
    const auto last = sol.final_slice();
    for (std::size_t i = 1; i < last.size(); ++i) CHECK(last[i] <= last[i - 1] + 1e-12);
    double prev = 0.0;
    for (int j = 1; j < sol.slices(); ++j) {
        const double psi = sol.slice(j)[sol.nodes().size() - 1];
        CHECK(psi >= prev - 1e-12);
        prev = psi;
    }
    CHECK(ruin_probability(sol, 0.0, T) == 1.0);
    CHECK(sol.survival(0.0, b) == 1.0);
    CHECK_THROWS_AS(sol.survival(T + 1.0, 1.0), OutOfRange);
    CHECK_THROWS_AS(sol.survival(T, b + 1.0), OutOfRange);
    CHECK_THROWS_AS(sol.survival(0.37 * sol.grid().dt(), 1.0), OutOfRange);
}

TEST_CASE_FIXTURE(Fixture, "final-only history keeps the same last slice") {
    GridPolicy gp;
    gp.ny = 200;
    const auto full = solve_survival(25.0, 5.0, p, k, gp.grid_for(25.0, 5.0), History::full);
    const auto last = solve_survival(25.0, 5.0, p, k, gp.grid_for(25.0, 5.0), History::final_only);
    REQUIRE(last.slices() == 2);
    const auto a = full.final_slice();
    const auto b = last.final_slice();
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE_FIXTURE(Fixture, "Crank-Nicolson agrees with an explicit scheme") {
    GridPolicy gp;
    for (double b : {15.0, 25.0, 40.0}) {
        CAPTURE(b);
        const double explicit_psi = 1.0 - testing::explicit_survival_at_barrier(b, 10.0, p, k, 400);
        CHECK(std::abs(ruin_at_barrier(b, 10.0, p, k, gp) - explicit_psi) < 1e-5);
    }
}

TEST_CASE_FIXTURE(Fixture, "second-order convergence at nodes shared by every grid") {
    const double b = 2.0 * b0;
    const double T = 10.0;
    // dt halves with dy: nt = T / dy = ny * T / b ~ ny / 5.
    auto solve = [&](int ny) {
        GridPolicy gp;
        gp.ny = ny;
        gp.nt = ny / 5;
        return solve_survival(b, T, p, k, gp.grid_for(b, T), History::final_only);
    };
    const auto coarse = solve(400), mid = solve(800), fine = solve(1600);
    for (double x : {k.x1, k.x2, b}) {
        // Three-grid ratio (u_h - u_{h/2}) / (u_{h/2} - u_{h/4}) = 2^q.
        const double d1 = coarse.survival(T, x) - mid.survival(T, x);
        const double d2 = mid.survival(T, x) - fine.survival(T, x);
        const double order = std::log2(d1 / d2);
        CAPTURE(x);
        CHECK(order > 1.8);
    }
}

TEST_CASE_FIXTURE(Fixture, "coarse grids that cannot resolve advection are refused") {
    PdeGrid g{64, 64, 5e4, 10.0};
    CHECK_THROWS_AS(solve_survival(5e4, 10.0, p, k, g), GridTooCoarse);
    CHECK_THROWS_AS(validate_grid(PdeGrid{32, 100, 10.0, 1.0}), OutOfRange);
    CHECK_THROWS_AS(validate_grid(PdeGrid{100, 10, 10.0, 1.0}), OutOfRange);
    CHECK_THROWS_AS(solve_survival(k.x2 - 1.0, 1.0, p, k, PdeGrid{100, 100, k.x2 - 1.0, 1.0}), OutOfRange);
}

TEST_CASE_FIXTURE(Fixture, "ruin probability dominates the analytic lower bound") {
    GridPolicy gp;
    for (double T : {1.0, 10.0, 100.0}) CHECK(ruin_at_barrier(b0, T, p, k, gp) >= ruin_lower_bound(b0, T, p));
}

TEST_CASE_FIXTURE(Fixture, "constrained barrier meets the risk level") {
    GridPolicy gp;
    gp.ny = 400;
    const auto r = constrained_barrier(0.05, 500.0, b0, p, k, gp);
    CHECK(r.regime == Regime::constrained);
    CHECK(r.b > b0);
    CHECK(std::abs(r.psi - 0.05) <= gp.psi_tol);
    CHECK(std::abs(ruin_at_barrier(r.b, 500.0, p, k, gp) - 0.05) <= gp.psi_tol);
    CHECK(r.psi_b0 > 0.05);

    const auto loose = constrained_barrier(0.5, 1.0, b0, p, k, gp);
    CHECK(loose.regime == Regime::unconstrained);
    CHECK(loose.b == b0);
    CHECK(loose.psi <= 0.5);
}

TEST_CASE_FIXTURE(Fixture, "barrier search reports a cap it cannot get past") {
    GridPolicy gp;
    gp.ny = 200;
    gp.b_max = 40.0;
    try {
        constrained_barrier(0.05, 500.0, b0, p, k, gp);
        FAIL("expected NonBracketing");
    } catch (const NonBracketing& e) {
        CHECK(e.b_max() == 40.0);
        CHECK(e.psi_at_b_max() > 0.05);
    }
}

TEST_CASE_FIXTURE(Fixture, "risk capital solves psi(T, x) = epsilon") {
    GridPolicy gp;
    const double T = 10.0;
    const double b = 40.0;
    const auto sol = solve_survival(b, T, p, k, gp.grid_for(b, T), History::final_only);
    for (double eps : {0.05, 0.2, 0.5}) {
        const double x = risk_capital(eps, sol, T, gp.psi_tol);
        CHECK(x > 0.0);
        CHECK(x <= b);
        CHECK(std::abs(ruin_probability(sol, x, T) - eps) <= gp.psi_tol);
    }
    const double psi_b = ruin_probability(sol, b, T);
    CHECK(risk_capital(psi_b, sol, T, gp.psi_tol) == b);
    CHECK_THROWS_AS(risk_capital(psi_b - 0.01, sol, T, gp.psi_tol), Unsolvable);
    CHECK_THROWS_AS(risk_capital(0.0, sol, T, gp.psi_tol), Unsolvable);
    CHECK_THROWS_AS(risk_capital(1.0, sol, T, gp.psi_tol), Unsolvable);
    CHECK(risk_capital(0.2, b, T, p, k, gp) == doctest::Approx(risk_capital(0.2, sol, T, gp.psi_tol)).epsilon(1e-12));
}

TEST_CASE_FIXTURE(Fixture, "ruin probability vanishes as the barrier grows") {
    GridPolicy gp;
    gp.ny = 400;
    double prev = 1.0;
    int doublings = 0;
    for (double b = b0; prev >= 1e-3 && doublings < 8; b *= 2.0, ++doublings) {
        const double psi = ruin_at_barrier(b, 10.0, p, k, gp);
        CHECK(psi < prev);
        prev = psi;
    }
    CHECK(prev < 1e-3);
}

TEST_CASE_FIXTURE(Fixture, "ruin probability at the barrier falls as the barrier rises") {
    GridPolicy gp;
    gp.ny = 400;
    const double T = 500.0;
    const double lo = k.x2 + 1.0;
    const double hi = 4.0 * b0;
    double prev_psi = INFINITY, prev_phi = -INFINITY;
    for (int i = 0; i <= 40; ++i) {
        const double b = lo + (hi - lo) * i / 40;
        const auto sol = solve_survival(b, T, p, k, gp.grid_for(b, T), History::final_only);
        const double psi = sol.ruin(T, b);
        const double phi = sol.survival(T, b);
        CAPTURE(b);
        // Near psi = 1 only the survival solve can resolve the change.
        CHECK((psi < prev_psi || phi > prev_phi));
        CHECK(psi <= prev_psi + 1e-10);
        CHECK(phi >= prev_phi - 1e-10);
        CHECK(std::abs(psi + phi - 1.0) < 1e-9);  // rounding accumulated over the time steps
        prev_psi = psi;
        prev_phi = phi;
    }
}

TEST_CASE_FIXTURE(Fixture, "survival and ruin solves keep their own small values") {
    GridPolicy gp;
    gp.ny = 400;
    const auto early = solve_survival(60.0, 1.0, p, k, gp.grid_for(60.0, 1.0), History::final_only);
    CHECK(early.survival(1.0, 60.0) == 1.0);
    CHECK(early.ruin(1.0, 60.0) > 0.0);
    CHECK(early.ruin(1.0, 60.0) < 1e-20);
    const auto late = solve_survival(15.0, 500.0, p, k, gp.grid_for(15.0, 500.0), History::final_only);
    CHECK(std::abs(late.ruin(500.0, 15.0) - 1.0) < 1e-10);
    CHECK(late.survival(500.0, 15.0) > 0.0);
    CHECK(late.survival(500.0, 15.0) < 1e-12);
}
