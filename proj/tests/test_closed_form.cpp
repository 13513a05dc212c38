#include <doctest.h>

#include <cmath>
#include <vector>

#include "divopt/closed_form.hpp"
#include "divopt/error.hpp"
#include "divopt/numerics.hpp"
#include "support.hpp"

using namespace divopt;
using divopt::testing::rel_err;

namespace {

// Reference values computed with 40-digit arithmetic.
constexpr double kAlpha1 = 0.040951766808626268634;
constexpr double kBeta1 = -0.19535176680862626863;
constexpr double kAlpha2 = 0.020756297697173444164;
constexpr double kBeta2 = -0.096356297697173444164;
constexpr double kG = 22.505556652895002422;
constexpr double kH = 0.0044433471049975784256;
constexpr double kX1 = 6.697828181593054327;
constexpr double kX2 = 12.479314488937018813;
constexpr double kK = 22.0220468675637249;
constexpr double kB0 = 25.062968486306127413;
constexpr double kMidX1 = 0.4061729013374125799;

struct Fixture {
    ModelParams p = reference_params();
    Coefficients k = compute_coefficients(p);
};

}  // namespace

TEST_CASE_FIXTURE(Fixture, "coefficients at the reference parameters") {
    CHECK(rel_err(k.alpha1, kAlpha1) < 1e-13);
    CHECK(rel_err(k.beta1, kBeta1) < 1e-13);
    CHECK(rel_err(k.alpha2, kAlpha2) < 1e-13);
    CHECK(rel_err(k.beta2, kBeta2) < 1e-13);
    CHECK(rel_err(k.G, kG) < 1e-13);
    CHECK(rel_err(k.H, kH) < 1e-12);
    CHECK(rel_err(k.x1, kX1) < 1e-12);
    CHECK(rel_err(k.x2, kX2) < 1e-12);
    CHECK(rel_err(k.K, kK) < 1e-12);
    CHECK(rel_err(unconstrained_barrier(k, p), kB0) < 1e-12);
}

TEST_CASE_FIXTURE(Fixture, "interior retention at sample points") {
    CHECK(rel_err(eta(8.0, k, p), 0.61340884941777075963) < 1e-11);
    CHECK(rel_err(eta(10.0, k, p), 0.78673904656203376172) < 1e-11);
    CHECK(rel_err(eta(12.0, k, p), 0.95891618284791912796) < 1e-11);
    CHECK(eta(k.x1, k, p) == p.l);
    CHECK(eta(k.x2, k, p) == 1.0);
    CHECK_THROWS_AS(eta(k.x1 - 1e-3, k, p), OutOfRange);
    CHECK_THROWS_AS(eta(k.x2 + 1e-3, k, p), OutOfRange);
}

TEST_CASE_FIXTURE(Fixture, "middle integral") {
    CHECK(rel_err(middle_integral(k.x1, k, p), kMidX1) < 1e-11);
    CHECK(rel_err(middle_integral(8.0, k, p), 0.28665748260197596158) < 1e-10);
    CHECK(rel_err(middle_integral(10.0, k, p), 0.14099574629311867452) < 1e-10);
    CHECK(rel_err(middle_integral(12.0, k, p), 0.024724293831518033065) < 1e-10);
    CHECK(middle_integral(k.x2, k, p) == 0.0);
}

TEST_CASE_FIXTURE(Fixture, "value coefficients at b0 and at b = 100") {
    const double b0 = unconstrained_barrier(k, p);
    const auto v0 = value_coeffs(b0, k, p);
    CHECK(rel_err(v0.A, 15.5141806631218) < 1e-11);
    CHECK(rel_err(v0.B, 23.5613597014408) < 1e-11);
    CHECK(rel_err(v0.C, -20.5814720177894) < 1e-11);
    CHECK(rel_err(value(3.0, v0, k, p), 8.9082818873855576964) < 1e-11);
    CHECK(rel_err(value(9.0, v0, k, p), 19.747718049238143006) < 1e-11);
    CHECK(rel_err(value(20.0, v0, k, p), 32.689166386439845713) < 1e-11);
    // With g''(b0) = 0 the equation at b0 leaves c g = mu - a - delta.
    CHECK(rel_err(value(b0, v0, k, p), (p.mu - p.a - p.delta) / p.c) < 1e-11);

    const auto v = value_coeffs(100.0, k, p);
    CHECK(rel_err(v.A, 3.98042647232778) < 1e-11);
    CHECK(rel_err(v.B, 6.04506689177491) < 1e-11);
    CHECK(rel_err(v.C, -5.28052610949793) < 1e-11);
    CHECK(rel_err(value(3.0, v, k, p), 2.2855709764805918849) < 1e-11);
    CHECK(rel_err(value(9.0, v, k, p), 5.0666123721312771938) < 1e-11);
    CHECK(rel_err(value(20.0, v, k, p), 8.38696068251) < 1e-10);
    CHECK(rel_err(value(60.0, v, k, p), 20.985769964680088361) < 1e-11);
    CHECK(rel_err(value(100.0, v, k, p), 48.1762015611) < 1e-10);
}

TEST_CASE("algebraic identities on fuzzed parameters") {
    testing::ParamFuzzer fuzz(2024);
    for (int n = 0; n < 200; ++n) {
        const auto p = fuzz.next();
        CAPTURE(p.mu);
        CAPTURE(p.a);
        CAPTURE(p.delta);
        CAPTURE(p.sigma);
        CAPTURE(p.l);
        CAPTURE(p.c);
        const auto k = compute_coefficients(p);
        const double s2 = p.sigma2();
        CHECK(rel_err(k.G * k.H, p.delta / p.a) < 1e-12);
        CHECK(rel_err(2 * p.a * p.mu * (k.G + k.H), 2 * p.c * s2 + p.mu * p.mu + 4 * p.a * p.delta) < 1e-12);
        const double k1 = p.mu * p.l - p.a * p.l * p.l - p.delta;
        const double k2 = p.mu - p.a - p.delta;
        for (double t : {k.alpha1, k.beta1}) {
            const double scale = 0.5 * s2 * p.l * p.l * t * t + std::abs(k1 * t) + p.c;
            CHECK(std::abs(0.5 * s2 * p.l * p.l * t * t + k1 * t - p.c) / scale < 1e-12);
        }
        for (double t : {k.alpha2, k.beta2}) {
            const double scale = 0.5 * s2 * t * t + std::abs(k2 * t) + p.c;
            CHECK(std::abs(0.5 * s2 * t * t + k2 * t - p.c) / scale < 1e-12);
        }
        CHECK(k.G > 1.0);
        CHECK(k.H > 0.0);
        CHECK(k.H < p.l);
        const double b0 = unconstrained_barrier(k, p);
        CHECK(k.x1 > 0.0);
        CHECK(k.x1 < k.x2);
        CHECK(k.x2 < b0);
        CHECK(std::abs(eta(k.x1, k, p) - p.l) <= 1e-10);
        CHECK(std::abs(eta(k.x2, k, p) - 1.0) <= 1e-10);
        // Just inside the interval the root search, not the endpoint shortcut, answers.
        const double eps = 1e-9 * (k.x2 - k.x1);
        CHECK(std::abs(eta(k.x1 + eps, k, p) - p.l) <= 1e-8);
        CHECK(std::abs(eta(k.x2 - eps, k, p) - 1.0) <= 1e-8);
    }
}

TEST_CASE("retention and middle integral agree with an ODE integration") {
    testing::ParamFuzzer fuzz(77);
    std::vector<ModelParams> sets = {reference_params()};
    for (int i = 0; i < 10; ++i) sets.push_back(fuzz.next());
    for (const auto& p : sets) {
        const auto k = compute_coefficients(p);
        const testing::RetentionOde ode(k, p, 4000);
        // The ODE started at (x1, l) must arrive at retention 1 exactly at x2.
        CHECK(std::abs(ode.eta.back() - 1.0) < 1e-9);
        for (std::size_t i = 1; i + 1 < ode.x.size(); i += 397) {
            CHECK(std::abs(eta(ode.x[i], k, p) - ode.eta[i]) < 1e-9);
            CHECK(std::abs(middle_integral(ode.x[i], k, p) - ode.middle(i)) < 1e-9 * (1.0 + ode.middle(i)));
            CHECK(rel_err(eta_slope(ode.eta[i], k, p),
                          (2 * p.a / p.sigma2()) * (k.G - ode.eta[i]) * (ode.eta[i] - k.H) / ode.eta[i]) < 1e-13);
        }
    }
}

TEST_CASE("value function agrees with a shooting solution of the HJB equation") {
    const auto p = reference_params();
    const auto k = compute_coefficients(p);
    for (double b : {unconstrained_barrier(k, p), 60.0, 100.0}) {
        CAPTURE(b);
        const auto vc = value_coeffs(b, k, p);
        const testing::HjbShooting ode(p, b, 5000);
        for (std::size_t i = 250; i < ode.x.size(); i += 250) {
            const double x = ode.x[i];
            CHECK(rel_err(value(x, vc, k, p), ode.g[i]) < 1e-6);
            CHECK(rel_err(value_derivatives(x, vc, k, p).first, ode.g1[i]) < 1e-6);
        }
    }
}

TEST_CASE_FIXTURE(Fixture, "derivatives match finite differences") {
    for (double b : {unconstrained_barrier(k, p), 40.0, 100.0}) {
        const auto vc = value_coeffs(b, k, p);
        for (double x : {0.5, 3.0, 6.0, 7.5, 9.0, 11.0, 12.2, 15.0, 0.5 * (k.x2 + b), b - 0.5, b + 3.0}) {
            CAPTURE(b);
            CAPTURE(x);
            // The middle branch carries ~1e-10 relative quadrature noise, so
            // each derivative is differenced from the one below it.
            const double h = 1e-3;
            const auto d = value_derivatives(x, vc, k, p);
            const double fd1 = (value(x + h, vc, k, p) - value(x - h, vc, k, p)) / (2 * h);
            const double fd2 =
                (value_derivatives(x + h, vc, k, p).first - value_derivatives(x - h, vc, k, p).first) / (2 * h);
            CHECK(std::abs(d.first - fd1) < 1e-7 * (1.0 + std::abs(d.first)));
            CHECK(std::abs(d.second - fd2) < 1e-7 * (1.0 + std::abs(d.second)));
        }
    }
}

TEST_CASE_FIXTURE(Fixture, "smooth fit at the switch points and the barrier") {
    for (double b : {unconstrained_barrier(k, p), 30.0, 50.0, 100.0, 250.0}) {
        const auto vc = value_coeffs(b, k, p);
        for (double s : {k.x1, k.x2, b}) {
            // One-sided limits; the slope term is removed from the g jump.
            const double h = 1e-9 * s;
            const auto lo = value_derivatives(s - h, vc, k, p);
            const auto hi = value_derivatives(s + h, vc, k, p);
            const double slope = 0.5 * (lo.first + hi.first);
            CHECK(std::abs(value(s + h, vc, k, p) - value(s - h, vc, k, p) - 2 * h * slope) < 1e-8);
            CHECK(std::abs(hi.first - lo.first) < 1e-8);
        }
        CHECK(value_derivatives(b, vc, k, p).first == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE_FIXTURE(Fixture, "b0 is the barrier where curvature below it vanishes") {
    const auto curvature = [&](double b) { return value_derivatives(b, value_coeffs(b, k, p), k, p).second; };
    const auto r = numerics::bisect(curvature, 0.0, k.x2, 10.0 * kB0, 1e-13);
    REQUIRE(r.converged);
    CHECK(rel_err(r.root, unconstrained_barrier(k, p)) < 1e-9);
    for (double b : {15.0, 25.0, 40.0, 100.0})
        CHECK(std::abs(curvature_below_barrier(b, k, p) - curvature(b)) < 1e-12 * (1.0 + std::abs(curvature(b))));
    CHECK(std::abs(curvature(unconstrained_barrier(k, p))) < 1e-9);
}

TEST_CASE_FIXTURE(Fixture, "unconstrained value has slope at least one") {
    const double b0 = unconstrained_barrier(k, p);
    const auto vc = value_coeffs(b0, k, p);
    for (int i = 1; i <= 400; ++i) {
        const double x = 2.0 * b0 * i / 400;
        CHECK(value_derivatives(x, vc, k, p).first >= 1.0 - 1e-12);
    }
}

TEST_CASE_FIXTURE(Fixture, "HJB residual and maximiser") {
    for (double b : {unconstrained_barrier(k, p), 60.0}) {
        const auto vc = value_coeffs(b, k, p);
        for (int i = 1; i < 200; ++i) {
            const double x = b * i / 200;
            const auto r = hjb_residual(x, vc, k, p);
            CHECK(std::abs(r.residual) < 1e-8);
            CHECK(std::abs(r.maximizer - retention(x, k, p)) < 1e-8);
        }
    }
}

TEST_CASE_FIXTURE(Fixture, "value decreases in the barrier above b0") {
    const double b0 = unconstrained_barrier(k, p);
    for (double x : {1.0, 5.0, 10.0, 20.0, 40.0}) {
        double prev = value(x, value_coeffs(b0, k, p), k, p);
        for (double b = b0 + 5.0; b < 200.0; b += 5.0) {
            const double cur = value(x, value_coeffs(b, k, p), k, p);
            CHECK(cur <= prev + 1e-10);
            prev = cur;
        }
    }
}

TEST_CASE_FIXTURE(Fixture, "value table and affine tail") {
    const auto vc = value_coeffs(50.0, k, p);
    CHECK(value(0.0, vc, k, p) == 0.0);
    CHECK(value(-1.0, vc, k, p) == 0.0);
    CHECK(value(57.0, vc, k, p) == doctest::Approx(7.0 + value(50.0, vc, k, p)).epsilon(1e-14));
    CHECK_THROWS_AS(value_coeffs(k.x2 - 0.1, k, p), OutOfRange);
}

TEST_CASE_FIXTURE(Fixture, "retention table matches the exact retention") {
    const RetentionTable table(k, p);
    double worst = 0.0;
    for (int i = 0; i <= 20000; ++i) {
        const double x = 20.0 * i / 20000;
        worst = std::max(worst, std::abs(table(x) - retention(x, k, p)));
    }
    CHECK(worst < 1e-9);
    CHECK(table(0.0) == p.l);
    CHECK(table(1e6) == 1.0);
}

TEST_CASE_FIXTURE(Fixture, "lower bound on the ruin probability") {
    const double b0 = unconstrained_barrier(k, p);
    CHECK(rel_err(ruin_lower_bound(b0, 1.0, p), 1.7019626083334364766e-24) < 1e-10);
    CHECK(rel_err(ruin_lower_bound(b0, 10.0, p), 0.00030545187246270377003) < 1e-11);
    CHECK(rel_err(ruin_lower_bound(b0, 100.0, p), 0.00018066956762350895416) < 1e-11);
    const double drift = p.mu - p.a - p.delta;
    CHECK(rel_err(ruin_lower_bound(0.0, 10.0, p), std::exp(-drift * drift * 10.0 / p.sigma2())) < 1e-14);
    CHECK_THROWS_AS(ruin_lower_bound(-1.0, 10.0, p), OutOfRange);
    CHECK_THROWS_AS(ruin_lower_bound(b0, 0.0, p), OutOfRange);
}

TEST_CASE("invalid parameters never reach the formulas") {
    auto p = reference_params();
    p.a = 2.0;
    CHECK_THROWS_AS(compute_coefficients(p), InvariantViolation);
}
