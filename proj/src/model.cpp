#include "divopt/model.hpp"

#include <cmath>
#include <sstream>

#include "divopt/error.hpp"

namespace divopt {

namespace {

std::string join(const std::vector<std::string>& items) {
    std::ostringstream os;
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (i) os << "; ";
        os << items[i];
    }
    return os.str();
}

bool finite(double v) { return std::isfinite(v); }

}  // namespace

InvariantViolation::InvariantViolation(std::vector<std::string> violations)
    : Error("invalid parameters: " + join(violations)), violations_(std::move(violations)) {}

std::vector<std::string> check_invariants(const ModelParams& p) {
    std::vector<std::string> out;
    for (auto [name, v] : {std::pair{"mu", p.mu}, std::pair{"a", p.a}, std::pair{"delta", p.delta},
                           std::pair{"sigma", p.sigma}, std::pair{"l", p.l}, std::pair{"c", p.c}}) {
        if (!finite(v)) out.push_back(std::string(name) + " must be finite");
    }
    if (!out.empty()) return out;

    if (!(p.sigma > 0.0)) out.push_back("sigma > 0 required");
    if (!(p.a > 0.0)) out.push_back("a > 0 required");
    if (!(p.c > 0.0)) out.push_back("c > 0 required");
    if (!(p.delta >= 0.0)) out.push_back("delta >= 0 required");
    if (!(p.l > 0.0 && p.l <= 1.0)) out.push_back("0 < l <= 1 required");
    if (p.a > 0.0 && !(p.mu / (2.0 * p.a) > 1.0)) {
        std::ostringstream os;
        os << "mu/(2a) > 1 required (got " << p.mu / (2.0 * p.a) << ")";
        out.push_back(os.str());
    }
    if (!(p.mu > 0.0) || !(2.0 * p.delta / p.mu < p.l)) {
        std::ostringstream os;
        os << "2*delta/mu < l required (got " << (p.mu > 0.0 ? 2.0 * p.delta / p.mu : INFINITY)
           << " vs l = " << p.l << ")";
        out.push_back(os.str());
    }
    if (!(p.drift(p.l) > 0.0)) {
        std::ostringstream os;
        os << "mu*l - a*l^2 - delta > 0 required (got " << p.drift(p.l) << ")";
        out.push_back(os.str());
    }
    return out;
}

const ModelParams& validate(const ModelParams& params) {
    auto violations = check_invariants(params);
    if (!violations.empty()) throw InvariantViolation(std::move(violations));
    return params;
}

ModelParams derive_params(const RawModelInputs& raw, double sigma, double l, double c) {
    std::vector<std::string> bad;
    if (!(raw.p > 0.0 && raw.p <= 1.0)) bad.push_back("p in (0, 1] required");
    if (!(raw.a > 0.0)) bad.push_back("a > 0 required");
    if (!finite(raw.mu1)) bad.push_back("mu1 must be finite");
    if (!bad.empty()) throw InvariantViolation(std::move(bad));

    ModelParams out;
    out.mu = raw.mu1 + 2.0 * raw.a * raw.p;
    out.a = raw.a;
    out.delta = raw.a * raw.p * raw.p;
    out.sigma = sigma;
    out.l = l;
    out.c = c;
    out.provenance.mu1 = raw.mu1;
    out.provenance.p = raw.p;
    validate(out);
    return out;
}

DiffusionApproximation from_cramer_lundberg(const CramerLundbergInputs& cl) {
    std::vector<std::string> bad;
    if (!(cl.lambda > 0.0)) bad.push_back("lambda > 0 required");
    if (!(cl.loading > 0.0)) bad.push_back("loading > 0 required");
    if (!(cl.m1 > 0.0)) bad.push_back("m1 > 0 required");
    if (!(cl.m2 >= cl.m1 * cl.m1)) bad.push_back("m2 >= m1^2 required");
    if (!bad.empty()) throw InvariantViolation(std::move(bad));
    return {cl.loading * cl.lambda * cl.m1, std::sqrt(cl.lambda * cl.m2)};
}

ModelParams reference_params() {
    ModelParams p;
    p.mu = 2.0;
    p.a = 0.1;
    p.delta = 0.01;
    p.sigma = std::sqrt(50.0);
    p.l = 0.5;
    p.c = 0.05;
    return p;
}

}  // namespace divopt
