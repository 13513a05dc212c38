#include "divopt/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "divopt/closed_form.hpp"
#include "divopt/error.hpp"
#include "divopt/policy.hpp"
#include "divopt/ruin_pde.hpp"
#include "divopt/sde_sim.hpp"

#ifndef DIVOPT_VERSION
#define DIVOPT_VERSION "0.0.0"
#endif

namespace divopt::cli {

namespace {

const std::set<std::string> kModelKeys = {"mu",     "a",      "delta",   "sigma2", "sigma", "l",  "c",
                                          "mu1",    "p",      "lambda",  "loading", "m1",   "m2"};
const std::set<std::string> kControlKeys = {"epsilon", "horizon", "grid_ny", "grid_nt", "paths", "dt",
                                            "seed",    "x_grid",  "b_max",   "psi_tol", "b",     "x0"};

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

/// Shortest representation that reads back to the same double.
std::string num(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

double parse_double(const std::string& key, const std::string& text) {
    double v = 0.0;
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, v);
    if (ec != std::errc() || ptr != end || !std::isfinite(v))
        throw ConfigError("value of '" + key + "' is not a finite number: '" + text + "'");
    return v;
}

std::optional<double> lookup(const Entries& e, const std::string& key) {
    const auto it = e.find(key);
    if (it == e.end()) return std::nullopt;
    return parse_double(key, it->second);
}

void add_entry(Entries& entries, const std::string& key, const std::string& value, const std::string& where) {
    if (!kModelKeys.count(key) && !kControlKeys.count(key))
        throw ConfigError("unknown key '" + key + "' (" + where + ")");
    if (value.empty()) throw ConfigError("empty value for '" + key + "' (" + where + ")");
    entries[key] = value;
}

std::string join(const std::vector<std::string>& parts, const char* sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) out += (i ? sep : "") + parts[i];
    return out;
}

/// Wraps a library call so that failures carry the stage name.
template <class F>
auto stage(const char* name, F&& body) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const InvariantViolation& e) {
        throw StageError(name, e.what(), true);
    } catch (const ConfigError& e) {
        throw StageError(name, e.what(), true);
    } catch (const Error& e) {
        throw StageError(name, e.what(), false);
    }
}

struct Options {
    std::string config_path;
    std::vector<std::string> inline_params;
    std::string out_dir = ".";

    double epsilon = 0.0;
    double horizon = 0.0;
    int grid_ny = 800;
    int grid_nt = 0;
    double b_max = 0.0;
    double psi_tol = 1e-4;
    std::int64_t paths = 10000;
    double dt = 1e-3;
    std::uint64_t seed = 0;
    int x_grid = 0;
    int workers = 0;

    double b = 0.0;
    std::vector<double> x0;
    std::vector<double> x;
    std::vector<double> horizons;
    double b0 = 0.0;
    double x_max = 0.0;
    int slices = 5;

    int figure = 0;
    int points = 20;
    double sweep_min = 0.0;
    double sweep_max = 0.0;
    bool fig3_covary_mu = false;
};

/// Options plus which of them were given explicitly.
struct Context {
    Options opt;
    std::map<std::string, CLI::Option*> flags;
    Entries entries;

    bool given(const std::string& name) const {
        const auto it = flags.find(name);
        return it != flags.end() && it->second->count() > 0;
    }

    /// Flag value if given, else the config entry, else `fallback`.
    double number(const std::string& flag, const std::string& key, double flag_value,
                  std::optional<double> fallback) const {
        if (given(flag)) return flag_value;
        if (auto v = lookup(entries, key)) return *v;
        if (fallback) return *fallback;
        throw ConfigError("missing required setting --" + flag);
    }

    int integer(const std::string& flag, const std::string& key, int flag_value, std::optional<int> fallback) const {
        const double v = number(flag, key, flag_value, fallback ? std::optional<double>(*fallback) : std::nullopt);
        if (v != std::floor(v) || std::abs(v) > 1e9) throw ConfigError("--" + flag + " must be an integer");
        return static_cast<int>(v);
    }
};

std::string params_text(const ModelParams& p) {
    std::ostringstream os;
    os << "mu=" << num(p.mu) << " a=" << num(p.a) << " delta=" << num(p.delta) << " sigma=" << num(p.sigma)
       << " l=" << num(p.l) << " c=" << num(p.c);
    const auto& pr = p.provenance;
    if (pr.mu1) os << " mu1=" << num(*pr.mu1);
    if (pr.p) os << " p=" << num(*pr.p);
    if (pr.lambda) os << " lambda=" << num(*pr.lambda);
    if (pr.loading) os << " loading=" << num(*pr.loading);
    if (pr.m1) os << " m1=" << num(*pr.m1);
    if (pr.m2) os << " m2=" << num(*pr.m2);
    return os.str();
}

std::string header(const std::string& command, const ModelParams& p, const std::string& controls) {
    return "# divopt " DIVOPT_VERSION " command=" + command + " " + params_text(p) +
           (controls.empty() ? "" : " " + controls) + "\n";
}

std::filesystem::path output_path(const Options& opt, const std::string& name) {
    std::error_code ec;
    std::filesystem::create_directories(opt.out_dir, ec);
    if (!std::filesystem::is_directory(opt.out_dir))
        throw ConfigError("output directory '" + opt.out_dir + "' cannot be created");
    return std::filesystem::path(opt.out_dir) / name;
}

void write_file(const Options& opt, const std::string& name, const std::string& content, std::ostream& out) {
    const auto path = output_path(opt, name);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw ConfigError("cannot write '" + path.string() + "'");
    f << content;
    f.close();
    if (!f) throw ConfigError("write to '" + path.string() + "' failed");
    out << "wrote " << path.string() << "\n";
}

GridPolicy grid_policy(const Context& ctx) {
    GridPolicy g;
    g.ny = ctx.integer("grid-ny", "grid_ny", ctx.opt.grid_ny, 800);
    const int nt = ctx.integer("grid-nt", "grid_nt", ctx.opt.grid_nt, 0);
    if (nt > 0) g.nt = nt;
    const double b_max = ctx.number("b-max", "b_max", ctx.opt.b_max, 0.0);
    if (b_max > 0.0) g.b_max = b_max;
    g.psi_tol = ctx.number("psi-tol", "psi_tol", ctx.opt.psi_tol, 1e-4);
    if (g.ny < 64) throw ConfigError("--grid-ny must be >= 64");
    if (nt != 0 && nt < 64) throw ConfigError("--grid-nt must be >= 64");
    if (!(g.psi_tol > 0.0 && g.psi_tol < 1.0)) throw ConfigError("--psi-tol must lie in (0, 1)");
    if (b_max < 0.0) throw ConfigError("--b-max must be > 0");
    return g;
}

std::string grid_text(const GridPolicy& g) {
    return "grid_ny=" + std::to_string(g.ny) + " grid_nt=" + (g.nt ? std::to_string(*g.nt) : "auto") +
           " b_max=" + (g.b_max ? num(*g.b_max) : "auto") + " psi_tol=" + num(g.psi_tol);
}

double require_epsilon(const Context& ctx) {
    const double eps = ctx.number("epsilon", "epsilon", ctx.opt.epsilon, std::nullopt);
    if (!(eps > 0.0 && eps < 1.0)) throw ConfigError("epsilon must lie in (0, 1), got " + num(eps));
    return eps;
}

double require_horizon(const Context& ctx, std::optional<double> fallback = std::nullopt) {
    const double T = ctx.number("horizon", "horizon", ctx.opt.horizon, fallback);
    if (!(T > 0.0)) throw ConfigError("horizon must be > 0, got " + num(T));
    return T;
}

/// Barrier from --b / config, else b0. Must not lie below x2.
double barrier_or_b0(const Context& ctx, const Coefficients& k, const ModelParams& p) {
    double b = 0.0;
    if (ctx.given("b") || ctx.entries.count("b")) {
        b = ctx.number("b", "b", ctx.opt.b, std::nullopt);
    } else {
        b = stage("unconstrained_barrier", [&] { return unconstrained_barrier(k, p); });
    }
    if (!(b >= k.x2)) throw ConfigError("barrier b = " + num(b) + " lies below x2 = " + num(k.x2));
    return b;
}

std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = n == 1 ? lo : lo + (hi - lo) * i / (n - 1);
    if (n > 1) v.back() = hi;
    return v;
}

// ---------------------------------------------------------------- solve

int cmd_solve(const Context& ctx, std::ostream& out) {
    const auto params = resolve_params(ctx.entries, true);
    const double eps = require_epsilon(ctx);
    const double T = require_horizon(ctx);
    const auto grid = grid_policy(ctx);
    const int nx = ctx.integer("x-grid", "x_grid", ctx.opt.x_grid, 51);
    if (nx < 2) throw ConfigError("--x-grid must be >= 2");

    const auto sol = solve_policy(params, eps, T, grid);

    std::ostringstream csv;
    csv << header("solve", params, "epsilon=" + num(eps) + " horizon=" + num(T) + " " + grid_text(grid));
    csv << "# regime=" << to_string(sol.regime()) << "\n";
    csv << "# b0=" << num(sol.b0()) << "\n";
    csv << "# b_star=" << num(sol.b_star()) << "\n";
    csv << "# risk_capital=" << num(sol.risk_capital()) << "\n";
    csv << "# solvency=" << num(sol.solvency()) << "\n";
    for (const auto& w : sol.warnings) csv << "# warning=" << w << "\n";
    csv << "x,value,retention,value_ratio\n";
    for (double x : linspace(0.0, 1.25 * sol.b_star(), nx)) {
        csv << num(x) << "," << num(sol.value_at(x)) << "," << num(sol.retention_at(x)) << ",";
        if (x > 0.0) csv << num(value_ratio(x, sol));
        csv << "\n";
    }
    write_file(ctx.opt, "policy_solution.csv", csv.str(), out);

    out << "regime        " << to_string(sol.regime()) << "\n"
        << "b0            " << num(sol.b0()) << "\n"
        << "b*            " << num(sol.b_star()) << "\n"
        << "risk capital  " << num(sol.risk_capital()) << "\n"
        << "solvency      " << num(sol.solvency()) << "\n";
    for (const auto& w : sol.warnings) out << "warning: " << w << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------- ruin

int cmd_ruin(const Context& ctx, std::ostream& out) {
    const auto params = resolve_params(ctx.entries, true);
    const double T = require_horizon(ctx);
    const auto grid = grid_policy(ctx);
    const auto coeffs = stage("coefficients", [&] { return compute_coefficients(params); });
    const double b = barrier_or_b0(ctx, coeffs, params);
    if (ctx.opt.slices < 2) throw ConfigError("--slices must be >= 2");

    const auto sol = stage("ruin_pde", [&] {
        return solve_survival(b, T, params, coeffs, grid.grid_for(b, T), History::full);
    });

    std::ostringstream csv;
    csv << header("ruin", params, "b=" + num(b) + " horizon=" + num(T) + " " + grid_text(grid));
    csv << "t,x,psi\n";
    const std::size_t last = sol.slices() - 1;
    std::vector<std::size_t> picks;
    for (int i = 0; i < ctx.opt.slices; ++i)
        picks.push_back(static_cast<std::size_t>(std::llround(static_cast<double>(last) * i / (ctx.opt.slices - 1))));
    picks.erase(std::unique(picks.begin(), picks.end()), picks.end());
    for (std::size_t j : picks) {
        const auto psi = sol.slice(j);
        for (std::size_t i = 0; i < sol.nodes().size(); ++i)
            csv << num(sol.slice_time(j)) << "," << num(sol.nodes()[i]) << ","
                << num(std::clamp(psi[i], 0.0, 1.0)) << "\n";
    }
    write_file(ctx.opt, "ruin.csv", csv.str(), out);

    std::vector<double> xs = ctx.opt.x;
    if (xs.empty()) xs.push_back(b);
    for (double x : xs) {
        if (x < 0.0 || x > b) throw ConfigError("--x must lie in [0, b], got " + num(x));
        out << "psi(T=" << num(T) << ", x=" << num(x) << ") = " << num(ruin_probability(sol, x, T)) << "\n";
    }
    return exit_ok;
}

// ---------------------------------------------------------------- value

int cmd_value(const Context& ctx, std::ostream& out) {
    const auto params = resolve_params(ctx.entries, true);
    const auto coeffs = stage("coefficients", [&] { return compute_coefficients(params); });
    const double b = barrier_or_b0(ctx, coeffs, params);
    const int nx = ctx.integer("x-grid", "x_grid", ctx.opt.x_grid, 101);
    if (nx < 2) throw ConfigError("--x-grid must be >= 2");
    const double x_max = ctx.opt.x_max > 0.0 ? ctx.opt.x_max : 1.25 * b;
    const auto vc = stage("value_coeffs", [&] { return value_coeffs(b, coeffs, params); });

    std::ostringstream csv;
    csv << header("value", params, "b=" + num(b) + " A=" + num(vc.A) + " B=" + num(vc.B) + " C=" + num(vc.C));
    csv << "x,g,g_prime,g_second,retention\n";
    for (double x : linspace(0.0, x_max, nx)) {
        const auto d = value_derivatives(x, vc, coeffs, params);
        csv << num(x) << "," << num(value(x, vc, coeffs, params)) << "," << num(d.first) << "," << num(d.second)
            << "," << num(retention(x, coeffs, params)) << "\n";
    }
    write_file(ctx.opt, "value.csv", csv.str(), out);
    out << "b = " << num(b) << "  x1 = " << num(coeffs.x1) << "  x2 = " << num(coeffs.x2) << "\n";
    return exit_ok;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const Context& ctx, std::ostream& out) {
    const auto params = resolve_params(ctx.entries, true);
    const double T = require_horizon(ctx);
    const auto coeffs = stage("coefficients", [&] { return compute_coefficients(params); });
    const double b = barrier_or_b0(ctx, coeffs, params);
    const double h = ctx.number("dt", "dt", ctx.opt.dt, 1e-3);
    const double paths = ctx.number("paths", "paths", static_cast<double>(ctx.opt.paths), 10000.0);
    if (paths < 1 || paths != std::floor(paths)) throw ConfigError("--paths must be a positive integer");
    std::uint64_t seed_u = ctx.opt.seed;
    if (!ctx.given("seed")) {
        const double s = lookup(ctx.entries, "seed").value_or(0.0);
        if (s < 0 || s != std::floor(s) || s > 9007199254740992.0)
            throw ConfigError("seed must be a nonnegative integer");
        seed_u = static_cast<std::uint64_t>(s);
    }

    std::vector<double> x0s = ctx.opt.x0;
    if (x0s.empty()) {
        if (auto v = lookup(ctx.entries, "x0")) x0s.push_back(*v);
        else x0s.push_back(b);
    }
    const int workers = ctx.opt.workers > 0 ? ctx.opt.workers
                                            : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

    const Simulator sim(params, coeffs);
    const auto vc = stage("value_coeffs", [&] { return value_coeffs(b, coeffs, params); });

    std::ostringstream csv;
    csv << header("simulate", params, "b=" + num(b) + " horizon=" + num(T) + " dt=" + num(h) +
                                          " paths=" + num(paths) + " seed=" + std::to_string(seed_u));
    csv << "x0,b,horizon,dt,paths,seed,ruin_prob,ruin_se,value,value_se,truncation_bound,g_closed_form\n";
    for (double x0 : x0s) {
        SimConfig cfg;
        cfg.x0 = x0;
        cfg.b = b;
        cfg.T = T;
        cfg.h = h;
        cfg.n_paths = static_cast<std::int64_t>(paths);
        cfg.seed = seed_u;
        try {
            validate(cfg);
        } catch (const OutOfRange& e) {
            throw ConfigError(e.what());
        }
        const auto est = stage("sde_sim", [&] { return sim.estimate(cfg, workers); });
        const double g = x0 > b ? x0 - b + value(b, vc, coeffs, params) : value(x0, vc, coeffs, params);
        csv << num(x0) << "," << num(b) << "," << num(T) << "," << num(h) << "," << est.n_paths << "," << seed_u
            << "," << num(est.ruin_prob) << "," << num(est.ruin_se) << "," << num(est.value) << ","
            << num(est.value_se) << "," << num(est.truncation_bound) << "," << num(g) << "\n";
        out << "x0=" << num(x0) << "  ruin=" << num(est.ruin_prob) << " +- " << num(est.ruin_se)
            << "  value=" << num(est.value) << " +- " << num(est.value_se) << "  g=" << num(g) << "\n";
    }
    write_file(ctx.opt, "simulate.csv", csv.str(), out);
    return exit_ok;
}

// ---------------------------------------------------------------- lower-bound

int cmd_lower_bound(const Context& ctx, std::ostream& out) {
    const auto params = resolve_params(ctx.entries, true);
    double b0 = ctx.opt.b0;
    if (!ctx.given("b0")) {
        const auto coeffs = stage("coefficients", [&] { return compute_coefficients(params); });
        b0 = stage("unconstrained_barrier", [&] { return unconstrained_barrier(coeffs, params); });
    }
    if (!(b0 >= 0.0)) throw ConfigError("--b0 must be >= 0");
    std::vector<double> Ts = ctx.opt.horizons;
    if (Ts.empty()) Ts.push_back(require_horizon(ctx));
    for (double T : Ts)
        if (!(T > 0.0)) throw ConfigError("horizon must be > 0, got " + num(T));

    std::ostringstream csv;
    csv << header("lower-bound", params, "b0=" + num(b0));
    csv << "b0,horizon,eps0\n";
    for (double T : Ts) {
        const double e0 = stage("lower_bound", [&] { return ruin_lower_bound(b0, T, params); });
        csv << num(b0) << "," << num(T) << "," << num(e0) << "\n";
        out << "eps0(b0=" << num(b0) << ", T=" << num(T) << ") = " << num(e0) << "\n";
    }
    write_file(ctx.opt, "lower_bound.csv", csv.str(), out);
    return exit_ok;
}

// ---------------------------------------------------------------- sweep

/// Monotonicity along the swept parameter for each x; returns the number of
/// x values at which g fails to increase.
int report_axis(const std::vector<double>& axis, const std::vector<double>& xs,
                const std::vector<std::vector<double>>& g, const std::string& name, std::ostream& out) {
    int bad = 0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        for (std::size_t j = 1; j < axis.size(); ++j) {
            if (g[j][i] < g[j - 1][i] - 1e-10 * std::max(1.0, std::abs(g[j - 1][i]))) {
                ++bad;
                break;
            }
        }
    }
    if (bad == 0) {
        out << "g nondecreasing in " << name << " at every x\n";
    } else {
        out << "g decreases in " << name << " at " << bad << " of " << xs.size() << " x values\n";
    }
    return bad;
}

std::string gnuplot_curve(const std::string& csv, const std::string& xlabel, const std::string& ylabel) {
    return "set datafile separator ','\nset xlabel '" + xlabel + "'\nset ylabel '" + ylabel + "'\nplot '" + csv +
           "' using 1:2 with linespoints notitle\n";
}

std::string gnuplot_surface(const std::string& csv, const std::string& ylabel) {
    return "set datafile separator ','\nset xlabel 'x'\nset ylabel '" + ylabel + "'\nset zlabel 'g'\nsplot '" + csv +
           "' using 1:2:3 with points notitle\n";
}

int cmd_sweep(const Context& ctx, std::ostream& out) {
    const int fig = ctx.opt.figure;
    const int n = ctx.opt.points;
    if (n < 2) throw ConfigError("--points must be >= 2");
    for (const auto& [key, value] : ctx.entries) {
        if (kModelKeys.count(key) && !std::set<std::string>{"mu", "a", "delta", "sigma2", "l", "c"}.count(key))
            throw ConfigError("sweeps take normal-form parameters only; got '" + key + "'");
    }

    Entries base = {{"mu", "2"}, {"sigma2", "50"}, {"l", "0.5"}, {"a", "0.1"}, {"delta", "0.01"}, {"c", "0.05"}};
    if (fig == 3) base["a"] = "0.5";
    const char* swept = fig == 2 ? "mu" : fig == 3 ? "delta" : fig == 4 ? "sigma2" : nullptr;
    for (const auto& [key, value] : ctx.entries) {
        if (!kModelKeys.count(key)) continue;
        if (swept && key == swept) throw ConfigError("'" + key + "' is swept in figure " + std::to_string(fig));
        if (fig == 3 && ctx.opt.fig3_covary_mu && key == "mu")
            throw ConfigError("'mu' follows p under --fig3-covary-mu");
        base[key] = value;
    }

    const std::string name = "fig" + std::to_string(fig);
    const std::string csv_name = name + ".csv";
    std::ostringstream csv;

    if (fig == 1 || fig == 5) {
        const auto params = resolve_params(base, false);
        const double T = require_horizon(ctx, 500.0);
        const auto grid = grid_policy(ctx);
        const double lo = ctx.given("sweep-min") ? ctx.opt.sweep_min : 0.05;
        const double hi = ctx.given("sweep-max") ? ctx.opt.sweep_max : 0.5;
        if (!(lo > 0.0 && hi < 1.0 && lo < hi)) throw ConfigError("epsilon range must satisfy 0 < min < max < 1");
        csv << header("sweep", params, "figure=" + std::to_string(fig) + " horizon=" + num(T) + " " + grid_text(grid));
        csv << (fig == 1 ? "epsilon,b_star,regime,b0\n" : "epsilon,risk_capital,b_star,regime\n");
        double prev = 0.0;
        int violations = 0;
        const auto eps_grid = linspace(lo, hi, n);
        for (std::size_t i = 0; i < eps_grid.size(); ++i) {
            const double eps = eps_grid[i];
            const auto sol = solve_policy(params, eps, T, grid);
            const double y = fig == 1 ? sol.b_star() : sol.risk_capital();
            if (i > 0 && (fig == 1 ? !(y < prev) : y > prev)) ++violations;
            prev = y;
            if (fig == 1)
                csv << num(eps) << "," << num(sol.b_star()) << "," << to_string(sol.regime()) << "," << num(sol.b0())
                    << "\n";
            else
                csv << num(eps) << "," << num(sol.risk_capital()) << "," << num(sol.b_star()) << ","
                    << to_string(sol.regime()) << "\n";
        }
        write_file(ctx.opt, csv_name, csv.str(), out);
        write_file(ctx.opt, name + ".gp",
                   gnuplot_curve(csv_name, "epsilon", fig == 1 ? "b*" : "x(epsilon)"), out);
        out << (fig == 1 ? "b* strictly decreasing in epsilon: " : "x(epsilon) nonincreasing in epsilon: ")
            << (violations == 0 ? "yes" : "no (" + std::to_string(violations) + " steps)") << "\n";
        return exit_ok;
    }

    // Figures 2-4: value surfaces g(x, .) at a fixed barrier.
    const double b = ctx.given("b") ? ctx.opt.b : lookup(ctx.entries, "b").value_or(100.0);
    const int nx = ctx.integer("x-grid", "x_grid", ctx.opt.x_grid, 20);
    if (nx < 2) throw ConfigError("--x-grid must be >= 2");
    double lo = fig == 2 ? 1.0 : fig == 3 ? 0.05 : 10.0;
    double hi = fig == 2 ? 3.0 : fig == 3 ? 0.95 : 100.0;
    if (ctx.given("sweep-min")) lo = ctx.opt.sweep_min;
    if (ctx.given("sweep-max")) hi = ctx.opt.sweep_max;
    if (!(lo < hi)) throw ConfigError("sweep range must satisfy min < max");
    const std::string axis_name = fig == 2 ? "mu" : fig == 3 ? "p" : "sigma2";
    const auto axis = linspace(lo, hi, n);
    const auto xs = linspace(0.0, b, nx);

    std::vector<ModelParams> sets;
    for (double v : axis) {
        Entries e = base;
        if (fig == 2) e["mu"] = num(v);
        if (fig == 4) e["sigma2"] = num(v);
        if (fig == 3) {
            const double a = parse_double("a", e["a"]);
            e["delta"] = num(a * v * v);
            if (ctx.opt.fig3_covary_mu) e["mu"] = num(2.0 + 2.0 * a * v);
        }
        try {
            auto p = resolve_params(e, false);
            if (fig == 3) {
                p.provenance.p = v;
                p.provenance.mu1 = p.mu - 2.0 * p.a * v;
            }
            sets.push_back(p);
        } catch (const InvariantViolation& ex) {
            throw ConfigError(axis_name + " = " + num(v) + ": " + ex.what());
        }
    }

    std::vector<std::vector<double>> g(axis.size(), std::vector<double>(xs.size()));
    for (std::size_t j = 0; j < axis.size(); ++j) {
        const auto& p = sets[j];
        const auto k = stage("coefficients", [&] { return compute_coefficients(p); });
        if (!(b >= k.x2))
            throw ConfigError("b = " + num(b) + " lies below x2 = " + num(k.x2) + " at " + axis_name + " = " +
                              num(axis[j]));
        const auto vc = stage("value_coeffs", [&] { return value_coeffs(b, k, p); });
        for (std::size_t i = 0; i < xs.size(); ++i) g[j][i] = value(xs[i], vc, k, p);
    }

    std::string fixed_text;
    for (const auto& [key, value] : base) {
        if (key == swept || (fig == 3 && ctx.opt.fig3_covary_mu && key == "mu")) continue;
        fixed_text += key + "=" + num(parse_double(key, value)) + " ";
    }
    std::string controls = "figure=" + std::to_string(fig) + " b=" + num(b) + " swept=" + axis_name + "[" +
                           num(lo) + "," + num(hi) + "]";
    if (fig == 3) controls += ctx.opt.fig3_covary_mu ? " mu=2+2*a*p delta=a*p^2" : " delta=a*p^2";
    csv << "# divopt " DIVOPT_VERSION " command=sweep " << fixed_text << controls << "\n";
    csv << "x," << axis_name << ",g\n";
    for (std::size_t j = 0; j < axis.size(); ++j)
        for (std::size_t i = 0; i < xs.size(); ++i) csv << num(xs[i]) << "," << num(axis[j]) << "," << num(g[j][i]) << "\n";
    write_file(ctx.opt, csv_name, csv.str(), out);
    write_file(ctx.opt, name + ".gp", gnuplot_surface(csv_name, axis_name), out);

    int x_bad = 0;
    for (std::size_t j = 0; j < axis.size(); ++j)
        for (std::size_t i = 1; i < xs.size(); ++i)
            if (g[j][i] < g[j][i - 1]) {
                ++x_bad;
                break;
            }
    out << (x_bad == 0 ? "g nondecreasing in x on every curve\n"
                       : "g decreases in x on " + std::to_string(x_bad) + " curves\n");
    report_axis(axis, xs, g, axis_name, out);
    return exit_ok;
}

}  // namespace

Entries read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    Entries entries;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        const std::string where = path + ":" + std::to_string(lineno);
        if (eq == std::string::npos) throw ConfigError("expected 'key = value' (" + where + ")");
        const std::string key = trim(line.substr(0, eq));
        if (entries.count(key)) throw ConfigError("duplicate key '" + key + "' (" + where + ")");
        add_entry(entries, key, trim(line.substr(eq + 1)), where);
    }
    return entries;
}

ModelParams resolve_params(const Entries& entries, bool allow_default) {
    std::vector<std::string> present;
    for (const auto& [key, value] : entries)
        if (kModelKeys.count(key)) present.push_back(key);
    if (present.empty()) {
        if (allow_default) return reference_params();
        throw ConfigError("no model parameters given");
    }
    const auto has = [&](const char* k) { return entries.count(k) > 0; };

    const bool cl = has("lambda") || has("loading") || has("m1") || has("m2");
    const bool raw = has("mu1");
    const bool normal = has("mu") || has("delta");
    if (cl + raw + normal > 1) {
        std::vector<std::string> groups;
        if (normal) groups.push_back("normal (mu, delta)");
        if (raw) groups.push_back("raw (mu1)");
        if (cl) groups.push_back("Cramer-Lundberg (lambda, loading, m1, m2)");
        throw ConfigError("conflicting parameter groups: " + join(groups, ", "));
    }
    if (has("sigma") && has("sigma2")) throw ConfigError("give either 'sigma' or 'sigma2', not both");

    std::vector<std::string> required;
    std::vector<std::string> allowed;
    std::string group;
    if (cl) {
        group = "Cramer-Lundberg";
        required = {"lambda", "loading", "m1", "m2", "p", "a", "l", "c"};
    } else if (raw || has("p")) {
        group = "raw";
        required = {"mu1", "p", "a", "sigma2", "l", "c"};
    } else {
        group = "normal";
        required = {"mu", "a", "delta", "sigma2", "l", "c"};
    }
    allowed = required;
    if (std::find(required.begin(), required.end(), "sigma2") != required.end()) allowed.push_back("sigma");

    for (const auto& key : required) {
        if (key == "sigma2" && (has("sigma2") || has("sigma"))) continue;
        if (!has(key.c_str()))
            throw ConfigError("missing parameter '" + key + "' (" + group + " group needs " + join(required, ", ") +
                              ")");
    }
    for (const auto& key : present)
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("parameter '" + key + "' does not belong to the " + group + " group");

    const auto get = [&](const char* k) { return *lookup(entries, k); };
    const double sigma = cl ? 0.0 : has("sigma") ? get("sigma") : std::sqrt(std::max(0.0, get("sigma2")));
    if (!cl && has("sigma2") && !(get("sigma2") > 0.0)) throw ConfigError("sigma2 must be > 0");

    if (group == "normal") {
        ModelParams p;
        p.mu = get("mu");
        p.a = get("a");
        p.delta = get("delta");
        p.sigma = sigma;
        p.l = get("l");
        p.c = get("c");
        return validate(p);
    }
    if (group == "raw") {
        const RawModelInputs raw_in{get("mu1"), get("p"), get("a")};
        return derive_params(raw_in, sigma, get("l"), get("c"));
    }
    const CramerLundbergInputs cl_in{get("lambda"), get("loading"), get("m1"), get("m2")};
    const auto diff = from_cramer_lundberg(cl_in);
    auto p = derive_params(RawModelInputs{diff.mu1, get("p"), get("a")}, diff.sigma, get("l"), get("c"));
    p.provenance.lambda = cl_in.lambda;
    p.provenance.loading = cl_in.loading;
    p.provenance.m1 = cl_in.m1;
    p.provenance.m2 = cl_in.m2;
    return p;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    Context ctx;
    Options& o = ctx.opt;

    CLI::App app{"Optimal dividend barriers under a ruin-probability constraint"};
    app.set_version_flag("--version", DIVOPT_VERSION);
    app.require_subcommand(1);

    const auto common = [&](CLI::App* sub) {
        ctx.flags["config"] = sub->add_option("--config", o.config_path, "flat key = value parameter file");
        ctx.flags["param"] = sub->add_option("--param", o.inline_params, "inline key=value, repeatable");
        ctx.flags["out"] = sub->add_option("--out", o.out_dir, "output directory");
    };
    const auto pde = [&](CLI::App* sub) {
        ctx.flags["grid-ny"] = sub->add_option("--grid-ny", o.grid_ny, "spatial cells");
        ctx.flags["grid-nt"] = sub->add_option("--grid-nt", o.grid_nt, "time steps (default ~ T/dy)");
        ctx.flags["b-max"] = sub->add_option("--b-max", o.b_max, "cap on the barrier search");
        ctx.flags["psi-tol"] = sub->add_option("--psi-tol", o.psi_tol, "tolerance on psi(T, b*) - epsilon");
    };

    auto* solve = app.add_subcommand("solve", "optimal policy under the ruin constraint");
    common(solve);
    pde(solve);
    ctx.flags["epsilon"] = solve->add_option("--epsilon", o.epsilon, "admissible ruin probability");
    ctx.flags["horizon"] = solve->add_option("--horizon", o.horizon, "horizon T");
    ctx.flags["x-grid"] = solve->add_option("--x-grid", o.x_grid, "points of the value table");

    auto* sweep = app.add_subcommand("sweep", "figure data sets");
    common(sweep);
    pde(sweep);
    sweep->add_option("--figure", o.figure, "figure 1-5")->required()->check(CLI::Range(1, 5));
    sweep->add_option("--points", o.points, "points along the swept axis");
    ctx.flags["sweep-min"] = sweep->add_option("--sweep-min", o.sweep_min, "lower end of the swept axis");
    ctx.flags["sweep-max"] = sweep->add_option("--sweep-max", o.sweep_max, "upper end of the swept axis");
    sweep->add_flag("--fig3-covary-mu", o.fig3_covary_mu, "figure 3: mu = 2 + 2 a p instead of mu = 2");
    auto* sweep_h = sweep->add_option("--horizon", o.horizon, "horizon T (figures 1, 5)");
    auto* sweep_x = sweep->add_option("--x-grid", o.x_grid, "x points (figures 2-4)");
    auto* sweep_b = sweep->add_option("--b", o.b, "barrier (figures 2-4)");

    auto* ruin = app.add_subcommand("ruin", "ruin probability slices from the PDE");
    common(ruin);
    pde(ruin);
    auto* ruin_h = ruin->add_option("--horizon", o.horizon, "horizon T");
    auto* ruin_b = ruin->add_option("--b", o.b, "barrier (default b0)");
    ruin->add_option("--x", o.x, "reserve levels to report, repeatable");
    ruin->add_option("--slices", o.slices, "time slices written");

    auto* val = app.add_subcommand("value", "value function table g(x, b)");
    common(val);
    auto* val_b = val->add_option("--b", o.b, "barrier (default b0)");
    auto* val_x = val->add_option("--x-grid", o.x_grid, "points of the table");
    val->add_option("--x-max", o.x_max, "right end of the table (default 1.25 b)");

    auto* sim = app.add_subcommand("simulate", "Monte Carlo ruin probability and dividend value");
    common(sim);
    auto* sim_h = sim->add_option("--horizon", o.horizon, "horizon T");
    auto* sim_b = sim->add_option("--b", o.b, "barrier (default b0)");
    sim->add_option("--x0", o.x0, "initial reserves, repeatable (default b)");
    ctx.flags["paths"] = sim->add_option("--paths", o.paths, "paths per estimate");
    ctx.flags["dt"] = sim->add_option("--dt", o.dt, "Euler step");
    ctx.flags["seed"] = sim->add_option("--seed", o.seed, "random seed");
    sim->add_option("--workers", o.workers, "threads (results do not depend on it)");

    auto* lb = app.add_subcommand("lower-bound", "lower bound on the ruin probability at b0");
    common(lb);
    ctx.flags["b0"] = lb->add_option("--b0", o.b0, "barrier (default: the unconstrained optimum)");
    lb->add_option("--horizon", o.horizons, "horizons, repeatable");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    }

    // Options shared by name across subcommands: only the parsed one counts.
    const std::pair<const char*, std::vector<CLI::Option*>> shared[] = {
        {"horizon", {sweep_h, ruin_h, sim_h}},
        {"x-grid", {sweep_x, val_x}},
        {"b", {sweep_b, ruin_b, val_b, sim_b}},
    };
    for (const auto& [name, options] : shared) {
        if (ctx.flags.count(name) && ctx.flags[name]->count()) continue;
        for (auto* opt : options)
            if (opt->count()) ctx.flags[name] = opt;
        if (!ctx.flags.count(name)) ctx.flags[name] = options.front();
    }
    for (auto* sub : app.get_subcommands()) {
        for (const char* name : {"config", "param", "out", "grid-ny", "grid-nt", "b-max", "psi-tol"}) {
            if (auto* opt = sub->get_option_no_throw(std::string("--") + name)) ctx.flags[name] = opt;
        }
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        if (!o.config_path.empty()) ctx.entries = read_config_file(o.config_path);
        for (const auto& item : o.inline_params) {
            const auto eq = item.find('=');
            if (eq == std::string::npos) throw ConfigError("--param expects key=value, got '" + item + "'");
            add_entry(ctx.entries, trim(item.substr(0, eq)), trim(item.substr(eq + 1)), "--param");
        }

        if (command == "solve") return cmd_solve(ctx, out);
        if (command == "sweep") return cmd_sweep(ctx, out);
        if (command == "ruin") return cmd_ruin(ctx, out);
        if (command == "value") return cmd_value(ctx, out);
        if (command == "simulate") return cmd_simulate(ctx, out);
        return cmd_lower_bound(ctx, out);
    } catch (const StageError& e) {
        err << "error: stage '" << e.stage() << "' failed: " << e.what() << "\n";
        return e.is_config_error() ? exit_config : exit_numeric;
    } catch (const InvariantViolation& e) {
        err << "error: invalid parameters: " << join(e.violations(), "; ") << "\n";
        return exit_config;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return exit_config;
    } catch (const Error& e) {
        err << "error: stage '" << command << "' failed: " << e.what() << "\n";
        return exit_numeric;
    }
}

}  // namespace divopt::cli
