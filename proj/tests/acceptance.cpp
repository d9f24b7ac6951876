// Acceptance run: one PASS/FAIL line per criterion, supplementary lines marked "info".
// Exit status is non-zero when any numbered criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <tuple>

#include "cli.hpp"
#include "contagion/oracle.hpp"
#include "contagion/pde.hpp"
#include "contagion/sim.hpp"
#include "contagion/strategy.hpp"

using namespace contagion;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, const Verdict& v) {
    if (!v.pass) ++failures;
    std::printf("%s %2d %s: %s\n", v.pass ? "PASS" : "FAIL", id, title.c_str(), v.detail.c_str());
    std::fflush(stdout);
}

void info(const std::string& title, const Verdict& v) {
    std::printf("info    %s [%s]: %s\n", title.c_str(), v.pass ? "holds" : "does not hold", v.detail.c_str());
    std::fflush(stdout);
}

template <class... Args>
std::string fmt(const char* f, Args... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

DefaultState state(std::size_t bits) { return DefaultState{static_cast<std::uint32_t>(bits)}; }

ModelSpec with_p(ModelSpec s, double p) {
    s.pref.p = p;
    return s;
}

ModelSpec excess_return(double mu) {
    ModelSpec s = load_preset("benchmark_s5");
    s.market.mu = {ScalarFn::constant(mu), ScalarFn::constant(mu)};
    return s;
}

SimConfig mc_config(const SystemSolution& sol, long paths, int steps) {
    SimConfig c = SimConfig::for_model(sol.spec);
    c.n_paths = paths;
    c.n_steps = steps;
    c.y_lo = sol.grid.y_lo;
    c.y_hi = sol.grid.y_hi;
    return c;
}

std::string describe(const McReport& r) {
    std::ostringstream s;
    s.precision(10);
    s << r.test << " est " << r.estimate << " target " << r.target << " se " << r.se;
    return s.str();
}

// ---- 1

Verdict all_defaulted(const SystemSolution& sol) {
    const SolutionField& f = sol.field(state(sol.fields.size() - 1));
    double worst = 0.0;
    for (int k = 0; k <= f.n_t; ++k) {
        const double exact = all_defaulted_closed_form(f.t(k), sol.spec).f;
        for (int j = 0; j < f.n_y; ++j) worst = std::max(worst, std::abs(f.at(k, j) - exact) / exact);
    }
    return {worst <= 1e-6 && sol.seconds < 10.0,
            fmt("max rel err %.3g (<= 1e-6), %dx%d system solve %.2f s (< 10 s)", worst, f.n_y, f.n_t, sol.seconds)};
}

// ---- 2

Verdict merton_limit() {
    const ModelSpec s = load_preset("merton_nodefault");
    const SystemSolution sol = solve_recursive_system(s, GridSpec::for_model(s));
    double pi_err = 0.0, spread = 0.0;
    for (std::size_t bits = 0; bits < sol.fields.size(); ++bits) {
        const DefaultState z = state(bits);
        const PolicyField& p = sol.policy(z);
        for (int k = 0; k <= p.n_t; ++k)
            for (int j = 0; j < p.n_y; ++j) {
                const double y = sol.grid.y(j);
                for (int i = 0; i < s.n; ++i) {
                    if (z.defaulted(i)) continue;
                    const double target = merton_fraction(s.market.mu[i](y), s.market.r, s.sigma_fn(i, i)(y), s.pref.p);
                    pi_err = std::max(pi_err, std::abs(p.pi[p.node(k, j) * s.n + i] - target));
                }
                spread = std::max(spread, std::abs(sol.field(z).at(k, j) - sol.fields[0].at(k, j)));
            }
    }
    return {pi_err <= 1e-8 && spread <= 1e-12,
            fmt("max |pi - Merton| %.3g (<= 1e-8), max state spread %.3g (<= 1e-12)", pi_err, spread)};
}

// ---- 3

Verdict solution_bounds(const SystemSolution& sol) {
    const double slack = 1e-12;
    long violations = 0, clamps = 0;
    double lower_margin = INFINITY, upper_margin = INFINITY;
    for (std::size_t bits = 0; bits < sol.fields.size(); ++bits) {
        const SolutionField& f = sol.fields[bits];
        const TruncationBounds& b = sol.bounds[bits];
        clamps += sol.reports[bits].clamp_hits;
        for (int k = 0; k <= f.n_t; ++k)
            for (int j = 0; j < f.n_y; ++j) {
                const double v = f.at(k, j);
                lower_margin = std::min(lower_margin, v - b.k_under);
                upper_margin = std::min(upper_margin, b.upper(f.t(k)) - v);
                if (v < b.k_under - slack || v > b.upper(f.t(k)) + slack) ++violations;
            }
    }
    return {violations == 0 && clamps == 0,
            fmt("%ld nodes outside [K_under, K_bar(t)], min margins %.3g below / %.3g above, clamp hits %ld",
                violations, lower_margin, upper_margin, clamps)};
}

// ---- 4

double max_gradient(const SystemSolution& sol) {
    double m = 0.0;
    for (const auto& f : sol.fields)
        for (double d : f.df) m = std::max(m, std::abs(d));
    return m;
}

Verdict gradient_refinement(const ModelSpec& s, const SystemSolution& coarse) {
    const SystemSolution fine = solve_recursive_system(s, GridSpec::for_model(s, 801, coarse.grid.n_t));
    const double a = max_gradient(coarse), b = max_gradient(fine);
    const double change = std::abs(b - a) / a;
    return {std::isfinite(a) && std::isfinite(b) && change < 0.01,
            fmt("max |df/dy| %.6g at n_y=401, %.6g at n_y=801, relative change %.3g (< 0.01)", a, b, change)};
}

// ---- 5

// Jump equation of name i for diagonal sigma, by plain bisection on (-1 + 1e-9, 50).
double bisect_hhat(const NodeCoefficients& c, const NodeValues& v, int i) {
    const double q = c.q, s = c.sigma(i, i);
    const double ratio = std::pow(v.child_f[i] / v.f, c.beta);
    const double hedge = c.rho * c.beta * v.fy / v.f * c.sigma0(i);
    auto F = [&](double h) {
        return s * (1.0 - std::pow(1.0 + h, q - 1.0) * ratio) - (1.0 - q) * (c.xi(i) - c.lambda(i) * h / s) - hedge;
    };
    double lo = -1.0 + 1e-9, hi = 50.0;
    if (F(lo) >= 0.0 || F(hi) <= 0.0) return NAN;
    for (int k = 0; k < 200; ++k) {
        const double mid = 0.5 * (lo + hi);
        (F(mid) < 0.0 ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

Verdict jump_control(const SystemSolution& sol, unsigned seed) {
    double residual = 0.0;
    for (const auto& r : sol.reports) residual = std::max(residual, r.max_hhat_residual);
    const int n = sol.spec.n;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick_k(0, sol.grid.n_t), pick_j(0, sol.grid.n_y - 1);
    std::uniform_int_distribution<std::size_t> pick_z(0, sol.fields.size() - 2); // skip all-defaulted
    double worst = 0.0;
    int nodes = 0;
    while (nodes < 100) {
        const DefaultState z = state(pick_z(rng));
        const int k = pick_k(rng), j = pick_j(rng);
        const double y = sol.grid.y(j);
        NodeCoefficients c = node_coefficients(y, z, sol.spec);
        NodeValues v;
        v.f = sol.field(z).at(k, j);
        v.fy = sol.field(z).grad(k, j);
        v.child_f.assign(n, 1.0);
        for (int i = 0; i < n; ++i)
            if (z.alive(i)) v.child_f[i] = sol.field(flip(z, i, n)).at(k, j);
        const PolicyField& policy = sol.policy(z);
        for (int i = 0; i < n; ++i) {
            if (z.defaulted(i) || c.lambda(i) <= 0.0) continue;
            const double ref = bisect_hhat(c, v, i);
            const double stored = policy.hhat[policy.node(k, j) * n + i];
            worst = std::max(worst, std::isnan(ref) ? INFINITY : std::abs(stored - ref));
        }
        ++nodes;
    }
    return {residual <= 1e-10 && worst <= 1e-8,
            fmt("max |J'sigma - Lambda| %.3g (<= 1e-10), Newton vs bisection at %d nodes %.3g (<= 1e-8)", residual,
                nodes, worst)};
}

// ---- 6

Verdict scalar_oracle() {
    ScalarModel m;
    m.lambda0 = 0.5;
    m.sigma = 0.8;
    m.xi = 0.25;
    m.r = 0.1;
    m.q = 0.0;
    const PicardResult pr = picard_fixed_point(m);
    double fixed_point = 0.0;
    for (int s = 0; s <= 64; ++s) {
        const double u = m.T * s / 64.0;
        fixed_point = std::max(fixed_point, std::abs(picard_residual(m, u, pr(u))));
    }

    // One name, frozen factor; p = -1e-8 stands in for the log-utility limit q = 0.
    ModelSpec s = ModelSpec::empty(1);
    s.factor.mu0 = ScalarFn::constant(0.0);
    s.factor.sigma0 = {ScalarFn::constant(0.0)};
    s.market.r = m.r;
    s.market.mu = {ScalarFn::constant(m.r + m.sigma * m.xi)};
    s.sigma_fn(0, 0) = ScalarFn::constant(m.sigma);
    s.lambda_fn(0, state(0)) = ScalarFn::constant(m.lambda0);
    s.pref = {-1e-8, m.K1, m.K2, m.T};
    const SystemSolution sol = solve_recursive_system(s, GridSpec::for_model(s, 3, 400));
    const PolicyField& policy = sol.policy(state(0));
    auto x = [&](double u) { return pr(u); };
    double alive = 0.0, defaulted = 0.0, strategy = 0.0;
    for (int k = 0; k <= sol.grid.n_t; ++k) {
        const double t = sol.fields[0].t(k);
        const double f0 = bernoulli_alive_solution(t, x, m), f1 = all_defaulted_closed_form(t, m).f;
        const double pi = 1.0 - std::pow(x(t), m.q - 1.0) * std::pow(f1 / f0, m.beta());
        for (int j = 0; j < sol.grid.n_y; ++j) {
            alive = std::max(alive, std::abs(sol.fields[0].at(k, j) - f0));
            defaulted = std::max(defaulted, std::abs(sol.fields[1].at(k, j) - f1));
            strategy = std::max(strategy, std::abs(policy.pi[policy.node(k, j)] - pi));
        }
    }
    const bool ok = pr.converged && pr.max_residual < 1e-8 && fixed_point < 1e-8 && alive <= 1e-4 &&
                    defaulted <= 1e-4 && strategy <= 1e-4;
    return {ok, fmt("Picard residual %.3g (< 1e-8, contraction %.4f); PDE vs oracle: f(t,0) %.3g, f(t,1) %.3g, "
                    "pi %.3g (<= 1e-4)",
                    std::max(pr.max_residual, fixed_point), pr.contraction, alive, defaulted, strategy)};
}

// ---- 7, 8

// The criteria ask for agreement within 3 SE. McReport::pass also admits a 1e-6 relative
// discretisation floor, which matters when the variance collapses; both are reported.
bool within_3se(const McReport& r) { return std::abs(r.estimate - r.target) <= 3.0 * r.se; }

Verdict feynman_kac(const SystemSolution& sol, long paths) {
    const SimConfig c = mc_config(sol, paths, 400);
    const double T = sol.spec.pref.T;
    const double probes[5][2] = {{0.2, 0.25}, {0.4, 0.75}, {0.6, 0.5}, {0.8, 0.375}, {1.0, 0.625}};
    Verdict v;
    double elapsed = 0.0, worst = 0.0;
    int passed = 0, total = 0, within_se = 0;
    std::string first_failure;
    for (std::size_t bits = 0; bits < sol.fields.size(); ++bits)
        for (const auto& pr : probes) {
            const double y = sol.grid.y_lo + pr[1] * (sol.grid.y_hi - sol.grid.y_lo);
            const McReport r = mc_feynman_kac(sol, state(bits), pr[0] * T, y, c);
            elapsed += r.elapsed;
            ++total;
            if (r.pass) ++passed;
            if (within_3se(r)) ++within_se;
            else if (first_failure.empty()) first_failure = "; first miss " + describe(r);
            if (r.se > 0.0) worst = std::max(worst, std::abs(r.estimate - r.target) / r.se);
        }
    v.pass = within_se == total && elapsed < 120.0;
    v.detail = fmt("%d/%d probes within 3 SE at %ld paths (worst %.3g SE), %d/%d with the 1e-6 floor, %.1f s "
                   "(< 120 s)",
                   within_se, total, paths, worst, passed, total, elapsed) +
               first_failure;
    return v;
}

Verdict g_martingale(const SystemSolution& sol, long paths) {
    const double T = sol.spec.pref.T;
    const auto reports = check_G_martingale(sol, mc_config(sol, paths, 400), {0.25 * T, 0.5 * T, T});
    Verdict v;
    for (const auto& r : reports) {
        v.pass = v.pass && within_3se(r);
        v.detail += (v.detail.empty() ? "" : "; ") +
                    fmt("%s %.9f vs %.9f (|err| %.2g, 3 SE %.2g, with floor %.2g)", r.test.c_str(), r.estimate,
                        r.target, std::abs(r.estimate - r.target), 3.0 * r.se, r.tolerance);
    }
    return v;
}

// ---- 9

struct DualityLine {
    McReport utility, representation, perturbed;
};

DualityLine duality(const SystemSolution& sol, long paths) {
    const SimConfig c = mc_config(sol, paths, 400);
    const DualityResult dg = duality_gap(sol, c);
    WealthOptions over;
    over.pi_scale = 1.5;
    return {dg.utility, dg.representation, check_suboptimal(sol, c, over, "pi x 1.5")};
}

std::string describe_duality(const char* label, const DualityLine& d) {
    return fmt("%s: utility %.9f vs V %.9f (|err| %.2g, 3 SE %.2g, with floor %.2g); x1.5 loss %.3g (3 SE = %.3g, %s)",
               label, d.utility.estimate, d.utility.target, std::abs(d.utility.estimate - d.utility.target),
               3.0 * d.utility.se, d.utility.tolerance,
               d.perturbed.estimate, 3.0 * d.perturbed.se, d.perturbed.pass ? "lower" : "not strictly lower");
}

// ---- 10

using NodeKey = std::tuple<double, std::string, int>; // y, state, name

std::map<double, std::map<NodeKey, double>> by_axis(const std::vector<cli::SweepRow>& rows) {
    std::map<double, std::map<NodeKey, double>> out;
    for (const auto& r : rows) out[r.axis_value][{r.y, r.state, r.name}] = r.pi_hat;
    return out;
}

// pi on the benchmark is zero up to about 1e-9; differences below this are noise.
constexpr double shape_tol = 1e-8;

struct ShapeChecks {
    bool y_monotone = true, stock_order = true, p_decreasing = true, sigma_decreasing = true, survivor = true;
    double y_excess = 0.0, order_excess = 0.0, p_excess = -INFINITY, sigma_excess = -INFINITY, survivor_excess = 0.0;

    bool all() const { return y_monotone && stock_order && p_decreasing && sigma_decreasing && survivor; }
    std::string text() const {
        return fmt("non-increasing in y %s (max rise %.3g); stock 1 <= stock 2 %s (%.3g); non-increasing in p %s "
                   "(max pi(p_next) - pi(p) %.3g); non-increasing in sigma scale %s (%.3g); survivor <= all-alive %s "
                   "(%.3g); tolerance %.0e",
                   y_monotone ? "yes" : "no", y_excess, stock_order ? "yes" : "no", order_excess,
                   p_decreasing ? "yes" : "no", p_excess, sigma_decreasing ? "yes" : "no", sigma_excess,
                   survivor ? "yes" : "no", survivor_excess, shape_tol);
    }
};

// Largest pi(next) - pi(prev) along the axis over all nodes.
double largest_rise(const std::map<double, std::map<NodeKey, double>>& axis, bool& holds) {
    double worst = -INFINITY;
    for (auto it = axis.begin(); std::next(it) != axis.end(); ++it)
        for (const auto& [key, pi] : it->second) {
            const double rise = std::next(it)->second.at(key) - pi;
            worst = std::max(worst, rise);
            if (rise > shape_tol) holds = false;
        }
    return worst;
}

ShapeChecks figure_shapes(const ModelSpec& spec, const GridSpec& grid) {
    const RunInputs base{spec, grid};
    const double tol = shape_tol;
    ShapeChecks s;
    const auto fig1 = by_axis(cli::sweep_rows(base, "fig1", cli::default_axis("fig1")));
    for (const auto& [t, nodes] : fig1)
        for (const auto& [key, pi] : nodes) {
            const auto& [y, z, name] = key;
            auto up = nodes.upper_bound({y, z, name});
            // next y for the same state and name
            for (; up != nodes.end(); ++up)
                if (std::get<1>(up->first) == z && std::get<2>(up->first) == name) break;
            if (up != nodes.end()) {
                s.y_excess = std::max(s.y_excess, up->second - pi);
                if (up->second > pi + tol) s.y_monotone = false;
            }
            const std::string none(z.size(), '0');
            if (z == none && name == 1) {
                const double other = nodes.at({y, z, 2});
                s.order_excess = std::max(s.order_excess, pi - other);
                if (pi > other + tol) s.stock_order = false;
            }
            if (z != none) {
                const double alive = nodes.at({y, none, name});
                s.survivor_excess = std::max(s.survivor_excess, pi - alive);
                if (pi > alive + tol) s.survivor = false;
            }
        }
    s.p_excess = largest_rise(by_axis(cli::sweep_rows(base, "fig2", cli::default_axis("fig2"))), s.p_decreasing);
    s.sigma_excess =
        largest_rise(by_axis(cli::sweep_rows(base, "fig3", cli::default_axis("fig3"))), s.sigma_decreasing);
    return s;
}

// ---- 11

ModelSpec constant_intensity(double l1, double l2) {
    ModelSpec s = load_preset("benchmark_s5");
    for (DefaultState z : lattice_descending(2))
        for (int i = 0; i < 2; ++i)
            if (z.alive(i)) s.lambda_fn(i, z) = ScalarFn::constant(i == 0 ? l1 : l2);
    return s;
}

Verdict simulator_exactness() {
    const ModelSpec merton = load_preset("merton_nodefault");
    SimConfig c = SimConfig::for_model(merton);
    c.n_paths = 100000;
    c.n_steps = 100;
    const McReport none = check_no_defaults(merton, c);

    const ModelSpec flat = constant_intensity(1.0, 1.0);
    SimConfig cs = SimConfig::for_model(flat);
    cs.n_paths = 100000;
    cs.n_steps = 50;
    const McReport survival = check_survival(flat, cs);

    const ModelSpec bench = load_preset("benchmark_s5");
    SimConfig cb = SimConfig::for_model(bench);
    cb.n_paths = 1000;
    cb.n_steps = 400;
    const McReport bank = check_bank_account(bench, cb, 1.5);
    return {none.pass && none.estimate == 0.0 && survival.pass && bank.pass && bank.estimate <= 1e-12,
            fmt("defaults with lambda = 0: %.0f; survival %.6f vs e^-2 = %.6f (se %.2g); bank account max rel err "
                "%.3g (<= 1e-12)",
                none.estimate, survival.estimate, survival.target, survival.se, bank.estimate)};
}

} // namespace

int main() {
    const auto start = std::chrono::steady_clock::now();
    const long paths = 100000;

    const ModelSpec bench = load_preset("benchmark_s5");
    const GridSpec grid = GridSpec::for_model(bench, 401, 400);
    const SystemSolution sol = solve_recursive_system(bench, grid);

    criterion(1, "all-defaulted closed form", all_defaulted(sol));
    criterion(2, "Merton limit", merton_limit());
    criterion(3, "a priori solution bounds", solution_bounds(sol));
    criterion(4, "gradient under refinement", gradient_refinement(bench, sol));
    const ModelSpec tilted = excess_return(0.3);
    const SystemSolution tilted_sol = solve_recursive_system(tilted, grid);
    info("gradient under refinement, mu = 0.3", gradient_refinement(tilted, tilted_sol));
    criterion(5, "jump control residual and bisection", jump_control(sol, 2024));
    info("jump control, mu = 0.3", jump_control(tilted_sol, 2024));
    criterion(6, "scalar oracle and Picard fixed point", scalar_oracle());
    criterion(7, "Feynman-Kac agreement", feynman_kac(sol, paths));
    criterion(8, "G martingale", g_martingale(sol, paths));
    info("Feynman-Kac agreement, mu = 0.3", feynman_kac(tilted_sol, paths));
    info("G martingale, mu = 0.3", g_martingale(tilted_sol, paths));

    const SystemSolution low_p = solve_recursive_system(with_p(bench, 0.1), grid);
    const DualityLine d8 = duality(sol, paths), d1 = duality(low_p, paths);
    criterion(9, "duality gap and perturbed policy",
              {within_3se(d8.utility) && within_3se(d1.utility) && d8.perturbed.pass && d1.perturbed.pass,
               describe_duality("p=0.8", d8) + "; " + describe_duality("p=0.1", d1)});
    info("wealth representation",
         {d8.representation.pass && d1.representation.pass,
          "p=0.8 " + describe(d8.representation) + "; p=0.1 " + describe(d1.representation)});
    {
        const ModelSpec steep = with_p(excess_return(0.6), 0.1);
        const SystemSolution steep_sol = solve_recursive_system(steep, grid);
        const DualityLine ds = duality(steep_sol, paths);
        info("perturbed policy, mu = 0.6, p = 0.1",
             {ds.perturbed.pass, fmt("x1.5 loss %.4g, 3 SE %.3g", ds.perturbed.estimate, 3.0 * ds.perturbed.se)});
        // Defaulted names keep their market price of risk in the density, which the investor cannot trade.
        info("duality, mu = 0.6, p = 0.1", {within_3se(ds.utility), fmt("utility %.6f vs V %.6f, 3 SE %.3g",
                                                                  ds.utility.estimate, ds.utility.target,
                                                                  3.0 * ds.utility.se)});
    }

    const ShapeChecks shapes = figure_shapes(bench, grid);
    criterion(10, "figure sensitivities", {shapes.all(), shapes.text()});
    const ShapeChecks tilted_shapes = figure_shapes(tilted, grid);
    info("figure sensitivities, mu = 0.3", {tilted_shapes.all(), tilted_shapes.text()});

    criterion(11, "simulator exactness", simulator_exactness());

    std::printf("%d of 11 criteria failed; total %.1f s\n", failures, seconds_since(start));
    return failures == 0 ? 0 : 1;
}
