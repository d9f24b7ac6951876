#include <doctest.h>

#include <cmath>
#include <numbers>

#include "contagion/oracle.hpp"
#include "contagion/pde.hpp"

using namespace contagion;

namespace {

PhiNorms quiet_norms(int n) {
    PhiNorms norms;
    norms.lambda_sup.assign(n, 0.0);
    norms.hhat_sup.assign(n, 0.0);
    norms.jump_power_sup.assign(n, 1.0);
    return norms;
}

double max_abs_diff_on_coarse(const SolutionField& coarse, const SolutionField& fine) {
    const int ky = (fine.n_y - 1) / (coarse.n_y - 1), kt = fine.n_t / coarse.n_t;
    double worst = 0.0;
    for (int k = 0; k <= coarse.n_t; ++k)
        for (int j = 0; j < coarse.n_y; ++j)
            worst = std::max(worst, std::abs(coarse.at(k, j) - fine.at(k * kt, j * ky)));
    return worst;
}

} // namespace

TEST_SUITE("pde") {

TEST_CASE("bounds of the all-defaulted benchmark state") {
    ModelSpec s = load_preset("benchmark_s5");
    TruncationBounds b = truncation_bounds(DefaultState{3}, {}, s, quiet_norms(2));
    CHECK(b.phi.lower == doctest::Approx(0.0));
    CHECK(b.phi.upper == doctest::Approx(0.8));
    CHECK(b.k_under == doctest::Approx(1.0));
    CHECK(b.initial == doctest::Approx(1.0));
    // ell(t) has log-slope beta^{-1} m_upper = 0.8 / 5.
    for (double t : {0.0, 0.25, 1.0}) CHECK(b.ell(t) == doctest::Approx(std::exp(0.16 * t)));
    CHECK(b.upper(0.0) == doctest::Approx(1.0));
    // The all-defaulted state has only the K2 feed.
    CHECK(b.theta_rate == doctest::Approx(0.2));
    // The closed form stays below the bound.
    for (double t : {0.1, 0.5, 1.0}) CHECK(all_defaulted_closed_form(t, s).f <= b.upper(t));
}

TEST_CASE("bounds when q lies in (0,1)") {
    ModelSpec s = load_preset("benchmark_s5");
    s.pref.p = -1.0;
    TruncationBounds b = truncation_bounds(DefaultState{3}, {}, s, quiet_norms(2));
    CHECK(b.phi.upper == 0.0);
    for (double t : {0.0, 0.4, 1.0}) CHECK(b.ell(t) == 1.0);
    CHECK(b.k_under <= 1.0);
}

TEST_CASE("children feed the upper bound") {
    ModelSpec s = load_preset("benchmark_s5");
    TruncationBounds leaf = truncation_bounds(DefaultState{3}, {}, s, quiet_norms(2));
    PhiNorms norms = quiet_norms(2);
    norms.lambda_sup = {0.0, 2.0};
    TruncationBounds one = truncation_bounds(DefaultState{1}, {leaf, leaf}, s, norms);
    CHECK(one.upper(1.0) > leaf.upper(1.0));
    CHECK(one.k_under <= 1.0);
    CHECK_THROWS_AS(truncation_bounds(DefaultState{1}, {}, s, norms), std::invalid_argument);
}

TEST_CASE("nonlinear source") {
    ModelSpec s = load_preset("benchmark_s5");
    s.pref.K2 = 1.3;
    const double beta = s.beta(), q = s.q();
    NodeCoefficients c = node_coefficients(0.2, DefaultState{3}, s);
    std::vector<double> child(2, 1.0);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(2);
    for (double v : {0.5, 1.0, 2.0})
        CHECK(nonlinear_source(0.0, v, c, child, h, s.pref.K2) ==
              doctest::Approx(std::pow(s.pref.K2, 1.0 - q) * std::pow(v, 1.0 - beta) / beta));

    NodeCoefficients alive = node_coefficients(0.2, DefaultState{0}, s);
    child = {1.2, 0.9};
    h << 0.1, -0.2;
    double feed = std::pow(s.pref.K2, 1.0 - q);
    for (int i = 0; i < 2; ++i) feed += std::pow(child[i], beta) * std::pow(1.0 + h(i), q) * alive.lambda(i);
    CHECK(nonlinear_source(0.0, 1.1, alive, child, h, s.pref.K2) ==
          doctest::Approx(std::pow(1.1, 1.0 - beta) * feed / beta));

    TruncationBounds b;
    b.k_under = 0.8;
    b.initial = 1.0;
    bool moved = false;
    const double clamped = nonlinear_source(0.0, 0.1, c, child, h, s.pref.K2, &b, &moved);
    CHECK(moved);
    CHECK(clamped == doctest::Approx(nonlinear_source(0.0, 0.8, c, child, h, s.pref.K2)));
    nonlinear_source(0.0, 0.9, c, child, h, s.pref.K2, &b, &moved);
    CHECK_FALSE(moved);
    CHECK_THROWS_AS(nonlinear_source(0.0, -1.0, c, child, h, s.pref.K2), SolverError);
}

TEST_CASE("step_slice basics") {
    const int n = 21;
    const double dy = 0.1;
    SliceOperator op(n);
    for (int j = 0; j < n; ++j) {
        op.diffusion[j] = 0.2 + 0.01 * j;
        op.drift[j] = 0.5 - 0.05 * j;
    }
    std::vector<double> f(n), next;
    for (int j = 0; j < n; ++j) f[j] = 1.0 + 0.3 * std::sin(0.4 * j);

    step_slice(f, op, op, 0.0, dy, next);
    CHECK(next == f);

    std::vector<double> flat(n, 2.5);
    step_slice(flat, op, op, 0.01, dy, next);
    for (double v : next) CHECK(v == doctest::Approx(2.5).epsilon(1e-14));

    // Pure reaction: the trapezoidal factor (1 + k dt/2) / (1 - k dt/2).
    SliceOperator react(n);
    for (int j = 0; j < n; ++j) react.reaction[j] = 0.7;
    step_slice(flat, react, react, 0.1, dy, next);
    for (double v : next) CHECK(v == doctest::Approx(2.5 * 1.035 / 0.965).epsilon(1e-14));

    // Pure source.
    SliceOperator src(n);
    for (int j = 0; j < n; ++j) src.source[j] = 3.0;
    step_slice(flat, src, src, 0.1, dy, next);
    for (double v : next) CHECK(v == doctest::Approx(2.8).epsilon(1e-14));
}

TEST_CASE("step_slice is second order on the Neumann heat equation") {
    // f = 1 + cos(pi y / L) exp(-a (pi/L)^2 t) on [0, L] has zero flux at both ends.
    const double a = 0.3, L = 1.0, T = 0.5;
    auto error = [&](int cells, int steps) {
        const int n = cells + 1;
        const double dy = L / cells, dt = T / steps;
        SliceOperator op(n);
        for (double& d : op.diffusion) d = a;
        std::vector<double> f(n), next;
        for (int j = 0; j < n; ++j) f[j] = 1.0 + std::cos(std::numbers::pi * j * dy / L);
        for (int k = 0; k < steps; ++k) {
            step_slice(f, op, op, dt, dy, next);
            f.swap(next);
        }
        const double decay = std::exp(-a * std::pow(std::numbers::pi / L, 2) * T);
        double worst = 0.0;
        for (int j = 0; j < n; ++j)
            worst = std::max(worst, std::abs(f[j] - (1.0 + std::cos(std::numbers::pi * j * dy / L) * decay)));
        return worst;
    };
    const double e1 = error(20, 20), e2 = error(40, 40), e3 = error(80, 80);
    CHECK(e1 / e2 == doctest::Approx(4.0).epsilon(0.15));
    CHECK(e2 / e3 == doctest::Approx(4.0).epsilon(0.15));
}

TEST_CASE("benchmark system on a coarse grid") {
    ModelSpec s = load_preset("benchmark_s5");
    GridSpec g = GridSpec::for_model(s, 51, 200);
    SystemSolution sol = solve_recursive_system(s, g);
    REQUIRE(sol.fields.size() == 4);
    REQUIRE(sol.policies.size() == 4);
    const SolutionField& dead = sol.field(DefaultState{3});
    double worst = 0.0;
    for (int k = 0; k <= g.n_t; ++k) {
        const double exact = all_defaulted_closed_form(dead.t(k), s).f;
        for (int j = 0; j < g.n_y; ++j) worst = std::max(worst, std::abs(dead.at(k, j) / exact - 1.0));
    }
    CHECK(worst < 1e-6);
    for (const auto& rep : sol.reports) {
        CHECK(rep.bound_violations == 0);
        CHECK(rep.clamp_hits == 0);
        CHECK(rep.max_hhat_residual < 1e-10);
    }
    for (const auto& f : sol.fields)
        for (double v : f.f) CHECK(v > 0.0);
}

TEST_CASE("three names give eight states") {
    ModelSpec s = ModelSpec::empty(3);
    s.factor.mu0 = ScalarFn::affine(0.2, -1.0);
    s.factor.sigma0 = {ScalarFn::constant(0.3), ScalarFn::constant(0.2), ScalarFn::constant(0.1)};
    s.market.r = 0.03;
    for (int i = 0; i < 3; ++i) {
        s.market.mu[i] = ScalarFn::constant(0.08 + 0.01 * i);
        s.sigma_fn(i, i) = ScalarFn::constant(0.25 + 0.05 * i);
    }
    for (DefaultState z : lattice_descending(3))
        for (int i = 0; i < 3; ++i)
            if (z.alive(i)) s.lambda_fn(i, z) = ScalarFn::exp_affine(0.05 + 0.05 * z.cardinality(), 0.02, 0.5);
    s.pref = {0.5, 1.0, 1.0, 1.0};
    GridSpec g = GridSpec::for_model(s, 41, 40);
    REQUIRE(validate_spec(s, g).ok());
    SystemSolution sol = solve_recursive_system(s, g);
    CHECK(sol.fields.size() == 8);
    for (const auto& rep : sol.reports) CHECK(rep.max_hhat_residual < 1e-10);
}

TEST_CASE("Merton preset: identical states") {
    ModelSpec s = load_preset("merton_nodefault");
    SystemSolution sol = solve_recursive_system(s, GridSpec::for_model(s, 41, 40));
    for (std::uint32_t bits = 1; bits < 4; ++bits)
        for (std::size_t k = 0; k < sol.fields[0].f.size(); ++k)
            CHECK(std::abs(sol.fields[bits].f[k] - sol.fields[0].f[k]) <= 1e-12);
}

TEST_CASE("self-convergence under grid refinement") {
    ModelSpec s = load_preset("scott_example22");
    auto solve = [&](int ny, int nt) { return solve_recursive_system(s, GridSpec::for_model(s, ny, nt)); };
    SystemSolution a = solve(21, 20), b = solve(41, 40), c = solve(81, 80);
    for (std::uint32_t bits = 0; bits < 4; ++bits) {
        const double d1 = max_abs_diff_on_coarse(a.fields[bits], b.fields[bits]);
        const double d2 = max_abs_diff_on_coarse(b.fields[bits], c.fields[bits]);
        CAPTURE(bits);
        CAPTURE(d1);
        CAPTURE(d2);
        CHECK(d1 / d2 > 3.0);
        CHECK(d1 / d2 < 5.5);
    }
}

TEST_CASE("a solution leaving its bounds is reported") {
    ModelSpec s = load_preset("benchmark_s5");
    s.pref.K1 = 0.0; // f(0) = 0 makes the source singular
    CHECK_THROWS(solve_recursive_system(s, GridSpec::for_model(s, 21, 20)));
}

} // TEST_SUITE
