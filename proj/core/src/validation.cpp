#include <cmath>
#include <sstream>

#include "contagion/dual.hpp"
#include "contagion/model.hpp"

namespace contagion {

namespace {

constexpr double condition_cap = 1e10;

AssumptionCheck check(std::string name) {
    AssumptionCheck c;
    c.name = std::move(name);
    return c;
}

void fail(AssumptionCheck& c, std::string msg, std::optional<double> y = std::nullopt) {
    if (!c.passed) return; // keep the first offending point
    c.passed = false;
    c.message = std::move(msg);
    c.offending_y = y;
}

bool finite(double v) { return std::isfinite(v); }

} // namespace

ValidationReport validate_spec(const ModelSpec& spec, const GridSpec& grid) {
    ValidationReport report;
    const int n = spec.n;

    auto shape = check("shape");
    if (n < 1 || n > max_names) fail(shape, "n must lie in [1, 16]");
    if (spec.factor.m != 1) fail(shape, "the grid solver supports a one-dimensional factor only");
    if (static_cast<int>(spec.factor.sigma0.size()) != n || static_cast<int>(spec.market.mu.size()) != n ||
        static_cast<int>(spec.market.sigma.size()) != n * n ||
        spec.credit.lambda.size() != (std::size_t{1} << n) * static_cast<std::size_t>(n))
        fail(shape, "coefficient tables do not match n");
    if (grid.n_y < 3 || grid.n_y % 2 == 0) fail(shape, "n_y must be odd and >= 3");
    if (grid.n_t < 1) fail(shape, "n_t must be >= 1");
    report.checks.push_back(shape);
    if (!shape.passed) return report;

    auto prefs = check("preferences");
    const auto& pr = spec.pref;
    if (!(pr.p < 1.0) || pr.p == 0.0) fail(prefs, "p must satisfy p < 1, p != 0");
    if (!(pr.K1 > 0.0) || !(pr.K2 > 0.0)) fail(prefs, "K1 and K2 must be positive");
    if (!(pr.T > 0.0)) fail(prefs, "T must be positive");
    if (!(std::abs(spec.factor.rho) < 1.0)) fail(prefs, "rho must lie strictly inside (-1, 1)");
    report.checks.push_back(prefs);

    // Bounded declared domain containing the grid; the non-exit property is not checkable.
    auto domain = check("factor domain");
    if (!(spec.factor.domain_lo < spec.factor.domain_hi)) fail(domain, "empty factor domain");
    if (!(grid.y_lo < grid.y_hi)) fail(domain, "grid bounds reversed");
    if (grid.y_lo < spec.factor.domain_lo || grid.y_hi > spec.factor.domain_hi)
        fail(domain, "grid extends beyond the declared factor domain");
    report.checks.push_back(domain);

    auto coeffs = check("coefficients");
    auto reference = check("reference controls");
    auto inv = check("sigma invertible");

    const auto states = lattice_descending(n);
    for (int j = 0; j < grid.n_y; ++j) {
        const double y = grid.y(j);
        if (!finite(spec.factor.mu0(y))) fail(coeffs, "factor drift not finite", y);
        for (int i = 0; i < n; ++i)
            if (!finite(spec.factor.sigma0[i](y))) fail(coeffs, "factor volatility not finite", y);
        for (DefaultState z : states) {
            for (int i = 0; i < n; ++i) {
                if (z.defaulted(i)) continue;
                double l = spec.lambda(i, z, y);
                if (!finite(l)) fail(coeffs, "intensity of name " + std::to_string(i + 1) + " not finite", y);
                else if (l < 0.0)
                    fail(coeffs, "intensity of name " + std::to_string(i + 1) + " negative in state " + z.bitstring(n), y);
            }
        }

        Eigen::MatrixXd s = spec.sigma(y);
        if (!s.allFinite()) {
            fail(inv, "volatility not finite", y);
            continue;
        }
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(s);
        const auto& sv = svd.singularValues();
        double smin = sv(sv.size() - 1);
        if (!(smin > 0.0) || sv(0) / smin > condition_cap) {
            fail(inv, "volatility matrix singular or ill-conditioned", y);
            continue;
        }
        // The candidate theta = xi pairs with h = 0 on every state; it must be finite
        // and the linear relation must reproduce h within the admissible region.
        Eigen::VectorXd xi = market_price_of_risk(y, spec);
        if (!xi.allFinite()) {
            fail(reference, "market price of risk not finite", y);
            continue;
        }
        for (DefaultState z : states) {
            NodeCoefficients c = node_coefficients(y, z, spec);
            Eigen::VectorXd h = h_from_theta(xi, c);
            for (int i : c.alive)
                if (!(h(i) > -1.0 + jump_floor)) fail(reference, "no admissible jump control in state " + z.bitstring(n), y);
        }
    }
    report.checks.push_back(coeffs);
    report.checks.push_back(inv);
    report.checks.push_back(reference);
    return report;
}

} // namespace contagion
