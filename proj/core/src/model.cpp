#include "contagion/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace contagion {

int DefaultState::cardinality() const { return std::popcount(bits); }

std::string DefaultState::bitstring(int n) const {
    std::string s(n, '0');
    for (int i = 0; i < n; ++i)
        if (defaulted(i)) s[i] = '1';
    return s;
}

DefaultState DefaultState::from_bitstring(std::string_view s) {
    if (s.empty() || s.size() > max_names) throw std::invalid_argument("bad default-state bitstring");
    DefaultState z;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '1') z.bits |= 1u << i;
        else if (s[i] != '0') throw std::invalid_argument("bad default-state bitstring: " + std::string(s));
    }
    return z;
}

DefaultState flip(DefaultState z, int i, int n) {
    if (i < 0 || i >= n) throw std::out_of_range("flip: name index out of range");
    return {z.bits ^ (1u << i)};
}

std::vector<DefaultState> lattice_descending(int n) {
    if (n < 1 || n > max_names) throw std::invalid_argument("lattice: n must be in [1, 16]");
    std::vector<DefaultState> out;
    out.reserve(std::size_t{1} << n);
    for (std::uint32_t b = 0; b < (1u << n); ++b) out.push_back({b});
    std::stable_sort(out.begin(), out.end(), [](DefaultState a, DefaultState b) {
        return a.cardinality() > b.cardinality();
    });
    return out;
}

// ---------------------------------------------------------------------------

double ScalarFn::operator()(double y) const {
    switch (kind) {
    case Kind::constant: return a;
    case Kind::affine: return a + b * y;
    case Kind::exp_affine: return a + b * std::exp(c * y);
    case Kind::scott: return c * std::sqrt(a + std::exp(b * y));
    case Kind::stein: return c * std::sqrt(a + b * y * y);
    case Kind::table: {
        if (y <= xs.front()) return ys.front();
        if (y >= xs.back()) return ys.back();
        auto it = std::upper_bound(xs.begin(), xs.end(), y);
        std::size_t k = static_cast<std::size_t>(it - xs.begin()) - 1;
        double w = (y - xs[k]) / (xs[k + 1] - xs[k]);
        return (1.0 - w) * ys[k] + w * ys[k + 1];
    }
    }
    return 0.0;
}

ScalarFn ScalarFn::constant(double v) { return {Kind::constant, v, 0.0, 0.0, {}, {}}; }
ScalarFn ScalarFn::affine(double a, double b) { return {Kind::affine, a, b, 0.0, {}, {}}; }
ScalarFn ScalarFn::exp_affine(double a, double b, double c) { return {Kind::exp_affine, a, b, c, {}, {}}; }
ScalarFn ScalarFn::scott(double eps, double gamma, double scale) { return {Kind::scott, eps, gamma, scale, {}, {}}; }
ScalarFn ScalarFn::stein(double eps, double gamma, double scale) { return {Kind::stein, eps, gamma, scale, {}, {}}; }

ScalarFn ScalarFn::table(std::vector<double> xs, std::vector<double> ys) {
    if (xs.size() < 2 || xs.size() != ys.size()) throw std::invalid_argument("table needs >= 2 matching points");
    if (!std::is_sorted(xs.begin(), xs.end()) || std::adjacent_find(xs.begin(), xs.end()) != xs.end())
        throw std::invalid_argument("table abscissae must be strictly increasing");
    ScalarFn f;
    f.kind = Kind::table;
    f.xs = std::move(xs);
    f.ys = std::move(ys);
    return f;
}

ScalarFn ScalarFn::parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string head;
    if (!(in >> head)) throw std::invalid_argument("empty coefficient");
    auto need = [&](std::size_t k, std::size_t optional = 0) {
        std::vector<double> v;
        double x = 0.0;
        while (in >> x) v.push_back(x);
        if (!in.eof() || v.size() < k || v.size() > k + optional)
            throw std::invalid_argument("coefficient '" + std::string(text) + "': expected " + std::to_string(k) + " numbers");
        return v;
    };
    if (head == "const") return constant(need(1)[0]);
    if (head == "affine") { auto v = need(2); return affine(v[0], v[1]); }
    if (head == "expaff") { auto v = need(3); return exp_affine(v[0], v[1], v[2]); }
    if (head == "scott") { auto v = need(2, 1); return scott(v[0], v[1], v.size() > 2 ? v[2] : 1.0); }
    if (head == "stein") { auto v = need(2, 1); return stein(v[0], v[1], v.size() > 2 ? v[2] : 1.0); }
    if (head == "table") {
        std::vector<double> xs, ys;
        std::string tok;
        while (in >> tok) {
            auto colon = tok.find(':');
            if (colon == std::string::npos) throw std::invalid_argument("table entry must be y:value");
            xs.push_back(std::stod(tok.substr(0, colon)));
            ys.push_back(std::stod(tok.substr(colon + 1)));
        }
        return table(std::move(xs), std::move(ys));
    }
    // a bare number is a constant
    try {
        std::size_t used = 0;
        double v = std::stod(std::string(text), &used);
        if (used == text.size()) return constant(v);
    } catch (const std::exception&) {
    }
    throw std::invalid_argument("unknown coefficient form '" + std::string(text) + "'");
}

ScalarFn ScalarFn::scaled(double s) const {
    ScalarFn out = *this;
    switch (kind) {
    case Kind::constant: out.a *= s; break;
    case Kind::affine:
    case Kind::exp_affine:
        out.a *= s;
        out.b *= s;
        break;
    case Kind::scott:
    case Kind::stein: out.c *= s; break;
    case Kind::table:
        for (double& v : out.ys) v *= s;
        break;
    }
    return out;
}

std::string ScalarFn::to_string() const {
    std::ostringstream out;
    out.precision(17);
    switch (kind) {
    case Kind::constant: out << "const " << a; break;
    case Kind::affine: out << "affine " << a << ' ' << b; break;
    case Kind::exp_affine: out << "expaff " << a << ' ' << b << ' ' << c; break;
    case Kind::scott: out << "scott " << a << ' ' << b << ' ' << c; break;
    case Kind::stein: out << "stein " << a << ' ' << b << ' ' << c; break;
    case Kind::table:
        out << "table";
        for (std::size_t k = 0; k < xs.size(); ++k) out << ' ' << xs[k] << ':' << ys[k];
        break;
    }
    return out.str();
}

// ---------------------------------------------------------------------------

double ModelSpec::beta() const {
    double q = this->q();
    double rho = factor.rho;
    return (1.0 - q) / (1.0 - q * rho * rho);
}

double ModelSpec::initial_value() const {
    double q = this->q();
    double rho = factor.rho;
    return std::pow(pref.K1, 1.0 - q * rho * rho);
}

double ModelSpec::lambda(int i, DefaultState z, double y) const {
    if (z.defaulted(i)) return 0.0;
    return lambda_fn(i, z)(y);
}

Eigen::VectorXd ModelSpec::mu(double y) const {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = market.mu[i](y);
    return v;
}

Eigen::MatrixXd ModelSpec::sigma(double y) const {
    Eigen::MatrixXd s(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) s(i, j) = sigma_fn(i, j)(y);
    return s;
}

Eigen::RowVectorXd ModelSpec::sigma0(double y) const {
    Eigen::RowVectorXd s(n);
    for (int i = 0; i < n; ++i) s(i) = factor.sigma0[i](y);
    return s;
}

ModelSpec ModelSpec::empty(int n) {
    if (n < 1 || n > max_names) throw std::invalid_argument("n must be in [1, 16]");
    ModelSpec s;
    s.n = n;
    s.factor.mu0 = ScalarFn::constant(0.0);
    s.factor.sigma0.assign(n, ScalarFn::constant(0.0));
    s.market.mu.assign(n, ScalarFn::constant(0.0));
    s.market.sigma.assign(static_cast<std::size_t>(n) * n, ScalarFn::constant(0.0));
    s.credit.lambda.assign((std::size_t{1} << n) * n, ScalarFn::constant(0.0));
    return s;
}

GridSpec GridSpec::for_model(const ModelSpec& spec, int n_y, int n_t) {
    GridSpec g;
    g.y_lo = spec.factor.domain_lo;
    g.y_hi = spec.factor.domain_hi;
    g.n_y = n_y;
    g.n_t = n_t;
    return g;
}

bool ValidationReport::ok() const {
    return std::all_of(checks.begin(), checks.end(), [](const AssumptionCheck& c) { return c.passed; });
}

std::string ValidationReport::summary() const {
    std::ostringstream out;
    for (const auto& c : checks) {
        out << (c.passed ? "pass " : "FAIL ") << c.name;
        if (!c.passed) {
            if (c.offending_y) out << " at y=" << *c.offending_y;
            out << ": " << c.message;
        }
        out << '\n';
    }
    return out.str();
}

} // namespace contagion
