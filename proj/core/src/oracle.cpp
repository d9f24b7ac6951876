#include "contagion/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace contagion {

double ScalarModel::phi_defaulted() const { return 0.5 * q * (q - 1.0) * xi * xi - q * r; }

double ScalarModel::a() const { return q * (q - 1.0) * lambda0 * lambda0 / (2.0 * sigma * sigma); }

double ScalarModel::b() const {
    return q * (1.0 - q) * lambda0 * lambda0 / (sigma * sigma) + q * lambda0 * ((1.0 - q) * xi / sigma - 1.0);
}

double ScalarModel::c() const {
    return q * lambda0 * ((q - 1.0) * xi / sigma + 1.0) - q * r - lambda0 + 0.5 * q * (q - 1.0) * xi * xi +
           q * (q - 1.0) * lambda0 * lambda0 / (2.0 * sigma * sigma);
}

double ScalarModel::phi_alive(double x) const { return (a() * x + b()) * x + c(); }

double ScalarModel::a_tilde() const { return beta() * lambda0 * lambda0 / (sigma * sigma); }

double ScalarModel::b_tilde() const {
    return lambda0 * (beta() * (xi * sigma + lambda0) - sigma * sigma) / (sigma * sigma);
}

double ScalarModel::ell(double t) const {
    return lambda0 * linear_ode_closed_form(t, phi_defaulted(), std::pow(K2, beta()), std::pow(K1, beta()));
}

double linear_ode_closed_form(double t, double phi, double k, double g0) {
    if (phi == 0.0) return g0 + k * t;
    return std::exp(phi * t) * g0 + k * std::expm1(phi * t) / phi;
}

double linear_ode_rk4(double t, double phi, double k, double g0, int steps) {
    if (steps < 1) throw std::invalid_argument("linear_ode_rk4: steps < 1");
    const double h = t / steps;
    auto rhs = [&](double g) { return phi * g + k; };
    double g = g0;
    for (int s = 0; s < steps; ++s) {
        double k1 = rhs(g);
        double k2 = rhs(g + 0.5 * h * k1);
        double k3 = rhs(g + 0.5 * h * k2);
        double k4 = rhs(g + h * k3);
        g += h * (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
    }
    return g;
}

AllDefaulted all_defaulted_closed_form(double t, const ModelSpec& spec) {
    const int n = spec.n;
    Eigen::VectorXd excess = spec.mu(0.0) - Eigen::VectorXd::Constant(n, spec.market.r);
    Eigen::VectorXd xi = spec.sigma(0.0).fullPivLu().solve(excess);
    const double q = spec.q();
    const double beta = spec.beta();
    const double phi = 0.5 * q * (q - 1.0) * xi.squaredNorm() - q * spec.market.r;
    const double g0 = std::pow(spec.initial_value(), beta);
    AllDefaulted out;
    out.g = linear_ode_closed_form(t, phi, std::pow(spec.pref.K2, 1.0 - q), g0);
    out.f = std::pow(out.g, 1.0 / beta);
    return out;
}

AllDefaulted all_defaulted_closed_form(double t, const ScalarModel& m) {
    AllDefaulted out;
    out.g = linear_ode_closed_form(t, m.phi_defaulted(), std::pow(m.K2, m.beta()), std::pow(m.K1, m.beta()));
    out.f = std::pow(out.g, 1.0 / m.beta());
    return out;
}

double bernoulli_alive_solution(double t, const std::function<double(double)>& x, const ScalarModel& m, int panels) {
    const double k1 = std::pow(m.K1, m.beta());
    if (t <= 0.0) return k1;
    if (panels < 2 || panels % 2) throw std::invalid_argument("bernoulli_alive_solution: panels must be even");
    const double k2 = std::pow(m.K2, m.beta());
    const double h = t / panels;
    auto phi = [&](double s) { return m.phi_alive(x(s)); };

    // Exponent E(s) = int_0^s phi, accumulated panel by panel with Simpson on each half-step pair.
    std::vector<double> expo(panels + 1, 0.0);
    double left = phi(0.0);
    for (int j = 1; j <= panels; ++j) {
        double s0 = (j - 1) * h;
        double mid = phi(s0 + 0.5 * h);
        double right = phi(s0 + h);
        expo[j] = expo[j - 1] + h * (left + 4.0 * mid + right) / 6.0;
        left = right;
    }
    double sum = 0.0;
    for (int j = 0; j <= panels; ++j) {
        double s = j * h;
        double w = (j == 0 || j == panels) ? 1.0 : (j % 2 ? 4.0 : 2.0);
        sum += w * std::exp(-expo[j]) * (k2 + m.ell(s) * std::pow(x(s), m.q));
    }
    return std::exp(expo[panels]) * (sum * h / 3.0 + k1);
}

double bernoulli_alive_rk4(double t, const std::function<double(double)>& x, const ScalarModel& m, int steps) {
    const double k1 = std::pow(m.K1, m.beta());
    if (t <= 0.0) return k1;
    const double k2 = std::pow(m.K2, m.beta());
    const int count = std::max(1, static_cast<int>(std::ceil(steps * t / m.T)));
    const double h = t / count;
    auto rhs = [&](double s, double v) {
        double xs = x(s);
        return m.phi_alive(xs) * v + k2 + m.ell(s) * std::pow(xs, m.q);
    };
    double v = k1;
    for (int i = 0; i < count; ++i) {
        double s = i * h;
        double d1 = rhs(s, v);
        double d2 = rhs(s + 0.5 * h, v + 0.5 * h * d1);
        double d3 = rhs(s + 0.5 * h, v + 0.5 * h * d2);
        double d4 = rhs(s + h, v + h * d3);
        v += h * (d1 + 2.0 * d2 + 2.0 * d3 + d4) / 6.0;
    }
    return v;
}

double PicardResult::operator()(double u_) const {
    if (u.empty()) throw std::logic_error("PicardResult: empty");
    if (u_ <= u.front()) return x.front();
    if (u_ >= u.back()) return x.back();
    const double du = u[1] - u[0];
    std::size_t k = std::min(static_cast<std::size_t>((u_ - u.front()) / du), u.size() - 2);
    double w = (u_ - u[k]) / du;
    return (1.0 - w) * x[k] + w * x[k + 1];
}

namespace {

void require_log_regime(const ScalarModel& m) {
    if (m.q != 0.0) throw std::invalid_argument("picard_fixed_point: requires q = 0");
    if (!(m.lambda0 > 0.0) || !(m.sigma > 0.0)) throw std::invalid_argument("picard_fixed_point: lambda0, sigma > 0");
    if (!(m.b_tilde() > 0.0)) throw std::invalid_argument("picard_fixed_point: requires b~ > 0");
}

// f~^x(u, 0) does not depend on x when q = 0.
double alive_value(const ScalarModel& m, double u) {
    return bernoulli_alive_solution(u, [](double) { return 1.0; }, m);
}

} // namespace

double picard_residual(const ScalarModel& m, double u, double x) {
    require_log_regime(m);
    return x - m.epsilon() - m.ell(u) / (m.a_tilde() * alive_value(m, u) * std::pow(x, m.beta()));
}

PicardResult picard_fixed_point(const ScalarModel& m, int nodes, double tol, int max_iter) {
    require_log_regime(m);
    if (nodes < 2) throw std::invalid_argument("picard_fixed_point: nodes < 2");
    const double eps = m.epsilon();
    const double at = m.a_tilde();
    const double beta = m.beta();

    PicardResult out;
    out.u.resize(nodes);
    std::vector<double> ell(nodes), alive(nodes);
    for (int k = 0; k < nodes; ++k) {
        out.u[k] = m.T * k / (nodes - 1);
        ell[k] = m.ell(out.u[k]);
        alive[k] = alive_value(m, out.u[k]);
        out.global_bound = std::max(out.global_bound, ell[k] * beta * std::pow(eps, -beta - 1.0) / (at * alive[k]));
    }
    out.x.assign(nodes, eps);
    std::vector<double> next(nodes);
    for (out.iterations = 1; out.iterations <= max_iter; ++out.iterations) {
        out.last_change = 0.0;
        for (int k = 0; k < nodes; ++k) {
            next[k] = eps + ell[k] / (at * alive[k] * std::pow(out.x[k], beta));
            out.last_change = std::max(out.last_change, std::abs(next[k] - out.x[k]));
        }
        out.x.swap(next);
        if (out.last_change < tol) {
            out.converged = true;
            break;
        }
    }
    out.iterations = std::min(out.iterations, max_iter);
    for (int k = 0; k < nodes; ++k) {
        double res = out.x[k] - eps - ell[k] / (at * alive[k] * std::pow(out.x[k], beta));
        out.max_residual = std::max(out.max_residual, std::abs(res));
        out.contraction =
            std::max(out.contraction, ell[k] * beta * std::pow(out.x[k], -beta - 1.0) / (at * alive[k]));
    }
    if (out.contraction >= 1.0)
        out.message = "contraction factor " + std::to_string(out.contraction) + " >= 1: outside the contraction regime";
    if (!out.converged) out.message += (out.message.empty() ? "" : "; ") + std::string("Picard iteration did not converge");
    return out;
}

double merton_fraction(double mu, double r, double sigma, double p) {
    if (!(p < 1.0) || p == 0.0) throw std::invalid_argument("merton_fraction: p < 1, p != 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("merton_fraction: sigma > 0");
    return (mu - r) / ((1.0 - p) * sigma * sigma);
}

} // namespace contagion
