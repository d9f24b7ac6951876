#include "contagion/dual.hpp"

#include <cmath>
#include <stdexcept>

namespace contagion {

double dual_exponent(double p) {
    if (!(p < 1.0)) throw std::domain_error("p must be < 1");
    return p / (p - 1.0);
}

double transform_exponent(double q, double rho) { return (1.0 - q) / (1.0 - q * rho * rho); }

NodeCoefficients node_coefficients(double y, DefaultState z, const ModelSpec& spec) {
    NodeCoefficients c;
    c.y = y;
    c.z = z;
    c.n = spec.n;
    c.q = spec.q();
    c.beta = spec.beta();
    c.rho = spec.factor.rho;
    c.r = spec.market.r;
    c.mu0 = spec.factor.mu0(y);
    c.sigma0 = spec.sigma0(y);
    c.sigma = spec.sigma(y);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(c.sigma);
    if (!lu.isInvertible()) throw std::domain_error("volatility matrix is singular at y=" + std::to_string(y));
    c.sigma_inv = lu.inverse();
    c.xi = c.sigma_inv * (spec.mu(y) - Eigen::VectorXd::Constant(spec.n, c.r));
    c.lambda = Eigen::VectorXd::Zero(spec.n);
    for (int i = 0; i < spec.n; ++i) {
        if (z.alive(i)) {
            c.alive.push_back(i);
            c.lambda(i) = spec.lambda(i, z, y);
        }
    }
    Eigen::MatrixXd off = c.sigma;
    off.diagonal().setZero();
    c.diagonal = off.cwiseAbs().maxCoeff() == 0.0;
    return c;
}

Eigen::VectorXd market_price_of_risk(double y, const ModelSpec& spec) {
    Eigen::MatrixXd s = spec.sigma(y);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(s);
    if (!lu.isInvertible()) throw std::domain_error("volatility matrix is singular at y=" + std::to_string(y));
    return lu.solve(spec.mu(y) - Eigen::VectorXd::Constant(spec.n, spec.market.r));
}

Eigen::VectorXd theta_from_h(const Eigen::VectorXd& h, const NodeCoefficients& c) {
    Eigen::VectorXd jump = c.lambda.cwiseProduct(h); // lambda is zero on defaulted names
    return c.xi - c.sigma_inv * jump;
}

Eigen::VectorXd theta_from_h(const Eigen::VectorXd& h, double y, DefaultState z, const ModelSpec& spec) {
    return theta_from_h(h, node_coefficients(y, z, spec));
}

Eigen::VectorXd h_from_theta(const Eigen::VectorXd& theta, const NodeCoefficients& c) {
    Eigen::VectorXd jump = c.sigma * (c.xi - theta);
    Eigen::VectorXd h = Eigen::VectorXd::Zero(c.n);
    for (int i : c.alive)
        if (c.lambda(i) != 0.0) h(i) = jump(i) / c.lambda(i);
    return h;
}

namespace {

double jump_power(double h, double q) {
    double base = 1.0 + h;
    if (!(base > jump_floor)) throw std::domain_error("jump control 1+h must exceed 1e-6");
    return std::pow(base, q);
}

} // namespace

double psi(const Eigen::VectorXd& a, const Eigen::VectorXd& h, const Eigen::VectorXd& theta,
           const NodeCoefficients& c) {
    const double q = c.q;
    double out = 0.5 * q * (q - 1.0) * (theta.squaredNorm() + a.squaredNorm()) - q * c.r;
    for (int i : c.alive) {
        double x = 1.0 + h(i);
        out += (jump_power(h(i), q) - q * x + q - 1.0) * c.lambda(i);
    }
    return out;
}

double psi(const Eigen::VectorXd& a, const Eigen::VectorXd& h, const Eigen::VectorXd& theta,
           double y, DefaultState z, const ModelSpec& spec) {
    return psi(a, h, theta, node_coefficients(y, z, spec));
}

PhiNu phi_and_nu(const Eigen::VectorXd& hhat, const Eigen::VectorXd& theta, const NodeCoefficients& c) {
    const double q = c.q;
    PhiNu out;
    out.nu = c.mu0 - q * c.rho * c.sigma0.dot(theta);
    out.phi = 0.5 * q * (q - 1.0) * theta.squaredNorm() - q * c.r;
    for (int i : c.alive) out.phi += (q - 1.0 - q * (1.0 + hhat(i))) * c.lambda(i);
    return out;
}

PhiNu phi_and_nu(const Eigen::VectorXd& hhat, const Eigen::VectorXd& theta, double y, DefaultState z,
                 const ModelSpec& spec) {
    return phi_and_nu(hhat, theta, node_coefficients(y, z, spec));
}

PhiBounds phi_bounds(DefaultState z, const ModelSpec& spec, const PhiNorms& norms) {
    const double q = spec.q();
    const double r = spec.market.r;
    double lam = 0.0;       // sum ||lambda_i||
    double lam_h = 0.0;     // sum ||lambda_i|| ||h_i||
    for (int i = 0; i < spec.n; ++i) {
        if (z.defaulted(i)) continue;
        double l = i < static_cast<int>(norms.lambda_sup.size()) ? norms.lambda_sup[i] : 0.0;
        double h = i < static_cast<int>(norms.hhat_sup.size()) ? norms.hhat_sup[i] : 0.0;
        lam += l;
        lam_h += l * h;
    }
    PhiBounds b;
    if (q < 0.0) {
        // theta term in [0, q(q-1)/2 m_theta]; each jump term in [(q-1) lambda, -q lambda |h|]
        b.upper = 0.5 * q * (q - 1.0) * norms.theta_sq_sum - q * r - q * lam_h;
        b.lower = std::min(0.0, -q * r) - (1.0 - q) * lam;
    } else {
        // theta term in [-q(1-q)/2 m_theta, 0]; each jump term in [-lambda(1 + q|h|), 0)
        b.upper = std::max(0.0, -q * r);
        b.lower = -0.5 * q * (1.0 - q) * norms.theta_sq_sum - q * r - lam - q * lam_h;
    }
    return b;
}

Legendre legendre(int i, double y_dual, const ModelSpec& spec) {
    if (!(y_dual > 0.0)) throw std::domain_error("legendre: argument must be positive");
    if (i != 1 && i != 2) throw std::invalid_argument("legendre: utility index must be 1 or 2");
    const double q = spec.q();
    const double K = i == 1 ? spec.pref.K1 : spec.pref.K2;
    const double scale = std::pow(K, 1.0 - q);
    return {-scale * std::pow(y_dual, q) / q, scale * std::pow(y_dual, q - 1.0)};
}

double kappa_hat(double x, double F, double q) {
    if (!(x > 0.0) || !(F > 0.0)) throw std::domain_error("kappa_hat: inputs must be positive");
    return std::pow(F / x, 1.0 / (1.0 - q));
}

} // namespace contagion
