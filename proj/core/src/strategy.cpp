#include "contagion/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace contagion {

namespace {

constexpr double residual_tol = 1e-13;
constexpr int max_iterations = 200;
constexpr double h_lo = -1.0 + jump_floor;

// rho beta (f_y / f) sigma0^T: the gradient part of Lambda.
Eigen::VectorXd hedge_term(const NodeCoefficients& c, const NodeValues& v) {
    return (c.rho * c.beta * v.fy / v.f) * c.sigma0.transpose();
}

double child_ratio(const NodeCoefficients& c, const NodeValues& v, int i) {
    return std::pow(v.child_f[i] / v.f, c.beta);
}

double jump_fraction(double h, double q, double ratio) { return 1.0 - std::pow(1.0 + h, q - 1.0) * ratio; }

bool has_jump(const NodeCoefficients& c, int i) { return c.lambda(i) > 0.0; }

// Diffusion-matched fractions on the alive names: sigma_AA^T pi_A = Lambda_A.
Eigen::VectorXd diffusion_fraction(const NodeCoefficients& c, const Eigen::VectorXd& Lambda) {
    const int m = static_cast<int>(c.alive.size());
    Eigen::VectorXd pi = Eigen::VectorXd::Zero(c.n);
    if (m == 0) return pi;
    if (c.diagonal) {
        for (int i : c.alive) pi(i) = Lambda(i) / c.sigma(i, i);
        return pi;
    }
    Eigen::MatrixXd s(m, m);
    Eigen::VectorXd rhs(m);
    for (int a = 0; a < m; ++a) {
        rhs(a) = Lambda(c.alive[a]);
        for (int b = 0; b < m; ++b) s(a, b) = c.sigma(c.alive[b], c.alive[a]); // transpose
    }
    Eigen::VectorXd sol = s.partialPivLu().solve(rhs);
    for (int a = 0; a < m; ++a) pi(c.alive[a]) = sol(a);
    return pi;
}

// Scalar equation per name for a diagonal volatility matrix; increasing in h.
struct ScalarEquation {
    double q, ratio, xi, lambda, sigma, hedge;

    double value(double h) const {
        double Lambda = (1.0 - q) * (xi - lambda * h / sigma) + hedge;
        return jump_fraction(h, q, ratio) - Lambda / sigma;
    }
    double slope(double h) const {
        return (1.0 - q) * std::pow(1.0 + h, q - 2.0) * ratio + (1.0 - q) * lambda / (sigma * sigma);
    }
};

struct ScalarRoot {
    double h = 0.0;
    int iterations = 0;
    bool bisected = false;
    bool ok = true;
};

ScalarRoot safeguarded_root(const ScalarEquation& eq, double hint) {
    ScalarRoot out;
    double lo = h_lo;
    double hi = 8.0;
    if (eq.value(lo) > 0.0) {
        out.ok = false;
        out.h = lo;
        return out;
    }
    while (eq.value(hi) < 0.0) {
        if (hi >= 512.0) {
            out.ok = false;
            out.h = hi;
            return out;
        }
        hi *= 2.0;
    }
    double x = std::clamp(hint, lo, hi);
    double prev_step = hi - lo;
    for (int it = 0; it < max_iterations; ++it) {
        out.iterations = it + 1;
        double r = eq.value(x);
        if (std::abs(r) <= residual_tol) break;
        if (r < 0.0) lo = x;
        else hi = x;
        double d = eq.slope(x);
        double next = x - r / d;
        if (!(next > lo && next < hi) || std::abs(next - x) > 0.5 * prev_step) {
            next = 0.5 * (lo + hi);
            out.bisected = true;
        }
        prev_step = std::abs(next - x);
        x = next;
        if (hi - lo <= 4e-16 * (1.0 + std::abs(x))) break;
    }
    out.h = x;
    return out;
}

// Full system on the names with positive intensity: r_i(h) = J_i(h_i) - pi_i(h).
struct JumpSystem {
    const NodeCoefficients& c;
    const NodeValues& v;
    std::vector<int> unknown;
    std::vector<double> ratio;
    Eigen::VectorXd hedge;

    JumpSystem(const NodeCoefficients& c_, const NodeValues& v_) : c(c_), v(v_), hedge(hedge_term(c_, v_)) {
        ratio.assign(c.n, 1.0);
        for (int i : c.alive) {
            ratio[i] = child_ratio(c, v, i);
            if (has_jump(c, i)) unknown.push_back(i);
        }
    }

    Eigen::VectorXd full(const Eigen::VectorXd& hu) const {
        Eigen::VectorXd h = Eigen::VectorXd::Zero(c.n);
        for (std::size_t a = 0; a < unknown.size(); ++a) h(unknown[a]) = hu(a);
        return h;
    }

    Eigen::VectorXd residual(const Eigen::VectorXd& hu) const {
        Eigen::VectorXd h = full(hu);
        Eigen::VectorXd Lambda = (1.0 - c.q) * theta_from_h(h, c) + hedge;
        Eigen::VectorXd pi = diffusion_fraction(c, Lambda);
        Eigen::VectorXd r(unknown.size());
        for (std::size_t a = 0; a < unknown.size(); ++a) {
            int i = unknown[a];
            r(a) = jump_fraction(h(i), c.q, ratio[i]) - pi(i);
        }
        return r;
    }

    Eigen::MatrixXd jacobian(const Eigen::VectorXd& hu) const {
        const int m = static_cast<int>(unknown.size());
        Eigen::MatrixXd jac(m, m);
        // d pi / d h_j is linear: column j is the diffusion fraction of (1-q) d theta / d h_j
        for (int b = 0; b < m; ++b) {
            int j = unknown[b];
            Eigen::VectorXd dtheta = -c.sigma_inv.col(j) * c.lambda(j);
            Eigen::VectorXd dpi = diffusion_fraction(c, (1.0 - c.q) * dtheta);
            for (int a = 0; a < m; ++a) jac(a, b) = -dpi(unknown[a]);
        }
        for (int a = 0; a < m; ++a) {
            int i = unknown[a];
            jac(a, a) += (1.0 - c.q) * std::pow(1.0 + hu(a), c.q - 2.0) * ratio[i];
        }
        return jac;
    }

    bool admissible(const Eigen::VectorXd& hu) const {
        for (int a = 0; a < hu.size(); ++a)
            if (!(hu(a) >= h_lo) || !(hu(a) <= 512.0)) return false;
        return true;
    }
};

} // namespace

LambdaJ lambda_and_J(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat) {
    LambdaJ out;
    out.Lambda = (1.0 - c.q) * theta_from_h(hhat, c) + hedge_term(c, v);
    out.J = Eigen::VectorXd::Zero(c.n);
    for (int i : c.alive) out.J(i) = jump_fraction(hhat(i), c.q, child_ratio(c, v, i));
    return out;
}

HhatSolve solve_hhat(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hint) {
    HhatSolve out;
    out.h = Eigen::VectorXd::Zero(c.n);
    if (c.alive.empty()) return out;
    if (!(v.f > 0.0)) throw std::domain_error("solve_hhat: non-positive solution value");

    if (c.diagonal) {
        const Eigen::VectorXd hedge = hedge_term(c, v);
        for (int i : c.alive) {
            if (!has_jump(c, i)) continue;
            ScalarEquation eq{c.q, child_ratio(c, v, i), c.xi(i), c.lambda(i), c.sigma(i, i), hedge(i)};
            ScalarRoot root = safeguarded_root(eq, hint.size() == c.n ? hint(i) : 0.0);
            out.h(i) = root.h;
            out.iterations = std::max(out.iterations, root.iterations);
            out.fallback = out.fallback || root.bisected;
            if (!root.ok) {
                out.converged = false;
                out.message = "no jump control in (-1+1e-6, 512] for name " + std::to_string(i + 1);
            }
        }
        out.residual = hhat_residual(c, v, out.h);
        if (out.converged && out.residual > 1e-10) {
            out.converged = false;
            out.message = "residual above tolerance";
        }
        return out;
    }

    JumpSystem sys(c, v);
    const int m = static_cast<int>(sys.unknown.size());
    if (m == 0) {
        out.residual = hhat_residual(c, v, out.h);
        return out;
    }
    Eigen::VectorXd hu(m);
    for (int a = 0; a < m; ++a) hu(a) = hint.size() == c.n ? std::clamp(hint(sys.unknown[a]), h_lo, 8.0) : 0.0;

    Eigen::VectorXd r = sys.residual(hu);
    double norm = r.cwiseAbs().maxCoeff();
    double mu = 1e-3;
    for (int it = 0; it < max_iterations && norm > residual_tol; ++it) {
        out.iterations = it + 1;
        Eigen::MatrixXd jac = sys.jacobian(hu);
        Eigen::VectorXd step = jac.partialPivLu().solve(-r);
        bool accepted = false;
        if (step.allFinite()) {
            double alpha = 1.0;
            for (int k = 0; k < 40; ++k, alpha *= 0.5) {
                Eigen::VectorXd trial = hu + alpha * step;
                if (!sys.admissible(trial)) continue;
                Eigen::VectorXd rt = sys.residual(trial);
                double nt = rt.cwiseAbs().maxCoeff();
                if (nt < (1.0 - 1e-4 * alpha) * norm) {
                    hu = trial;
                    r = rt;
                    norm = nt;
                    accepted = true;
                    break;
                }
            }
        }
        if (accepted) continue;
        // Levenberg-Marquardt step with an adaptive trust parameter.
        out.fallback = true;
        Eigen::MatrixXd normal = jac.transpose() * jac;
        Eigen::VectorXd grad = jac.transpose() * r;
        bool improved = false;
        for (int k = 0; k < 60 && !improved; ++k) {
            Eigen::MatrixXd damped = normal;
            damped.diagonal().array() += mu * (1.0 + normal.diagonal().array());
            Eigen::VectorXd trial = hu - damped.ldlt().solve(grad);
            if (sys.admissible(trial)) {
                Eigen::VectorXd rt = sys.residual(trial);
                double nt = rt.cwiseAbs().maxCoeff();
                if (nt < norm) {
                    hu = trial;
                    r = rt;
                    norm = nt;
                    mu = std::max(mu * 0.3, 1e-12);
                    improved = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if (!improved) break;
    }
    out.h = sys.full(hu);
    out.residual = hhat_residual(c, v, out.h);
    if (out.residual > 1e-10) {
        out.converged = false;
        out.message = "jump-control system did not converge (residual " + std::to_string(out.residual) + ")";
    }
    return out;
}

double hhat_residual(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat) {
    if (c.alive.empty()) return 0.0;
    LambdaJ lj = lambda_and_J(c, v, hhat);
    Eigen::VectorXd pi = diffusion_fraction(c, lj.Lambda);
    Eigen::VectorXd jhat = Eigen::VectorXd::Zero(c.n);
    for (int i : c.alive) jhat(i) = has_jump(c, i) ? lj.J(i) : pi(i);
    Eigen::RowVectorXd lhs = jhat.transpose() * c.sigma;
    double worst = 0.0;
    for (int k : c.alive) worst = std::max(worst, std::abs(lhs(k) - lj.Lambda(k)));
    return worst;
}

Eigen::VectorXd pi_hat(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat) {
    LambdaJ lj = lambda_and_J(c, v, hhat);
    Eigen::VectorXd out = Eigen::VectorXd::Zero(c.n);
    bool any_silent = false;
    for (int i : c.alive) {
        if (has_jump(c, i)) out(i) = lj.J(i);
        else any_silent = true;
    }
    if (any_silent) {
        Eigen::VectorXd pi = diffusion_fraction(c, lj.Lambda);
        for (int i : c.alive)
            if (!has_jump(c, i)) out(i) = pi(i);
    }
    return out;
}

double pi_consistency(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat,
                      const Eigen::VectorXd& pi) {
    if (c.alive.empty()) return 0.0;
    Eigen::VectorXd Lambda = (1.0 - c.q) * theta_from_h(hhat, c) + hedge_term(c, v);
    Eigen::RowVectorXd lhs = pi.transpose() * c.sigma;
    double worst = 0.0;
    for (int k : c.alive) worst = std::max(worst, std::abs(lhs(k) - Lambda(k)));
    return worst;
}

Eigen::VectorXd a_hat(const NodeCoefficients& c, const NodeValues& v) {
    double scale = -std::sqrt(1.0 - c.rho * c.rho) / (1.0 - c.q) * c.beta * v.fy / v.f;
    return scale * c.sigma0.transpose();
}

PolicyField build_policy(const ModelSpec& spec, const GridSpec& grid, const std::vector<SolutionField>& fields,
                         DefaultState z) {
    const int n = spec.n;
    const SolutionField& own = fields.at(z.bits);
    PolicyField pol(z, n, grid, spec.pref.T);
    const double q = spec.q();
    const double c_scale = std::pow(spec.pref.K2, 1.0 - q);

    std::vector<NodeCoefficients> coeffs;
    coeffs.reserve(grid.n_y);
    for (int j = 0; j < grid.n_y; ++j) coeffs.push_back(node_coefficients(grid.y(j), z, spec));

    std::vector<Eigen::VectorXd> prev(grid.n_y, Eigen::VectorXd::Zero(n));
    NodeValues v;
    v.child_f.assign(n, 1.0);
    for (int k = 0; k <= grid.n_t; ++k) {
        for (int j = 0; j < grid.n_y; ++j) {
            const auto& c = coeffs[j];
            v.f = own.at(k, j);
            v.fy = own.grad(k, j);
            for (int i : c.alive) v.child_f[i] = fields.at(flip(z, i, n).bits).at(k, j);
            HhatSolve hs = solve_hhat(c, v, prev[j]);
            if (!hs.converged)
                throw std::runtime_error("jump control failed in state " + z.bitstring(n) + " at t=" +
                                         std::to_string(own.t(k)) + ", y=" + std::to_string(c.y) + ": " +
                                         hs.message);
            prev[j] = hs.h;
            Eigen::VectorXd theta = theta_from_h(hs.h, c);
            Eigen::VectorXd pi = pi_hat(c, v, hs.h);
            Eigen::VectorXd a = a_hat(c, v);
            const std::size_t node = pol.node(k, j);
            for (int i = 0; i < n; ++i) {
                pol.hhat[node * n + i] = hs.h(i);
                pol.theta[node * n + i] = theta(i);
                pol.pi[node * n + i] = pi(i);
                pol.ahat[node * n + i] = a(i);
            }
            pol.c_mult[node] = c_scale / own.g(k, j);
            pol.max_residual = std::max(pol.max_residual, hs.residual);
            pol.max_consistency = std::max(pol.max_consistency, pi_consistency(c, v, hs.h, pi));
        }
    }
    return pol;
}

double consumption_rate(double t, double y, DefaultState z, double x_wealth, const SolutionField& f,
                        const ModelSpec& spec) {
    if (!(x_wealth > 0.0)) throw std::domain_error("consumption_rate: wealth must be positive");
    if (!(f.z == z)) throw std::invalid_argument("consumption_rate: field belongs to another state");
    double g = std::pow(f.value(spec.pref.T - t, y), f.beta);
    return std::pow(spec.pref.K2, 1.0 - spec.q()) * x_wealth / g;
}

double value_function(double x, double y, DefaultState z, const SolutionField& f, const ModelSpec& spec) {
    if (!(x > 0.0)) throw std::domain_error("value_function: wealth must be positive");
    if (!(f.z == z)) throw std::invalid_argument("value_function: field belongs to another state");
    const double p = spec.pref.p;
    double g = std::pow(f.value(spec.pref.T, y), f.beta);
    return std::pow(x, p) / p * std::pow(g, 1.0 - p);
}

} // namespace contagion
