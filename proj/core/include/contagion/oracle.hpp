#pragma once

#include <functional>
#include <string>
#include <vector>

#include "contagion/model.hpp"

namespace contagion {

/// One stock, constant factor: the setting with closed-form value functions.
/// q is taken directly so that q = 0 (log utility) is allowed.
struct ScalarModel {
    double lambda0 = 0.5;
    double sigma = 0.8;
    double xi = 0.0;
    double r = 0.0;
    double q = 0.0;
    double K1 = 1.0;
    double K2 = 1.0;
    double T = 1.0;

    double beta() const { return 1.0 - q; }
    double phi_defaulted() const;        // phi(1)
    double a() const;
    double b() const;
    double c() const;
    double phi_alive(double x) const;    // a x^2 + b x + c
    double a_tilde() const;
    double b_tilde() const;
    double epsilon() const { return b_tilde() / a_tilde(); }
    /// lambda0 * f~(t, 1).
    double ell(double t) const;
};

/// Solution of the linear ODE g' = phi g + k with g(0) = g0 (k t + g0 when phi = 0).
double linear_ode_closed_form(double t, double phi, double k, double g0);
/// Classical RK4 on the same ODE, `steps` uniform steps on [0, t].
double linear_ode_rk4(double t, double phi, double k, double g0, int steps);

struct AllDefaulted {
    double g = 1.0; // transformed value f^beta
    double f = 1.0;
};

/// Constant-coefficient all-defaulted state of a full model, evaluated at y = 0.
AllDefaulted all_defaulted_closed_form(double t, const ModelSpec& spec);
AllDefaulted all_defaulted_closed_form(double t, const ScalarModel& m);

/// Closed form of the alive-state transformed value f~^x(t, 0) given the path u -> x(u) = 1 + h(u)
/// in time to maturity. Quadrature by composite Simpson.
double bernoulli_alive_solution(double t, const std::function<double(double)>& x, const ScalarModel& m,
                                int panels = 512);
/// RK4 on the alive-state linear ODE, for cross-checks.
double bernoulli_alive_rk4(double t, const std::function<double(double)>& x, const ScalarModel& m, int steps = 4096);

struct PicardResult {
    std::vector<double> u; // uniform nodes on [0, T]
    std::vector<double> x;
    double contraction = 0.0;  // sup_u |F'(x(u))| at the fixed point
    double global_bound = 0.0; // sup_u G(u): Lipschitz bound of F on x >= eps
    double max_residual = 0.0; // sup_u |x - eps - ell / (a~ f~ x^beta)|
    double last_change = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string message;

    double operator()(double u_) const; // linear interpolation
};

/// Fixed point x(u) of the log-utility jump equation. Requires q = 0 and b~ > 0.
PicardResult picard_fixed_point(const ScalarModel& m, int nodes = 513, double tol = 1e-10, int max_iter = 100000);

/// Residual of the fixed-point equation at u.
double picard_residual(const ScalarModel& m, double u, double x);

double merton_fraction(double mu, double r, double sigma, double p);

} // namespace contagion
