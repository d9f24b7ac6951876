#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "contagion/dual.hpp"
#include "contagion/field.hpp"
#include "contagion/model.hpp"

namespace contagion {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A priori bounds K_under <= f(t, ., z) <= K_bar(t) used to truncate the source.
struct TruncationBounds {
    double initial = 1.0;    // f(0) = K1^{(1-q)/beta}
    double k_under = 1.0;
    double growth = 0.0;     // beta^{-1} max(phi upper bound, 0): log-slope of ell(t)
    double theta_rate = 0.0; // Theta(K_under)
    double feed = 0.0;       // sup of K2^{1-q} + sum_i K_bar(z^i, T)^beta (1+h_i)^q lambda_i
    double beta = 1.0;
    bool ode_bound = false;  // also use the comparison ODE; needs a child bound in the feed
    PhiBounds phi;

    double ell(double t) const;
    /// K_bar(t) = initial*ell(t)*e^{Theta t}, or, with ode_bound, the smaller of that and the
    /// solution of g' = phi_upper g + feed for g = K_bar^beta. Without a default feed the ODE
    /// solution can coincide with f itself, leaving no room for discretisation error.
    double upper(double t) const;
};

/// children[i] holds the bounds of flip(z, i) for alive names and is ignored otherwise.
TruncationBounds truncation_bounds(DefaultState z, const std::vector<TruncationBounds>& children,
                                   const ModelSpec& spec, const PhiNorms& norms);

/// Phi = beta^{-1} v^{1-beta} (K2^{1-q} + sum_i f(z^i)^beta (1-z_i)(1+h_i)^q lambda_i).
/// With `clamp` set, v is first truncated to [K_under, K_bar(t)]; `clamped` reports whether it moved.
double nonlinear_source(double t, double v, const NodeCoefficients& c, const std::vector<double>& child_f,
                        const Eigen::VectorXd& hhat, double K2, const TruncationBounds* clamp = nullptr,
                        bool* clamped = nullptr);

/// Coefficients of df/dt = a f_yy + nu f_y + k f + s on one time slice.
struct SliceOperator {
    std::vector<double> diffusion;
    std::vector<double> drift;
    std::vector<double> reaction;
    std::vector<double> source;

    explicit SliceOperator(int n_y = 0) : diffusion(n_y), drift(n_y), reaction(n_y), source(n_y) {}
};

/// One Crank-Nicolson step with zero-flux ends:
/// (I - dt/2 L_next) f_next = (I + dt/2 L_now) f_now + dt/2 (s_now + s_next).
void step_slice(const std::vector<double>& f_now, const SliceOperator& now, const SliceOperator& next, double dt,
                double dy, std::vector<double>& f_next);

struct SolveOptions {
    int max_sweeps = 5;
    double sweep_tol = 1e-8;
    double bound_slack = 1e-12;
};

struct StateReport {
    DefaultState z;
    double max_hhat_residual = 0.0;
    double max_pi_consistency = 0.0;
    long clamp_hits = 0;
    int max_newton_iterations = 0;
    long bisection_steps = 0;
    int max_sweeps_used = 0;
    double last_sweep_change = 0.0;
    double lower_margin = 0.0; // min f - K_under
    double upper_margin = 0.0; // min K_bar(t) - f
    long bound_violations = 0;
    double max_abs_gradient = 0.0;
    double seconds = 0.0;
};

struct SystemSolution {
    ModelSpec spec;
    GridSpec grid;
    std::vector<SolutionField> fields;  // indexed by state bits
    std::vector<PolicyField> policies;  // indexed by state bits
    std::vector<TruncationBounds> bounds;
    std::vector<StateReport> reports;
    double seconds = 0.0;

    const SolutionField& field(DefaultState z) const { return fields.at(z.bits); }
    const PolicyField& policy(DefaultState z) const { return policies.at(z.bits); }
};

/// Solves every default state, children first. Throws SolverError on jump-control failure
/// or when the solution leaves its a priori bounds.
SystemSolution solve_recursive_system(const ModelSpec& spec, const GridSpec& grid, const SolveOptions& options = {});

} // namespace contagion
