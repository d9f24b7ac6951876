#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "contagion/dual.hpp"
#include "contagion/field.hpp"
#include "contagion/model.hpp"

namespace contagion {

/// Solution values seen from one node: f and its gradient in state z, and f in each child state.
struct NodeValues {
    double f = 1.0;
    double fy = 0.0;
    std::vector<double> child_f; // f at flip(z, i); ignored for defaulted names
};

struct HhatSolve {
    Eigen::VectorXd h;
    double residual = 0.0; // max |J^T sigma - Lambda| over alive columns
    int iterations = 0;
    bool fallback = false;
    bool converged = true;
    std::string message;
};

struct LambdaJ {
    Eigen::VectorXd Lambda; // (1-q) theta + rho (D_y g) sigma0^T / g
    Eigen::VectorXd J;
};

LambdaJ lambda_and_J(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat);

/// Pointwise jump control; `hint` seeds the iteration (continuation from the previous slice).
HhatSolve solve_hhat(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hint);

/// Residual of J^T sigma = Lambda on the alive columns. Names with zero intensity
/// carry no jump equation; their entry of J is replaced by the diffusion-matched fraction.
double hhat_residual(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat);

Eigen::VectorXd pi_hat(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat);

/// max |pi^T sigma - Lambda diag(1-z)| over alive columns.
double pi_consistency(const NodeCoefficients& c, const NodeValues& v, const Eigen::VectorXd& hhat,
                      const Eigen::VectorXd& pi);

Eigen::VectorXd a_hat(const NodeCoefficients& c, const NodeValues& v);

/// Controls on every node of state z from solved fields (indexed by state bits).
PolicyField build_policy(const ModelSpec& spec, const GridSpec& grid, const std::vector<SolutionField>& fields,
                         DefaultState z);

/// Feedback consumption at calendar time t.
double consumption_rate(double t, double y, DefaultState z, double x_wealth, const SolutionField& f,
                        const ModelSpec& spec);

/// (x^p / p) g(T, y, z)^{1-p}.
double value_function(double x, double y, DefaultState z, const SolutionField& f, const ModelSpec& spec);

} // namespace contagion
