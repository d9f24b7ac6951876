#pragma once

#include <vector>

#include <Eigen/Dense>

#include "contagion/model.hpp"

namespace contagion {

/// Smallest admissible value of 1 + h.
inline constexpr double jump_floor = 1e-6;

double dual_exponent(double p);                     // q = p/(p-1)
double transform_exponent(double q, double rho);    // beta = (1-q)/(1-q rho^2)

/// Time-independent coefficients at one (y, z) node, cached by the solvers.
struct NodeCoefficients {
    double y = 0.0;
    DefaultState z;
    int n = 0;
    double q = 0.0;
    double beta = 1.0;
    double rho = 0.0;
    double r = 0.0;
    double mu0 = 0.0;
    Eigen::RowVectorXd sigma0;
    Eigen::MatrixXd sigma;
    Eigen::MatrixXd sigma_inv;
    Eigen::VectorXd xi;
    Eigen::VectorXd lambda; // zero for defaulted names
    std::vector<int> alive;
    bool diagonal = false;

    double diffusion() const { return 0.5 * sigma0.squaredNorm(); }
};

NodeCoefficients node_coefficients(double y, DefaultState z, const ModelSpec& spec);

Eigen::VectorXd market_price_of_risk(double y, const ModelSpec& spec);

Eigen::VectorXd theta_from_h(const Eigen::VectorXd& h, const NodeCoefficients& c);
Eigen::VectorXd theta_from_h(const Eigen::VectorXd& h, double y, DefaultState z, const ModelSpec& spec);

/// Inverse of theta_from_h on the alive names (defaulted entries set to 0).
Eigen::VectorXd h_from_theta(const Eigen::VectorXd& theta, const NodeCoefficients& c);

double psi(const Eigen::VectorXd& a, const Eigen::VectorXd& h, const Eigen::VectorXd& theta,
           const NodeCoefficients& c);
double psi(const Eigen::VectorXd& a, const Eigen::VectorXd& h, const Eigen::VectorXd& theta,
           double y, DefaultState z, const ModelSpec& spec);

struct PhiNu {
    double phi = 0.0;
    double nu = 0.0;
};

PhiNu phi_and_nu(const Eigen::VectorXd& hhat, const Eigen::VectorXd& theta, const NodeCoefficients& c);
PhiNu phi_and_nu(const Eigen::VectorXd& hhat, const Eigen::VectorXd& theta, double y, DefaultState z,
                 const ModelSpec& spec);

/// Sup norms of the control family over the grid, feeding the bounds of phi.
struct PhiNorms {
    double theta_sq_sum = 0.0;         // sum_j ||theta_j||^2
    std::vector<double> lambda_sup;    // ||lambda_i(., z)||, zero for defaulted names
    std::vector<double> hhat_sup;      // ||hhat_i||
    std::vector<double> jump_power_sup; // ||(1+hhat_i)^q||
};

struct PhiBounds {
    double lower = 0.0;
    double upper = 0.0;
};

PhiBounds phi_bounds(DefaultState z, const ModelSpec& spec, const PhiNorms& norms);

struct Legendre {
    double conjugate = 0.0;        // U~_i(y)
    double inverse_marginal = 0.0; // I_i(y)
};

/// i = 1 terminal utility, i = 2 consumption utility.
Legendre legendre(int i, double y_dual, const ModelSpec& spec);

double kappa_hat(double x, double F, double q);

} // namespace contagion
