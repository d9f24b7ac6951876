#pragma once

#include <vector>

#include "contagion/model.hpp"

namespace contagion {

/// Locates a point on a uniform axis: lower index and weight of the upper neighbour.
struct AxisWeight {
    int index = 0;
    double weight = 0.0;
};

AxisWeight locate(double x, double lo, double step, int count);

/// f(t_k, y_j, z) on the solver grid; t is time to maturity, t_0 = 0 holds the initial condition.
struct SolutionField {
    DefaultState z;
    int n_t = 0;
    int n_y = 0;
    double horizon = 1.0;
    double y_lo = -1.0;
    double y_hi = 1.0;
    double beta = 1.0;
    std::vector<double> f;  // (n_t + 1) * n_y, row-major by time
    std::vector<double> df; // central-difference gradient

    SolutionField() = default;
    SolutionField(DefaultState z, const GridSpec& grid, double horizon, double beta);

    double dt() const { return horizon / n_t; }
    double dy() const { return (y_hi - y_lo) / (n_y - 1); }
    double t(int k) const { return k * dt(); }
    double y(int j) const { return y_lo + j * dy(); }

    double& at(int k, int j) { return f[static_cast<std::size_t>(k) * n_y + j]; }
    double at(int k, int j) const { return f[static_cast<std::size_t>(k) * n_y + j]; }
    double grad(int k, int j) const { return df[static_cast<std::size_t>(k) * n_y + j]; }
    double g(int k, int j) const;

    /// Bilinear interpolation at time-to-maturity t.
    double value(double t, double y) const;
    double gradient(double t, double y) const;

    void compute_gradient();
};

/// Second-order central differences, one-sided second order at both ends.
void gradient_1d(const double* f, double* out, int n, double dy);

/// Controls per node and state. Time index k refers to time to maturity t_k, i.e. calendar time T - t_k.
struct PolicyField {
    DefaultState z;
    int n = 0;
    int n_t = 0;
    int n_y = 0;
    double horizon = 1.0;
    double y_lo = -1.0;
    double y_hi = 1.0;
    std::vector<double> hhat;  // (n_t+1) * n_y * n
    std::vector<double> ahat;
    std::vector<double> theta;
    std::vector<double> pi;
    std::vector<double> c_mult; // (n_t+1) * n_y
    double max_residual = 0.0;
    double max_consistency = 0.0;

    PolicyField() = default;
    PolicyField(DefaultState z, int n, const GridSpec& grid, double horizon);

    std::size_t node(int k, int j) const { return static_cast<std::size_t>(k) * n_y + j; }
    double dy() const { return (y_hi - y_lo) / (n_y - 1); }
    double dt() const { return horizon / n_t; }
};

/// Controls interpolated at calendar time t and factor level y.
struct PolicySample {
    std::vector<double> hhat, ahat, theta, pi;
    double c_mult = 0.0;
};

void sample_policy(const PolicyField& p, double t_calendar, double y, PolicySample& out);

} // namespace contagion
