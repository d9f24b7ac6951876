#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "contagion/model.hpp"
#include "contagion/pde.hpp"

namespace contagion {

struct SimConfig {
    long n_paths = 100000;
    int n_steps = 400;
    std::uint64_t seed = 42;
    double y0 = 0.0;
    DefaultState z0;
    double y_lo = -1.0; // Y is reflected at these ends
    double y_hi = 1.0;

    static SimConfig for_model(const ModelSpec& spec);
};

/// Seed of the RNG stream of one path; independent of scheduling.
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path);

struct DefaultEvent {
    int step = 0;          // mesh interval [t_step, t_step+1] containing the default
    double fraction = 0.0; // position inside the interval
    int name = 0;
    double time = 0.0;
};

/// One trajectory on the uniform mesh t_k = k T / n_steps.
struct MarketPath {
    std::vector<double> y;               // n_steps + 1
    std::vector<std::uint32_t> state;    // default state bits at t_k
    std::vector<double> dw;              // n_steps * n increments of W
    std::vector<double> dwbar;           // n_steps * n increments of the factor-only driver
    std::vector<double> log_price;       // (n_steps + 1) * n, pre-default log prices
    std::vector<double> compensator;     // (n_steps + 1) * n, int_0^{t ^ tau_i} lambda_i ds
    std::vector<DefaultEvent> defaults;  // in time order
    int reflections = 0;
};

class MarketSimulator {
public:
    MarketSimulator(const ModelSpec& spec, const SimConfig& config);

    void generate(std::uint64_t path, MarketPath& out) const;

    const ModelSpec& spec() const { return spec_; }
    const SimConfig& config() const { return config_; }
    double dt() const { return spec_.pref.T / config_.n_steps; }
    double time(int k) const { return k * dt(); }

private:
    double reflect(double y, int& hits) const;

    ModelSpec spec_;
    SimConfig config_;
};

/// Materialized paths; meant for small path counts (dumps, inspection).
struct PathBundle {
    SimConfig config;
    int n = 0;
    std::vector<double> time;
    std::vector<MarketPath> paths;
    std::vector<std::vector<double>> wealth;      // per path, n_steps + 1
    std::vector<std::vector<double>> consumption; // per path, n_steps + 1
    std::vector<std::vector<double>> gamma;       // per path, n_steps + 1

    long paths_with_reflections() const;
};

PathBundle simulate_market(const ModelSpec& spec, const SimConfig& config);

/// U_i(x) = K_i x^p / p, i = 1 terminal, i = 2 consumption.
double utility(int i, double x, const ModelSpec& spec);

struct WealthOptions {
    double x0 = 1.0;
    double pi_scale = 1.0;          // multiplies the feedback fractions
    bool zero_consumption = false;
    std::vector<double> constant_pi; // used instead of the feedback policy when non-empty
};

struct WealthPath {
    std::vector<double> x; // n_steps + 1
    std::vector<double> c;
    double terminal_utility = 0.0;
    double consumption_utility = 0.0;
    bool ruined = false;
    double novikov = 0.0; // int |a|^2 dt along the path
};

/// Wealth under feedback controls: log-Euler between defaults, X <- X (1 - pi_i) at the default of name i.
/// `sol` may be null when `opts.constant_pi` is set.
void wealth_along(const MarketPath& path, const ModelSpec& spec, const SystemSolution* sol, int n_steps,
                  const WealthOptions& opts, WealthPath& out);

/// log Gamma of the optimal dual density on the mesh.
void log_density_along(const MarketPath& path, const SystemSolution& sol, int n_steps, std::vector<double>& out);

void simulate_wealth(PathBundle& bundle, const ModelSpec& spec, const SystemSolution* sol, const WealthOptions& opts);
void density_path(PathBundle& bundle, const SystemSolution& sol);

struct McReport {
    std::string test;
    double estimate = 0.0;
    double target = 0.0;
    double se = 0.0;
    double tolerance = 0.0;
    long n_paths = 0;
    double elapsed = 0.0;
    bool pass = false;
    std::string note;
};

/// Two-sided acceptance band: 3 standard errors plus a discretization floor of 1e-6 max(1, |target|).
double mc_tolerance(double se, double target, double n_se = 3.0);

std::vector<McReport> check_G_martingale(const SystemSolution& sol, const SimConfig& config,
                                         const std::vector<double>& probes);

struct DualityResult {
    McReport utility;
    McReport representation;
};

DualityResult duality_gap(const SystemSolution& sol, const SimConfig& config, const WealthOptions& opts = {});

/// One-sided: utility under `perturbed` is below the utility under `opts` by more than 3 SE of the
/// paired difference (common random numbers).
McReport check_suboptimal(const SystemSolution& sol, const SimConfig& config, const WealthOptions& perturbed,
                          const std::string& label, const WealthOptions& opts = {});

McReport mc_feynman_kac(const SystemSolution& sol, DefaultState z, double t, double y, const SimConfig& config);

McReport check_no_defaults(const ModelSpec& spec, const SimConfig& config);
/// P(no default by T) against exp(-sum_i lambda_i(y0, z0) T); requires intensities constant in y.
McReport check_survival(const ModelSpec& spec, const SimConfig& config);
McReport check_compensator(const ModelSpec& spec, const SimConfig& config, int name, double t);
/// pi = 0, c = 0: X_T = x0 e^{rT} on every path.
McReport check_bank_account(const ModelSpec& spec, const SimConfig& config, double x0 = 1.0);
/// Constant single-name fraction, no defaults, no consumption: mean log X_T against the GBM drift.
McReport check_gbm_log_mean(const ModelSpec& spec, const SimConfig& config, double pi);
/// Mean of int |a|^2 dt along optimal paths; passes while it stays below `limit`.
McReport novikov_diagnostic(const SystemSolution& sol, const SimConfig& config, double limit = 10.0);

} // namespace contagion
