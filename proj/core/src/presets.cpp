#include "contagion/model.hpp"

#include <cmath>
#include <stdexcept>

namespace contagion {

namespace {

// Mean-reverting factor dY = (0.5 - 1.2 Y) dt + 0.6 dWbar1 + 0.4 dWbar2 on (-1, 1).
void ou_factor(ModelSpec& s, double rho) {
    s.factor.mu0 = ScalarFn::affine(0.5, -1.2);
    s.factor.sigma0 = {ScalarFn::constant(0.6), ScalarFn::constant(0.4)};
    s.factor.rho = rho;
    s.factor.domain_lo = -1.0;
    s.factor.domain_hi = 1.0;
}

void contagion_intensities(ModelSpec& s) {
    const DefaultState none{0b00}, first{0b01}, second{0b10};
    s.lambda_fn(0, none) = ScalarFn::exp_affine(0.6, 0.4, 0.1);
    s.lambda_fn(1, none) = ScalarFn::exp_affine(0.5, 0.3, 0.1);
    s.lambda_fn(0, second) = ScalarFn::exp_affine(0.8, 0.6, 0.1);
    s.lambda_fn(1, first) = ScalarFn::exp_affine(0.8, 0.6, 0.1);
}

ModelSpec benchmark() {
    ModelSpec s = ModelSpec::empty(2);
    s.name = "benchmark_s5";
    ou_factor(s, 0.0);
    s.market.r = 0.2;
    s.market.mu = {ScalarFn::constant(0.2), ScalarFn::constant(0.2)};
    s.sigma_fn(0, 0) = ScalarFn::constant(0.8);
    s.sigma_fn(1, 1) = ScalarFn::constant(0.8);
    contagion_intensities(s);
    s.pref = {0.8, 1.0, 1.0, 1.0};
    return s;
}

// Two stocks with correlation rbar: sigma = [[v1, 0], [rbar v2, sqrt(1-rbar^2) v2]].
ModelSpec two_vol_names(const char* name, bool scott) {
    ModelSpec s = ModelSpec::empty(2);
    s.name = name;
    ou_factor(s, 0.3);
    const double rbar = 0.3;
    const double tail = std::sqrt(1.0 - rbar * rbar);
    if (scott) {
        s.market.r = 0.05;
        s.market.mu = {ScalarFn::constant(0.45), ScalarFn::constant(0.40)};
        s.sigma_fn(0, 0) = ScalarFn::scott(0.1, 0.5);
        s.sigma_fn(1, 0) = ScalarFn::scott(0.2, 0.3, rbar);
        s.sigma_fn(1, 1) = ScalarFn::scott(0.2, 0.3, tail);
    } else {
        s.market.r = 0.05;
        s.market.mu = {ScalarFn::constant(0.12), ScalarFn::constant(0.11)};
        s.sigma_fn(0, 0) = ScalarFn::stein(0.09, 0.2);
        s.sigma_fn(1, 0) = ScalarFn::stein(0.16, 0.1, rbar);
        s.sigma_fn(1, 1) = ScalarFn::stein(0.16, 0.1, tail);
    }
    contagion_intensities(s);
    s.pref = {0.5, 1.0, 1.0, 1.0};
    return s;
}

ModelSpec merton() {
    ModelSpec s = ModelSpec::empty(2);
    s.name = "merton_nodefault";
    ou_factor(s, 0.0);
    s.market.r = 0.2;
    s.market.mu = {ScalarFn::constant(0.25), ScalarFn::constant(0.25)};
    s.sigma_fn(0, 0) = ScalarFn::constant(0.2);
    s.sigma_fn(1, 1) = ScalarFn::constant(0.2);
    s.pref = {0.5, 1.0, 1.0, 1.0};
    return s;
}

} // namespace

std::vector<std::string> preset_names() {
    return {"benchmark_s5", "scott_example22", "stein_stein_example22", "merton_nodefault"};
}

ModelSpec load_preset(std::string_view name) {
    if (name == "benchmark_s5") return benchmark();
    if (name == "scott_example22") return two_vol_names("scott_example22", true);
    if (name == "stein_stein_example22") return two_vol_names("stein_stein_example22", false);
    if (name == "merton_nodefault") return merton();
    throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

} // namespace contagion
