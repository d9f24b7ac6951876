#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace contagion {

inline constexpr int max_names = 16;

/// Bitmask over the names; bit i set iff name i has defaulted.
struct DefaultState {
    std::uint32_t bits = 0;

    bool defaulted(int i) const { return (bits >> i) & 1u; }
    bool alive(int i) const { return !defaulted(i); }
    int cardinality() const;
    /// Name order, first name first: (0,1) means name 2 defaulted.
    std::string bitstring(int n) const;
    static DefaultState from_bitstring(std::string_view s);
    static DefaultState all_defaulted(int n) { return {n >= 32 ? ~0u : ((1u << n) - 1u)}; }

    friend bool operator==(DefaultState a, DefaultState b) { return a.bits == b.bits; }
};

DefaultState flip(DefaultState z, int i, int n);

/// Every state of the lattice, ordered by descending cardinality (children first).
std::vector<DefaultState> lattice_descending(int n);

/// Scalar coefficient of the factor level y.
struct ScalarFn {
    enum class Kind { constant, affine, exp_affine, scott, stein, table };

    Kind kind = Kind::constant;
    double a = 0.0;
    double b = 0.0;
    double c = 0.0;
    std::vector<double> xs;
    std::vector<double> ys;

    double operator()(double y) const;

    static ScalarFn constant(double v);
    static ScalarFn affine(double a, double b);              // a + b y
    static ScalarFn exp_affine(double a, double b, double c); // a + b e^{c y}
    static ScalarFn scott(double eps, double gamma, double scale = 1.0); // scale*sqrt(eps + e^{gamma y})
    static ScalarFn stein(double eps, double gamma, double scale = 1.0); // scale*sqrt(eps + gamma y^2)
    static ScalarFn table(std::vector<double> xs, std::vector<double> ys);

    /// Text form "const 0.8", "affine 0.5 -1.2", "expaff a b c", "scott e g [s]",
    /// "stein e g [s]", "table y0:v0 y1:v1 ...".
    static ScalarFn parse(std::string_view text);
    std::string to_string() const;
    /// The function multiplied by s.
    ScalarFn scaled(double s) const;
    bool is_zero() const { return kind == Kind::constant && a == 0.0; }
};

struct FactorSpec {
    ScalarFn mu0;
    std::vector<ScalarFn> sigma0; // 1 x n row (m = 1)
    int m = 1;
    double rho = 0.0;
    double domain_lo = -1.0;
    double domain_hi = 1.0;
};

struct MarketSpec {
    double r = 0.0;
    std::vector<ScalarFn> mu;    // n
    std::vector<ScalarFn> sigma; // n x n, row-major
};

struct CreditSpec {
    /// lambda[z.bits * n + i]; entries for defaulted names are unused.
    std::vector<ScalarFn> lambda;
};

struct PreferenceSpec {
    double p = 0.5;
    double K1 = 1.0;
    double K2 = 1.0;
    double T = 1.0;

    double q() const { return p / (p - 1.0); }
};

struct ModelSpec {
    std::string name;
    int n = 1;
    FactorSpec factor;
    MarketSpec market;
    CreditSpec credit;
    PreferenceSpec pref;

    double q() const { return pref.q(); }
    double beta() const;
    /// K1^{1-q rho^2} = K1^{(1-q)/beta}: the initial value of f in every state, so that g(0) = K1^{1-q}.
    double initial_value() const;

    double lambda(int i, DefaultState z, double y) const;
    Eigen::VectorXd mu(double y) const;
    Eigen::MatrixXd sigma(double y) const;
    Eigen::RowVectorXd sigma0(double y) const;

    ScalarFn& lambda_fn(int i, DefaultState z) { return credit.lambda[z.bits * n + i]; }
    const ScalarFn& lambda_fn(int i, DefaultState z) const { return credit.lambda[z.bits * n + i]; }
    ScalarFn& sigma_fn(int i, int j) { return market.sigma[i * n + j]; }
    const ScalarFn& sigma_fn(int i, int j) const { return market.sigma[i * n + j]; }

    /// Allocate coefficient tables for n names (all zero).
    static ModelSpec empty(int n);
};

struct GridSpec {
    double y_lo = -1.0;
    double y_hi = 1.0;
    int n_y = 401;
    int n_t = 400;
    bool clamp_enabled = true;

    double dy() const { return (y_hi - y_lo) / (n_y - 1); }
    double y(int j) const { return y_lo + j * dy(); }

    static GridSpec for_model(const ModelSpec& spec, int n_y = 401, int n_t = 400);
};

struct AssumptionCheck {
    std::string name;
    bool passed = true;
    std::optional<double> offending_y;
    std::string message;
};

struct ValidationReport {
    std::vector<AssumptionCheck> checks;

    bool ok() const;
    std::string summary() const;
};

ValidationReport validate_spec(const ModelSpec& spec, const GridSpec& grid);

/// benchmark_s5, scott_example22, stein_stein_example22, merton_nodefault.
ModelSpec load_preset(std::string_view name);
std::vector<std::string> preset_names();

} // namespace contagion
