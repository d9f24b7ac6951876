#include "contagion/pde.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <map>

#include "contagion/parallel.hpp"
#include "contagion/strategy.hpp"

namespace contagion {

double TruncationBounds::ell(double t) const { return std::exp(growth * t); }

double TruncationBounds::upper(double t) const {
    if (t <= 0.0) return initial;
    const double linear = initial * std::exp((growth + theta_rate) * t);
    if (!ode_bound) return linear;
    const double m = phi.upper;
    const double span = m == 0.0 ? t : std::expm1(m * t) / m;
    const double g = std::pow(initial, beta) * std::exp(m * t) + feed * span;
    return std::min(linear, std::pow(g, 1.0 / beta));
}

TruncationBounds truncation_bounds(DefaultState z, const std::vector<TruncationBounds>& children,
                                   const ModelSpec& spec, const PhiNorms& norms) {
    const double q = spec.q();
    const double beta = spec.beta();
    const double T = spec.pref.T;
    TruncationBounds b;
    b.initial = spec.initial_value();
    b.phi = phi_bounds(z, spec, norms);
    b.k_under = b.initial * std::exp(T * std::min(b.phi.lower, 0.0) / beta);
    b.growth = std::max(b.phi.upper, 0.0) / beta;
    double feed = std::pow(spec.pref.K2, 1.0 - q);
    for (int i = 0; i < spec.n; ++i) {
        if (z.defaulted(i)) continue;
        if (i >= static_cast<int>(children.size())) throw std::invalid_argument("truncation_bounds: children missing");
        double child_top = children[i].upper(T);
        double jump = i < static_cast<int>(norms.jump_power_sup.size()) ? norms.jump_power_sup[i] : 1.0;
        double lam = i < static_cast<int>(norms.lambda_sup.size()) ? norms.lambda_sup[i] : 0.0;
        feed += std::pow(child_top, beta) * jump * lam;
    }
    b.theta_rate = feed * std::pow(b.k_under, -beta) / beta;
    b.feed = feed;
    b.beta = beta;
    b.ode_bound = false;
    for (int i = 0; i < spec.n; ++i)
        if (z.alive(i) && i < static_cast<int>(norms.lambda_sup.size()) && norms.lambda_sup[i] > 0.0) b.ode_bound = true;
    return b;
}

double nonlinear_source(double t, double v, const NodeCoefficients& c, const std::vector<double>& child_f,
                        const Eigen::VectorXd& hhat, double K2, const TruncationBounds* clamp, bool* clamped) {
    double w = v;
    if (clamp) {
        w = std::min(std::max(v, clamp->k_under), clamp->upper(t));
        if (clamped) *clamped = w != v;
    } else if (clamped) {
        *clamped = false;
    }
    if (!(w > 0.0)) throw SolverError("non-positive solution value in the nonlinear source");
    double feed = std::pow(K2, 1.0 - c.q);
    for (int i : c.alive) {
        if (c.lambda(i) == 0.0) continue;
        feed += std::pow(child_f[i], c.beta) * std::pow(1.0 + hhat(i), c.q) * c.lambda(i);
    }
    return std::pow(w, 1.0 - c.beta) * feed / c.beta;
}

namespace {

struct Stencil {
    double lo, di, up;
};

Stencil stencil(const SliceOperator& op, int j, int n, double dy) {
    const double a = op.diffusion[j] / (dy * dy);
    const double k = op.reaction[j];
    if (j == 0) return {0.0, -2.0 * a + k, 2.0 * a};
    if (j == n - 1) return {2.0 * a, -2.0 * a + k, 0.0};
    const double nu = op.drift[j];
    if (std::abs(nu) * dy <= 2.0 * op.diffusion[j]) {
        double d = nu / (2.0 * dy);
        return {a - d, -2.0 * a + k, a + d};
    }
    if (nu > 0.0) return {a, -2.0 * a - nu / dy + k, a + nu / dy};
    return {a - nu / dy, -2.0 * a + nu / dy + k, a};
}

} // namespace

void step_slice(const std::vector<double>& f_now, const SliceOperator& now, const SliceOperator& next, double dt,
                double dy, std::vector<double>& f_next) {
    const int n = static_cast<int>(f_now.size());
    f_next.resize(n);
    if (dt == 0.0) {
        f_next = f_now;
        return;
    }
    std::vector<double> sub(n), diag(n), sup(n), rhs(n);
    const double h = 0.5 * dt;
    for (int j = 0; j < n; ++j) {
        Stencil s0 = stencil(now, j, n, dy);
        double lf = s0.di * f_now[j];
        if (j > 0) lf += s0.lo * f_now[j - 1];
        if (j < n - 1) lf += s0.up * f_now[j + 1];
        rhs[j] = f_now[j] + h * lf + h * (now.source[j] + next.source[j]);
        Stencil s1 = stencil(next, j, n, dy);
        sub[j] = -h * s1.lo;
        diag[j] = 1.0 - h * s1.di;
        sup[j] = -h * s1.up;
    }
    // Thomas algorithm
    for (int j = 1; j < n; ++j) {
        if (diag[j - 1] == 0.0) throw SolverError("tridiagonal solve: zero pivot");
        double m = sub[j] / diag[j - 1];
        diag[j] -= m * sup[j - 1];
        rhs[j] -= m * rhs[j - 1];
    }
    if (diag[n - 1] == 0.0) throw SolverError("tridiagonal solve: zero pivot");
    f_next[n - 1] = rhs[n - 1] / diag[n - 1];
    for (int j = n - 2; j >= 0; --j) f_next[j] = (rhs[j] - sup[j] * f_next[j + 1]) / diag[j];
}

namespace {

struct StateRun {
    SolutionField field;
    std::vector<double> hhat; // (n_t+1) * n_y * n
    StateReport report;
};

class StateSolver {
public:
    StateSolver(const ModelSpec& spec, const GridSpec& grid, DefaultState z, const std::vector<SolutionField>& fields,
                const SolveOptions& options)
        : spec_(spec), grid_(grid), z_(z), fields_(fields), options_(options), n_(spec.n), ny_(grid.n_y) {
        coeffs_.reserve(ny_);
        for (int j = 0; j < ny_; ++j) coeffs_.push_back(node_coefficients(grid.y(j), z, spec));
        for (int i = 0; i < n_; ++i)
            if (z.alive(i)) child_bits_.push_back({i, flip(z, i, n_).bits});
    }

    const std::vector<NodeCoefficients>& coefficients() const { return coeffs_; }

    StateRun run(const TruncationBounds* clamp) const {
        StateRun out{SolutionField(z_, grid_, spec_.pref.T, spec_.beta()), {}, {}};
        out.report.z = z_;
        out.hhat.assign(static_cast<std::size_t>(grid_.n_t + 1) * ny_ * n_, 0.0);
        const double dt = out.field.dt();
        const double dy = grid_.dy();

        std::vector<double> f_now(ny_, spec_.initial_value());
        std::vector<double> fy(ny_, 0.0);
        std::vector<Eigen::VectorXd> h_now(ny_, Eigen::VectorXd::Zero(n_));
        update_hhat(0, f_now, fy, h_now, out.report);
        SliceOperator op_now(ny_);
        assemble(0, f_now, h_now, clamp, op_now, out.report);
        store(out, 0, f_now, h_now);

        std::vector<double> f_next, f_trial;
        std::vector<Eigen::VectorXd> h_next;
        SliceOperator op_next(ny_);
        for (int k = 0; k < grid_.n_t; ++k) {
            f_next = f_now;
            h_next = h_now;
            double change = 0.0;
            int sweep = 0;
            for (sweep = 1; sweep <= options_.max_sweeps; ++sweep) {
                assemble(k + 1, f_next, h_next, clamp, op_next, out.report);
                step_slice(f_now, op_now, op_next, dt, dy, f_trial);
                change = 0.0;
                for (int j = 0; j < ny_; ++j)
                    change = std::max(change, std::abs(f_trial[j] - f_next[j]) / std::abs(f_trial[j]));
                f_next.swap(f_trial);
                gradient_1d(f_next.data(), fy.data(), ny_, dy);
                update_hhat(k + 1, f_next, fy, h_next, out.report);
                if (change < options_.sweep_tol) break;
            }
            out.report.max_sweeps_used = std::max(out.report.max_sweeps_used, std::min(sweep, options_.max_sweeps));
            out.report.last_sweep_change = change;
            f_now.swap(f_next);
            h_now.swap(h_next);
            assemble(k + 1, f_now, h_now, clamp, op_now, out.report);
            store(out, k + 1, f_now, h_now);
        }
        out.field.compute_gradient();
        return out;
    }

    PhiNorms norms(const StateRun& run) const {
        PhiNorms nm;
        nm.lambda_sup.assign(n_, 0.0);
        nm.hhat_sup.assign(n_, 0.0);
        nm.jump_power_sup.assign(n_, 0.0);
        std::vector<double> theta_sup(n_, 0.0);
        const double q = spec_.q();
        Eigen::VectorXd h(n_);
        for (int k = 0; k <= grid_.n_t; ++k) {
            for (int j = 0; j < ny_; ++j) {
                const std::size_t off = (static_cast<std::size_t>(k) * ny_ + j) * n_;
                for (int i = 0; i < n_; ++i) h(i) = run.hhat[off + i];
                Eigen::VectorXd theta = theta_from_h(h, coeffs_[j]);
                for (int i = 0; i < n_; ++i) theta_sup[i] = std::max(theta_sup[i], std::abs(theta(i)));
                for (int i : coeffs_[j].alive) {
                    nm.hhat_sup[i] = std::max(nm.hhat_sup[i], std::abs(h(i)));
                    nm.jump_power_sup[i] = std::max(nm.jump_power_sup[i], std::pow(1.0 + h(i), q));
                }
            }
        }
        for (int j = 0; j < ny_; ++j)
            for (int i : coeffs_[j].alive) nm.lambda_sup[i] = std::max(nm.lambda_sup[i], coeffs_[j].lambda(i));
        for (double s : theta_sup) nm.theta_sq_sum += s * s;
        return nm;
    }

private:
    void children_at(int k, int j, std::vector<double>& out) const {
        out.assign(n_, 1.0);
        for (auto [i, bits] : child_bits_) out[i] = fields_[bits].at(k, j);
    }

    void update_hhat(int k, const std::vector<double>& f, const std::vector<double>& fy,
                     std::vector<Eigen::VectorXd>& h, StateReport& rep) const {
        if (child_bits_.empty()) return;
        NodeValues v;
        for (int j = 0; j < ny_; ++j) {
            v.f = f[j];
            v.fy = fy[j];
            children_at(k, j, v.child_f);
            HhatSolve hs = solve_hhat(coeffs_[j], v, h[j]);
            if (!hs.converged)
                throw SolverError("jump control failed in state " + z_.bitstring(n_) + " at t=" +
                                  std::to_string(k * spec_.pref.T / grid_.n_t) + ", y=" +
                                  std::to_string(coeffs_[j].y) + ": " + hs.message);
            h[j] = hs.h;
            rep.max_newton_iterations = std::max(rep.max_newton_iterations, hs.iterations);
            if (hs.fallback) ++rep.bisection_steps;
        }
    }

    void assemble(int k, const std::vector<double>& f, const std::vector<Eigen::VectorXd>& h,
                  const TruncationBounds* clamp, SliceOperator& op, StateReport& rep) const {
        const double t = k * spec_.pref.T / grid_.n_t;
        std::vector<double> child;
        for (int j = 0; j < ny_; ++j) {
            const auto& c = coeffs_[j];
            Eigen::VectorXd theta = theta_from_h(h[j], c);
            PhiNu pn = phi_and_nu(h[j], theta, c);
            op.diffusion[j] = c.diffusion();
            op.drift[j] = pn.nu;
            op.reaction[j] = pn.phi / c.beta;
            children_at(k, j, child);
            bool hit = false;
            op.source[j] = nonlinear_source(t, f[j], c, child, h[j], spec_.pref.K2, clamp, &hit);
            if (hit) ++rep.clamp_hits;
        }
    }

    void store(StateRun& out, int k, const std::vector<double>& f, const std::vector<Eigen::VectorXd>& h) const {
        for (int j = 0; j < ny_; ++j) {
            out.field.at(k, j) = f[j];
            const std::size_t off = (static_cast<std::size_t>(k) * ny_ + j) * n_;
            for (int i = 0; i < n_; ++i) out.hhat[off + i] = h[j](i);
        }
    }

    const ModelSpec& spec_;
    const GridSpec& grid_;
    DefaultState z_;
    const std::vector<SolutionField>& fields_;
    const SolveOptions& options_;
    int n_;
    int ny_;
    std::vector<NodeCoefficients> coeffs_;
    std::vector<std::pair<int, std::uint32_t>> child_bits_;
};

void verify_bounds(const SolutionField& f, const TruncationBounds& b, double slack, StateReport& rep) {
    rep.lower_margin = INFINITY;
    rep.upper_margin = INFINITY;
    rep.bound_violations = 0;
    for (int k = 0; k <= f.n_t; ++k) {
        const double top = b.upper(f.t(k));
        for (int j = 0; j < f.n_y; ++j) {
            const double v = f.at(k, j);
            rep.lower_margin = std::min(rep.lower_margin, v - b.k_under);
            rep.upper_margin = std::min(rep.upper_margin, top - v);
            if (v < b.k_under - slack || v > top + slack) ++rep.bound_violations;
        }
    }
    for (double g : f.df) rep.max_abs_gradient = std::max(rep.max_abs_gradient, std::abs(g));
}

} // namespace

SystemSolution solve_recursive_system(const ModelSpec& spec, const GridSpec& grid, const SolveOptions& options) {
    using clock = std::chrono::steady_clock;
    const auto start = clock::now();
    if (grid.n_y < 3 || grid.n_t < 1) throw std::invalid_argument("grid too small");

    SystemSolution sol;
    sol.spec = spec;
    sol.grid = grid;
    const std::size_t states = std::size_t{1} << spec.n;
    sol.fields.resize(states);
    sol.policies.resize(states);
    sol.bounds.resize(states);
    sol.reports.resize(states);

    std::map<int, std::vector<DefaultState>, std::greater<>> by_card;
    for (DefaultState z : lattice_descending(spec.n)) by_card[z.cardinality()].push_back(z);

    for (auto& [card, level] : by_card) {
        parallel_for(level.size(), [&](std::size_t idx) {
            const auto t0 = clock::now();
            const DefaultState z = level[idx];
            StateSolver solver(spec, grid, z, sol.fields, options);
            std::vector<TruncationBounds> children(spec.n);
            for (int i = 0; i < spec.n; ++i)
                if (z.alive(i)) children[i] = sol.bounds[flip(z, i, spec.n).bits];

            StateRun run = solver.run(nullptr);
            TruncationBounds tb = truncation_bounds(z, children, spec, solver.norms(run));
            if (grid.clamp_enabled) {
                run = solver.run(&tb);
            }
            verify_bounds(run.field, tb, options.bound_slack, run.report);
            if (run.report.bound_violations > 0)
                throw SolverError("solution leaves its a priori bounds in state " + z.bitstring(spec.n) + " (" +
                                  std::to_string(run.report.bound_violations) + " nodes)");
            run.report.seconds = std::chrono::duration<double>(clock::now() - t0).count();
            sol.fields[z.bits] = std::move(run.field);
            sol.bounds[z.bits] = tb;
            sol.reports[z.bits] = run.report;
        });
    }

    parallel_for(states, [&](std::size_t bits) {
        DefaultState z{static_cast<std::uint32_t>(bits)};
        sol.policies[bits] = build_policy(spec, grid, sol.fields, z);
        sol.reports[bits].max_hhat_residual = sol.policies[bits].max_residual;
        sol.reports[bits].max_pi_consistency = sol.policies[bits].max_consistency;
    });
    sol.seconds = std::chrono::duration<double>(clock::now() - start).count();
    return sol;
}

} // namespace contagion
