#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "contagion/dual.hpp"
#include "contagion/parallel.hpp"
#include "contagion/sim.hpp"
#include "contagion/strategy.hpp"

namespace contagion {

double mc_tolerance(double se, double target, double n_se) {
    return n_se * se + 1e-6 * std::max(1.0, std::abs(target));
}

namespace {

using clock_type = std::chrono::steady_clock;

double seconds_since(clock_type::time_point t0) {
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

/// Welford accumulator with Chan's merge; merged in chunk order for deterministic results.
struct Moments {
    long n = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double v) {
        ++n;
        double d = v - mean;
        mean += d / n;
        m2 += d * (v - mean);
    }
    void merge(const Moments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        long total = n + o.n;
        double d = o.mean - mean;
        mean += d * o.n / total;
        m2 += o.m2 + d * d * static_cast<double>(n) * o.n / total;
        n = total;
    }
    double variance() const { return n > 1 ? m2 / (n - 1) : 0.0; }
    double se() const { return n > 1 ? std::sqrt(variance() / n) : 0.0; }
};

/// Co-moments of a pair of samples.
struct PairMoments {
    long n = 0;
    double mx = 0.0, my = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;

    void add(double x, double y) {
        ++n;
        double dx = x - mx;
        mx += dx / n;
        double dy = y - my;
        my += dy / n;
        sxx += dx * (x - mx);
        syy += dy * (y - my);
        sxy += dx * (y - my);
    }
    void merge(const PairMoments& o) {
        if (o.n == 0) return;
        if (n == 0) {
            *this = o;
            return;
        }
        long total = n + o.n;
        double f = static_cast<double>(n) * o.n / total;
        double dx = o.mx - mx, dy = o.my - my;
        sxx += o.sxx + dx * dx * f;
        syy += o.syy + dy * dy * f;
        sxy += o.sxy + dx * dy * f;
        mx += dx * o.n / total;
        my += dy * o.n / total;
        n = total;
    }
};

constexpr long chunk_size = 1024;

/// Runs `body(path, scratch, acc)` for every path. Each chunk owns its accumulator `Acc`
/// and scratch; chunk results are merged in index order.
template <class Acc, class Scratch, class Body, class Merge>
Acc run_chunked(long n_paths, Acc init, Body body, Merge merge) {
    const long chunks = (n_paths + chunk_size - 1) / chunk_size;
    std::vector<Acc> partial(chunks, init);
    parallel_for(static_cast<std::size_t>(chunks), [&](std::size_t c) {
        Scratch scratch;
        const long lo = static_cast<long>(c) * chunk_size;
        const long hi = std::min(n_paths, lo + chunk_size);
        for (long p = lo; p < hi; ++p) body(static_cast<std::uint64_t>(p), scratch, partial[c]);
    });
    Acc total = init;
    for (const auto& part : partial) merge(total, part);
    return total;
}

McReport two_sided(std::string test, const Moments& m, double target, clock_type::time_point t0) {
    McReport r;
    r.test = std::move(test);
    r.estimate = m.mean;
    r.target = target;
    r.se = m.se();
    r.tolerance = mc_tolerance(r.se, target);
    r.n_paths = m.n;
    r.pass = std::abs(r.estimate - target) <= r.tolerance;
    r.elapsed = seconds_since(t0);
    return r;
}

SimConfig aligned(const SystemSolution& sol, SimConfig cfg) {
    cfg.y_lo = sol.grid.y_lo;
    cfg.y_hi = sol.grid.y_hi;
    return cfg;
}

double g_value(const SystemSolution& sol, DefaultState z, double t_mat, double y) {
    return std::pow(sol.field(z).value(t_mat, y), sol.spec.beta());
}

int mesh_index(double t, double dt, int steps) {
    const double s = t / dt;
    const int k = static_cast<int>(std::lround(s));
    if (std::abs(s - k) > 1e-9 || k < 0 || k > steps)
        throw std::invalid_argument("probe time is not on the simulation mesh");
    return k;
}

/// Exact integral of exp(a) over an interval where a moves linearly from a0 to a1.
double exp_linear_integral(double a0, double a1, double dt) {
    const double d = a1 - a0;
    if (std::abs(d) < 1e-12) return dt * std::exp(a0) * (1.0 + 0.5 * d);
    return dt * (std::exp(a1) - std::exp(a0)) / d;
}

struct PathScratch {
    MarketPath market;
    WealthPath wealth;
    WealthPath other;
    std::vector<double> log_density;
};

} // namespace

std::vector<McReport> check_G_martingale(const SystemSolution& sol, const SimConfig& config,
                                         const std::vector<double>& probes) {
    const auto t0 = clock_type::now();
    const SimConfig cfg = aligned(sol, config);
    const ModelSpec& spec = sol.spec;
    MarketSimulator sim(spec, cfg);
    const double dt = sim.dt();
    const double T = spec.pref.T;
    const double q = spec.q();
    const double r = spec.market.r;
    const double k2 = std::pow(spec.pref.K2, 1.0 - q);
    std::vector<int> idx;
    for (double t : probes) idx.push_back(mesh_index(t, dt, cfg.n_steps));

    auto total = run_chunked<std::vector<Moments>, PathScratch>(
        cfg.n_paths, std::vector<Moments>(probes.size()),
        [&](std::uint64_t p, PathScratch& s, std::vector<Moments>& acc) {
            sim.generate(p, s.market);
            log_density_along(s.market, sol, cfg.n_steps, s.log_density);
            const auto& lg = s.log_density;
            double integral = 0.0;
            std::vector<double> at(cfg.n_steps + 1, 0.0);
            for (int k = 0; k < cfg.n_steps; ++k) {
                integral += exp_linear_integral(q * (lg[k] - r * k * dt), q * (lg[k + 1] - r * (k + 1) * dt), dt);
                at[k + 1] = integral;
            }
            for (std::size_t j = 0; j < idx.size(); ++j) {
                const int k = idx[j];
                const double tk = k * dt;
                const double disc = std::exp(q * (lg[k] - r * tk));
                const double G = k2 * at[k] + disc * g_value(sol, DefaultState{s.market.state[k]}, T - tk, s.market.y[k]);
                acc[j].add(G);
            }
        },
        [](std::vector<Moments>& a, const std::vector<Moments>& b) {
            for (std::size_t j = 0; j < a.size(); ++j) a[j].merge(b[j]);
        });

    const double target = g_value(sol, cfg.z0, T, cfg.y0);
    std::vector<McReport> out;
    for (std::size_t j = 0; j < probes.size(); ++j) {
        std::ostringstream name;
        name << "G_martingale t=" << probes[j];
        out.push_back(two_sided(name.str(), total[j], target, t0));
    }
    return out;
}

DualityResult duality_gap(const SystemSolution& sol, const SimConfig& config, const WealthOptions& opts) {
    const auto t0 = clock_type::now();
    const SimConfig cfg = aligned(sol, config);
    const ModelSpec& spec = sol.spec;
    MarketSimulator sim(spec, cfg);
    const double T = spec.pref.T;
    const double q = spec.q();
    const double r = spec.market.r;
    const double g_T = g_value(sol, cfg.z0, T, cfg.y0);
    const double scale = std::log(opts.x0 * std::pow(spec.pref.K1, 1.0 - q) / g_T);

    struct Acc {
        Moments utility;
        PairMoments logs;
        Moments x_sim, x_rep;
        long ruined = 0;
    };
    Acc total = run_chunked<Acc, PathScratch>(
        cfg.n_paths, Acc{},
        [&](std::uint64_t p, PathScratch& s, Acc& acc) {
            sim.generate(p, s.market);
            wealth_along(s.market, spec, &sol, cfg.n_steps, opts, s.wealth);
            acc.utility.add(s.wealth.terminal_utility + s.wealth.consumption_utility);
            if (s.wealth.ruined) {
                ++acc.ruined;
                return;
            }
            log_density_along(s.market, sol, cfg.n_steps, s.log_density);
            const double log_rep = scale + (q - 1.0) * (s.log_density.back() - r * T);
            const double log_sim = std::log(s.wealth.x.back());
            acc.logs.add(log_sim, log_rep);
            acc.x_sim.add(s.wealth.x.back());
            acc.x_rep.add(std::exp(log_rep));
        },
        [](Acc& a, const Acc& b) {
            a.utility.merge(b.utility);
            a.logs.merge(b.logs);
            a.x_sim.merge(b.x_sim);
            a.x_rep.merge(b.x_rep);
            a.ruined += b.ruined;
        });

    DualityResult out;
    const double V = value_function(opts.x0, cfg.y0, cfg.z0, sol.field(cfg.z0), spec);
    out.utility = two_sided("duality_gap", total.utility, V, t0);
    if (total.ruined) out.utility.note = std::to_string(total.ruined) + " ruined paths";

    McReport& rep = out.representation;
    rep.test = "wealth_representation";
    rep.n_paths = total.logs.n;
    const double vx = total.logs.sxx, vy = total.logs.syy;
    // Below 1e-8 of log-wealth dispersion the paths are deterministic up to rounding.
    const double spread = 1e-16 * std::max<long>(1, total.logs.n);
    if (vx > spread && vy > spread) {
        rep.estimate = total.logs.sxy / std::sqrt(vx * vy);
        rep.target = 1.0;
        rep.tolerance = 0.01;
        rep.pass = rep.estimate > 0.99;
        rep.note = "log-scale correlation of simulated and represented terminal wealth";
    } else {
        rep.estimate = total.x_sim.mean;
        rep.target = total.x_rep.mean;
        rep.se = total.x_sim.se();
        rep.tolerance = 1e-6 * std::max(1.0, std::abs(rep.target));
        rep.pass = std::abs(rep.estimate - rep.target) <= rep.tolerance;
        rep.note = "degenerate variance: compared mean terminal wealth";
    }
    rep.elapsed = seconds_since(t0);
    return out;
}

McReport check_suboptimal(const SystemSolution& sol, const SimConfig& config, const WealthOptions& perturbed,
                          const std::string& label, const WealthOptions& opts) {
    const auto t0 = clock_type::now();
    const SimConfig cfg = aligned(sol, config);
    const ModelSpec& spec = sol.spec;
    MarketSimulator sim(spec, cfg);
    struct Acc {
        Moments diff, base, other;
    };
    Acc total = run_chunked<Acc, PathScratch>(
        cfg.n_paths, Acc{},
        [&](std::uint64_t p, PathScratch& s, Acc& acc) {
            sim.generate(p, s.market);
            wealth_along(s.market, spec, &sol, cfg.n_steps, opts, s.wealth);
            wealth_along(s.market, spec, &sol, cfg.n_steps, perturbed, s.other);
            const double u0 = s.wealth.terminal_utility + s.wealth.consumption_utility;
            const double u1 = s.other.terminal_utility + s.other.consumption_utility;
            acc.diff.add(u0 - u1);
            acc.base.add(u0);
            acc.other.add(u1);
        },
        [](Acc& a, const Acc& b) {
            a.diff.merge(b.diff);
            a.base.merge(b.base);
            a.other.merge(b.other);
        });
    McReport r;
    r.test = label;
    r.estimate = total.diff.mean;
    r.target = 0.0;
    r.se = total.diff.se();
    r.tolerance = 3.0 * r.se;
    r.n_paths = total.diff.n;
    r.pass = r.estimate > r.tolerance;
    std::ostringstream note;
    note.precision(10);
    note << "utility " << total.base.mean << " vs perturbed " << total.other.mean;
    r.note = note.str();
    r.elapsed = seconds_since(t0);
    return r;
}

McReport mc_feynman_kac(const SystemSolution& sol, DefaultState z, double t, double y, const SimConfig& config) {
    const auto t0 = clock_type::now();
    const ModelSpec& spec = sol.spec;
    const GridSpec& grid = sol.grid;
    const SolutionField& field = sol.field(z);
    const PolicyField& pol = sol.policy(z);
    const int nt = grid.n_t, ny = grid.n_y, n = spec.n;
    const double dt = spec.pref.T / nt;
    const int steps = mesh_index(t, dt, nt);
    const double beta = spec.beta();

    // Coefficients of the linear representation on the solver grid.
    std::vector<NodeCoefficients> coeffs;
    std::vector<double> vol(ny);
    for (int j = 0; j < ny; ++j) {
        coeffs.push_back(node_coefficients(grid.y(j), z, spec));
        vol[j] = coeffs.back().sigma0.norm();
    }
    const std::size_t nodes = static_cast<std::size_t>(nt + 1) * ny;
    std::vector<double> rate(nodes), source(nodes), drift(nodes);
    std::vector<double> child(n);
    Eigen::VectorXd h(n);
    for (int k = 0; k <= nt; ++k) {
        for (int j = 0; j < ny; ++j) {
            const std::size_t node = pol.node(k, j);
            for (int i = 0; i < n; ++i) {
                h(i) = pol.hhat[node * n + i];
                child[i] = z.alive(i) ? sol.field(flip(z, i, n)).at(k, j) : 1.0;
            }
            Eigen::VectorXd theta = theta_from_h(h, coeffs[j]);
            PhiNu pn = phi_and_nu(h, theta, coeffs[j]);
            rate[node] = pn.phi / beta;
            drift[node] = pn.nu;
            source[node] = nonlinear_source(k * dt, field.at(k, j), coeffs[j], child, h, spec.pref.K2);
        }
    }
    const double dy = grid.dy();
    auto interp = [&](const std::vector<double>& v, int k, double yv) {
        AxisWeight w = locate(yv, grid.y_lo, dy, ny);
        const std::size_t base = static_cast<std::size_t>(k) * ny + w.index;
        return w.weight > 0.0 ? (1.0 - w.weight) * v[base] + w.weight * v[base + 1] : v[base];
    };
    auto vol_at = [&](double yv) {
        AxisWeight w = locate(yv, grid.y_lo, dy, ny);
        return w.weight > 0.0 ? (1.0 - w.weight) * vol[w.index] + w.weight * vol[w.index + 1] : vol[w.index];
    };
    const double f0 = spec.initial_value();
    const double sdt = std::sqrt(dt);

    struct Scratch {};
    Moments total = run_chunked<Moments, Scratch>(
        config.n_paths, Moments{},
        [&](std::uint64_t p, Scratch&, Moments& acc) {
            std::mt19937_64 rng(path_seed(config.seed, p));
            std::normal_distribution<double> normal;
            double yv = y;
            double expo = 0.0;
            double integral = 0.0;
            int m = steps; // solver time index of t - s
            double r0 = interp(rate, m, yv);
            double w0 = interp(source, m, yv);
            for (int k = 0; k < steps; ++k) {
                const double nu = interp(drift, m, yv);
                double y1 = yv + nu * dt + vol_at(yv) * sdt * normal(rng);
                if (y1 > grid.y_hi) y1 = 2.0 * grid.y_hi - y1;
                if (y1 < grid.y_lo) y1 = 2.0 * grid.y_lo - y1;
                y1 = std::min(std::max(y1, grid.y_lo), grid.y_hi);
                --m;
                const double r1 = interp(rate, m, y1);
                const double w1 = interp(source, m, y1);
                const double next = expo + 0.5 * (r0 + r1) * dt;
                integral += 0.5 * dt * (std::exp(expo) * w0 + std::exp(next) * w1);
                expo = next;
                r0 = r1;
                w0 = w1;
                yv = y1;
            }
            acc.add(f0 * std::exp(expo) + integral);
        },
        [](Moments& a, const Moments& b) { a.merge(b); });

    std::ostringstream name;
    name << "feynman_kac z=" << z.bitstring(n) << " t=" << t << " y=" << y;
    return two_sided(name.str(), total, field.value(t, y), t0);
}

McReport check_no_defaults(const ModelSpec& spec, const SimConfig& config) {
    const auto t0 = clock_type::now();
    MarketSimulator sim(spec, config);
    struct Scratch {
        MarketPath market;
    };
    Moments total = run_chunked<Moments, Scratch>(
        config.n_paths, Moments{},
        [&](std::uint64_t p, Scratch& s, Moments& acc) {
            sim.generate(p, s.market);
            acc.add(static_cast<double>(s.market.defaults.size()));
        },
        [](Moments& a, const Moments& b) { a.merge(b); });
    McReport r;
    r.test = "no_defaults";
    r.estimate = total.mean * total.n;
    r.n_paths = total.n;
    r.pass = r.estimate == 0.0;
    r.note = "total default count";
    r.elapsed = seconds_since(t0);
    return r;
}

McReport check_survival(const ModelSpec& spec, const SimConfig& config) {
    const auto t0 = clock_type::now();
    double rate = 0.0;
    for (int i = 0; i < spec.n; ++i) {
        if (config.z0.defaulted(i)) continue;
        const double a = spec.lambda(i, config.z0, config.y_lo);
        for (double yv : {config.y0, 0.5 * (config.y_lo + config.y_hi), config.y_hi})
            if (std::abs(spec.lambda(i, config.z0, yv) - a) > 1e-14)
                throw std::invalid_argument("check_survival: intensities must not depend on the factor");
        rate += a;
    }
    MarketSimulator sim(spec, config);
    struct Scratch {
        MarketPath market;
    };
    Moments total = run_chunked<Moments, Scratch>(
        config.n_paths, Moments{},
        [&](std::uint64_t p, Scratch& s, Moments& acc) {
            sim.generate(p, s.market);
            acc.add(s.market.defaults.empty() ? 1.0 : 0.0);
        },
        [](Moments& a, const Moments& b) { a.merge(b); });
    McReport r;
    r.test = "survival";
    r.estimate = total.mean;
    r.target = std::exp(-rate * spec.pref.T);
    r.se = total.se();
    r.tolerance = 3.0 * r.se;
    r.n_paths = total.n;
    r.pass = std::abs(r.estimate - r.target) <= r.tolerance;
    r.elapsed = seconds_since(t0);
    return r;
}

McReport check_compensator(const ModelSpec& spec, const SimConfig& config, int name, double t) {
    const auto t0 = clock_type::now();
    if (name < 0 || name >= spec.n) throw std::out_of_range("check_compensator: name out of range");
    MarketSimulator sim(spec, config);
    const int k = mesh_index(t, sim.dt(), config.n_steps);
    const int n = spec.n;
    struct Scratch {
        MarketPath market;
    };
    Moments total = run_chunked<Moments, Scratch>(
        config.n_paths, Moments{},
        [&](std::uint64_t p, Scratch& s, Moments& acc) {
            sim.generate(p, s.market);
            const double H = DefaultState{s.market.state[k]}.defaulted(name) ? 1.0 : 0.0;
            const double H0 = config.z0.defaulted(name) ? 1.0 : 0.0;
            acc.add(H - H0 - s.market.compensator[static_cast<std::size_t>(k) * n + name]);
        },
        [](Moments& a, const Moments& b) { a.merge(b); });
    std::ostringstream label;
    label << "compensator name=" << name + 1 << " t=" << t;
    return two_sided(label.str(), total, 0.0, t0);
}

McReport check_bank_account(const ModelSpec& spec, const SimConfig& config, double x0) {
    const auto t0 = clock_type::now();
    MarketSimulator sim(spec, config);
    WealthOptions opts;
    opts.x0 = x0;
    opts.zero_consumption = true;
    opts.constant_pi.assign(spec.n, 0.0);
    const double exact = x0 * std::exp(spec.market.r * spec.pref.T);
    struct Acc {
        double worst = 0.0;
        long n = 0;
    };
    Acc total = run_chunked<Acc, PathScratch>(
        config.n_paths, Acc{},
        [&](std::uint64_t p, PathScratch& s, Acc& acc) {
            sim.generate(p, s.market);
            wealth_along(s.market, spec, nullptr, config.n_steps, opts, s.wealth);
            acc.worst = std::max(acc.worst, std::abs(s.wealth.x.back() - exact) / exact);
            ++acc.n;
        },
        [](Acc& a, const Acc& b) {
            a.worst = std::max(a.worst, b.worst);
            a.n += b.n;
        });
    McReport r;
    r.test = "bank_account";
    r.estimate = total.worst;
    r.target = 0.0;
    r.tolerance = 1e-12;
    r.n_paths = total.n;
    r.pass = total.worst <= 1e-12;
    r.note = "max relative deviation from x0 exp(rT)";
    r.elapsed = seconds_since(t0);
    return r;
}

McReport check_gbm_log_mean(const ModelSpec& spec, const SimConfig& config, double pi) {
    const auto t0 = clock_type::now();
    if (spec.n != 1) throw std::invalid_argument("check_gbm_log_mean: single name only");
    MarketSimulator sim(spec, config);
    WealthOptions opts;
    opts.zero_consumption = true;
    opts.constant_pi = {pi};
    const double mu = spec.market.mu[0](config.y0);
    const double sig = spec.market.sigma[0](config.y0);
    const double r = spec.market.r;
    const double target = (r + pi * (mu - r) - 0.5 * pi * pi * sig * sig) * spec.pref.T;
    Moments total = run_chunked<Moments, PathScratch>(
        config.n_paths, Moments{},
        [&](std::uint64_t p, PathScratch& s, Moments& acc) {
            sim.generate(p, s.market);
            wealth_along(s.market, spec, nullptr, config.n_steps, opts, s.wealth);
            acc.add(std::log(s.wealth.x.back()));
        },
        [](Moments& a, const Moments& b) { a.merge(b); });
    return two_sided("gbm_log_mean", total, target, t0);
}

McReport novikov_diagnostic(const SystemSolution& sol, const SimConfig& config, double limit) {
    const auto t0 = clock_type::now();
    const SimConfig cfg = aligned(sol, config);
    MarketSimulator sim(sol.spec, cfg);
    WealthOptions opts;
    struct Acc {
        Moments m;
        double worst = 0.0;
    };
    Acc total = run_chunked<Acc, PathScratch>(
        cfg.n_paths, Acc{},
        [&](std::uint64_t p, PathScratch& s, Acc& acc) {
            sim.generate(p, s.market);
            wealth_along(s.market, sol.spec, &sol, cfg.n_steps, opts, s.wealth);
            acc.m.add(s.wealth.novikov);
            acc.worst = std::max(acc.worst, s.wealth.novikov);
        },
        [](Acc& a, const Acc& b) {
            a.m.merge(b.m);
            a.worst = std::max(a.worst, b.worst);
        });
    McReport r;
    r.test = "novikov";
    r.estimate = total.m.mean;
    r.target = limit;
    r.se = total.m.se();
    r.n_paths = total.m.n;
    r.pass = total.worst < limit;
    std::ostringstream note;
    note << "max int |a|^2 dt = " << total.worst;
    r.note = note.str();
    r.elapsed = seconds_since(t0);
    return r;
}

} // namespace contagion
