#include "contagion/sim.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

#include "contagion/dual.hpp"
#include "contagion/parallel.hpp"

namespace contagion {

SimConfig SimConfig::for_model(const ModelSpec& spec) {
    SimConfig c;
    c.y_lo = spec.factor.domain_lo;
    c.y_hi = spec.factor.domain_hi;
    return c;
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path) { return splitmix64(splitmix64(seed) ^ path); }

MarketSimulator::MarketSimulator(const ModelSpec& spec, const SimConfig& config) : spec_(spec), config_(config) {
    if (config.n_steps < 1) throw std::invalid_argument("simulation needs at least one step");
    if (!(config.y_lo < config.y_hi)) throw std::invalid_argument("simulation domain is empty");
    if (config.y0 < config.y_lo || config.y0 > config.y_hi)
        throw std::invalid_argument("initial factor value outside the simulation domain");
}

double MarketSimulator::reflect(double y, int& hits) const {
    const double lo = config_.y_lo, hi = config_.y_hi;
    if (y > hi) {
        y = 2.0 * hi - y;
        ++hits;
    } else if (y < lo) {
        y = 2.0 * lo - y;
        ++hits;
    }
    return std::min(std::max(y, lo), hi);
}

void MarketSimulator::generate(std::uint64_t path, MarketPath& out) const {
    const int n = spec_.n;
    const int steps = config_.n_steps;
    const double dt = this->dt();
    const double sdt = std::sqrt(dt);
    const double rho = spec_.factor.rho;
    const double rho_bar = std::sqrt(1.0 - rho * rho);

    std::mt19937_64 rng(path_seed(config_.seed, path));
    std::normal_distribution<double> normal;
    std::exponential_distribution<double> expo(1.0);

    out.y.assign(steps + 1, 0.0);
    out.state.assign(steps + 1, 0);
    out.dw.assign(static_cast<std::size_t>(steps) * n, 0.0);
    out.dwbar.assign(static_cast<std::size_t>(steps) * n, 0.0);
    out.log_price.assign(static_cast<std::size_t>(steps + 1) * n, 0.0);
    out.compensator.assign(static_cast<std::size_t>(steps + 1) * n, 0.0);
    out.defaults.clear();
    out.reflections = 0;

    DefaultState z = config_.z0;
    double y = config_.y0;
    out.y[0] = y;
    out.state[0] = z.bits;
    std::vector<double> clock(n, 0.0), acc(n, 0.0), comp(n, 0.0), lp(n, 0.0), inc(n, 0.0);
    for (int i = 0; i < n; ++i)
        if (z.alive(i)) clock[i] = expo(rng);

    for (int k = 0; k < steps; ++k) {
        double* dw = out.dw.data() + static_cast<std::size_t>(k) * n;
        double* dwb = out.dwbar.data() + static_cast<std::size_t>(k) * n;
        for (int i = 0; i < n; ++i) dw[i] = sdt * normal(rng);
        for (int i = 0; i < n; ++i) dwb[i] = sdt * normal(rng);

        double drive = 0.0;
        for (int i = 0; i < n; ++i) drive += spec_.factor.sigma0[i](y) * (rho * dw[i] + rho_bar * dwb[i]);
        const double y1 = reflect(y + spec_.factor.mu0(y) * dt + drive, out.reflections);

        for (int i = 0; i < n; ++i) {
            double shock = 0.0, var = 0.0;
            for (int j = 0; j < n; ++j) {
                const double s = spec_.sigma_fn(i, j)(y);
                shock += s * dw[j];
                var += s * s;
            }
            lp[i] += (spec_.market.mu[i](y) + spec_.lambda(i, z, y) - 0.5 * var) * dt + shock;
        }

        // Integrated-intensity clocks over the rest of the interval, one default at a time.
        double pos = 0.0;
        while (true) {
            const double ya = y + pos * (y1 - y);
            int hit = -1;
            double best = 2.0;
            for (int i = 0; i < n; ++i) {
                inc[i] = 0.0;
                if (z.defaulted(i)) continue;
                inc[i] = 0.5 * (spec_.lambda(i, z, ya) + spec_.lambda(i, z, y1)) * (1.0 - pos) * dt;
                const double need = clock[i] - acc[i];
                if (inc[i] > 0.0 && inc[i] >= need) {
                    double w = need / inc[i];
                    if (w < best) {
                        best = w;
                        hit = i;
                    }
                }
            }
            if (hit < 0) {
                for (int i = 0; i < n; ++i) {
                    acc[i] += inc[i];
                    comp[i] += inc[i];
                }
                break;
            }
            for (int i = 0; i < n; ++i) comp[i] += (i == hit) ? clock[i] - acc[i] : best * inc[i];
            pos += best * (1.0 - pos);
            z = flip(z, hit, n);
            out.defaults.push_back({k, pos, hit, (k + pos) * dt});
            for (int i = 0; i < n; ++i) {
                acc[i] = 0.0;
                clock[i] = z.alive(i) ? expo(rng) : 0.0;
            }
        }

        y = y1;
        out.y[k + 1] = y;
        out.state[k + 1] = z.bits;
        for (int i = 0; i < n; ++i) {
            out.log_price[static_cast<std::size_t>(k + 1) * n + i] = lp[i];
            out.compensator[static_cast<std::size_t>(k + 1) * n + i] = comp[i];
        }
    }
}

long PathBundle::paths_with_reflections() const {
    long count = 0;
    for (const auto& p : paths) count += p.reflections > 0;
    return count;
}

PathBundle simulate_market(const ModelSpec& spec, const SimConfig& config) {
    MarketSimulator sim(spec, config);
    PathBundle b;
    b.config = config;
    b.n = spec.n;
    b.time.resize(config.n_steps + 1);
    for (int k = 0; k <= config.n_steps; ++k) b.time[k] = sim.time(k);
    b.paths.resize(config.n_paths);
    parallel_for(b.paths.size(), [&](std::size_t p) { sim.generate(p, b.paths[p]); });
    return b;
}

double utility(int i, double x, const ModelSpec& spec) {
    const double K = i == 1 ? spec.pref.K1 : spec.pref.K2;
    const double p = spec.pref.p;
    if (x <= 0.0) return p > 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return K * std::pow(x, p) / p;
}

namespace {

// Fraction of the interval spent in each state: segments (weight, state) in time order.
void interval_segments(const MarketPath& path, int k, int n, std::vector<std::pair<double, DefaultState>>& seg,
                       std::size_t& cursor) {
    seg.clear();
    DefaultState z{path.state[k]};
    double start = 0.0;
    while (cursor < path.defaults.size() && path.defaults[cursor].step == k) {
        const auto& ev = path.defaults[cursor];
        seg.push_back({ev.fraction - start, z});
        z = flip(z, ev.name, n);
        start = ev.fraction;
        ++cursor;
    }
    seg.push_back({1.0 - start, z});
}

// Mean intensity-weighted sum over the interval of sum_i w_i lambda_i on alive names.
double weighted_intensity(const ModelSpec& spec, const std::vector<std::pair<double, DefaultState>>& seg,
                          const std::vector<double>& w, double y0, double y1) {
    double total = 0.0;
    for (const auto& [frac, z] : seg) {
        if (frac <= 0.0) continue;
        double s = 0.0;
        for (int i = 0; i < spec.n; ++i) {
            if (z.defaulted(i) || w[i] == 0.0) continue;
            s += w[i] * 0.5 * (spec.lambda(i, z, y0) + spec.lambda(i, z, y1));
        }
        total += frac * s;
    }
    return total;
}

} // namespace

void wealth_along(const MarketPath& path, const ModelSpec& spec, const SystemSolution* sol, int n_steps,
                  const WealthOptions& opts, WealthPath& out) {
    const int n = spec.n;
    const double T = spec.pref.T;
    const double dt = T / n_steps;
    const double r = spec.market.r;
    const bool feedback = opts.constant_pi.empty();
    if (feedback && !sol) throw std::invalid_argument("wealth_along: feedback controls need a solution");
    if (!feedback && static_cast<int>(opts.constant_pi.size()) != n)
        throw std::invalid_argument("wealth_along: constant_pi has the wrong size");
    if (!feedback && !opts.zero_consumption)
        throw std::invalid_argument("wealth_along: constant fractions require zero consumption");

    out.x.assign(n_steps + 1, 0.0);
    out.c.assign(n_steps + 1, 0.0);
    out.ruined = false;
    out.novikov = 0.0;

    PolicySample ps;
    std::vector<double> pi(n, 0.0);
    std::vector<std::pair<double, DefaultState>> seg;
    std::size_t cursor = 0;

    auto c_mult = [&](int k) {
        if (opts.zero_consumption) return 0.0;
        sample_policy(sol->policy(DefaultState{path.state[k]}), k * dt, path.y[k], ps);
        return ps.c_mult;
    };

    double logx = std::log(opts.x0);
    out.x[0] = opts.x0;
    double cm_left = c_mult(0);
    out.c[0] = cm_left * opts.x0;
    for (int k = 0; k < n_steps; ++k) {
        const DefaultState z{path.state[k]};
        const double y0 = path.y[k], y1 = path.y[k + 1];
        if (feedback) {
            sample_policy(sol->policy(z), k * dt, y0, ps);
            for (int i = 0; i < n; ++i) pi[i] = z.defaulted(i) ? 0.0 : opts.pi_scale * ps.pi[i];
            double a2 = 0.0;
            for (double a : ps.ahat) a2 += a * a;
            out.novikov += a2 * dt;
        } else {
            for (int i = 0; i < n; ++i) pi[i] = z.defaulted(i) ? 0.0 : opts.constant_pi[i];
        }
        double cm_right = 0.0;
        if (!opts.zero_consumption) {
            sample_policy(sol->policy(z), (k + 1) * dt, y1, ps);
            cm_right = ps.c_mult;
        }

        const double* dw = path.dw.data() + static_cast<std::size_t>(k) * n;
        double excess = 0.0, var = 0.0, shock = 0.0;
        for (int i = 0; i < n; ++i) {
            if (pi[i] == 0.0) continue;
            excess += pi[i] * (0.5 * (spec.market.mu[i](y0) + spec.market.mu[i](y1)) - r);
        }
        for (int j = 0; j < n; ++j) {
            double vol = 0.0;
            for (int i = 0; i < n; ++i)
                if (pi[i] != 0.0) vol += pi[i] * spec.sigma_fn(i, j)(y0);
            var += vol * vol;
            shock += vol * dw[j];
        }

        std::size_t first = cursor;
        interval_segments(path, k, n, seg, cursor);
        const double comp = weighted_intensity(spec, seg, pi, y0, y1);
        const double drift = r + excess + comp - 0.5 * var - 0.5 * (cm_left + cm_right);
        logx += drift * dt + shock;
        for (std::size_t e = first; e < cursor; ++e) {
            const double keep = 1.0 - pi[path.defaults[e].name];
            if (keep <= 0.0) {
                out.ruined = true;
                logx = -std::numeric_limits<double>::infinity();
                break;
            }
            logx += std::log(keep);
        }
        out.x[k + 1] = std::exp(logx);
        cm_left = c_mult(k + 1);
        out.c[k + 1] = cm_left * out.x[k + 1];
        if (out.ruined) {
            for (int j = k + 1; j <= n_steps; ++j) out.x[j] = out.c[j] = 0.0;
            break;
        }
    }

    out.terminal_utility = utility(1, out.x[n_steps], spec);
    out.consumption_utility = 0.0;
    if (!opts.zero_consumption) {
        for (int k = 0; k < n_steps; ++k)
            out.consumption_utility += 0.5 * dt * (utility(2, out.c[k], spec) + utility(2, out.c[k + 1], spec));
    }
}

void log_density_along(const MarketPath& path, const SystemSolution& sol, int n_steps, std::vector<double>& out) {
    const ModelSpec& spec = sol.spec;
    const int n = spec.n;
    const double dt = spec.pref.T / n_steps;
    out.assign(n_steps + 1, 0.0);
    PolicySample ps;
    std::vector<double> h(n, 0.0);
    std::vector<std::pair<double, DefaultState>> seg;
    std::size_t cursor = 0;
    double lg = 0.0;
    for (int k = 0; k < n_steps; ++k) {
        const DefaultState z{path.state[k]};
        sample_policy(sol.policy(z), k * dt, path.y[k], ps);
        double diff = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            diff += ps.theta[i] * path.dw[static_cast<std::size_t>(k) * n + i] +
                    ps.ahat[i] * path.dwbar[static_cast<std::size_t>(k) * n + i];
            sq += ps.theta[i] * ps.theta[i] + ps.ahat[i] * ps.ahat[i];
            h[i] = z.defaulted(i) ? 0.0 : ps.hhat[i];
        }
        std::size_t first = cursor;
        interval_segments(path, k, n, seg, cursor);
        lg += -diff - 0.5 * sq * dt - weighted_intensity(spec, seg, h, path.y[k], path.y[k + 1]) * dt;
        for (std::size_t e = first; e < cursor; ++e) lg += std::log1p(h[path.defaults[e].name]);
        out[k + 1] = lg;
    }
}

void simulate_wealth(PathBundle& bundle, const ModelSpec& spec, const SystemSolution* sol, const WealthOptions& opts) {
    bundle.wealth.resize(bundle.paths.size());
    bundle.consumption.resize(bundle.paths.size());
    parallel_for(bundle.paths.size(), [&](std::size_t p) {
        WealthPath w;
        wealth_along(bundle.paths[p], spec, sol, bundle.config.n_steps, opts, w);
        bundle.wealth[p] = std::move(w.x);
        bundle.consumption[p] = std::move(w.c);
    });
}

void density_path(PathBundle& bundle, const SystemSolution& sol) {
    bundle.gamma.resize(bundle.paths.size());
    parallel_for(bundle.paths.size(), [&](std::size_t p) {
        log_density_along(bundle.paths[p], sol, bundle.config.n_steps, bundle.gamma[p]);
        for (double& v : bundle.gamma[p]) v = std::exp(v);
    });
}

} // namespace contagion
