#include "contagion/field.hpp"

#include <algorithm>
#include <cmath>

namespace contagion {

AxisWeight locate(double x, double lo, double step, int count) {
    if (count < 2) return {0, 0.0};
    double s = (x - lo) / step;
    if (s <= 0.0) return {0, 0.0};
    if (s >= count - 1) return {count - 2, 1.0};
    int k = static_cast<int>(s);
    if (k > count - 2) k = count - 2;
    return {k, s - k};
}

SolutionField::SolutionField(DefaultState z_, const GridSpec& grid, double horizon_, double beta_)
    : z(z_), n_t(grid.n_t), n_y(grid.n_y), horizon(horizon_), y_lo(grid.y_lo), y_hi(grid.y_hi), beta(beta_),
      f(static_cast<std::size_t>(grid.n_t + 1) * grid.n_y, 0.0), df(f.size(), 0.0) {}

double SolutionField::g(int k, int j) const { return std::pow(at(k, j), beta); }

namespace {

double bilinear(const std::vector<double>& v, int n_y, AxisWeight tw, AxisWeight yw) {
    auto idx = [n_y](int k, int j) { return static_cast<std::size_t>(k) * n_y + j; };
    int k1 = tw.weight > 0.0 ? tw.index + 1 : tw.index;
    int j1 = yw.weight > 0.0 ? yw.index + 1 : yw.index;
    double lo = (1.0 - yw.weight) * v[idx(tw.index, yw.index)] + yw.weight * v[idx(tw.index, j1)];
    if (k1 == tw.index) return lo;
    double hi = (1.0 - yw.weight) * v[idx(k1, yw.index)] + yw.weight * v[idx(k1, j1)];
    return (1.0 - tw.weight) * lo + tw.weight * hi;
}

} // namespace

double SolutionField::value(double t, double y) const {
    return bilinear(f, n_y, locate(t, 0.0, dt(), n_t + 1), locate(y, y_lo, dy(), n_y));
}

double SolutionField::gradient(double t, double y) const {
    return bilinear(df, n_y, locate(t, 0.0, dt(), n_t + 1), locate(y, y_lo, dy(), n_y));
}

void gradient_1d(const double* f, double* out, int n, double dy) {
    if (n < 3) {
        std::fill(out, out + n, 0.0);
        return;
    }
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dy);
    for (int j = 1; j < n - 1; ++j) out[j] = (f[j + 1] - f[j - 1]) / (2.0 * dy);
    out[n - 1] = (3.0 * f[n - 1] - 4.0 * f[n - 2] + f[n - 3]) / (2.0 * dy);
}

void SolutionField::compute_gradient() {
    for (int k = 0; k <= n_t; ++k) {
        std::size_t off = static_cast<std::size_t>(k) * n_y;
        gradient_1d(f.data() + off, df.data() + off, n_y, dy());
    }
}

PolicyField::PolicyField(DefaultState z_, int n_, const GridSpec& grid, double horizon_)
    : z(z_), n(n_), n_t(grid.n_t), n_y(grid.n_y), horizon(horizon_), y_lo(grid.y_lo), y_hi(grid.y_hi) {
    std::size_t nodes = static_cast<std::size_t>(n_t + 1) * n_y;
    hhat.assign(nodes * n, 0.0);
    ahat.assign(nodes * n, 0.0);
    theta.assign(nodes * n, 0.0);
    pi.assign(nodes * n, 0.0);
    c_mult.assign(nodes, 0.0);
}

void sample_policy(const PolicyField& p, double t_calendar, double y, PolicySample& out) {
    AxisWeight tw = locate(p.horizon - t_calendar, 0.0, p.dt(), p.n_t + 1);
    AxisWeight yw = locate(y, p.y_lo, p.dy(), p.n_y);
    int k1 = tw.weight > 0.0 ? tw.index + 1 : tw.index;
    int j1 = yw.weight > 0.0 ? yw.index + 1 : yw.index;
    const std::size_t n00 = p.node(tw.index, yw.index), n01 = p.node(tw.index, j1);
    const std::size_t n10 = p.node(k1, yw.index), n11 = p.node(k1, j1);
    const double w00 = (1.0 - tw.weight) * (1.0 - yw.weight), w01 = (1.0 - tw.weight) * yw.weight;
    const double w10 = tw.weight * (1.0 - yw.weight), w11 = tw.weight * yw.weight;
    auto mix = [&](const std::vector<double>& v, std::vector<double>& dst) {
        dst.resize(p.n);
        const std::size_t n = p.n;
        for (std::size_t i = 0; i < n; ++i)
            dst[i] = w00 * v[n00 * n + i] + w01 * v[n01 * n + i] + w10 * v[n10 * n + i] + w11 * v[n11 * n + i];
    };
    mix(p.hhat, out.hhat);
    mix(p.ahat, out.ahat);
    mix(p.theta, out.theta);
    mix(p.pi, out.pi);
    out.c_mult = w00 * p.c_mult[n00] + w01 * p.c_mult[n01] + w10 * p.c_mult[n10] + w11 * p.c_mult[n11];
}

} // namespace contagion
