#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>

#include <CLI11.hpp>

#include "contagion/oracle.hpp"
#include "contagion/pde.hpp"
#include "contagion/sim.hpp"
#include "contagion/strategy.hpp"

namespace contagion::cli {

namespace fs = std::filesystem;

RunInputs resolve_inputs(const RunConfig& cfg) {
    RunInputs in;
    if (!cfg.config_file.empty()) {
        in = load_config(cfg.config_file);
    } else {
        in.spec = load_preset(cfg.preset);
        in.grid = GridSpec::for_model(in.spec);
    }
    for (const auto& o : cfg.overrides) apply_override(in, o);
    if (cfg.n_y) in.grid.n_y = *cfg.n_y;
    if (cfg.n_t) in.grid.n_t = *cfg.n_t;
    if (cfg.no_clamp) in.grid.clamp_enabled = false;
    return in;
}

namespace {

bool validated(const RunInputs& in, std::ostream& err) {
    ValidationReport rep = validate_spec(in.spec, in.grid);
    if (rep.ok()) return true;
    err << "model validation failed\n" << rep.summary();
    return false;
}

void print_solve_summary(const SystemSolution& sol, std::ostream& out) {
    double residual = 0.0, consistency = 0.0;
    long clamps = 0;
    for (const auto& r : sol.reports) {
        residual = std::max(residual, r.max_hhat_residual);
        consistency = std::max(consistency, r.max_pi_consistency);
        clamps += r.clamp_hits;
    }
    out << "solved " << sol.fields.size() << " states on " << sol.grid.n_y << "x" << sol.grid.n_t << " in "
        << sol.seconds << " s; max jump residual " << residual << ", max strategy consistency " << consistency
        << ", clamp hits " << clamps << "\n";
}

ModelSpec with_sigma_scale(ModelSpec spec, double s) {
    for (auto& fn : spec.market.sigma) fn = fn.scaled(s);
    return spec;
}

int calendar_index(const SystemSolution& sol, double t_calendar) {
    const double dt = sol.spec.pref.T / sol.grid.n_t;
    const double s = (sol.spec.pref.T - t_calendar) / dt;
    const int k = static_cast<int>(std::lround(s));
    if (std::abs(s - k) > 1e-9 || k < 0 || k > sol.grid.n_t)
        throw std::invalid_argument("sweep time " + std::to_string(t_calendar) + " is not on the solver grid");
    return k;
}

void append_rows(const SystemSolution& sol, double axis_value, double t_calendar, std::vector<SweepRow>& rows) {
    const int n = sol.spec.n;
    const int k = calendar_index(sol, t_calendar);
    for (std::size_t bits = 0; bits < sol.policies.size(); ++bits) {
        const DefaultState z{static_cast<std::uint32_t>(bits)};
        const PolicyField& p = sol.policies[bits];
        for (int i = 0; i < n; ++i) {
            if (z.defaulted(i)) continue;
            for (int j = 0; j < p.n_y; ++j)
                rows.push_back({axis_value, sol.grid.y(j), z.bitstring(n), i + 1, p.pi[p.node(k, j) * n + i]});
        }
    }
}

} // namespace

std::vector<double> default_axis(const std::string& mode) {
    if (mode == "fig1") return {0.0, 0.3, 0.6};
    if (mode == "fig2") return {0.1, 0.5, 0.8};
    if (mode == "fig3") return {1.0, 1.25, 1.5};
    throw std::invalid_argument("unknown sweep mode '" + mode + "' (fig1, fig2, fig3)");
}

std::vector<SweepRow> sweep_rows(const RunInputs& base, const std::string& mode, const std::vector<double>& axis) {
    if (axis.empty()) throw std::invalid_argument("sweep axis is empty");
    default_axis(mode); // rejects unknown modes
    std::vector<SweepRow> rows;
    if (mode == "fig1") {
        ModelSpec spec = base.spec;
        spec.pref.p = 0.8;
        SystemSolution sol = solve_recursive_system(spec, base.grid);
        for (double t : axis) append_rows(sol, t, t, rows);
    } else if (mode == "fig2") {
        for (double p : axis) {
            ModelSpec spec = base.spec;
            spec.pref.p = p;
            append_rows(solve_recursive_system(spec, base.grid), p, 0.6 * spec.pref.T, rows);
        }
    } else {
        for (double s : axis) {
            ModelSpec spec = with_sigma_scale(base.spec, s);
            spec.pref.p = 0.1;
            append_rows(solve_recursive_system(spec, base.grid), s, 0.0, rows);
        }
    }
    return rows;
}

int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    RunInputs in = resolve_inputs(cfg);
    ValidationReport rep = validate_spec(in.spec, in.grid);
    (rep.ok() ? out : err) << rep.summary();
    return rep.ok() ? ok : invalid_model;
}

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    RunInputs in = resolve_inputs(cfg);
    if (!validated(in, err)) return invalid_model;
    SystemSolution sol = solve_recursive_system(in.spec, in.grid);
    const fs::path dir = cfg.out_dir;
    write_solution(dir, sol);
    std::ofstream(dir / "config.ini") << dump_config(in);
    print_solve_summary(sol, out);
    out << "wrote " << sol.fields.size() << " solution files to " << dir.string() << "\n";
    return ok;
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    RunInputs in = resolve_inputs(cfg);
    if (!validated(in, err)) return invalid_model;
    SystemSolution sol;
    if (!cfg.from_dir.empty()) {
        if (!fs::is_directory(cfg.from_dir)) {
            err << "solution directory " << cfg.from_dir << " does not exist\n";
            return usage;
        }
        sol = load_solution(cfg.from_dir, in.spec, in.grid);
    } else {
        sol = solve_recursive_system(in.spec, in.grid);
        print_solve_summary(sol, out);
    }

    SimConfig sc = SimConfig::for_model(in.spec);
    sc.n_paths = cfg.paths;
    sc.n_steps = cfg.steps;
    sc.seed = cfg.seed;
    sc.y0 = cfg.y0;
    sc.y_lo = in.grid.y_lo;
    sc.y_hi = in.grid.y_hi;
    const double T = in.spec.pref.T;

    // Probe times snap to the simulation mesh.
    auto at = [&](double fraction) { return std::round(fraction * sc.n_steps) * T / sc.n_steps; };
    const std::vector<double> quarters = {at(0.25), at(0.5), T};

    std::vector<McReport> rows;
    for (auto& r : check_G_martingale(sol, sc, quarters)) rows.push_back(r);
    const double fractions[5][2] = {{0.2, 0.25}, {0.4, 0.75}, {0.6, 0.5}, {0.8, 0.375}, {1.0, 0.625}};
    for (std::size_t bits = 0; bits < sol.fields.size(); ++bits)
        for (const auto& fr : fractions) {
            const double y = in.grid.y_lo + fr[1] * (in.grid.y_hi - in.grid.y_lo);
            rows.push_back(mc_feynman_kac(sol, DefaultState{static_cast<std::uint32_t>(bits)}, at(fr[0]), y, sc));
        }
    WealthOptions wo;
    wo.x0 = cfg.x0;
    DualityResult dg = duality_gap(sol, sc, wo);
    rows.push_back(dg.utility);
    rows.push_back(dg.representation);
    for (int i = 0; i < in.spec.n; ++i)
        for (double t : quarters) rows.push_back(check_compensator(in.spec, sc, i, t));
    rows.push_back(novikov_diagnostic(sol, sc));

    fs::create_directories(cfg.out_dir);
    write_mc_report_csv(fs::path(cfg.out_dir) / "mc_report.csv", rows);
    if (cfg.dump_paths > 0) {
        SimConfig small = sc;
        small.n_paths = static_cast<long>(cfg.dump_paths);
        PathBundle b = simulate_market(in.spec, small);
        simulate_wealth(b, in.spec, &sol, wo);
        density_path(b, sol);
        write_paths_csv(fs::path(cfg.out_dir) / "paths.csv", b, cfg.dump_paths);
    }

    bool all = true;
    for (const auto& r : rows) {
        out << (r.pass ? "PASS " : "FAIL ") << r.test << ": estimate " << format_double(r.estimate) << " target "
            << format_double(r.target) << " se " << r.se << " [" << r.elapsed << " s]" << (r.note.empty() ? "" : " (" + r.note + ")") << "\n";
        all = all && r.pass;
    }
    return all ? ok : statistical_failure;
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
    if (cfg.sweep.empty()) {
        err << "sweep needs --sweep fig1|fig2|fig3\n";
        return usage;
    }
    if (cfg.axis_given && cfg.axis.empty()) {
        err << "sweep axis is empty\n";
        return usage;
    }
    std::vector<double> axis;
    try {
        axis = cfg.axis_given ? cfg.axis : default_axis(cfg.sweep);
    } catch (const std::invalid_argument& e) {
        err << e.what() << "\n";
        return usage;
    }
    RunInputs in = resolve_inputs(cfg);
    if (!validated(in, err)) return invalid_model;
    auto rows = sweep_rows(in, cfg.sweep, axis);
    fs::create_directories(cfg.out_dir);
    const fs::path file = fs::path(cfg.out_dir) / ("sweep_" + cfg.sweep + ".csv");
    {
        CsvWriter w(file);
        w.header({"axis_value", "y", "state", "name", "pi_hat"});
        for (const auto& r : rows) {
            w.cell(r.axis_value).cell(r.y).cell(r.state).cell(static_cast<long>(r.name)).cell(r.pi_hat);
            w.end_row();
        }
    }
    out << "wrote " << rows.size() << " rows to " << file.string() << "\n";
    return ok;
}

int cmd_oracle(const RunConfig& cfg, std::ostream& out, std::ostream&) {
    RunInputs in = resolve_inputs(cfg);
    fs::create_directories(cfg.out_dir);
    const fs::path file = fs::path(cfg.out_dir) / "oracle.csv";
    CsvWriter w(file);
    w.header({"quantity", "argument", "value"});
    auto row = [&](const std::string& q, double arg, double v) {
        w.cell(q).cell(arg).cell(v);
        w.end_row();
        out << q << "(" << arg << ") = " << format_double(v) << "\n";
    };
    const double T = in.spec.pref.T;
    for (int k = 0; k <= 8; ++k) {
        const double t = T * k / 8.0;
        AllDefaulted ad = all_defaulted_closed_form(t, in.spec);
        row("all_defaulted_f", t, ad.f);
        row("all_defaulted_g", t, ad.g);
    }
    for (int i = 0; i < in.spec.n; ++i)
        row("merton_fraction_" + std::to_string(i + 1), 0.0,
            merton_fraction(in.spec.market.mu[i](0.0), in.spec.market.r, in.spec.sigma_fn(i, i)(0.0), in.spec.pref.p));

    ScalarModel m;
    m.lambda0 = cfg.lambda0;
    m.sigma = cfg.sigma;
    m.xi = cfg.xi;
    m.r = cfg.rate;
    m.q = 0.0;
    m.T = 1.0;
    PicardResult pr = picard_fixed_point(m);
    row("picard_epsilon", 0.0, m.epsilon());
    row("picard_contraction", 0.0, pr.contraction);
    row("picard_global_bound", 0.0, pr.global_bound);
    row("picard_max_residual", 0.0, pr.max_residual);
    for (int k = 0; k <= 8; ++k) {
        const double u = m.T * k / 8.0;
        row("picard_x", u, pr(u));
        row("bernoulli_f_alive", u, bernoulli_alive_solution(u, [&](double s) { return pr(s); }, m));
        row("bernoulli_f_defaulted", u, all_defaulted_closed_form(u, m).f);
    }
    if (!pr.message.empty()) out << "note: " << pr.message << "\n";
    return ok;
}

int run(int argc, char** argv) {
    CLI::App app{"Optimal investment and consumption with default contagion"};
    app.require_subcommand(1);
    RunConfig cfg;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--preset", cfg.preset, "model preset")
            ->check(CLI::IsMember(preset_names()));
        sub->add_option("--config", cfg.config_file, "sectioned key-value model file")->check(CLI::ExistingFile);
        sub->add_option("--set", cfg.overrides, "override section.key=value (repeatable)");
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--ny", cfg.n_y, "spatial nodes")->check(CLI::Range(3, 100001));
        sub->add_option("--nt", cfg.n_t, "time steps")->check(CLI::PositiveNumber);
        sub->add_flag("--no-clamp", cfg.no_clamp, "disable the truncation of the nonlinear source");
    };
    auto mc = [&](CLI::App* sub) {
        sub->add_option("--paths", cfg.paths, "Monte Carlo paths")->check(CLI::PositiveNumber);
        sub->add_option("--steps", cfg.steps, "time steps per path")->check(CLI::PositiveNumber);
        sub->add_option("--seed", cfg.seed, "global RNG seed");
    };

    CLI::App* solve = app.add_subcommand("solve", "solve the PDE system and write f, policy, bounds and report CSVs");
    common(solve);
    CLI::App* simulate = app.add_subcommand("simulate", "run the Monte Carlo validation suite");
    common(simulate);
    mc(simulate);
    simulate->add_option("--from", cfg.from_dir, "directory with f_state_*.csv from a previous solve");
    simulate->add_option("--x0", cfg.x0, "initial wealth")->check(CLI::PositiveNumber);
    simulate->add_option("--y0", cfg.y0, "initial factor value");
    simulate->add_option("--dump-paths", cfg.dump_paths, "write the first N paths to paths.csv");
    CLI::App* sweep = app.add_subcommand("sweep", "strategy sweeps behind the figures");
    common(sweep);
    sweep->add_option("--sweep", cfg.sweep, "fig1 (t), fig2 (p) or fig3 (volatility scale)")->required();
    sweep->add_option("--axis", cfg.axis, "axis values replacing the mode's defaults")->expected(0, -1);
    CLI::App* oracle = app.add_subcommand("oracle", "closed-form reference values");
    common(oracle);
    oracle->add_option("--lambda0", cfg.lambda0, "one-stock intensity");
    oracle->add_option("--sigma", cfg.sigma, "one-stock volatility");
    oracle->add_option("--xi", cfg.xi, "one-stock market price of risk");
    oracle->add_option("--rate", cfg.rate, "interest rate of the one-stock model");
    CLI::App* validate = app.add_subcommand("validate", "check the model assumptions on the grid");
    common(validate);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? ok : usage;
    }
    cfg.axis_given = sweep->count("--axis") > 0;
    // A bare --axis parses as one empty token.
    const auto& given = sweep->get_option("--axis")->results();
    if (std::all_of(given.begin(), given.end(), [](const std::string& v) { return v.empty(); })) cfg.axis.clear();

    auto& out = std::cout;
    auto& err = std::cerr;
    try {
        if (solve->parsed()) return cmd_solve(cfg, out, err);
        if (simulate->parsed()) return cmd_simulate(cfg, out, err);
        if (sweep->parsed()) return cmd_sweep(cfg, out, err);
        if (oracle->parsed()) return cmd_oracle(cfg, out, err);
        if (validate->parsed()) return cmd_validate(cfg, out, err);
    } catch (const SolverError& e) {
        err << "solver failure: " << e.what() << "\n";
        return solver_failure;
    } catch (const std::invalid_argument& e) {
        err << "invalid input: " << e.what() << "\n";
        return invalid_model;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return solver_failure;
    }
    return usage;
}

} // namespace contagion::cli
