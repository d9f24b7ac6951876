#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "contagion/io.hpp"

namespace contagion::cli {

enum ExitCode : int { ok = 0, usage = 1, invalid_model = 2, solver_failure = 3, statistical_failure = 4 };

struct RunConfig {
    std::string command;
    std::string preset = "benchmark_s5";
    std::string config_file;
    std::vector<std::string> overrides;
    std::string out_dir = "out";
    long paths = 100000;
    int steps = 400;
    std::uint64_t seed = 42;
    std::optional<int> n_y;
    std::optional<int> n_t;
    bool no_clamp = false;
    std::string sweep;              // fig1 | fig2 | fig3
    std::vector<double> axis;       // replaces the mode's default axis when non-empty
    bool axis_given = false;
    std::string from_dir;           // simulate: load f_state_*.csv instead of solving
    double x0 = 1.0;
    double y0 = 0.0;
    std::size_t dump_paths = 0;
    // oracle: scalar model of the one-stock closed form
    double lambda0 = 0.5;
    double sigma = 0.8;
    double xi = 0.25;
    double rate = 0.1;
};

RunInputs resolve_inputs(const RunConfig& cfg);

struct SweepRow {
    double axis_value = 0.0;
    double y = 0.0;
    std::string state;
    int name = 0; // 1-based
    double pi_hat = 0.0;
};

/// Figure-style sweeps: fig1 over calendar t (p = 0.8), fig2 over p (t = 0.6),
/// fig3 over a volatility scale (t = 0, p = 0.1).
std::vector<SweepRow> sweep_rows(const RunInputs& base, const std::string& mode, const std::vector<double>& axis);
std::vector<double> default_axis(const std::string& mode);

int cmd_solve(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_sweep(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_oracle(const RunConfig& cfg, std::ostream& out, std::ostream& err);
int cmd_validate(const RunConfig& cfg, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches; returns the process exit code.
int run(int argc, char** argv);

} // namespace contagion::cli
