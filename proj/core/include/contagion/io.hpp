#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "contagion/model.hpp"
#include "contagion/pde.hpp"
#include "contagion/sim.hpp"

namespace contagion {

/// 17 significant digits: round-trips every double.
std::string format_double(double v);

class CsvWriter {
public:
    explicit CsvWriter(const std::filesystem::path& file);
    void header(const std::vector<std::string>& columns);
    CsvWriter& cell(double v);
    CsvWriter& cell(long v);
    CsvWriter& cell(const std::string& v);
    void end_row();

private:
    std::ofstream out_;
    bool first_ = true;
};

std::string field_file_name(DefaultState z, int n);  // f_state_<bits>.csv
std::string policy_file_name(DefaultState z, int n); // policy_state_<bits>.csv

/// Columns t, y, f, g, df_dy; t is time to maturity.
void write_field_csv(const std::filesystem::path& file, const SolutionField& f);
/// Columns t, y, hhat_1..n, ahat_1..n, pi_1..n, c_mult; t is calendar time.
void write_policy_csv(const std::filesystem::path& file, const PolicyField& p);
void write_bounds_csv(const std::filesystem::path& file, const SystemSolution& sol);
void write_solve_report_csv(const std::filesystem::path& file, const SystemSolution& sol);
/// Columns test, estimate, target, se, pass.
void write_mc_report_csv(const std::filesystem::path& file, const std::vector<McReport>& rows);
/// Columns path, t, Y, H_bits, X, c, Gamma; at most `cap` paths.
void write_paths_csv(const std::filesystem::path& file, const PathBundle& bundle, std::size_t cap = 100);

/// Writes every f_state_*, policy_state_*, bounds.csv and solve_report.csv into `dir`.
void write_solution(const std::filesystem::path& dir, const SystemSolution& sol);

/// Reads a field written by write_field_csv; the grid is recovered from the file.
SolutionField read_field_csv(const std::filesystem::path& file, DefaultState z, double beta);
/// Loads f_state_* files from `dir` and rebuilds the policies.
SystemSolution load_solution(const std::filesystem::path& dir, const ModelSpec& spec, const GridSpec& grid);

struct RunInputs {
    ModelSpec spec;
    GridSpec grid;
};

/// Sectioned key-value file ([model], [factor], [market], [credit], [preferences], [grid]).
/// A `preset` key in [model] seeds every value before the file's own keys apply.
RunInputs load_config(const std::filesystem::path& file);
RunInputs load_config_text(const std::string& text);
/// One "section.key=value" override, same keys as the config file.
void apply_override(RunInputs& in, const std::string& assignment);
/// Config text reproducing `in`.
std::string dump_config(const RunInputs& in);

} // namespace contagion
