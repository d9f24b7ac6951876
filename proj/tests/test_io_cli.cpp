#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "cli.hpp"
#include "contagion/io.hpp"

using namespace contagion;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("contagion_test_" + tag + "_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path, ec);
    }
};

std::string slurp(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

std::vector<std::vector<std::string>> read_rows(const fs::path& file) {
    std::ifstream in(file);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        rows.push_back(cells);
    }
    return rows;
}

cli::RunConfig quick(const fs::path& out) {
    cli::RunConfig cfg;
    cfg.out_dir = out.string();
    cfg.n_y = 41;
    cfg.n_t = 50;
    cfg.paths = 1500;
    cfg.steps = 50;
    return cfg;
}

std::size_t count_prefix(const fs::path& dir, const std::string& prefix) {
    std::size_t n = 0;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().filename().string().rfind(prefix, 0) == 0) ++n;
    return n;
}

} // namespace

TEST_SUITE("io") {

TEST_CASE("doubles round-trip through text") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1e6, 1e6);
    for (int k = 0; k < 2000; ++k) {
        const double v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
        CHECK(std::stod(format_double(v)) == v);
    }
    CHECK(format_double(0.1) == "0.10000000000000001");
}

TEST_CASE("field files round-trip") {
    TempDir tmp("field");
    ModelSpec s = load_preset("scott_example22");
    GridSpec g = GridSpec::for_model(s, 21, 10);
    SystemSolution sol = solve_recursive_system(s, g);
    write_solution(tmp.path, sol);
    CHECK(count_prefix(tmp.path, "f_state_") == 4);
    CHECK(count_prefix(tmp.path, "policy_state_") == 4);
    CHECK(fs::exists(tmp.path / "bounds.csv"));
    CHECK(fs::exists(tmp.path / "solve_report.csv"));

    SolutionField back = read_field_csv(tmp.path / field_file_name(DefaultState{2}, 2), DefaultState{2}, s.beta());
    CHECK(back.f == sol.field(DefaultState{2}).f);
    CHECK(back.df == sol.field(DefaultState{2}).df);
    CHECK(back.n_y == g.n_y);
    CHECK(back.n_t == g.n_t);

    SystemSolution loaded = load_solution(tmp.path, s, g);
    CHECK(loaded.policies[0].pi == sol.policies[0].pi);
    GridSpec other = g;
    other.n_y = 31;
    CHECK_THROWS(load_solution(tmp.path, s, other));
    auto rows = read_rows(tmp.path / policy_file_name(DefaultState{0}, 2));
    CHECK(rows.front() == std::vector<std::string>{"t", "y", "hhat_1", "hhat_2", "ahat_1", "ahat_2", "pi_1", "pi_2",
                                                   "c_mult"});
}

TEST_CASE("config text round-trip and overrides") {
    RunInputs in;
    in.spec = load_preset("stein_stein_example22");
    in.grid = GridSpec::for_model(in.spec, 101, 80);
    const std::string text = dump_config(in);
    RunInputs back = load_config_text(text);
    CHECK(dump_config(back) == text);

    RunInputs seeded = load_config_text("[model]\npreset = benchmark_s5\n[market]\nr = 0.1\n[grid]\nn_y = 51\n");
    CHECK(seeded.spec.market.r == 0.1);
    CHECK(seeded.spec.lambda(0, DefaultState{0}, 0.0) == doctest::Approx(1.0));
    CHECK(seeded.grid.n_y == 51);

    apply_override(seeded, "preferences.p=0.1");
    CHECK(seeded.spec.pref.p == 0.1);
    apply_override(seeded, "market.sigma_1_1=const 0.9");
    CHECK(seeded.spec.sigma_fn(0, 0)(0.0) == 0.9);
    CHECK_THROWS(apply_override(seeded, "model.n=3"));
    CHECK_THROWS(apply_override(seeded, "market.nope=1"));
    CHECK_THROWS(apply_override(seeded, "no_section=1"));
    CHECK_THROWS(load_config_text("[market]\nr = abc\n"));
}

} // TEST_SUITE

TEST_SUITE("cli") {

TEST_CASE("validate reports the failing assumption") {
    TempDir tmp("validate");
    cli::RunConfig cfg = quick(tmp.path);
    cfg.overrides = {"credit.lambda_1_00=affine 0.1 0.5"};
    std::ostringstream out, err;
    CHECK(cli::cmd_validate(cfg, out, err) == cli::invalid_model);
    CHECK(err.str().find("coefficients") != std::string::npos);
    std::ostringstream out2, err2;
    CHECK(cli::cmd_solve(cfg, out2, err2) == cli::invalid_model);
    CHECK(err2.str().find("coefficients") != std::string::npos);
}

TEST_CASE("solve writes one file per state") {
    TempDir tmp("solve");
    cli::RunConfig cfg = quick(tmp.path);
    std::ostringstream out, err;
    REQUIRE(cli::cmd_solve(cfg, out, err) == cli::ok);
    for (const char* s : {"00", "01", "10", "11"}) CHECK(fs::exists(tmp.path / ("f_state_" + std::string(s) + ".csv")));
    CHECK(count_prefix(tmp.path, "f_state_") == 4);
    CHECK(fs::exists(tmp.path / "config.ini"));

    // The dumped configuration reproduces the run.
    TempDir again("solve_again");
    cli::RunConfig from_file = quick(again.path);
    from_file.config_file = (tmp.path / "config.ini").string();
    from_file.n_y.reset();
    from_file.n_t.reset();
    std::ostringstream o2, e2;
    REQUIRE(cli::cmd_solve(from_file, o2, e2) == cli::ok);
    CHECK(slurp(tmp.path / "f_state_00.csv") == slurp(again.path / "f_state_00.csv"));
}

TEST_CASE("three-name configuration gives eight files") {
    TempDir tmp("three");
    RunInputs in;
    in.spec = ModelSpec::empty(3);
    in.spec.name = "three";
    in.spec.factor.mu0 = ScalarFn::affine(0.1, -1.0);
    in.spec.factor.sigma0 = {ScalarFn::constant(0.2), ScalarFn::constant(0.2), ScalarFn::constant(0.2)};
    in.spec.market.r = 0.02;
    for (int i = 0; i < 3; ++i) {
        in.spec.market.mu[i] = ScalarFn::constant(0.06);
        in.spec.sigma_fn(i, i) = ScalarFn::constant(0.3);
    }
    for (DefaultState z : lattice_descending(3))
        for (int i = 0; i < 3; ++i)
            if (z.alive(i)) in.spec.lambda_fn(i, z) = ScalarFn::constant(0.1 * (1 + z.cardinality()));
    in.spec.pref = {0.5, 1.0, 1.0, 1.0};
    in.grid = GridSpec::for_model(in.spec, 21, 20);
    std::ofstream(tmp.path / "three.ini") << dump_config(in);

    cli::RunConfig cfg;
    cfg.config_file = (tmp.path / "three.ini").string();
    cfg.out_dir = (tmp.path / "out").string();
    std::ostringstream out, err;
    REQUIRE(cli::cmd_solve(cfg, out, err) == cli::ok);
    CHECK(count_prefix(tmp.path / "out", "f_state_") == 8);
    CHECK(count_prefix(tmp.path / "out", "policy_state_") == 8);
}

TEST_CASE("sweep arguments") {
    TempDir tmp("sweep");
    cli::RunConfig cfg = quick(tmp.path);
    cfg.sweep = "fig2";
    cfg.axis_given = true;
    std::ostringstream out, err;
    CHECK(cli::cmd_sweep(cfg, out, err) == cli::usage);
    CHECK_FALSE(err.str().empty());

    cfg.sweep = "fig9";
    cfg.axis_given = false;
    std::ostringstream o2, e2;
    CHECK(cli::cmd_sweep(cfg, o2, e2) == cli::usage);

    cfg.sweep = "fig1";
    std::ostringstream o3, e3;
    REQUIRE(cli::cmd_sweep(cfg, o3, e3) == cli::ok);
    auto rows = read_rows(tmp.path / "sweep_fig1.csv");
    CHECK(rows.front() == std::vector<std::string>{"axis_value", "y", "state", "name", "pi_hat"});
    // 3 times x 41 nodes x (2 names in 00 + 1 survivor in each of 01, 10)
    CHECK(rows.size() == 1 + 3 * 41 * 4);
}

TEST_CASE("sweep rows follow the axis") {
    RunInputs in;
    in.spec = load_preset("benchmark_s5");
    in.spec.market.mu = {ScalarFn::constant(0.3), ScalarFn::constant(0.3)};
    in.grid = GridSpec::for_model(in.spec, 21, 50);
    auto rows = cli::sweep_rows(in, "fig2", {0.1, 0.5});
    CHECK(rows.size() == 2 * 21 * 4);
    CHECK(rows.front().axis_value == 0.1);
    CHECK(rows.back().axis_value == 0.5);
    CHECK_THROWS(cli::sweep_rows(in, "fig2", {}));
}

TEST_CASE("simulate is deterministic and catches a corrupted solution") {
    TempDir tmp("simulate");
    cli::RunConfig cfg = quick(tmp.path / "a");
    std::ostringstream out, err;
    const int first = cli::cmd_simulate(cfg, out, err);
    cfg.out_dir = (tmp.path / "b").string();
    std::ostringstream o2, e2;
    const int second = cli::cmd_simulate(cfg, o2, e2);
    CHECK(first == second);
    const std::string report = slurp(tmp.path / "a" / "mc_report.csv");
    CHECK(report == slurp(tmp.path / "b" / "mc_report.csv"));
    CHECK(report.rfind("test,estimate,target,se,pass\n", 0) == 0);
    CHECK(report.find("duality_gap") != std::string::npos);
    CHECK(report.find("feynman_kac") != std::string::npos);
    CHECK(report.find("G_martingale") != std::string::npos);
    CHECK(report.find("compensator") != std::string::npos);

    // Solve, then hand-edit f in the starting state.
    cli::RunConfig solve = quick(tmp.path / "sol");
    std::ostringstream o3, e3;
    REQUIRE(cli::cmd_solve(solve, o3, e3) == cli::ok);
    const fs::path file = tmp.path / "sol" / "f_state_00.csv";
    auto rows = read_rows(file);
    {
        std::ofstream edit(file);
        edit << "t,y,f,g,df_dy\n";
        for (std::size_t r = 1; r < rows.size(); ++r)
            edit << rows[r][0] << "," << rows[r][1] << "," << format_double(1.1 * std::stod(rows[r][2])) << ","
                 << rows[r][3] << "," << rows[r][4] << "\n";
    }
    cli::RunConfig from = quick(tmp.path / "c");
    from.from_dir = (tmp.path / "sol").string();
    std::ostringstream o4, e4;
    CHECK(cli::cmd_simulate(from, o4, e4) == cli::statistical_failure);
    bool duality_failed = false;
    for (const auto& row : read_rows(tmp.path / "c" / "mc_report.csv"))
        if (row[0] == "duality_gap") duality_failed = row[4] == "0";
    CHECK(duality_failed);

    cli::RunConfig missing = quick(tmp.path / "d");
    missing.from_dir = (tmp.path / "nowhere").string();
    std::ostringstream o5, e5;
    CHECK(cli::cmd_simulate(missing, o5, e5) != cli::ok);
}

TEST_CASE("command line parsing") {
    auto call = [](std::vector<std::string> args) {
        std::vector<char*> argv;
        for (auto& a : args) argv.push_back(a.data());
        return cli::run(static_cast<int>(argv.size()), argv.data());
    };
    CHECK(call({"contagion"}) == cli::usage);
    CHECK(call({"contagion", "frobnicate"}) == cli::usage);
    CHECK(call({"contagion", "solve", "--preset", "unknown"}) == cli::usage);
    CHECK(call({"contagion", "sweep", "--sweep", "fig1", "--axis"}) == cli::usage);
    CHECK(call({"contagion", "validate", "--preset", "merton_nodefault", "--ny", "51"}) == cli::ok);
    CHECK(call({"contagion", "validate", "--set", "credit.lambda_2_00=const -1", "--ny", "51"}) ==
          cli::invalid_model);
}

} // TEST_SUITE
