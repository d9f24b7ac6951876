#include "contagion/io.hpp"

#include <cctype>
#include <cstdio>
#include <map>
#include <sstream>
#include <stdexcept>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "contagion/strategy.hpp"

namespace contagion {

namespace fs = std::filesystem;

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

CsvWriter::CsvWriter(const fs::path& file) : out_(file) {
    if (!out_) throw std::runtime_error("cannot write " + file.string());
}

void CsvWriter::header(const std::vector<std::string>& columns) {
    for (const auto& c : columns) cell(c);
    end_row();
}

CsvWriter& CsvWriter::cell(double v) { return cell(format_double(v)); }

CsvWriter& CsvWriter::cell(long v) { return cell(std::to_string(v)); }

CsvWriter& CsvWriter::cell(const std::string& v) {
    if (!first_) out_ << ',';
    out_ << v;
    first_ = false;
    return *this;
}

void CsvWriter::end_row() {
    out_ << '\n';
    first_ = true;
}

std::string field_file_name(DefaultState z, int n) { return "f_state_" + z.bitstring(n) + ".csv"; }

std::string policy_file_name(DefaultState z, int n) { return "policy_state_" + z.bitstring(n) + ".csv"; }

void write_field_csv(const fs::path& file, const SolutionField& f) {
    CsvWriter w(file);
    w.header({"t", "y", "f", "g", "df_dy"});
    for (int k = 0; k <= f.n_t; ++k)
        for (int j = 0; j < f.n_y; ++j) {
            w.cell(f.t(k)).cell(f.y(j)).cell(f.at(k, j)).cell(f.g(k, j)).cell(f.grad(k, j));
            w.end_row();
        }
}

void write_policy_csv(const fs::path& file, const PolicyField& p) {
    CsvWriter w(file);
    std::vector<std::string> cols{"t", "y"};
    for (const char* part : {"hhat_", "ahat_", "pi_"})
        for (int i = 0; i < p.n; ++i) cols.push_back(part + std::to_string(i + 1));
    cols.push_back("c_mult");
    w.header(cols);
    // Calendar time ascending: solver index n_t down to 0.
    for (int k = p.n_t; k >= 0; --k)
        for (int j = 0; j < p.n_y; ++j) {
            const std::size_t node = p.node(k, j);
            w.cell(p.horizon - k * p.dt()).cell(p.y_lo + j * p.dy());
            for (const auto* v : {&p.hhat, &p.ahat, &p.pi})
                for (int i = 0; i < p.n; ++i) w.cell((*v)[node * p.n + i]);
            w.cell(p.c_mult[node]);
            w.end_row();
        }
}

void write_bounds_csv(const fs::path& file, const SystemSolution& sol) {
    CsvWriter w(file);
    w.header({"state", "k_under", "k_bar_0", "k_bar_T", "growth", "theta_rate", "phi_lower", "phi_upper"});
    const double T = sol.spec.pref.T;
    for (std::size_t bits = 0; bits < sol.bounds.size(); ++bits) {
        const auto& b = sol.bounds[bits];
        w.cell(DefaultState{static_cast<std::uint32_t>(bits)}.bitstring(sol.spec.n));
        w.cell(b.k_under).cell(b.upper(0.0)).cell(b.upper(T)).cell(b.growth).cell(b.theta_rate);
        w.cell(b.phi.lower).cell(b.phi.upper);
        w.end_row();
    }
}

void write_solve_report_csv(const fs::path& file, const SystemSolution& sol) {
    CsvWriter w(file);
    w.header({"state", "max_hhat_residual", "max_pi_consistency", "clamp_hits", "max_newton_iterations",
              "fallback_solves", "max_sweeps_used", "last_sweep_change", "lower_margin", "upper_margin",
              "bound_violations", "max_abs_gradient"});
    for (const auto& r : sol.reports) {
        w.cell(r.z.bitstring(sol.spec.n)).cell(r.max_hhat_residual).cell(r.max_pi_consistency).cell(r.clamp_hits);
        w.cell(static_cast<long>(r.max_newton_iterations)).cell(r.bisection_steps);
        w.cell(static_cast<long>(r.max_sweeps_used)).cell(r.last_sweep_change);
        w.cell(r.lower_margin).cell(r.upper_margin).cell(r.bound_violations).cell(r.max_abs_gradient);
        w.end_row();
    }
}

void write_mc_report_csv(const fs::path& file, const std::vector<McReport>& rows) {
    CsvWriter w(file);
    w.header({"test", "estimate", "target", "se", "pass"});
    for (const auto& r : rows) {
        w.cell(r.test).cell(r.estimate).cell(r.target).cell(r.se).cell(std::string(r.pass ? "1" : "0"));
        w.end_row();
    }
}

void write_paths_csv(const fs::path& file, const PathBundle& bundle, std::size_t cap) {
    CsvWriter w(file);
    w.header({"path", "t", "Y", "H_bits", "X", "c", "Gamma"});
    const std::size_t count = std::min(cap, bundle.paths.size());
    for (std::size_t p = 0; p < count; ++p) {
        const auto& path = bundle.paths[p];
        for (std::size_t k = 0; k < bundle.time.size(); ++k) {
            w.cell(static_cast<long>(p)).cell(bundle.time[k]).cell(path.y[k]);
            w.cell(DefaultState{path.state[k]}.bitstring(bundle.n));
            w.cell(p < bundle.wealth.size() ? bundle.wealth[p][k] : 0.0);
            w.cell(p < bundle.consumption.size() ? bundle.consumption[p][k] : 0.0);
            w.cell(p < bundle.gamma.size() ? bundle.gamma[p][k] : 1.0);
            w.end_row();
        }
    }
}

void write_solution(const fs::path& dir, const SystemSolution& sol) {
    fs::create_directories(dir);
    const int n = sol.spec.n;
    for (std::size_t bits = 0; bits < sol.fields.size(); ++bits) {
        DefaultState z{static_cast<std::uint32_t>(bits)};
        write_field_csv(dir / field_file_name(z, n), sol.fields[bits]);
        write_policy_csv(dir / policy_file_name(z, n), sol.policies[bits]);
    }
    write_bounds_csv(dir / "bounds.csv", sol);
    write_solve_report_csv(dir / "solve_report.csv", sol);
}

namespace {

double parse_number(const std::string& text, const std::string& what) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(text, &used);
    } catch (const std::exception&) {
        throw std::invalid_argument(what + ": not a number: '" + text + "'");
    }
    while (used < text.size() && std::isspace(static_cast<unsigned char>(text[used]))) ++used;
    if (used != text.size()) throw std::invalid_argument(what + ": not a number: '" + text + "'");
    return v;
}

int parse_int(const std::string& text, const std::string& what) {
    double v = parse_number(text, what);
    if (v != static_cast<int>(v)) throw std::invalid_argument(what + ": expected an integer");
    return static_cast<int>(v);
}

bool parse_bool(const std::string& text, const std::string& what) {
    if (text == "1" || text == "true" || text == "on" || text == "yes") return true;
    if (text == "0" || text == "false" || text == "off" || text == "no") return false;
    throw std::invalid_argument(what + ": expected a boolean");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::stringstream in(s);
    std::string part;
    while (std::getline(in, part, sep)) out.push_back(part);
    return out;
}

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

// 1-based name index from a key suffix.
int name_index(const std::string& text, int n, const std::string& key) {
    int i = parse_int(text, key) - 1;
    if (i < 0 || i >= n) throw std::invalid_argument(key + ": name index out of range");
    return i;
}

void set_key(RunInputs& in, const std::string& section, const std::string& key, const std::string& raw) {
    const std::string value = trim(raw);
    const std::string what = section + "." + key;
    ModelSpec& s = in.spec;
    GridSpec& g = in.grid;
    const auto parts = split(key, '_');

    if (section == "model") {
        if (key == "name") s.name = value;
        else if (key == "preset" || key == "n") return; // handled when the spec is created
        else throw std::invalid_argument("unknown key " + what);
    } else if (section == "factor") {
        if (key == "mu0") s.factor.mu0 = ScalarFn::parse(value);
        else if (key == "rho") s.factor.rho = parse_number(value, what);
        else if (key == "domain_lo") s.factor.domain_lo = parse_number(value, what);
        else if (key == "domain_hi") s.factor.domain_hi = parse_number(value, what);
        else if (parts.size() == 2 && parts[0] == "sigma0")
            s.factor.sigma0[name_index(parts[1], s.n, what)] = ScalarFn::parse(value);
        else throw std::invalid_argument("unknown key " + what);
    } else if (section == "market") {
        if (key == "r") s.market.r = parse_number(value, what);
        else if (parts.size() == 2 && parts[0] == "mu") s.market.mu[name_index(parts[1], s.n, what)] = ScalarFn::parse(value);
        else if (parts.size() == 3 && parts[0] == "sigma")
            s.sigma_fn(name_index(parts[1], s.n, what), name_index(parts[2], s.n, what)) = ScalarFn::parse(value);
        else throw std::invalid_argument("unknown key " + what);
    } else if (section == "credit") {
        if (parts.size() != 3 || parts[0] != "lambda" || static_cast<int>(parts[2].size()) != s.n)
            throw std::invalid_argument("unknown key " + what + " (expected lambda_<name>_<state bits>)");
        s.lambda_fn(name_index(parts[1], s.n, what), DefaultState::from_bitstring(parts[2])) = ScalarFn::parse(value);
    } else if (section == "preferences") {
        if (key == "p") s.pref.p = parse_number(value, what);
        else if (key == "K1") s.pref.K1 = parse_number(value, what);
        else if (key == "K2") s.pref.K2 = parse_number(value, what);
        else if (key == "T") s.pref.T = parse_number(value, what);
        else throw std::invalid_argument("unknown key " + what);
    } else if (section == "grid") {
        if (key == "y_lo") g.y_lo = parse_number(value, what);
        else if (key == "y_hi") g.y_hi = parse_number(value, what);
        else if (key == "n_y") g.n_y = parse_int(value, what);
        else if (key == "n_t") g.n_t = parse_int(value, what);
        else if (key == "clamp") g.clamp_enabled = parse_bool(value, what);
        else throw std::invalid_argument("unknown key " + what);
    } else {
        throw std::invalid_argument("unknown section [" + section + "]");
    }
}

RunInputs from_tree(const boost::property_tree::ptree& tree) {
    RunInputs in;
    const auto model = tree.get_child_optional("model");
    const std::string preset = model ? model->get<std::string>("preset", "") : "";
    if (!preset.empty()) {
        in.spec = load_preset(preset);
        if (model && model->count("n") && model->get<int>("n") != in.spec.n)
            throw std::invalid_argument("model.n disagrees with the preset");
    } else {
        if (!model || !model->count("n")) throw std::invalid_argument("config needs model.preset or model.n");
        in.spec = ModelSpec::empty(model->get<int>("n"));
        in.spec.name = "custom";
    }
    in.grid = GridSpec::for_model(in.spec);
    // Domain keys come first so that grid defaults follow them.
    if (auto factor = tree.get_child_optional("factor")) {
        for (const char* k : {"domain_lo", "domain_hi"})
            if (factor->count(k)) set_key(in, "factor", k, factor->get<std::string>(k));
        in.grid.y_lo = in.spec.factor.domain_lo;
        in.grid.y_hi = in.spec.factor.domain_hi;
    }
    for (const auto& [section, body] : tree) {
        if (body.empty() && !body.data().empty())
            throw std::invalid_argument("key '" + section + "' outside any section");
        for (const auto& [key, leaf] : body) set_key(in, section, key, leaf.data());
    }
    return in;
}

} // namespace

RunInputs load_config_text(const std::string& text) {
    std::istringstream stream(text);
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::read_ini(stream, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw std::invalid_argument(std::string("config: ") + e.what());
    }
    return from_tree(tree);
}

RunInputs load_config(const fs::path& file) {
    std::ifstream f(file);
    if (!f) throw std::invalid_argument("cannot read config " + file.string());
    std::stringstream buf;
    buf << f.rdbuf();
    return load_config_text(buf.str());
}

void apply_override(RunInputs& in, const std::string& assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string::npos || dot == std::string::npos || dot > eq)
        throw std::invalid_argument("override '" + assignment + "': expected section.key=value");
    const std::string section = trim(assignment.substr(0, dot));
    const std::string key = trim(assignment.substr(dot + 1, eq - dot - 1));
    if (section == "model" && (key == "n" || key == "preset"))
        throw std::invalid_argument("override '" + assignment + "': n and preset cannot be overridden");
    set_key(in, section, key, assignment.substr(eq + 1));
}

std::string dump_config(const RunInputs& in) {
    const ModelSpec& s = in.spec;
    std::ostringstream out;
    out << "[model]\nname = " << s.name << "\nn = " << s.n << "\n\n";
    out << "[factor]\nmu0 = " << s.factor.mu0.to_string() << "\n";
    for (int i = 0; i < s.n; ++i) out << "sigma0_" << i + 1 << " = " << s.factor.sigma0[i].to_string() << "\n";
    out << "rho = " << format_double(s.factor.rho) << "\ndomain_lo = " << format_double(s.factor.domain_lo)
        << "\ndomain_hi = " << format_double(s.factor.domain_hi) << "\n\n";
    out << "[market]\nr = " << format_double(s.market.r) << "\n";
    for (int i = 0; i < s.n; ++i) out << "mu_" << i + 1 << " = " << s.market.mu[i].to_string() << "\n";
    for (int i = 0; i < s.n; ++i)
        for (int j = 0; j < s.n; ++j)
            out << "sigma_" << i + 1 << "_" << j + 1 << " = " << s.sigma_fn(i, j).to_string() << "\n";
    out << "\n[credit]\n";
    for (std::uint32_t bits = 0; bits < (1u << s.n); ++bits) {
        DefaultState z{bits};
        for (int i = 0; i < s.n; ++i)
            if (z.alive(i))
                out << "lambda_" << i + 1 << "_" << z.bitstring(s.n) << " = " << s.lambda_fn(i, z).to_string() << "\n";
    }
    out << "\n[preferences]\np = " << format_double(s.pref.p) << "\nK1 = " << format_double(s.pref.K1)
        << "\nK2 = " << format_double(s.pref.K2) << "\nT = " << format_double(s.pref.T) << "\n\n";
    out << "[grid]\ny_lo = " << format_double(in.grid.y_lo) << "\ny_hi = " << format_double(in.grid.y_hi)
        << "\nn_y = " << in.grid.n_y << "\nn_t = " << in.grid.n_t << "\nclamp = " << (in.grid.clamp_enabled ? 1 : 0)
        << "\n";
    return out.str();
}

SolutionField read_field_csv(const fs::path& file, DefaultState z, double beta) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot read " + file.string());
    std::string line;
    if (!std::getline(in, line) || trim(line) != "t,y,f,g,df_dy")
        throw std::runtime_error(file.string() + ": unexpected header");
    std::vector<double> ts, ys, fs_, ds;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto cells = split(line, ',');
        if (cells.size() != 5) throw std::runtime_error(file.string() + ": malformed row");
        ts.push_back(parse_number(cells[0], file.string()));
        ys.push_back(parse_number(cells[1], file.string()));
        fs_.push_back(parse_number(cells[2], file.string()));
        ds.push_back(parse_number(cells[4], file.string()));
    }
    std::size_t n_y = 1;
    while (n_y < ts.size() && ts[n_y] == ts[0]) ++n_y;
    if (n_y < 3 || ts.size() % n_y) throw std::runtime_error(file.string() + ": ragged grid");
    const int n_t = static_cast<int>(ts.size() / n_y) - 1;
    if (n_t < 1) throw std::runtime_error(file.string() + ": needs at least two time levels");
    GridSpec grid;
    grid.y_lo = ys.front();
    grid.y_hi = ys[n_y - 1];
    grid.n_y = static_cast<int>(n_y);
    grid.n_t = n_t;
    SolutionField f(z, grid, ts.back(), beta);
    f.f = std::move(fs_);
    f.df = std::move(ds);
    return f;
}

SystemSolution load_solution(const fs::path& dir, const ModelSpec& spec, const GridSpec& grid) {
    SystemSolution sol;
    sol.spec = spec;
    sol.grid = grid;
    const std::size_t states = std::size_t{1} << spec.n;
    sol.fields.resize(states);
    sol.policies.resize(states);
    sol.bounds.resize(states);
    sol.reports.resize(states);
    for (std::size_t bits = 0; bits < states; ++bits) {
        DefaultState z{static_cast<std::uint32_t>(bits)};
        const fs::path file = dir / field_file_name(z, spec.n);
        if (!fs::exists(file)) throw std::runtime_error("missing solution artifact " + file.string());
        sol.fields[bits] = read_field_csv(file, z, spec.beta());
        const auto& f = sol.fields[bits];
        if (f.n_y != grid.n_y || f.n_t != grid.n_t || std::abs(f.horizon - spec.pref.T) > 1e-12)
            throw std::runtime_error(file.string() + ": grid does not match the configuration");
        sol.reports[bits].z = z;
    }
    for (std::size_t bits = 0; bits < states; ++bits) {
        DefaultState z{static_cast<std::uint32_t>(bits)};
        sol.policies[bits] = build_policy(spec, grid, sol.fields, z);
        sol.reports[bits].max_hhat_residual = sol.policies[bits].max_residual;
        sol.reports[bits].max_pi_consistency = sol.policies[bits].max_consistency;
    }
    return sol;
}

} // namespace contagion
