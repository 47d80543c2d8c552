// srdhom: voxel-based homogenization across the size / resolution /
// discretization parameter space.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "srd/sweep.hpp"

using namespace srd;

namespace {

constexpr int kConfigError = 1;
constexpr int kNumericalError = 2;

struct Options {
    std::string config;
    std::string out;
    std::string case_name;
    std::string bc = "pbc";
    int ref_factor = 0;
    int threads = 0;
    std::optional<std::uint64_t> seed;
    std::string tensor;
};

SweepConfig configure(const Options& o) {
    if (o.config.empty()) throw ConfigError("--config is required");
    SweepConfig c = load_config(o.config);
    if (o.seed) override_seed(c, *o.seed);
    if (!o.out.empty()) c.out_dir = o.out;
    if (o.threads > 0) c.threads = o.threads;
    if (o.ref_factor) c.ref_factor = o.ref_factor;
    if (!o.case_name.empty()) {
        try {
            c.cases = {parse_case_name(o.case_name)};
        } catch (const CaseNameError& e) {
            throw ConfigError("--case '" + o.case_name + "': " + e.what());
        }
        c.reference.reset();
    }
    validate_config(c);
    return c;
}

BoundaryCondition bc_option(const Options& o) {
    try {
        return parse_bc(o.bc);
    } catch (const std::exception&) {
        throw ConfigError("unknown --bc '" + o.bc + "'");
    }
}

void print_matrix(const Eigen::MatrixXd& M) {
    for (int i = 0; i < M.rows(); ++i) {
        for (int j = 0; j < M.cols(); ++j) std::cout << (j ? " " : "") << format_number(M(i, j));
        std::cout << '\n';
    }
}

int cmd_info(const Options& o) {
    const SweepConfig c = configure(o);
    const VoxelGrid g = load_input(c);
    std::cout << "dim " << g.dim << "\nextents";
    for (int a = 0; a < g.dim; ++a) std::cout << ' ' << g.extents[a];
    std::cout << "\nspacing " << format_number(g.spacing) << " mm\nvoxels " << g.size() << '\n';
    double mean_E = 0.0;
    for (const auto& [id, f] : phase_fractions(g)) {
        const auto& p = c.table.at(id);
        std::cout << "phase " << id << ' ' << p.name << " fraction " << format_number(f) << '\n';
        mean_E += f * c.table.effective_E(id);
    }
    std::cout << "mean_E " << format_number(mean_E) << " MPa\n";
    return 0;
}

int cmd_coarsen(const Options& o) {
    if (o.case_name.empty()) throw ConfigError("--case is required");
    const SweepConfig c = configure(o);
    const auto id = c.cases.front();
    const PreparedCase p = prepare_case(load_input(c), c, id, bc_option(o));
    const auto name = format_case_name(id);
    std::filesystem::create_directories(c.out_dir);
    save_raw_u8(p.grid, c.out_dir / (name + ".raw"));
    std::vector<CellArray> cells{{"phase_id", {}, true}, {"level", {}, true}};
    for (const auto& e : p.mesh.elements) {
        cells[0].values.push_back(e.phase);
        cells[1].values.push_back(e.level);
    }
    write_vtk(c.out_dir / (name + ".vtk"), p.mesh, cells);
    std::cout << "case " << name << "\nelements " << p.mesh.elements.size() << "\nndof_uniform " << p.report.ndof_before
              << "\nndof " << p.report.ndof_after << "\ndeactivated_ndof " << p.report.deactivated_ndof
              << "\nreduction_factor " << format_number(p.report.reduction_factor) << '\n';
    return 0;
}

CaseRecord single_case(const Options& o, ErrorStage stage) {
    if (o.case_name.empty()) throw ConfigError("--case is required");
    SweepConfig c = configure(o);
    c.errors = stage;
    const auto bc = bc_option(o);
    CaseRecord r = run_case(load_input(c), c, c.cases.front(), bc);
    if (r.status.rfind("numerical failure", 0) == 0) throw NumericalError(r.status);
    if (r.status != "ok") throw ConfigError(r.status);
    if (!o.out.empty()) emit_tables({r}, c.out_dir);
    return r;
}

int cmd_homogenize(const Options& o) {
    const CaseRecord r = single_case(o, ErrorStage::off);
    std::cout << "case " << r.case_name << " bc " << to_string(r.bc) << " ndof " << r.result->ndof << "\nC [MPa]\n";
    print_matrix(r.result->C.voigt);
    return 0;
}

int cmd_errors(const Options& o) {
    const CaseRecord r = single_case(o, ErrorStage::actual);
    const auto& e = *r.errors;
    std::cout << "case " << r.case_name << " bc " << to_string(r.bc) << "\nsolution_norm " << format_number(e.solution_norm)
              << "\ne_bar_mic " << format_number(e.e_bar_mic) << "\ne_mic " << (e.e_mic ? format_number(*e.e_mic) : "")
              << "\ntheta " << (e.theta ? format_number(*e.theta) : "undefined") << '\n';
    return 0;
}

int cmd_sweep(const Options& o) {
    const SweepConfig c = configure(o);
    const auto records = run_sweep(c);
    emit_tables(records, c.out_dir);
    int code = 0;
    for (const auto& r : records) {
        std::cout << r.case_name << ' ' << to_string(r.bc) << ' ' << r.status << '\n';
        if (r.status.rfind("numerical failure", 0) == 0) code = kNumericalError;
        else if (r.status.rfind("error", 0) == 0 && code == 0) code = kConfigError;
    }
    return code;
}

ElasticityTensor read_tensor(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    std::vector<std::vector<double>> rows;
    const auto first = text.find_first_not_of(" \t\r\n");
    if (first != std::string::npos && (text[first] == '[' || text[first] == '{')) {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(text);
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("tensor file: ") + e.what());
        }
        // results.json (first record) or {"C": [[...]]} or a bare matrix
        if (j.is_array() && !j.empty() && j[0].is_object()) j = j[0];
        if (j.is_object()) {
            if (!j.contains("C")) throw ConfigError("tensor file has no C entry");
            j = j["C"];
        }
        rows = j.get<std::vector<std::vector<double>>>();
    } else {
        std::istringstream lines(text);
        for (std::string line; std::getline(lines, line);) {
            std::istringstream ls(line);
            std::vector<double> row;
            for (double v; ls >> v;) row.push_back(v);
            if (!row.empty()) rows.push_back(row);
        }
    }
    const auto n = rows.size();
    if (n != 3 && n != 6) throw ConfigError("tensor must be 3x3 or 6x6");
    Eigen::MatrixXd M(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        if (rows[i].size() != n) throw ConfigError("tensor row " + std::to_string(i + 1) + " has wrong length");
        for (std::size_t j = 0; j < n; ++j) M(i, j) = rows[i][j];
    }
    return {n == 3 ? 2 : 3, M};
}

int cmd_isotropy(const Options& o) {
    const auto r = identify_isotropy(read_tensor(o.tensor));
    std::cout << "E " << format_number(r.E) << " MPa\nnu " << format_number(r.nu) << "\nG " << format_number(r.G)
              << " MPa\n";
    if (!r.physical) std::cout << "warning: identified constants are not physical\n";
    for (const auto& [name, v] : r.deviations) std::cout << name << ' ' << format_number(100.0 * v) << " %\n";
    return r.physical ? 0 : kNumericalError;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Voxel-based computational homogenization over size, resolution and discretization"};
    app.require_subcommand(1);
    Options o;
    auto add = [&](CLI::App* sub, bool with_case, bool with_ref) {
        sub->add_option("--config", o.config, "configuration file")->required();
        sub->add_option("--out", o.out, "output directory");
        if (with_case) {
            sub->add_option("--case", o.case_name, "case name, e.g. S64-RD32adap1");
            sub->add_option("--bc", o.bc, "boundary condition")->check(CLI::IsMember({"kubc", "pbc", "subc"}));
        }
        if (with_ref) sub->add_option("--ref-factor", o.ref_factor, "reference refinement")->check(CLI::IsMember({2, 4}));
        sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "seed for synthetic inputs");
    };
    auto* info = app.add_subcommand("info", "grid statistics and phase fractions");
    add(info, false, false);
    auto* coarsen = app.add_subcommand("coarsen", "apply the R and D transforms of one case and export them");
    add(coarsen, true, false);
    auto* homog = app.add_subcommand("homogenize", "homogenized tensor of one case");
    add(homog, true, false);
    auto* errors = app.add_subcommand("errors", "estimated and actual error of one case");
    add(errors, true, true);
    auto* sweep = app.add_subcommand("sweep", "run every configured case and write the tables");
    add(sweep, false, true);
    auto* iso = app.add_subcommand("isotropy", "identify isotropic constants from a stored tensor");
    iso->add_option("tensor", o.tensor, "results.json or whitespace matrix")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    try {
        if (*info) return cmd_info(o);
        if (*coarsen) return cmd_coarsen(o);
        if (*homog) return cmd_homogenize(o);
        if (*errors) return cmd_errors(o);
        if (*sweep) return cmd_sweep(o);
        if (*iso) return cmd_isotropy(o);
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalError;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kConfigError;
    }
    return kConfigError;
}
