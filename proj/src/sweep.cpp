#include "srd/sweep.hpp"

#include <atomic>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <json.hpp>
#include <mutex>
#include <sstream>
#include <thread>

namespace srd {

// ---------------------------------------------------------------------------
// configuration

namespace {

using Section = std::map<std::string, std::string>;

class Sections {
public:
    explicit Sections(const boost::property_tree::ptree& root) {
        for (const auto& [name, sec] : root) {
            if (sec.empty() && !sec.data().empty()) throw ConfigError("key '" + name + "' outside of a section");
            auto& dst = data_[name];
            for (const auto& [key, value] : sec) dst[key] = value.data();
        }
    }

    std::optional<std::string> take(const std::string& section, const std::string& key) {
        auto s = data_.find(section);
        if (s == data_.end()) return std::nullopt;
        auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        std::string v = k->second;
        s->second.erase(k);
        return v;
    }

    /// Keys starting with `prefix` in `section`, removed from the pool.
    std::vector<std::pair<std::string, std::string>> take_prefixed(const std::string& section, const std::string& prefix) {
        std::vector<std::pair<std::string, std::string>> out;
        auto s = data_.find(section);
        if (s == data_.end()) return out;
        for (auto it = s->second.begin(); it != s->second.end();) {
            if (it->first.rfind(prefix, 0) == 0) {
                out.emplace_back(it->first.substr(prefix.size()), it->second);
                it = s->second.erase(it);
            } else {
                ++it;
            }
        }
        return out;
    }

    void reject_leftovers() const {
        for (const auto& [sec, keys] : data_)
            for (const auto& [key, value] : keys) throw ConfigError("unknown key [" + sec + "] " + key);
    }

private:
    std::map<std::string, Section> data_;
};

std::vector<std::string> words(const std::string& s) {
    std::istringstream in(s);
    std::vector<std::string> out;
    for (std::string w; in >> w;) out.push_back(w);
    return out;
}

template <class T>
T number(const std::string& key, const std::string& text) {
    std::istringstream in(text);
    T v{};
    in >> v;
    std::string rest;
    if (in.fail() || (in >> rest)) throw ConfigError("bad value for " + key + ": '" + text + "'");
    return v;
}

template <class T>
std::vector<T> numbers(const std::string& key, const std::string& text) {
    std::vector<T> out;
    for (const auto& w : words(text)) out.push_back(number<T>(key, w));
    if (out.empty()) throw ConfigError("empty list for " + key);
    return out;
}

bool boolean(const std::string& key, const std::string& text) {
    if (text == "true" || text == "yes" || text == "1") return true;
    if (text == "false" || text == "no" || text == "0") return false;
    throw ConfigError("bad boolean for " + key + ": '" + text + "'");
}

BoundaryCondition bc_from(const std::string& s) {
    try {
        return parse_bc(s);
    } catch (const std::exception&) {
        throw ConfigError("unknown boundary condition '" + s + "'");
    }
}

}  // namespace

SweepConfig parse_config(std::istream& in) {
    boost::property_tree::ptree root;
    try {
        boost::property_tree::ini_parser::read_ini(in, root);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("config syntax: ") + e.what());
    }
    Sections sec(root);
    SweepConfig c;

    // [input]
    if (auto kind = sec.take("input", "kind")) {
        if (*kind == "synthetic") c.input.kind = InputSpec::Kind::synthetic;
        else if (*kind == "raw") c.input.kind = InputSpec::Kind::raw_u8;
        else if (*kind == "csv") c.input.kind = InputSpec::Kind::csv_slices;
        else throw ConfigError("unknown input kind '" + *kind + "'");
    }
    if (auto v = sec.take("input", "path")) c.input.path = *v;
    if (auto v = sec.take("input", "dim")) c.input.dim = number<int>("dim", *v);
    if (c.input.dim != 2 && c.input.dim != 3) throw ConfigError("dim must be 2 or 3");
    if (auto v = sec.take("input", "extents")) {
        auto e = numbers<int>("extents", *v);
        if (static_cast<int>(e.size()) != c.input.dim) throw ConfigError("extents needs " + std::to_string(c.input.dim) + " values");
        c.input.extents = {e[0], e[1], c.input.dim == 3 ? e[2] : 1};
    }
    if (auto v = sec.take("input", "spacing")) c.input.spacing = number<double>("spacing", *v);
    const std::string gen = sec.take("input", "generator").value_or("random");
    const double fraction = number<double>("fraction", sec.take("input", "fraction").value_or("0.5"));
    const auto seed = number<std::uint64_t>("seed", sec.take("input", "seed").value_or("1"));
    const double corr = number<double>("correlation_length", sec.take("input", "correlation_length").value_or("2"));
    const int axis = number<int>("normal_axis", sec.take("input", "normal_axis").value_or("0"));
    const int cell = number<int>("cell", sec.take("input", "cell").value_or("1"));
    if (gen == "random") c.input.generator = synthetic::Random{fraction, seed};
    else if (gen == "blobs") c.input.generator = synthetic::Blobs{fraction, seed, corr};
    else if (gen == "laminate") c.input.generator = synthetic::Laminate{axis, fraction};
    else if (gen == "sphere") c.input.generator = synthetic::SphereInclusion{fraction};
    else if (gen == "checkerboard") c.input.generator = synthetic::Checkerboard{cell};
    else throw ConfigError("unknown generator '" + gen + "'");
    if (c.input.kind != InputSpec::Kind::synthetic && c.input.path.empty()) throw ConfigError("input path missing");

    // [phases]
    const std::string preset = sec.take("phases", "preset").value_or("concrete");
    const double pore_ratio =
        number<double>("pore_ratio", sec.take("phases", "pore_ratio").value_or(std::to_string(PhaseTable::kDefaultPoreRatio)));
    auto custom = sec.take_prefixed("phases", "phase.");
    try {
        if (preset == "concrete") {
            c.table = PhaseTable::concrete();
            if (pore_ratio != PhaseTable::kDefaultPoreRatio) c.table = PhaseTable(c.table.entries(), pore_ratio);
        } else if (preset == "custom") {
            std::vector<Phase> entries;
            for (const auto& [id, text] : custom) {
                auto w = words(text);
                Phase p;
                p.id = number<PhaseId>("phase." + id, id);
                if (!w.empty() && w[0] == "pore") {
                    p.kind = PhaseKind::pore;
                    p.name = w.size() > 1 ? w[1] : "pore";
                } else {
                    if (w.size() < 2) throw ConfigError("phase." + id + " needs 'E nu [name]' or 'pore [name]'");
                    p.E = number<double>("phase." + id, w[0]);
                    p.nu = number<double>("phase." + id, w[1]);
                    p.name = w.size() > 2 ? w[2] : "phase" + id;
                }
                entries.push_back(p);
            }
            c.table = PhaseTable(entries, pore_ratio);
        } else {
            throw ConfigError("unknown phase preset '" + preset + "'");
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("phase table: ") + e.what());
    }
    if (preset != "custom" && !custom.empty()) throw ConfigError("phase.<id> entries need preset = custom");

    // [cases]
    if (auto names = sec.take("cases", "names")) {
        for (const auto& n : words(*names)) {
            try {
                c.cases.push_back(parse_case_name(n));
            } catch (const CaseNameError& e) {
                throw ConfigError("case '" + n + "': " + e.what());
            }
        }
    }
    auto sizes = sec.take("cases", "sizes");
    auto per_size = sec.take_prefixed("cases", "resolutions.");
    auto subdivisions = numbers<int>("subdivisions", sec.take("cases", "subdivisions").value_or("1"));
    auto steps = numbers<int>("adaptive_steps", sec.take("cases", "adaptive_steps").value_or("0"));
    if (sizes) {
        std::map<int, std::vector<int>> res;
        for (const auto& [s, list] : per_size) res[number<int>("resolutions." + s, s)] = numbers<int>("resolutions." + s, list);
        for (int S : numbers<int>("sizes", *sizes)) {
            const auto r = res.count(S) ? res[S] : std::vector<int>{S};
            for (int R : r)
                for (int k : subdivisions)
                    for (int n : steps) c.cases.push_back({S, R, k * R, n});
        }
    } else if (!per_size.empty()) {
        throw ConfigError("resolutions.<S> given without sizes");
    }
    if (c.cases.empty()) throw ConfigError("no cases: set [cases] names or sizes");
    if (auto r = sec.take("cases", "rule")) {
        if (*r == "mixture") c.rule = ResolutionRule::mixture;
        else if (*r == "majority") c.rule = ResolutionRule::majority;
        else throw ConfigError("unknown resolution rule '" + *r + "'");
    }
    if (auto o = sec.take("cases", "origin"); o && *o != "centered") {
        auto v = numbers<int>("origin", *o);
        if (static_cast<int>(v.size()) != c.input.dim) throw ConfigError("origin needs " + std::to_string(c.input.dim) + " values");
        c.origin = std::array<int, 3>{v[0], v[1], c.input.dim == 3 ? v[2] : 0};
    }
    if (auto p = sec.take("cases", "preserve_boundary"); p && *p != "auto") c.preserve_boundary = boolean("preserve_boundary", *p);

    // [solve]
    if (auto b = sec.take("solve", "bcs")) {
        c.bcs.clear();
        for (const auto& w : words(*b)) c.bcs.push_back(bc_from(w));
        if (c.bcs.empty()) throw ConfigError("bcs is empty");
    }
    if (auto v = sec.take("solve", "threads")) c.threads = number<int>("threads", *v);
    if (auto v = sec.take("solve", "max_ndof")) c.max_ndof = number<long>("max_ndof", *v);

    // [load]
    const int nv = voigt_size(c.input.dim);
    c.macro_strain = Eigen::VectorXd::Zero(nv);
    c.macro_strain[0] = 1e-3;
    if (auto v = sec.take("load", "strain")) {
        auto e = numbers<double>("strain", *v);
        if (static_cast<int>(e.size()) != nv) throw ConfigError("strain needs " + std::to_string(nv) + " Voigt components");
        c.macro_strain = Eigen::Map<Eigen::VectorXd>(e.data(), nv);
    }

    // [errors]
    if (auto v = sec.take("errors", "stage")) {
        if (*v == "off") c.errors = ErrorStage::off;
        else if (*v == "estimate") c.errors = ErrorStage::estimate;
        else if (*v == "actual") c.errors = ErrorStage::actual;
        else throw ConfigError("unknown error stage '" + *v + "'");
    }
    if (auto v = sec.take("errors", "ref_factor")) c.ref_factor = number<int>("ref_factor", *v);

    // [reference]
    auto ref_case = sec.take("reference", "case");
    auto ref_bc = sec.take("reference", "bc");
    if (ref_case || ref_bc) {
        if (!ref_case || !ref_bc) throw ConfigError("reference needs both case and bc");
        try {
            c.reference = std::pair{parse_case_name(*ref_case), bc_from(*ref_bc)};
        } catch (const CaseNameError& e) {
            throw ConfigError("reference case: " + std::string(e.what()));
        }
    }

    // [output]
    if (auto v = sec.take("output", "dir")) c.out_dir = *v;
    if (auto v = sec.take("output", "vtk")) c.vtk = boolean("vtk", *v);
    if (auto v = sec.take("output", "timing")) c.timing = boolean("timing", *v);

    sec.reject_leftovers();
    validate_config(c);
    return c;
}

SweepConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    auto c = parse_config(in);
    if (c.input.path.is_relative() && !c.input.path.empty()) c.input.path = path.parent_path() / c.input.path;
    return c;
}

void override_seed(SweepConfig& config, std::uint64_t seed) {
    std::visit(
        [&](auto& g) {
            if constexpr (requires { g.seed; }) g.seed = seed;
        },
        config.input.generator);
}

void validate_config(const SweepConfig& c) {
    if (c.ref_factor != 2 && c.ref_factor != 4) throw ConfigError("ref_factor must be 2 or 4");
    if (c.threads < 1) throw ConfigError("threads must be >= 1");
    if (c.max_ndof < 1) throw ConfigError("max_ndof must be positive");
    int min_extent = c.input.extents[0];
    for (int a = 1; a < c.input.dim; ++a) min_extent = std::min(min_extent, c.input.extents[a]);
    for (const auto& id : c.cases) {
        const std::string name = format_case_name(id);
        if (id.S > min_extent) throw ConfigError(name + ": S exceeds the input extent " + std::to_string(min_extent));
        if (id.S % id.R != 0 || ((id.S / id.R) & (id.S / id.R - 1)) != 0)
            throw ConfigError(name + ": R must be S divided by a power of two");
        if (id.D % id.R != 0) throw ConfigError(name + ": D must be a multiple of R");
        if (id.adap < 0) throw ConfigError(name + ": adaptive steps must be >= 0");
    }
    if (c.reference) {
        bool found = false;
        for (const auto& id : c.cases) found |= id == c.reference->first;
        bool bc_found = false;
        for (auto bc : c.bcs) bc_found |= bc == c.reference->second;
        if (!found || !bc_found) throw ConfigError("reference run " + format_case_name(c.reference->first) + " " +
                                                   to_string(c.reference->second) + " is not part of the sweep");
    }
}

VoxelGrid load_input(const SweepConfig& c) {
    switch (c.input.kind) {
    case InputSpec::Kind::synthetic:
        return generate_synthetic(c.input.generator, c.input.dim, c.input.extents, c.input.spacing);
    case InputSpec::Kind::raw_u8:
        return load_voxel_grid(c.input.path, VoxelFormat::raw_u8, c.input.dim, c.input.extents, c.input.spacing, c.table);
    case InputSpec::Kind::csv_slices:
        return load_voxel_grid(c.input.path, VoxelFormat::csv_slices, c.input.dim, c.input.extents, c.input.spacing,
                               c.table);
    }
    throw ConfigError("unknown input kind");
}

// ---------------------------------------------------------------------------
// pipeline

PreparedCase prepare_case(const VoxelGrid& input, const SweepConfig& c, const CaseId& id, BoundaryCondition bc) {
    PreparedCase p;
    p.id = id;
    p.grid = extract_subvolume(input, c.origin ? *c.origin : centered_origin(input, id.S), id.S);
    p.table = c.table;
    const PhaseFractions original = phase_fractions(p.grid);
    for (int r = id.S; r > id.R; r /= 2) {
        if (c.rule == ResolutionRule::mixture) std::tie(p.grid, p.table) = coarsen_resolution_mixture(p.grid, p.table);
        else p.grid = coarsen_resolution_majority(p.grid, original);
    }
    p.uniform = build_uniform_mesh(p.grid, p.table, id.D / id.R);
    const bool preserve = c.preserve_boundary.value_or(bc == BoundaryCondition::pbc);
    std::tie(p.mesh, p.report) = adaptive_coarsen(p.uniform, id.adap, preserve);
    p.mesh.provenance = format_case_name(id);
    return p;
}

namespace {

long uniform_ndof(int dim, long D) {
    long n = dim;
    for (int a = 0; a < dim; ++a) n *= D + 1;
    return n;
}

std::map<std::string, double> fraction_columns(const Mesh& mesh, const PhaseTable& base) {
    std::map<std::string, double> out;
    for (const auto& p : base.entries()) out[std::to_string(p.id)] = 0.0;
    double mixed = 0.0;
    for (const auto& [id, f] : mesh_phase_fractions(mesh)) {
        if (base.contains(id) && !base.at(id).mixed) out[std::to_string(id)] = f;
        else mixed += f;
    }
    out["mixed"] = mixed;
    return out;
}

std::string file_stem(const CaseRecord& r) { return r.case_name + "_" + to_string(r.bc); }

}  // namespace

CaseRecord run_case(const VoxelGrid& input, const SweepConfig& c, const CaseId& id, BoundaryCondition bc) {
    const auto t0 = std::chrono::steady_clock::now();
    CaseRecord rec;
    rec.case_name = format_case_name(id);
    rec.bc = bc;
    for (const auto& p : c.table.entries()) rec.fractions[std::to_string(p.id)] = 0.0;
    try {
        const long budget = uniform_ndof(c.input.dim, c.errors == ErrorStage::actual ? long(id.D) * c.ref_factor : id.D);
        if (budget > c.max_ndof) {
            rec.status = "over-budget";
            return rec;
        }
        PreparedCase p = prepare_case(input, c, id, bc);
        rec.fractions = fraction_columns(p.mesh, c.table);
        rec.reduction_factor = p.report.reduction_factor;
        rec.result = homogenize(p.mesh, bc);
        rec.result->case_name = rec.case_name;

        std::optional<MicroSolution> s;
        if (c.errors != ErrorStage::off || c.vtk) {
            const MacroLoad load = bc == BoundaryCondition::subc
                                       ? MacroLoad::stress(rec.result->C.voigt * c.macro_strain)
                                       : MacroLoad::strain(bc, c.macro_strain);
            s = solve_micro(p.mesh, load);
            if (c.errors != ErrorStage::off) {
                rec.errors = estimated_error(p.mesh, *s);
                if (c.errors == ErrorStage::actual) {
                    const Mesh ref = build_uniform_mesh(p.grid, p.table, (id.D / id.R) * c.ref_factor);
                    const MicroSolution rs = solve_micro(ref, load);
                    actual_error(*rec.errors, p.mesh, *s, ref, rs);
                }
            }
        }
        if (c.vtk) {
            std::vector<CellArray> cells(2);
            cells[0] = {"phase_id", {}, true};
            cells[1] = {"level", {}, true};
            for (const auto& e : p.mesh.elements) {
                cells[0].values.push_back(e.phase);
                cells[1].values.push_back(e.level);
            }
            if (rec.errors) {
                const auto rel = relative_error_field(*rec.errors, p.mesh, *s);
                cells.push_back({"relative_error_estimated", {rel.estimated.data(), rel.estimated.data() + rel.estimated.size()}});
                if (rel.actual) cells.push_back({"relative_error_actual", {rel.actual->data(), rel.actual->data() + rel.actual->size()}});
            }
            std::filesystem::create_directories(c.out_dir);
            write_vtk(c.out_dir / (file_stem(rec) + ".vtk"), p.mesh, cells, &s->displacements);
        }
    } catch (const NumericalError& e) {
        rec.status = std::string("numerical failure: ") + e.what();
    } catch (const std::exception& e) {
        rec.status = std::string("error: ") + e.what();
    }
    if (c.timing) rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

std::vector<CaseRecord> run_sweep(const SweepConfig& c) {
    validate_config(c);
    const VoxelGrid input = load_input(c);
    std::vector<std::pair<CaseId, BoundaryCondition>> jobs;
    for (const auto& id : c.cases)
        for (auto bc : c.bcs) jobs.emplace_back(id, bc);
    std::vector<CaseRecord> records(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) records[i] = run_case(input, c, jobs[i].first, jobs[i].second);
    };
    const int n = std::max(1, std::min<int>(c.threads, static_cast<int>(jobs.size())));
    std::vector<std::thread> pool;
    for (int t = 1; t < n; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    if (c.reference) {
        const std::string ref_name = format_case_name(c.reference->first);
        const CaseRecord* ref = nullptr;
        for (const auto& r : records)
            if (r.case_name == ref_name && r.bc == c.reference->second) ref = &r;
        if (ref && ref->result) {
            const auto comps = tracked_components(c.input.dim);
            for (auto& r : records) {
                if (!r.result) continue;
                for (auto [i, j] : comps)
                    r.deviation_percent.push_back(100.0 * (r.result->C(i, j) - ref->result->C(i, j)) / ref->result->C(i, j));
            }
        }
    }
    return records;
}

// ---------------------------------------------------------------------------
// output

std::string format_number(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", v);
    return buf;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

struct Layout {
    int dim = 2;
    std::vector<std::string> fraction_keys;
    std::size_t deviations = 0;
};

Layout layout_of(const std::vector<CaseRecord>& records) {
    Layout l;
    for (const auto& r : records) {
        if (r.result) l.dim = r.result->C.dim;
        for (const auto& [k, v] : r.fractions)
            if (std::find(l.fraction_keys.begin(), l.fraction_keys.end(), k) == l.fraction_keys.end())
                l.fraction_keys.push_back(k);
        l.deviations = std::max(l.deviations, r.deviation_percent.size());
    }
    // Numeric phase ids first, "mixed" last.
    std::sort(l.fraction_keys.begin(), l.fraction_keys.end(), [](const std::string& a, const std::string& b) {
        const bool ma = a == "mixed", mb = b == "mixed";
        if (ma != mb) return mb;
        return ma ? false : std::stoi(a) < std::stoi(b);
    });
    return l;
}

std::vector<std::string> component_names(int dim) {
    std::vector<std::string> n;
    const int nv = voigt_size(dim);
    for (int i = 0; i < nv; ++i)
        for (int j = i; j < nv; ++j) n.push_back("C" + std::to_string(i + 1) + std::to_string(j + 1));
    return n;
}

}  // namespace

void write_csv(const std::vector<CaseRecord>& records, std::ostream& out) {
    const Layout l = layout_of(records);
    const auto comps = component_names(l.dim);
    const auto tracked = tracked_components(l.dim);
    out << "case,bc,status,ndof,deactivated_ndof,reduction_factor";
    for (const auto& c : comps) out << ',' << c;
    out << ",e_mic,e_bar_mic,theta";
    for (const auto& k : l.fraction_keys) out << ",fraction_" << k;
    for (std::size_t k = 0; k < l.deviations; ++k)
        out << ",dev_C" << tracked[k].first + 1 << tracked[k].second + 1;
    out << ",seconds\n";
    const int nv = voigt_size(l.dim);
    for (const auto& r : records) {
        out << csv_field(r.case_name) << ',' << to_string(r.bc) << ',' << csv_field(r.status) << ',';
        if (r.result) out << r.result->ndof << ',' << r.result->deactivated_ndof << ',' << format_number(r.reduction_factor);
        else out << ",,";
        for (int i = 0; i < nv; ++i)
            for (int j = i; j < nv; ++j) out << ',' << (r.result ? format_number(r.result->C(i, j)) : "");
        out << ',' << (r.errors && r.errors->e_mic ? format_number(*r.errors->e_mic) : "");
        out << ',' << (r.errors ? format_number(r.errors->e_bar_mic) : "");
        out << ',' << (r.errors && r.errors->theta ? format_number(*r.errors->theta) : "");
        for (const auto& k : l.fraction_keys) {
            auto it = r.fractions.find(k);
            out << ',' << (it != r.fractions.end() && r.result ? format_number(it->second) : "");
        }
        for (std::size_t k = 0; k < l.deviations; ++k)
            out << ',' << (k < r.deviation_percent.size() ? format_number(r.deviation_percent[k]) : "");
        out << ',' << (r.seconds ? format_number(*r.seconds) : "") << '\n';
    }
}

std::string records_json(const std::vector<CaseRecord>& records) {
    using nlohmann::ordered_json;
    ordered_json arr = ordered_json::array();
    for (const auto& r : records) {
        ordered_json j;
        j["case"] = r.case_name;
        j["bc"] = to_string(r.bc);
        j["status"] = r.status;
        if (r.result) {
            j["ndof"] = r.result->ndof;
            j["deactivated_ndof"] = r.result->deactivated_ndof;
            j["reduction_factor"] = r.reduction_factor;
            ordered_json C = ordered_json::array();
            for (int i = 0; i < r.result->C.voigt.rows(); ++i) {
                ordered_json row = ordered_json::array();
                for (int k = 0; k < r.result->C.voigt.cols(); ++k) row.push_back(r.result->C(i, k));
                C.push_back(row);
            }
            j["C"] = C;
            j["asymmetry"] = r.result->asymmetry;
            j["hill_mandel"] = r.result->hill_mandel_max;
            ordered_json f = ordered_json::object();
            for (const auto& [k, v] : r.fractions) f[k] = v;
            j["fractions"] = f;
        }
        if (r.errors) {
            j["e_mic"] = r.errors->e_mic ? ordered_json(*r.errors->e_mic) : ordered_json(nullptr);
            j["e_bar_mic"] = r.errors->e_bar_mic;
            j["theta"] = r.errors->theta ? ordered_json(*r.errors->theta) : ordered_json(nullptr);
            j["solution_norm"] = r.errors->solution_norm;
        }
        if (!r.deviation_percent.empty()) j["deviation_percent"] = r.deviation_percent;
        j["seconds"] = r.seconds ? ordered_json(*r.seconds) : ordered_json(nullptr);
        arr.push_back(j);
    }
    return arr.dump(2) + "\n";
}

void emit_tables(const std::vector<CaseRecord>& records, const std::filesystem::path& dir) {
    if (records.empty()) throw std::invalid_argument("no records to emit");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream csv(dir / "results.csv", std::ios::binary);
    std::ofstream json(dir / "results.json", std::ios::binary);
    if (!csv || !json) throw std::runtime_error("cannot write to " + dir.string());
    write_csv(records, csv);
    json << records_json(records);
    if (!csv || !json) throw std::runtime_error("write failed in " + dir.string());
}

void write_vtk(const std::filesystem::path& path, const Mesh& mesh, const std::vector<CellArray>& cell_data,
               const Eigen::VectorXd* u) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.precision(10);
    out << "# vtk DataFile Version 3.0\n" << mesh.provenance << "\nASCII\nDATASET UNSTRUCTURED_GRID\n";
    out << "POINTS " << mesh.nodes.size() << " double\n";
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        const auto x = mesh.coordinate(static_cast<int>(i));
        out << x[0] << ' ' << x[1] << ' ' << x[2] << '\n';
    }
    const int n = mesh.nodes_per_element();
    // lexicographic corners -> VTK counter-clockwise order
    static const int order[8] = {0, 1, 3, 2, 4, 5, 7, 6};
    out << "CELLS " << mesh.elements.size() << ' ' << mesh.elements.size() * (n + 1) << '\n';
    for (const auto& e : mesh.elements) {
        out << n;
        for (int c = 0; c < n; ++c) out << ' ' << e.nodes[order[c]];
        out << '\n';
    }
    out << "CELL_TYPES " << mesh.elements.size() << '\n';
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) out << (mesh.dim == 2 ? 9 : 12) << '\n';
    if (!cell_data.empty()) {
        out << "CELL_DATA " << mesh.elements.size() << '\n';
        for (const auto& a : cell_data) {
            out << "SCALARS " << a.name << (a.integer ? " int" : " double") << " 1\nLOOKUP_TABLE default\n";
            for (double v : a.values) {
                if (a.integer) out << static_cast<long>(v) << '\n';
                else out << v << '\n';
            }
        }
    }
    if (u) {
        out << "POINT_DATA " << mesh.nodes.size() << "\nVECTORS displacement double\n";
        for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
            for (int a = 0; a < 3; ++a) out << (a ? " " : "") << (a < mesh.dim ? (*u)[static_cast<long>(i) * mesh.dim + a] : 0.0);
            out << '\n';
        }
    }
}

}  // namespace srd
