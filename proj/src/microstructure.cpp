#include "srd/microstructure.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <set>
#include <sstream>
#include <stdexcept>

namespace srd {

// ---------------------------------------------------------------------------
// PhaseTable

PhaseTable::PhaseTable(std::vector<Phase> entries, double pore_stiffness_ratio)
    : entries_(std::move(entries)), pore_ratio_(pore_stiffness_ratio) {
    validate();
}

PhaseTable PhaseTable::concrete() {
    return PhaseTable({{0, 50000.0, 0.3, PhaseKind::solid, "aggregate"},
                       {1, 20000.0, 0.3, PhaseKind::solid, "mortar"},
                       {2, 0.0, 0.0, PhaseKind::pore, "pore"}});
}

PhaseTable PhaseTable::two_phase(double E0, double nu0, double E1, double nu1) {
    return PhaseTable({{0, E0, nu0, PhaseKind::solid, "phase0"}, {1, E1, nu1, PhaseKind::solid, "phase1"}});
}

void PhaseTable::validate() const {
    std::set<PhaseId> seen;
    bool has_pore = false;
    bool has_solid = false;
    for (const auto& p : entries_) {
        if (!seen.insert(p.id).second)
            throw std::invalid_argument("duplicate phase id " + std::to_string(p.id));
        if (p.kind == PhaseKind::solid) {
            if (!(p.E > 0.0)) throw std::invalid_argument("phase " + std::to_string(p.id) + ": E must be positive");
            if (!(p.nu > -1.0 && p.nu < 0.5))
                throw std::invalid_argument("phase " + std::to_string(p.id) + ": nu must lie in (-1, 0.5)");
            if (!p.mixed) has_solid = true;
        } else {
            has_pore = true;
        }
    }
    if (has_pore && !has_solid) throw std::invalid_argument("pore phase requires at least one solid phase");
    if (!(pore_ratio_ > 0.0)) throw std::invalid_argument("pore stiffness ratio must be positive");
}

bool PhaseTable::contains(PhaseId id) const {
    return std::any_of(entries_.begin(), entries_.end(), [id](const Phase& p) { return p.id == id; });
}

const Phase& PhaseTable::at(PhaseId id) const {
    for (const auto& p : entries_)
        if (p.id == id) return p;
    throw std::invalid_argument("unknown phase id " + std::to_string(id));
}

double PhaseTable::pore_E() const {
    double m = std::numeric_limits<double>::infinity();
    for (const auto& p : entries_)
        if (p.kind == PhaseKind::solid && !p.mixed) m = std::min(m, p.E);
    return pore_ratio_ * m;
}

double PhaseTable::effective_E(PhaseId id) const {
    const auto& p = at(id);
    return p.kind == PhaseKind::pore ? pore_E() : p.E;
}

double PhaseTable::effective_nu(PhaseId id) const {
    const auto& p = at(id);
    return p.kind == PhaseKind::pore ? kPoreNu : p.nu;
}

PhaseId PhaseTable::max_id() const {
    PhaseId m = 0;
    for (const auto& p : entries_) m = std::max(m, p.id);
    return m;
}

PhaseId PhaseTable::add_mixed(double E, double nu) {
    for (const auto& p : entries_)
        if (p.mixed && p.E == E && p.nu == nu) return p.id;
    if (max_id() == std::numeric_limits<PhaseId>::max()) throw std::length_error("phase id space exhausted");
    Phase p{static_cast<PhaseId>(max_id() + 1), E, nu, PhaseKind::solid, "mixed", true};
    entries_.push_back(p);
    validate();
    return p.id;
}

PhaseTable PhaseTable::scaled(double factor) const {
    auto e = entries_;
    for (auto& p : e)
        if (p.kind == PhaseKind::solid) p.E *= factor;
    return PhaseTable(std::move(e), pore_ratio_);
}

// ---------------------------------------------------------------------------
// VoxelGrid

VoxelGrid::VoxelGrid(int dim_, std::array<int, 3> ext, double h, PhaseId fill)
    : dim(dim_), extents(ext), spacing(h) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("grid dimension must be 2 or 3");
    if (dim == 2) extents[2] = 1;
    for (int a = 0; a < dim; ++a)
        if (extents[a] <= 0) throw std::invalid_argument("grid extents must be positive");
    if (!(spacing > 0.0)) throw std::invalid_argument("voxel spacing must be positive");
    data.assign(static_cast<std::size_t>(extents[0]) * extents[1] * extents[2], fill);
}

void VoxelGrid::validate(const PhaseTable& table) const {
    const auto expected = static_cast<std::size_t>(extents[0]) * extents[1] * extents[2];
    if (data.size() != expected)
        throw std::invalid_argument("grid holds " + std::to_string(data.size()) + " voxels, extents imply " +
                                    std::to_string(expected));
    if (!(spacing > 0.0)) throw std::invalid_argument("voxel spacing must be positive");
    std::set<PhaseId> ids(data.begin(), data.end());
    for (auto id : ids)
        if (!table.contains(id)) throw std::invalid_argument("unknown phase id " + std::to_string(id));
}

// ---------------------------------------------------------------------------
// I/O

namespace {

std::vector<PhaseId> read_csv_rows(const std::filesystem::path& file, int nx, int ny) {
    std::ifstream in(file);
    if (!in) throw std::runtime_error("cannot open " + file.string());
    std::vector<PhaseId> out;
    out.reserve(static_cast<std::size_t>(nx) * ny);
    std::string line;
    int rows = 0;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string cell;
        int cols = 0;
        while (std::getline(ss, cell, ',')) {
            long v = std::stol(cell);
            if (v < 0 || v > std::numeric_limits<PhaseId>::max())
                throw std::invalid_argument("phase id " + std::to_string(v) + " out of range in " + file.string());
            out.push_back(static_cast<PhaseId>(v));
            ++cols;
        }
        if (cols != nx)
            throw std::invalid_argument(file.string() + ": row " + std::to_string(rows) + " has " +
                                        std::to_string(cols) + " values, expected " + std::to_string(nx));
        ++rows;
    }
    if (rows != ny)
        throw std::invalid_argument(file.string() + ": " + std::to_string(rows) + " rows, expected " +
                                    std::to_string(ny));
    return out;
}

}  // namespace

VoxelGrid load_voxel_grid(const std::filesystem::path& path, VoxelFormat format, int dim,
                          std::array<int, 3> extents, double spacing, const PhaseTable& table) {
    VoxelGrid grid(dim, extents, spacing);
    if (format == VoxelFormat::raw_u8) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw std::runtime_error("cannot open " + path.string());
        std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        if (bytes.size() != grid.data.size())
            throw std::invalid_argument("expected " + std::to_string(grid.data.size()) + " bytes, got " +
                                        std::to_string(bytes.size()));
        for (std::size_t i = 0; i < bytes.size(); ++i) grid.data[i] = static_cast<unsigned char>(bytes[i]);
    } else {
        const int nx = grid.extents[0], ny = grid.extents[1], nz = grid.extents[2];
        std::vector<std::filesystem::path> files;
        if (std::filesystem::is_directory(path)) {
            for (const auto& entry : std::filesystem::directory_iterator(path))
                if (entry.path().extension() == ".csv") files.push_back(entry.path());
            std::sort(files.begin(), files.end());
        } else {
            files.push_back(path);
        }
        if (static_cast<int>(files.size()) != nz)
            throw std::invalid_argument("expected " + std::to_string(nz) + " csv slices, found " +
                                        std::to_string(files.size()));
        std::size_t offset = 0;
        for (const auto& f : files) {
            auto slice = read_csv_rows(f, nx, ny);
            std::copy(slice.begin(), slice.end(), grid.data.begin() + static_cast<std::ptrdiff_t>(offset));
            offset += slice.size();
        }
    }
    grid.provenance = path.stem().string();
    grid.validate(table);
    return grid;
}

void save_raw_u8(const VoxelGrid& grid, const std::filesystem::path& path) {
    std::vector<char> bytes(grid.data.size());
    for (std::size_t i = 0; i < bytes.size(); ++i) {
        if (grid.data[i] > 255)
            throw std::invalid_argument("phase id " + std::to_string(grid.data[i]) + " does not fit raw-u8");
        bytes[i] = static_cast<char>(static_cast<unsigned char>(grid.data[i]));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

// ---------------------------------------------------------------------------

PhaseFractions phase_fractions(const VoxelGrid& grid) {
    if (grid.data.empty()) throw std::invalid_argument("phase fractions of an empty grid");
    std::map<PhaseId, std::size_t> counts;
    for (auto id : grid.data) ++counts[id];
    PhaseFractions f;
    const double n = static_cast<double>(grid.data.size());
    for (auto [id, c] : counts) f[id] = static_cast<double>(c) / n;
    return f;
}

VoxelGrid extract_subvolume(const VoxelGrid& grid, std::array<int, 3> origin, int size) {
    static constexpr const char* names[] = {"x", "y", "z"};
    if (size <= 0) throw std::invalid_argument("subvolume size must be positive");
    std::array<int, 3> ext{1, 1, 1};
    for (int a = 0; a < grid.dim; ++a) {
        if (origin[a] < 0 || origin[a] + size > grid.extents[a])
            throw std::out_of_range(std::string("subvolume out of bounds on ") + names[a] + ": origin " +
                                    std::to_string(origin[a]) + " + size " + std::to_string(size) + " > extent " +
                                    std::to_string(grid.extents[a]));
        ext[a] = size;
    }
    if (grid.dim == 2) origin[2] = 0;
    VoxelGrid out(grid.dim, ext, grid.spacing);
    for (int z = 0; z < ext[2]; ++z)
        for (int y = 0; y < ext[1]; ++y)
            for (int x = 0; x < ext[0]; ++x) out.at(x, y, z) = grid.at(origin[0] + x, origin[1] + y, origin[2] + z);
    std::ostringstream prov;
    prov << grid.provenance << "@(" << origin[0] << ',' << origin[1];
    if (grid.dim == 3) prov << ',' << origin[2];
    prov << ")/S" << size;
    out.provenance = prov.str();
    return out;
}

std::array<int, 3> centered_origin(const VoxelGrid& grid, int size) {
    std::array<int, 3> o{0, 0, 0};
    for (int a = 0; a < grid.dim; ++a) o[a] = std::max(0, (grid.extents[a] - size) / 2);
    return o;
}

VoxelGrid extract_slice(const VoxelGrid& grid, Axis axis, int index) {
    if (grid.dim != 3) throw std::invalid_argument("slices require a 3d grid");
    const int a = static_cast<int>(axis);
    if (index < 0 || index >= grid.extents[a])
        throw std::out_of_range("slice index " + std::to_string(index) + " outside [0, " +
                                std::to_string(grid.extents[a]) + ")");
    // In-plane axes keep their cyclic order after dropping `a`.
    const int u = a == 0 ? 1 : 0;
    const int v = a == 2 ? 1 : 2;
    VoxelGrid out(2, {grid.extents[u], grid.extents[v], 1}, grid.spacing);
    std::array<int, 3> p{};
    p[a] = index;
    for (int j = 0; j < grid.extents[v]; ++j)
        for (int i = 0; i < grid.extents[u]; ++i) {
            p[u] = i;
            p[v] = j;
            out.at(i, j) = grid.at(p[0], p[1], p[2]);
        }
    out.provenance = grid.provenance + "/slice" + "XYZ"[a] + std::to_string(index);
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic generators

namespace {

double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

void periodic_gaussian_pass(std::vector<double>& field, const std::array<int, 3>& ext, int axis, double sigma) {
    const int n = ext[axis];
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int k = -radius; k <= radius; ++k) sum += kernel[k + radius] = std::exp(-0.5 * k * k / (sigma * sigma));
    for (auto& k : kernel) k /= sum;
    const std::array<std::size_t, 3> stride{1, static_cast<std::size_t>(ext[0]),
                                            static_cast<std::size_t>(ext[0]) * ext[1]};
    std::vector<double> line(n), out(n);
    std::array<int, 3> other{};
    int o = 0;
    for (int a = 0; a < 3; ++a)
        if (a != axis) other[o++] = a;
    for (int j = 0; j < ext[other[1]]; ++j)
        for (int i = 0; i < ext[other[0]]; ++i) {
            const std::size_t base = i * stride[other[0]] + j * stride[other[1]];
            for (int t = 0; t < n; ++t) line[t] = field[base + t * stride[axis]];
            for (int t = 0; t < n; ++t) {
                double acc = 0.0;
                for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * line[((t + k) % n + n) % n];
                out[t] = acc;
            }
            for (int t = 0; t < n; ++t) field[base + t * stride[axis]] = out[t];
        }
}

}  // namespace

VoxelGrid generate_synthetic(const synthetic::Spec& spec, int dim, std::array<int, 3> extents, double spacing) {
    VoxelGrid g(dim, extents, spacing);
    const auto& e = g.extents;
    std::visit(
        [&](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, synthetic::Laminate>) {
                if (s.normal_axis < 0 || s.normal_axis >= dim) throw std::invalid_argument("laminate axis out of range");
                if (s.fraction < 0.0 || s.fraction > 1.0) throw std::invalid_argument("laminate fraction outside [0,1]");
                const int cut = static_cast<int>(std::lround(s.fraction * e[s.normal_axis]));
                for (int z = 0; z < e[2]; ++z)
                    for (int y = 0; y < e[1]; ++y)
                        for (int x = 0; x < e[0]; ++x) {
                            const int c = std::array<int, 3>{x, y, z}[s.normal_axis];
                            g.at(x, y, z) = c < cut ? s.first : s.second;
                        }
                g.provenance = "laminate";
            } else if constexpr (std::is_same_v<T, synthetic::SphereInclusion>) {
                double rmin = std::numeric_limits<double>::infinity();
                for (int a = 0; a < dim; ++a) rmin = std::min(rmin, 0.5 * e[a]);
                const double r = s.radius_fraction * rmin;
                for (int z = 0; z < e[2]; ++z)
                    for (int y = 0; y < e[1]; ++y)
                        for (int x = 0; x < e[0]; ++x) {
                            const double dx = x + 0.5 - 0.5 * e[0];
                            const double dy = y + 0.5 - 0.5 * e[1];
                            const double dz = dim == 3 ? z + 0.5 - 0.5 * e[2] : 0.0;
                            g.at(x, y, z) = dx * dx + dy * dy + dz * dz <= r * r ? s.inclusion : s.matrix;
                        }
                g.provenance = "sphere";
            } else if constexpr (std::is_same_v<T, synthetic::Checkerboard>) {
                if (s.cell <= 0) throw std::invalid_argument("checkerboard cell must be positive");
                for (int z = 0; z < e[2]; ++z)
                    for (int y = 0; y < e[1]; ++y)
                        for (int x = 0; x < e[0]; ++x)
                            g.at(x, y, z) = ((x / s.cell + y / s.cell + z / s.cell) % 2 == 0) ? s.first : s.second;
                g.provenance = "checkerboard";
            } else if constexpr (std::is_same_v<T, synthetic::Random>) {
                if (s.p < 0.0 || s.p > 1.0) throw std::invalid_argument("random p outside [0,1]");
                std::mt19937_64 rng(s.seed);
                for (auto& v : g.data) v = unit_uniform(rng) < s.p ? s.second : s.first;
                g.provenance = "random" + std::to_string(s.seed);
            } else {
                if (s.p < 0.0 || s.p > 1.0) throw std::invalid_argument("blob p outside [0,1]");
                if (!(s.correlation_length > 0.0)) throw std::invalid_argument("correlation length must be positive");
                std::mt19937_64 rng(s.seed);
                std::vector<double> field(g.size());
                for (auto& v : field) v = unit_uniform(rng);
                for (int a = 0; a < dim; ++a) periodic_gaussian_pass(field, e, a, s.correlation_length);
                const auto n_second = static_cast<std::size_t>(std::llround(s.p * static_cast<double>(g.size())));
                std::vector<std::size_t> order(g.size());
                for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
                std::stable_sort(order.begin(), order.end(),
                                 [&](std::size_t a, std::size_t b) { return field[a] > field[b]; });
                for (std::size_t r = 0; r < order.size(); ++r) g.data[order[r]] = r < n_second ? s.second : s.first;
                g.provenance = "blobs" + std::to_string(s.seed);
            }
        },
        spec);
    return g;
}

}  // namespace srd
