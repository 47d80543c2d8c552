#include "srd/coarsening.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace srd {

namespace {

void require_even(const VoxelGrid& grid) {
    static constexpr const char* names[] = {"x", "y", "z"};
    for (int a = 0; a < grid.dim; ++a)
        if (grid.extents[a] % 2 != 0)
            throw std::invalid_argument(std::string("resolution coarsening needs even extents; ") + names[a] +
                                        " extent is " + std::to_string(grid.extents[a]));
}

VoxelGrid halved(const VoxelGrid& grid) {
    std::array<int, 3> ext{grid.extents[0] / 2, grid.extents[1] / 2, grid.dim == 3 ? grid.extents[2] / 2 : 1};
    VoxelGrid out(grid.dim, ext, 2.0 * grid.spacing);
    out.provenance = grid.provenance + "/R" + std::to_string(ext[0]);
    return out;
}

template <class F>
void for_children(const VoxelGrid& grid, int X, int Y, int Z, F&& f) {
    const int nz = grid.dim == 3 ? 2 : 1;
    for (int dz = 0; dz < nz; ++dz)
        for (int dy = 0; dy < 2; ++dy)
            for (int dx = 0; dx < 2; ++dx) f(grid.at(2 * X + dx, 2 * Y + dy, grid.dim == 3 ? 2 * Z + dz : 0));
}

}  // namespace

std::pair<VoxelGrid, PhaseTable> coarsen_resolution_mixture(const VoxelGrid& grid, const PhaseTable& table) {
    require_even(grid);
    grid.validate(table);
    VoxelGrid out = halved(grid);
    PhaseTable t = table;
    const int children = 1 << grid.dim;
    for (int Z = 0; Z < out.extents[2]; ++Z)
        for (int Y = 0; Y < out.extents[1]; ++Y)
            for (int X = 0; X < out.extents[0]; ++X) {
                double E = 0.0, nu = 0.0;
                PhaseId first = grid.at(2 * X, 2 * Y, grid.dim == 3 ? 2 * Z : 0);
                bool uniform = true;
                for_children(grid, X, Y, Z, [&](PhaseId id) {
                    E += table.effective_E(id);
                    nu += table.effective_nu(id);
                    uniform = uniform && id == first;
                });
                out.at(X, Y, Z) = uniform ? first : t.add_mixed(E / children, nu / children);
            }
    return {std::move(out), std::move(t)};
}

VoxelGrid coarsen_resolution_majority(const VoxelGrid& grid, const PhaseFractions& original_fractions,
                                      TieBreak tie_break) {
    require_even(grid);
    VoxelGrid out = halved(grid);
    const int children = 1 << grid.dim;

    // Running phase counts in fine-voxel units: decided coarse voxels count
    // 2^d of their phase, undecided regions their own children.
    std::map<PhaseId, long> running;
    for (auto id : grid.data) ++running[id];
    for (const auto& [id, f] : original_fractions) running.emplace(id, 0);
    const double total = static_cast<double>(grid.data.size());

    auto distance = [&](const std::map<PhaseId, long>& counts) {
        double d = 0.0;
        for (const auto& [id, c] : counts) {
            auto it = original_fractions.find(id);
            const double target = it == original_fractions.end() ? 0.0 : it->second;
            d += std::abs(static_cast<double>(c) / total - target);
        }
        return d;
    };

    std::map<PhaseId, int> local;
    for (int Z = 0; Z < out.extents[2]; ++Z)
        for (int Y = 0; Y < out.extents[1]; ++Y)
            for (int X = 0; X < out.extents[0]; ++X) {
                local.clear();
                for_children(grid, X, Y, Z, [&](PhaseId id) { ++local[id]; });
                int best = 0;
                for (const auto& [id, c] : local) best = std::max(best, c);
                std::vector<PhaseId> tied;
                for (const auto& [id, c] : local)
                    if (c == best) tied.push_back(id);  // ascending id order

                PhaseId chosen = tied.front();
                if (tied.size() > 1 && tie_break == TieBreak::closest_fraction) {
                    double best_d = std::numeric_limits<double>::infinity();
                    for (PhaseId cand : tied) {
                        auto trial = running;
                        for (const auto& [id, c] : local) trial[id] -= c;
                        trial[cand] += children;
                        const double d = distance(trial);
                        if (d < best_d) {
                            best_d = d;
                            chosen = cand;
                        }
                    }
                }
                for (const auto& [id, c] : local) running[id] -= c;
                running[chosen] += children;
                out.at(X, Y, Z) = chosen;
            }
    return out;
}

Mesh build_uniform_mesh(const VoxelGrid& grid, const PhaseTable& table, int k) {
    if (k < 1) throw std::invalid_argument("subdivision must be >= 1");
    grid.validate(table);
    Lattice cells{grid.extents[0] * k, grid.extents[1] * k, grid.dim == 3 ? grid.extents[2] * k : 1};
    std::vector<Cell> leaves;
    leaves.reserve(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2]);
    for (int z = 0; z < cells[2]; ++z)
        for (int y = 0; y < cells[1]; ++y)
            for (int x = 0; x < cells[0]; ++x) {
                const PhaseId p = grid.at(x / k, y / k, grid.dim == 3 ? z / k : 0);
                leaves.push_back({{x, y, z}, 0, p, table.effective_E(p), table.effective_nu(p)});
            }
    return build_mesh(grid.dim, grid.spacing / k, cells, std::move(leaves),
                      grid.provenance + "/D" + std::to_string(cells[0]));
}

NdofCount count_ndof(const Mesh& mesh) {
    const long hanging = static_cast<long>(mesh.hanging.size());
    const long free_nodes = static_cast<long>(mesh.nodes.size()) - hanging;
    return {mesh.dim * free_nodes, mesh.dim * hanging};
}

namespace {

struct Leaf {
    Cell cell;
    bool alive = true;
    int parent = -1;                // leaf index of the merge that absorbed this leaf
    std::vector<int> children;      // for merged leaves
};

class Quadtree {
public:
    explicit Quadtree(const Mesh& mesh) : mesh_(mesh), dim_(mesh.dim), cells_(mesh.cells) {
        const auto n = static_cast<std::size_t>(cells_[0]) * cells_[1] * cells_[2];
        owner_.assign(n, -1);
        phase_.assign(n, 0);
        for (const auto& e : mesh.elements) {
            Leaf l;
            l.cell = {e.origin, e.level, e.phase, e.E, e.nu};
            leaves_.push_back(l);
            paint(static_cast<int>(leaves_.size()) - 1);
            for_cells(e.origin, e.edge(), [&](std::size_t c) { phase_[c] = e.phase; });
        }
    }

    /// Merges groups of `level` leaves into `level + 1`; returns number of merges kept.
    int step(int level, bool preserve_boundary) {
        const int ps = 2 << level;  // parent edge
        std::vector<int> created;
        const int nz = dim_ == 3 ? cells_[2] / ps : 1;
        for (int Z = 0; Z < nz; ++Z)
            for (int Y = 0; Y < cells_[1] / ps; ++Y)
                for (int X = 0; X < cells_[0] / ps; ++X) {
                    const Lattice o{X * ps, Y * ps, Z * ps};
                    std::vector<int> kids;
                    if (!collect_children(o, level, kids)) continue;
                    if (!mergeable(o, ps, preserve_boundary)) continue;
                    Leaf p;
                    const auto& c0 = leaves_[kids.front()].cell;
                    p.cell = {o, level + 1, c0.phase, c0.E, c0.nu};
                    p.children = kids;
                    leaves_.push_back(std::move(p));
                    const int id = static_cast<int>(leaves_.size()) - 1;
                    for (int k : kids) {
                        leaves_[k].alive = false;
                        leaves_[k].parent = id;
                    }
                    paint(id);
                    created.push_back(id);
                }

        // Undo merges that leave a neighbour more than one level finer.
        bool changed = true;
        while (changed) {
            changed = false;
            for (int id : created) {
                if (!leaves_[id].alive) continue;
                if (balanced(id)) continue;
                leaves_[id].alive = false;
                for (int k : leaves_[id].children) {
                    leaves_[k].alive = true;
                    leaves_[k].parent = -1;
                    paint(k);
                }
                changed = true;
            }
        }
        return static_cast<int>(std::count_if(created.begin(), created.end(), [&](int id) { return leaves_[id].alive; }));
    }

    Mesh build(const std::string& provenance) const {
        std::vector<Cell> cells;
        for (const auto& l : leaves_)
            if (l.alive) cells.push_back(l.cell);
        return build_mesh(dim_, mesh_.h, cells_, std::move(cells), provenance);
    }

    int max_level() const {
        int m = 0;
        for (const auto& l : leaves_)
            if (l.alive) m = std::max(m, l.cell.level);
        return m;
    }

private:
    std::size_t index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(cells_[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(cells_[1]) * z);
    }
    bool inside(int x, int y, int z) const {
        return x >= 0 && y >= 0 && z >= 0 && x < cells_[0] && y < cells_[1] && z < cells_[2];
    }

    template <class F>
    void for_cells(const Lattice& o, int s, F&& f) const {
        const int sz = dim_ == 3 ? s : 1;
        for (int z = 0; z < sz; ++z)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) f(index(o[0] + x, o[1] + y, o[2] + z));
    }

    void paint(int id) {
        const auto& c = leaves_[id].cell;
        for_cells(c.origin, 1 << c.level, [&](std::size_t i) { owner_[i] = id; });
    }

    bool collect_children(const Lattice& o, int level, std::vector<int>& kids) const {
        const int s = 1 << level;
        const int n = 1 << dim_;
        for (int c = 0; c < n; ++c) {
            const Lattice p{o[0] + s * (c & 1), o[1] + s * ((c >> 1) & 1), o[2] + (dim_ == 3 ? s * ((c >> 2) & 1) : 0)};
            const int id = owner_[index(p[0], p[1], p[2])];
            const auto& l = leaves_[id].cell;
            if (l.level != level || l.origin != p) return false;
            kids.push_back(id);
        }
        return true;
    }

    bool mergeable(const Lattice& o, int s, bool preserve_boundary) const {
        const PhaseId p = phase_[index(o[0], o[1], o[2])];
        bool ok = true;
        for_cells(o, s, [&](std::size_t i) { ok = ok && phase_[i] == p; });
        if (!ok) return false;
        // One-cell layer across each face of the block.
        for (int a = 0; a < dim_; ++a)
            for (int side = 0; side < 2; ++side) {
                const int coord = side == 0 ? o[a] - 1 : o[a] + s;
                if (coord < 0 || coord >= cells_[a]) {
                    if (preserve_boundary) return false;
                    continue;
                }
                const int b = (a + 1) % 3, c = (a + 2) % 3;
                const int nb = (b < dim_) ? s : 1;
                const int nc = (c < dim_) ? s : 1;
                for (int j = 0; j < nc; ++j)
                    for (int i = 0; i < nb; ++i) {
                        Lattice q{};
                        q[a] = coord;
                        q[b] = o[b] + (b < dim_ ? i : 0);
                        q[c] = o[c] + (c < dim_ ? j : 0);
                        if (phase_[index(q[0], q[1], q[2])] != p) return false;
                    }
            }
        return true;
    }

    bool balanced(int id) const {
        const auto& c = leaves_[id].cell;
        const int s = 1 << c.level;
        const int zlo = dim_ == 3 ? c.origin[2] - 1 : 0;
        const int zhi = dim_ == 3 ? c.origin[2] + s : 0;
        for (int z = zlo; z <= zhi; ++z)
            for (int y = c.origin[1] - 1; y <= c.origin[1] + s; ++y)
                for (int x = c.origin[0] - 1; x <= c.origin[0] + s; ++x) {
                    if (!inside(x, y, z)) continue;
                    if (leaves_[owner_[index(x, y, z)]].cell.level < c.level - 1) return false;
                }
        return true;
    }

    const Mesh& mesh_;
    int dim_;
    Lattice cells_;
    std::vector<Leaf> leaves_;
    std::vector<int> owner_;
    std::vector<PhaseId> phase_;
};

}  // namespace

std::pair<Mesh, CoarseningReport> adaptive_coarsen(const Mesh& mesh, int steps, bool preserve_boundary) {
    if (steps < 0) throw std::invalid_argument("adaptive coarsening steps must be >= 0");
    Quadtree tree(mesh);
    int level = tree.max_level();
    for (int s = 0; s < steps; ++s) {
        tree.step(level, preserve_boundary);
        level = tree.max_level();
        if (level < mesh.max_level() + s + 1) break;  // nothing merged at this level
    }
    std::string prov = mesh.provenance + "/adap" + std::to_string(steps);
    Mesh out = steps == 0 ? mesh : tree.build(prov);
    const auto before = count_ndof(mesh);
    const auto after = count_ndof(out);
    CoarseningReport r;
    r.ndof_before = before.ndof;
    r.ndof_after = after.ndof;
    r.deactivated_ndof = after.deactivated;
    r.reduction_factor = static_cast<double>(after.ndof) / static_cast<double>(before.ndof);
    return {std::move(out), r};
}

}  // namespace srd
