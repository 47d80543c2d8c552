#include "srd/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <unordered_map>

namespace srd {

namespace {

std::uint64_t pack(const Lattice& p) {
    return static_cast<std::uint64_t>(p[0]) | (static_cast<std::uint64_t>(p[1]) << 21) |
           (static_cast<std::uint64_t>(p[2]) << 42);
}

}  // namespace

int Mesh::max_level() const {
    int m = 0;
    for (const auto& e : elements) m = std::max(m, e.level);
    return m;
}

double Mesh::volume() const {
    double v = 1.0;
    for (int a = 0; a < dim; ++a) v *= length(a);
    return v;
}

double Mesh::element_volume(const Element& e) const { return std::pow(e.edge() * h, dim); }

std::vector<int> Mesh::owner_raster() const {
    std::vector<int> owner(static_cast<std::size_t>(cells[0]) * cells[1] * cells[2], -1);
    for (std::size_t i = 0; i < elements.size(); ++i) {
        const auto& e = elements[i];
        const int s = e.edge();
        const int sz = dim == 3 ? s : 1;
        for (int z = 0; z < sz; ++z)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x)
                    owner[cell_index(e.origin[0] + x, e.origin[1] + y, e.origin[2] + z)] = static_cast<int>(i);
    }
    return owner;
}

Mesh build_mesh(int dim, double h, Lattice cells, std::vector<Cell> leaves, std::string provenance) {
    if (dim != 2 && dim != 3) throw std::invalid_argument("mesh dimension must be 2 or 3");
    if (!(h > 0.0)) throw std::invalid_argument("degenerate element: zero edge length");
    for (int a = 0; a < 3; ++a)
        if (cells[a] >= (1 << 20)) throw std::length_error("lattice too large");
    if (dim == 2) cells[2] = 1;

    std::sort(leaves.begin(), leaves.end(), [](const Cell& a, const Cell& b) {
        return std::tie(a.origin[2], a.origin[1], a.origin[0]) < std::tie(b.origin[2], b.origin[1], b.origin[0]);
    });

    Mesh m;
    m.dim = dim;
    m.h = h;
    m.cells = cells;
    m.provenance = std::move(provenance);
    const int npe = 1 << dim;

    // Unique corner points in (z, y, x) lexicographic order.
    std::vector<Lattice> points;
    points.reserve(leaves.size() * 2);
    for (const auto& c : leaves) {
        const int s = 1 << c.level;
        for (int k = 0; k < npe; ++k)
            points.push_back({c.origin[0] + s * (k & 1), c.origin[1] + s * ((k >> 1) & 1),
                              c.origin[2] + (dim == 3 ? s * ((k >> 2) & 1) : 0)});
    }
    std::sort(points.begin(), points.end(),
              [](const Lattice& a, const Lattice& b) { return std::tie(a[2], a[1], a[0]) < std::tie(b[2], b[1], b[0]); });
    points.erase(std::unique(points.begin(), points.end()), points.end());
    std::unordered_map<std::uint64_t, int> index;
    index.reserve(points.size() * 2);
    for (std::size_t i = 0; i < points.size(); ++i) index.emplace(pack(points[i]), static_cast<int>(i));
    m.nodes = std::move(points);

    m.elements.reserve(leaves.size());
    for (const auto& c : leaves) {
        Element e;
        e.origin = c.origin;
        e.level = c.level;
        e.phase = c.phase;
        e.E = c.E;
        e.nu = c.nu;
        const int s = 1 << c.level;
        for (int k = 0; k < npe; ++k)
            e.nodes[k] = index.at(pack({c.origin[0] + s * (k & 1), c.origin[1] + s * ((k >> 1) & 1),
                                        c.origin[2] + (dim == 3 ? s * ((k >> 2) & 1) : 0)}));
        m.elements.push_back(e);
    }

    // A lattice point at the midpoint of a coarse edge or the centre of a
    // coarse face that is also a node is hanging on that element.
    m.hanging_of_node.assign(m.nodes.size(), -1);
    auto try_hang = [&](const Lattice& p, std::vector<int> masters) {
        auto it = index.find(pack(p));
        if (it == index.end() || m.hanging_of_node[it->second] >= 0) return;
        HangingConstraint hc;
        hc.slave = it->second;
        hc.weights.assign(masters.size(), 1.0 / static_cast<double>(masters.size()));
        hc.masters = std::move(masters);
        m.hanging_of_node[it->second] = static_cast<int>(m.hanging.size());
        m.hanging.push_back(std::move(hc));
    };
    for (const auto& e : m.elements) {
        if (e.level == 0) continue;
        const int s = e.edge();
        const int half = s / 2;
        // Edges: pairs of corners differing in exactly one bit.
        for (int c = 0; c < npe; ++c)
            for (int a = 0; a < dim; ++a) {
                if (c & (1 << a)) continue;
                const int c2 = c | (1 << a);
                Lattice mid = m.nodes[e.nodes[c]];
                mid[a] += half;
                try_hang(mid, {e.nodes[c], e.nodes[c2]});
            }
        if (dim == 3) {
            for (int a = 0; a < 3; ++a)
                for (int side = 0; side < 2; ++side) {
                    std::vector<int> corners;
                    for (int c = 0; c < 8; ++c)
                        if (((c >> a) & 1) == side) corners.push_back(e.nodes[c]);
                    Lattice centre = e.origin;
                    for (int b = 0; b < 3; ++b) centre[b] += (b == a) ? side * s : half;
                    try_hang(centre, corners);
                }
        }
    }

    m.boundary_faces.assign(m.nodes.size(), 0);
    for (std::size_t i = 0; i < m.nodes.size(); ++i)
        for (int a = 0; a < dim; ++a) {
            if (m.nodes[i][a] == 0) m.boundary_faces[i] |= static_cast<std::uint8_t>(1u << (2 * a));
            if (m.nodes[i][a] == cells[a]) m.boundary_faces[i] |= static_cast<std::uint8_t>(1u << (2 * a + 1));
        }
    return m;
}

void check_mesh(const Mesh& mesh) {
    // Tiling: every lattice cell owned exactly once.
    std::vector<int> count(static_cast<std::size_t>(mesh.cells[0]) * mesh.cells[1] * mesh.cells[2], 0);
    double vol = 0.0;
    for (const auto& e : mesh.elements) {
        const int s = e.edge();
        const int sz = mesh.dim == 3 ? s : 1;
        for (int a = 0; a < mesh.dim; ++a)
            if (e.origin[a] < 0 || e.origin[a] + s > mesh.cells[a]) throw std::logic_error("element outside domain");
        for (int z = 0; z < sz; ++z)
            for (int y = 0; y < s; ++y)
                for (int x = 0; x < s; ++x) ++count[mesh.cell_index(e.origin[0] + x, e.origin[1] + y, e.origin[2] + z)];
        vol += mesh.element_volume(e);
    }
    for (int c : count)
        if (c != 1) throw std::logic_error("elements do not tile the domain");
    if (std::abs(vol - mesh.volume()) > 1e-10 * mesh.volume()) throw std::logic_error("element volumes do not sum to domain");

    // 2:1 balance over face, edge and vertex neighbours.
    const auto owner = mesh.owner_raster();
    for (const auto& e : mesh.elements) {
        const int s = e.edge();
        const int zlo = mesh.dim == 3 ? e.origin[2] - 1 : 0;
        const int zhi = mesh.dim == 3 ? e.origin[2] + s : 0;
        for (int z = zlo; z <= zhi; ++z)
            for (int y = e.origin[1] - 1; y <= e.origin[1] + s; ++y)
                for (int x = e.origin[0] - 1; x <= e.origin[0] + s; ++x) {
                    if (x < 0 || y < 0 || z < 0 || x >= mesh.cells[0] || y >= mesh.cells[1] || z >= mesh.cells[2])
                        continue;
                    const auto& n = mesh.elements[owner[mesh.cell_index(x, y, z)]];
                    if (std::abs(n.level - e.level) > 1) throw std::logic_error("2:1 balance violated");
                }
    }

    for (const auto& hc : mesh.hanging) {
        double sum = 0.0;
        for (double w : hc.weights) {
            if (!(w > 0.0 && w < 1.0)) throw std::logic_error("hanging weight outside (0,1)");
            sum += w;
        }
        if (std::abs(sum - 1.0) > 1e-14) throw std::logic_error("hanging weights do not sum to 1");
    }
}

}  // namespace srd
