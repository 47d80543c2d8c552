#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "srd/microstructure.hpp"

namespace srd {

using Lattice = std::array<int, 3>;

/// Axis-aligned square/cube element on the integer lattice of the finest
/// element size. Corner nodes use lexicographic ordering: corner c sits at
/// origin + size * (c & 1, (c >> 1) & 1, (c >> 2) & 1).
struct Element {
    Lattice origin{0, 0, 0};
    int level = 0;  // edge = 2^level lattice units
    PhaseId phase = 0;
    double E = 0.0;
    double nu = 0.0;
    std::array<int, 8> nodes{};

    int edge() const { return 1 << level; }
};

/// Slave node interpolated from the corners of a coarser edge (2 masters,
/// weight 1/2) or face (4 masters, weight 1/4).
struct HangingConstraint {
    int slave = -1;
    std::vector<int> masters;
    std::vector<double> weights;
};

struct Mesh {
    int dim = 2;
    double h = 1.0;              // lattice unit in mm
    Lattice cells{1, 1, 1};      // lattice extents (level-0 cells per axis)
    std::vector<Lattice> nodes;  // lattice coordinates
    std::vector<Element> elements;
    std::vector<HangingConstraint> hanging;
    std::vector<int> hanging_of_node;           // node -> index into hanging, or -1
    std::vector<std::uint8_t> boundary_faces;   // node -> bit 2a (minus) / 2a+1 (plus) per axis a
    std::string provenance;

    int nodes_per_element() const { return 1 << dim; }
    std::size_t node_count() const { return nodes.size(); }
    bool is_hanging(int node) const { return hanging_of_node[node] >= 0; }
    int max_level() const;

    std::array<double, 3> coordinate(int node) const {
        const auto& p = nodes[node];
        return {p[0] * h, p[1] * h, p[2] * h};
    }
    double length(int axis) const { return cells[axis] * h; }
    double volume() const;
    double element_volume(const Element& e) const;

    /// Lattice cell -> owning element, size cells[0]*cells[1]*cells[2].
    std::vector<int> owner_raster() const;
    std::size_t cell_index(int x, int y, int z) const {
        return static_cast<std::size_t>(x) +
               static_cast<std::size_t>(cells[0]) * (static_cast<std::size_t>(y) + static_cast<std::size_t>(cells[1]) * z);
    }
};

/// Leaf description used to (re)build a mesh.
struct Cell {
    Lattice origin{0, 0, 0};
    int level = 0;
    PhaseId phase = 0;
    double E = 0.0;
    double nu = 0.0;
};

/// Numbers nodes, detects hanging nodes and tags boundary nodes. Cells must
/// tile the lattice; callers are responsible for 2:1 balance.
Mesh build_mesh(int dim, double h, Lattice cells, std::vector<Cell> leaves, std::string provenance = {});

/// Throws std::logic_error naming the first violated invariant: tiling,
/// 2:1 balance (including diagonal neighbours), constraint weights.
void check_mesh(const Mesh& mesh);

}  // namespace srd
