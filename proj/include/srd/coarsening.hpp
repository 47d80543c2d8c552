#pragma once

#include <utility>

#include "srd/mesh.hpp"
#include "srd/microstructure.hpp"

namespace srd {

struct CoarseningReport {
    long ndof_before = 0;
    long ndof_after = 0;
    long deactivated_ndof = 0;
    double reduction_factor = 1.0;  // ndof_after / ndof_before
};

struct NdofCount {
    long ndof = 0;         // dim * free nodes
    long deactivated = 0;  // dim * hanging nodes
};

// --- R axis ----------------------------------------------------------------

/// Halves every extent. Each coarse voxel carries the arithmetic mean of its
/// children's effective E and nu; mixed voxels get phases appended to the
/// returned table.
std::pair<VoxelGrid, PhaseTable> coarsen_resolution_mixture(const VoxelGrid& grid, const PhaseTable& table);

enum class TieBreak {
    closest_fraction,  // greedy, raster order, L1 distance to the original fractions
    lowest_id,
};

/// Halves every extent; each coarse voxel takes the modal child phase.
VoxelGrid coarsen_resolution_majority(const VoxelGrid& grid, const PhaseFractions& original_fractions,
                                      TieBreak tie_break = TieBreak::closest_fraction);

// --- D axis ----------------------------------------------------------------

/// D = k * R elements per edge, each inheriting its voxel's phase.
Mesh build_uniform_mesh(const VoxelGrid& grid, const PhaseTable& table, int subdivision = 1);

/// Quadtree/octree merging of single-phase sibling groups away from phase
/// interfaces, with 2:1 balance. Each step merges groups of the current
/// finest-merged level into the next one.
std::pair<Mesh, CoarseningReport> adaptive_coarsen(const Mesh& mesh, int steps, bool preserve_boundary);

NdofCount count_ndof(const Mesh& mesh);

}  // namespace srd
