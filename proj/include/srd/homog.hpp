#pragma once

#include <optional>
#include <string>
#include <vector>

#include "srd/coarsening.hpp"
#include "srd/fem.hpp"

namespace srd {

struct HomogenizationResult {
    ElasticityTensor C;
    BoundaryCondition bc = BoundaryCondition::pbc;
    std::string case_name;
    PhaseFractions phase_fractions;
    long ndof = 0;
    long deactivated_ndof = 0;
    double asymmetry = 0.0;         // ||C_raw - C_raw^T|| / ||C_raw|| before symmetrization
    double hill_mandel_max = 0.0;   // largest residual over the load states
};

/// One solve per unit load state. KUBC/PBC apply unit strains and read C
/// column by column from <sigma>; SUBC applies unit stresses, builds the
/// compliance from <eps> and inverts it.
HomogenizationResult homogenize(const Mesh& mesh, BoundaryCondition bc, const SolverOptions& options = {});
HomogenizationResult homogenize(const VoxelGrid& grid, const PhaseTable& table, BoundaryCondition bc,
                                const SolverOptions& options = {});

/// Volume fractions of the element phases.
PhaseFractions mesh_phase_fractions(const Mesh& mesh);

/// Arithmetic mean of the element stiffnesses and harmonic mean (inverse of
/// the mean compliance).
ElasticityTensor voigt_bound(const Mesh& mesh);
ElasticityTensor reuss_bound(const Mesh& mesh);

/// Smallest eigenvalue of the symmetric part of A - B.
double min_eigenvalue_of_difference(const ElasticityTensor& A, const ElasticityTensor& B);

// --- BC comparison -----------------------------------------------------------

struct BcRun {
    int size = 0;
    BoundaryCondition bc = BoundaryCondition::pbc;
    ElasticityTensor C;
};

struct BcComparisonRow {
    int size = 0;
    BoundaryCondition bc = BoundaryCondition::pbc;
    std::vector<double> deviation_percent;  // one entry per tracked component
};

struct BcComparison {
    int dim = 2;
    std::vector<std::string> components;  // e.g. "C11"
    int reference_size = 0;
    BoundaryCondition reference_bc = BoundaryCondition::pbc;
    std::vector<BcComparisonRow> rows;
};

/// Tracked components: 2d C11, C22, C33, C12; 3d C11, C44, C12.
std::vector<std::pair<int, int>> tracked_components(int dim);

BcComparison bc_comparison(const std::vector<BcRun>& runs, BoundaryCondition reference_bc, int reference_size);

/// Homogenizes a subvolume of every size under every BC and compares.
/// Subvolumes are centered unless `origin` is given (then all sizes share it).
BcComparison bc_comparison(const VoxelGrid& grid, const PhaseTable& table, const std::vector<int>& sizes,
                           const std::vector<BoundaryCondition>& bcs, BoundaryCondition reference_bc,
                           int reference_size, std::optional<std::array<int, 3>> origin = std::nullopt,
                           const SolverOptions& options = {});

// --- isotropy ----------------------------------------------------------------

struct IsotropyReport {
    int dim = 2;
    double E = 0.0;
    double nu = 0.0;
    double G = 0.0;
    bool physical = true;  // identified nu in (-1, 0.5) and E > 0
    std::vector<std::pair<std::string, double>> deviations;
};

/// Plane strain: S11 = (1 - nu^2)/E, S12 = -nu(1 + nu)/E.
IsotropyReport identify_isotropy_2d(const ElasticityTensor& C);
/// E = 1/S11, nu = -S12 E.
IsotropyReport identify_isotropy_3d(const ElasticityTensor& C);
IsotropyReport identify_isotropy(const ElasticityTensor& C);

}  // namespace srd
