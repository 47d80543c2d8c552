#pragma once

#include <optional>
#include <vector>

#include "srd/fem.hpp"

namespace srd {

/// Nodal stresses and strains recovered per adjacent phase.
struct RecoveredField {
    struct Entry {
        PhaseId phase = 0;
        Eigen::VectorXd stress;  // Voigt
        Eigen::VectorXd strain;  // Voigt, engineering shears
    };
    int dim = 2;
    std::vector<std::vector<Entry>> nodes;

    const Entry* find(int node, PhaseId phase) const;
};

/// Extrapolates Gauss-point values to element corners and averages them per
/// node and phase. Hanging nodes are interpolated from their masters.
RecoveredField recover_stresses(const Mesh& mesh, const MicroSolution& s);

struct ErrorReport {
    std::optional<double> e_mic;       // actual error against a reference solution
    double e_bar_mic = 0.0;            // recovery-based estimate
    std::optional<double> theta;       // e_bar_mic / e_mic
    Eigen::VectorXd element_estimated; // per element, energy-norm units
    std::optional<Eigen::VectorXd> element_actual;
    double solution_norm = 0.0;        // ||u_h||_A
};

/// e_bar^2 = sum_e sum_qp w (sigma* - sigma_h) : (eps* - eps_h), sigma* and
/// eps* interpolated from the element's own-phase nodal entries.
ErrorReport estimated_error(const Mesh& mesh, const MicroSolution& s);
ErrorReport estimated_error(const Mesh& mesh, const MicroSolution& s, const RecoveredField& recovered);

/// Integrates (sigma_ref - sigma_h) : (eps_ref - eps_h) over the reference
/// quadrature points, evaluating the coarse fields at each point. Fills
/// e_mic, element_actual and theta. Throws std::invalid_argument if the
/// reference mesh is not a nested refinement of `mesh`.
void actual_error(ErrorReport& report, const Mesh& mesh, const MicroSolution& s, const Mesh& ref_mesh,
                  const MicroSolution& ref_s);

/// Empty when e vanishes, i.e. e <= 1e-12 * scale (scale: e.g. ||u_h||_A).
std::optional<double> effectivity(double e_bar, double e, double scale = 0.0);

/// Coarse displacement field evaluated at the nodes of a nested reference mesh.
Eigen::VectorXd prolongate(const Mesh& mesh, const Eigen::VectorXd& u, const Mesh& ref_mesh);

struct RelativeErrorField {
    Eigen::VectorXd estimated;               // percent of the element energy norm
    std::optional<Eigen::VectorXd> actual;
    std::vector<int> vanishing_energy;       // elements whose energy norm is zero (reported as 0)
};
RelativeErrorField relative_error_field(const ErrorReport& report, const Mesh& mesh, const MicroSolution& s);

}  // namespace srd
