#include "srd/homog.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <stdexcept>

namespace srd {

PhaseFractions mesh_phase_fractions(const Mesh& mesh) {
    PhaseFractions f;
    for (const auto& e : mesh.elements) f[e.phase] += mesh.element_volume(e);
    const double V = mesh.volume();
    for (auto& [id, v] : f) v /= V;
    return f;
}

HomogenizationResult homogenize(const Mesh& mesh, BoundaryCondition bc, const SolverOptions& options) {
    const int nv = voigt_size(mesh.dim);
    MicroProblem problem(mesh, bc, options);
    Eigen::MatrixXd raw(nv, nv);
    double hm_max = 0.0;
    for (int k = 0; k < nv; ++k) {
        Eigen::VectorXd unit = Eigen::VectorXd::Zero(nv);
        unit[k] = 1.0;
        const MacroLoad load = bc == BoundaryCondition::subc ? MacroLoad::stress(unit) : MacroLoad::strain(bc, unit);
        MicroSolution s;
        try {
            s = problem.solve(load);
        } catch (const NumericalError& e) {
            throw NumericalError("load state " + std::to_string(k) + ": " + e.what());
        }
        const auto avg = volume_averages(mesh, s);
        raw.col(k) = bc == BoundaryCondition::subc ? avg.strain : avg.stress;
        hm_max = std::max(hm_max, hill_mandel_residual(mesh, s).value);
    }

    HomogenizationResult r;
    r.bc = bc;
    r.asymmetry = (raw - raw.transpose()).norm() / raw.norm();
    const Eigen::MatrixXd sym = 0.5 * (raw + raw.transpose());
    r.C = {mesh.dim, bc == BoundaryCondition::subc ? Eigen::MatrixXd(sym.inverse()) : sym};
    r.case_name = mesh.provenance;
    r.phase_fractions = mesh_phase_fractions(mesh);
    const auto n = count_ndof(mesh);
    r.ndof = n.ndof;
    r.deactivated_ndof = n.deactivated;
    r.hill_mandel_max = hm_max;
    return r;
}

HomogenizationResult homogenize(const VoxelGrid& grid, const PhaseTable& table, BoundaryCondition bc,
                                const SolverOptions& options) {
    const Mesh mesh = build_uniform_mesh(grid, table);
    return homogenize(mesh, bc, options);
}

ElasticityTensor voigt_bound(const Mesh& mesh) {
    const int nv = voigt_size(mesh.dim);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nv, nv);
    for (const auto& e : mesh.elements) sum += mesh.element_volume(e) * phase_stiffness(e.E, e.nu, mesh.dim).voigt;
    return {mesh.dim, sum / mesh.volume()};
}

ElasticityTensor reuss_bound(const Mesh& mesh) {
    const int nv = voigt_size(mesh.dim);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(nv, nv);
    for (const auto& e : mesh.elements)
        sum += mesh.element_volume(e) * phase_stiffness(e.E, e.nu, mesh.dim).inverse().voigt;
    return {mesh.dim, (sum / mesh.volume()).inverse()};
}

double min_eigenvalue_of_difference(const ElasticityTensor& A, const ElasticityTensor& B) {
    const Eigen::MatrixXd D = A.voigt - B.voigt;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (D + D.transpose()), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

std::vector<std::pair<int, int>> tracked_components(int dim) {
    if (dim == 2) return {{0, 0}, {1, 1}, {2, 2}, {0, 1}};
    return {{0, 0}, {3, 3}, {0, 1}};
}

BcComparison bc_comparison(const std::vector<BcRun>& runs, BoundaryCondition reference_bc, int reference_size) {
    const BcRun* ref = nullptr;
    for (const auto& r : runs)
        if (r.bc == reference_bc && r.size == reference_size) ref = &r;
    if (!ref)
        throw std::invalid_argument("missing reference run " + to_string(reference_bc) + " S" +
                                    std::to_string(reference_size));
    BcComparison out;
    out.dim = ref->C.dim;
    out.reference_bc = reference_bc;
    out.reference_size = reference_size;
    const auto comps = tracked_components(out.dim);
    for (auto [i, j] : comps) out.components.push_back("C" + std::to_string(i + 1) + std::to_string(j + 1));
    for (const auto& r : runs) {
        BcComparisonRow row{r.size, r.bc, {}};
        for (auto [i, j] : comps) row.deviation_percent.push_back(100.0 * (r.C(i, j) - ref->C(i, j)) / ref->C(i, j));
        out.rows.push_back(std::move(row));
    }
    return out;
}

BcComparison bc_comparison(const VoxelGrid& grid, const PhaseTable& table, const std::vector<int>& sizes,
                           const std::vector<BoundaryCondition>& bcs, BoundaryCondition reference_bc,
                           int reference_size, std::optional<std::array<int, 3>> origin,
                           const SolverOptions& options) {
    bool has_ref = false;
    for (int s : sizes)
        for (auto bc : bcs) has_ref |= s == reference_size && bc == reference_bc;
    if (!has_ref)
        throw std::invalid_argument("missing reference run " + to_string(reference_bc) + " S" +
                                    std::to_string(reference_size));
    std::vector<BcRun> runs;
    for (int s : sizes) {
        const VoxelGrid sub = extract_subvolume(grid, origin ? *origin : centered_origin(grid, s), s);
        const Mesh mesh = build_uniform_mesh(sub, table);
        for (auto bc : bcs) runs.push_back({s, bc, homogenize(mesh, bc, options).C});
    }
    return bc_comparison(runs, reference_bc, reference_size);
}

namespace {

void finish(IsotropyReport& r) {
    r.G = r.E / (2.0 * (1.0 + r.nu));
    r.physical = std::isfinite(r.E) && std::isfinite(r.nu) && r.E > 0 && r.nu > -1.0 && r.nu < 0.5;
}

}  // namespace

IsotropyReport identify_isotropy_2d(const ElasticityTensor& C) {
    if (C.dim != 2 || C.voigt.rows() != 3) throw std::invalid_argument("identify_isotropy_2d needs a 3x3 tensor");
    const Eigen::MatrixXd S = C.voigt.inverse();
    IsotropyReport r;
    r.dim = 2;
    // S11 = (1-nu)(1+nu)/E and S12 = -nu(1+nu)/E, so S12/S11 = -nu/(1-nu).
    r.nu = -S(0, 1) / (S(0, 0) - S(0, 1));
    r.E = (1.0 - r.nu * r.nu) / S(0, 0);
    finish(r);
    r.deviations = {{"(C11-C22)/C11", std::abs(C(0, 0) - C(1, 1)) / C(0, 0)},
                    {"|C33-G|/G", std::abs(C(2, 2) - r.G) / r.G},
                    {"|C13|/C11", std::abs(C(0, 2)) / C(0, 0)},
                    {"|C23|/C11", std::abs(C(1, 2)) / C(0, 0)}};
    return r;
}

IsotropyReport identify_isotropy_3d(const ElasticityTensor& C) {
    if (C.dim != 3 || C.voigt.rows() != 6) throw std::invalid_argument("identify_isotropy_3d needs a 6x6 tensor");
    const Eigen::MatrixXd S = C.voigt.inverse();
    IsotropyReport r;
    r.dim = 3;
    r.E = 1.0 / S(0, 0);
    r.nu = -S(0, 1) * r.E;
    finish(r);
    r.deviations = {{"(C11-C22)/C11", std::abs(C(0, 0) - C(1, 1)) / C(0, 0)},
                    {"(C11-C33)/C11", std::abs(C(0, 0) - C(2, 2)) / C(0, 0)},
                    {"(C44-G)/G", std::abs(C(3, 3) - r.G) / r.G},
                    {"(C55-G)/G", std::abs(C(4, 4) - r.G) / r.G},
                    {"(C66-G)/G", std::abs(C(5, 5) - r.G) / r.G},
                    {"C14/C11", std::abs(C(0, 3)) / C(0, 0)},
                    {"C24/C11", std::abs(C(1, 3)) / C(0, 0)},
                    {"C34/C11", std::abs(C(2, 3)) / C(0, 0)}};
    return r;
}

IsotropyReport identify_isotropy(const ElasticityTensor& C) {
    return C.dim == 2 ? identify_isotropy_2d(C) : identify_isotropy_3d(C);
}

}  // namespace srd
