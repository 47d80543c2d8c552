#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "srd/mesh.hpp"

namespace srd {

using SparseMatrix = Eigen::SparseMatrix<double>;

inline int voigt_size(int dim) { return dim == 2 ? 3 : 6; }

/// Symmetric Voigt matrix. 2d (plane strain): (11, 22, 12); 3d: (11, 22, 33,
/// 12, 23, 13). Strain vectors carry engineering shears.
struct ElasticityTensor {
    int dim = 3;
    Eigen::MatrixXd voigt;

    ElasticityTensor() = default;
    ElasticityTensor(int d, Eigen::MatrixXd m) : dim(d), voigt(std::move(m)) {}

    double operator()(int i, int j) const { return voigt(i, j); }
    ElasticityTensor inverse() const { return {dim, voigt.inverse()}; }
    double norm() const { return voigt.norm(); }
};

/// Isotropic stiffness; the 2d variant is the plane-strain restriction.
ElasticityTensor phase_stiffness(double E, double nu, int dim);

/// Voigt index pairs and helpers for moving between Voigt vectors and tensors.
Eigen::Matrix3d strain_tensor(const Eigen::VectorXd& voigt, int dim);  // engineering shears halved
Eigen::Matrix3d stress_tensor(const Eigen::VectorXd& voigt, int dim);

/// q=1 box element, 2^d Gauss points, lexicographic corner ordering, dofs
/// interleaved per node.
Eigen::MatrixXd element_stiffness(int dim, const std::array<double, 3>& edge, const ElasticityTensor& C);

/// Strain-displacement matrix at local coordinates xi in [0,1]^d.
Eigen::MatrixXd strain_displacement(int dim, const std::array<double, 3>& edge, const std::array<double, 3>& xi);
/// Shape function values at xi, lexicographic ordering.
Eigen::VectorXd shape_values(int dim, const std::array<double, 3>& xi);

/// Gauss points on [0,1]^d (local coordinates) with weights summing to 1.
struct Quadrature {
    std::vector<std::array<double, 3>> points;
    std::vector<double> weights;
};
const Quadrature& gauss_quadrature(int dim);

enum class BoundaryCondition { kubc, pbc, subc };
std::string to_string(BoundaryCondition bc);
BoundaryCondition parse_bc(const std::string& s);

struct MacroLoad {
    enum class Kind { strain, stress };
    Kind kind = Kind::strain;
    BoundaryCondition bc = BoundaryCondition::pbc;
    Eigen::VectorXd voigt;  // engineering shear strains, or stresses in MPa

    static MacroLoad strain(BoundaryCondition bc, Eigen::VectorXd eps) { return {Kind::strain, bc, std::move(eps)}; }
    static MacroLoad stress(Eigen::VectorXd sig) { return {Kind::stress, BoundaryCondition::subc, std::move(sig)}; }
};

struct SolverOptions {
    enum class Method { automatic, direct, cg };
    Method method = Method::automatic;
    double tolerance = 1e-10;      // relative residual for CG
    int max_iterations = 20000;
    // automatic: direct factorization up to this many unknowns. 3d fill-in
    // makes CG the faster choice much earlier.
    long direct_limit = 400000;
    long direct_limit_3d = 30000;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Full displacement dofs expressed through reduced unknowns:
/// u[n*d + a] = sum_k w_k q[col_k] + sum_b Ebar(a, b) * shift[n][b].
struct DofMap {
    int dim = 2;
    long reduced = 0;
    std::vector<long> begin;  // size full dofs + 1
    std::vector<long> cols;
    std::vector<double> weights;
    std::vector<std::array<double, 3>> shift;  // per node, mm

    long full() const { return static_cast<long>(begin.size()) - 1; }
};

enum class ConstraintSet { hanging_only, none, kubc, pbc, subc };
DofMap build_dof_map(const Mesh& mesh, ConstraintSet set);

/// Lower triangle of T^T K T for the given map.
SparseMatrix assemble_reduced(const Mesh& mesh, const DofMap& map);

/// Stiffness over the non-hanging dofs; rows() == count_ndof(mesh).ndof.
struct AssembledSystem {
    DofMap map;
    SparseMatrix K;  // lower triangle
};
AssembledSystem assemble(const Mesh& mesh);

struct MicroSolution {
    int dim = 2;
    Eigen::VectorXd displacements;  // node-major, all nodes
    Eigen::MatrixXd qp_strain;      // voigt x (elements * 2^d)
    Eigen::MatrixXd qp_stress;
    Eigen::VectorXd constraint_forces;  // reactions on prescribed / pinned dofs (node-major, zero elsewhere)
    MacroLoad load;
    int iterations = 0;
    double residual = 0.0;
};

class LinearSolver;

/// Factorizes the reduced system for one boundary condition and solves any
/// number of macro load states against it.
class MicroProblem {
public:
    MicroProblem(const Mesh& mesh, BoundaryCondition bc, SolverOptions options = {});
    ~MicroProblem();
    MicroProblem(MicroProblem&&) noexcept;
    MicroProblem& operator=(MicroProblem&&) noexcept;

    MicroSolution solve(const MacroLoad& load) const;

    BoundaryCondition bc() const { return bc_; }
    long unknowns() const { return map_.reduced; }
    const Mesh& mesh() const { return *mesh_; }

private:
    Eigen::VectorXd rhs(const MacroLoad& load, Eigen::VectorXd& offsets) const;
    void remove_rigid_motion(Eigen::VectorXd& u) const;

    const Mesh* mesh_;
    BoundaryCondition bc_;
    SolverOptions options_;
    DofMap map_;
    SparseMatrix K_;  // lower triangle of the reduced operator
    std::unique_ptr<LinearSolver> solver_;
};

MicroSolution solve_micro(const Mesh& mesh, const MacroLoad& load, SolverOptions options = {});

/// Strains and stresses at the Gauss points of every element.
void compute_qp_fields(const Mesh& mesh, const Eigen::VectorXd& u, Eigen::MatrixXd& strain, Eigen::MatrixXd& stress);

/// Squared energy norm sum_e sum_qp w sigma:eps.
double energy_norm_squared(const Mesh& mesh, const MicroSolution& s);
double energy_norm(const Mesh& mesh, const MicroSolution& s);
/// Energy norm of an arbitrary displacement field on the mesh.
double energy_norm(const Mesh& mesh, const Eigen::VectorXd& u);
/// Per-element squared energy.
Eigen::VectorXd element_energy_squared(const Mesh& mesh, const MicroSolution& s);

struct VolumeAverages {
    Eigen::VectorXd strain;  // engineering shears
    Eigen::VectorXd stress;
    double energy_density = 0.0;  // <sigma : eps>
};
VolumeAverages volume_averages(const Mesh& mesh, const MicroSolution& s);

struct HillMandel {
    double value = 0.0;
    bool relative = true;  // false when <sigma>:<eps> vanishes and `value` is absolute
};
HillMandel hill_mandel_residual(const Mesh& mesh, const MicroSolution& s);

}  // namespace srd
