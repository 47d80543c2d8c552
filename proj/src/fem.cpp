#include "srd/fem.hpp"

#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>
#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

#ifdef SRD_HAVE_CHOLMOD
#include <Eigen/CholmodSupport>
#endif

#include "srd/coarsening.hpp"

namespace srd {

// ---------------------------------------------------------------------------
// Material and element kernels

ElasticityTensor phase_stiffness(double E, double nu, int dim) {
    if (!(E > 0.0)) throw std::invalid_argument("Young's modulus must be positive");
    if (!(nu > -1.0 && nu < 0.5)) throw std::invalid_argument("Poisson ratio must lie in (-1, 0.5)");
    const double lambda = E * nu / ((1.0 + nu) * (1.0 - 2.0 * nu));
    const double mu = E / (2.0 * (1.0 + nu));
    const int n = voigt_size(dim);
    Eigen::MatrixXd C = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i < dim; ++i) {
        for (int j = 0; j < dim; ++j) C(i, j) = lambda;
        C(i, i) = lambda + 2.0 * mu;
    }
    for (int i = dim; i < n; ++i) C(i, i) = mu;
    return {dim, C};
}

namespace {

// Voigt slot -> tensor indices.
constexpr int kPair2[3][2] = {{0, 0}, {1, 1}, {0, 1}};
constexpr int kPair3[6][2] = {{0, 0}, {1, 1}, {2, 2}, {0, 1}, {1, 2}, {0, 2}};

std::pair<int, int> voigt_pair(int dim, int k) {
    return dim == 2 ? std::pair{kPair2[k][0], kPair2[k][1]} : std::pair{kPair3[k][0], kPair3[k][1]};
}

}  // namespace

Eigen::Matrix3d strain_tensor(const Eigen::VectorXd& v, int dim) {
    Eigen::Matrix3d t = Eigen::Matrix3d::Zero();
    for (int k = 0; k < voigt_size(dim); ++k) {
        auto [i, j] = voigt_pair(dim, k);
        const double value = i == j ? v[k] : 0.5 * v[k];
        t(i, j) = value;
        t(j, i) = value;
    }
    return t;
}

Eigen::Matrix3d stress_tensor(const Eigen::VectorXd& v, int dim) {
    Eigen::Matrix3d t = Eigen::Matrix3d::Zero();
    for (int k = 0; k < voigt_size(dim); ++k) {
        auto [i, j] = voigt_pair(dim, k);
        t(i, j) = v[k];
        t(j, i) = v[k];
    }
    return t;
}

const Quadrature& gauss_quadrature(int dim) {
    static const auto make = [](int d) {
        Quadrature q;
        const double g[2] = {0.5 - 0.5 / std::sqrt(3.0), 0.5 + 0.5 / std::sqrt(3.0)};
        const int n = 1 << d;
        for (int c = 0; c < n; ++c) {
            q.points.push_back({g[c & 1], g[(c >> 1) & 1], d == 3 ? g[(c >> 2) & 1] : 0.0});
            q.weights.push_back(1.0 / n);
        }
        return q;
    };
    static const Quadrature q2 = make(2);
    static const Quadrature q3 = make(3);
    return dim == 2 ? q2 : q3;
}

Eigen::VectorXd shape_values(int dim, const std::array<double, 3>& xi) {
    const int n = 1 << dim;
    Eigen::VectorXd N(n);
    for (int c = 0; c < n; ++c) {
        double v = 1.0;
        for (int a = 0; a < dim; ++a) v *= ((c >> a) & 1) ? xi[a] : 1.0 - xi[a];
        N[c] = v;
    }
    return N;
}

Eigen::MatrixXd strain_displacement(int dim, const std::array<double, 3>& edge, const std::array<double, 3>& xi) {
    const int n = 1 << dim;
    Eigen::MatrixXd B = Eigen::MatrixXd::Zero(voigt_size(dim), n * dim);
    for (int c = 0; c < n; ++c) {
        double dN[3] = {0.0, 0.0, 0.0};
        for (int a = 0; a < dim; ++a) {
            double v = (((c >> a) & 1) ? 1.0 : -1.0) / edge[a];
            for (int b = 0; b < dim; ++b)
                if (b != a) v *= ((c >> b) & 1) ? xi[b] : 1.0 - xi[b];
            dN[a] = v;
        }
        if (dim == 2) {
            B(0, 2 * c) = dN[0];
            B(1, 2 * c + 1) = dN[1];
            B(2, 2 * c) = dN[1];
            B(2, 2 * c + 1) = dN[0];
        } else {
            const int o = 3 * c;
            B(0, o) = dN[0];
            B(1, o + 1) = dN[1];
            B(2, o + 2) = dN[2];
            B(3, o) = dN[1];
            B(3, o + 1) = dN[0];
            B(4, o + 1) = dN[2];
            B(4, o + 2) = dN[1];
            B(5, o) = dN[2];
            B(5, o + 2) = dN[0];
        }
    }
    return B;
}

Eigen::MatrixXd element_stiffness(int dim, const std::array<double, 3>& edge, const ElasticityTensor& C) {
    double vol = 1.0;
    for (int a = 0; a < dim; ++a) {
        if (!(edge[a] > 0.0)) throw std::invalid_argument("degenerate element: zero edge length");
        vol *= edge[a];
    }
    const auto& q = gauss_quadrature(dim);
    const int n = (1 << dim) * dim;
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t g = 0; g < q.points.size(); ++g) {
        const auto B = strain_displacement(dim, edge, q.points[g]);
        K.noalias() += (q.weights[g] * vol) * B.transpose() * C.voigt * B;
    }
    return 0.5 * (K + K.transpose());
}

std::string to_string(BoundaryCondition bc) {
    switch (bc) {
        case BoundaryCondition::kubc: return "KUBC";
        case BoundaryCondition::pbc: return "PBC";
        case BoundaryCondition::subc: return "SUBC";
    }
    return "?";
}

BoundaryCondition parse_bc(const std::string& s) {
    std::string l;
    for (char c : s) l.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (l == "kubc") return BoundaryCondition::kubc;
    if (l == "pbc") return BoundaryCondition::pbc;
    if (l == "subc") return BoundaryCondition::subc;
    throw std::invalid_argument("unknown boundary condition '" + s + "'");
}

// ---------------------------------------------------------------------------
// Constraint maps

namespace {

struct NodeExpr {
    std::vector<std::pair<int, double>> terms;  // primary node -> weight
    std::array<double, 3> shift{0.0, 0.0, 0.0};
};

std::uint64_t pack(const Lattice& p) {
    return static_cast<std::uint64_t>(p[0]) | (static_cast<std::uint64_t>(p[1]) << 21) |
           (static_cast<std::uint64_t>(p[2]) << 42);
}

}  // namespace

DofMap build_dof_map(const Mesh& mesh, ConstraintSet set) {
    const int d = mesh.dim;
    const int nn = static_cast<int>(mesh.nodes.size());

    std::unordered_map<std::uint64_t, int> lookup;
    std::vector<int> image(nn, -1);  // periodic representative
    if (set == ConstraintSet::pbc) {
        lookup.reserve(nn * 2);
        for (int i = 0; i < nn; ++i) lookup.emplace(pack(mesh.nodes[i]), i);
        std::vector<int> unmatched;
        for (int i = 0; i < nn; ++i) {
            if (!mesh.boundary_faces[i]) {
                image[i] = i;
                continue;
            }
            Lattice rep = mesh.nodes[i];
            bool ok = true;
            for (int a = 0; a < d; ++a) {
                // Every face node needs its counterpart on the opposite face.
                Lattice partner = mesh.nodes[i];
                if (partner[a] == 0) partner[a] = mesh.cells[a];
                else if (partner[a] == mesh.cells[a]) partner[a] = 0;
                else continue;
                auto it = lookup.find(pack(partner));
                if (it == lookup.end() || mesh.is_hanging(it->second) != mesh.is_hanging(i)) ok = false;
                if (rep[a] == mesh.cells[a]) rep[a] = 0;
            }
            if (!ok) {
                unmatched.push_back(i);
                continue;
            }
            image[i] = lookup.at(pack(rep));
        }
        if (!unmatched.empty()) {
            std::ostringstream msg;
            msg << "periodic boundary faces do not match; unmatched nodes:";
            for (std::size_t k = 0; k < unmatched.size() && k < 16; ++k) {
                const auto& p = mesh.nodes[unmatched[k]];
                msg << " " << unmatched[k] << "(" << p[0] << "," << p[1];
                if (d == 3) msg << "," << p[2];
                msg << ")";
            }
            if (unmatched.size() > 16) msg << " ... (" << unmatched.size() << " total)";
            throw std::invalid_argument(msg.str());
        }
    }

    // Which nodes carry unknowns of their own.
    std::vector<int> primary(nn, -1);
    int n_primary = 0;
    auto is_primary = [&](int i) {
        switch (set) {
            case ConstraintSet::none: return true;
            case ConstraintSet::hanging_only:
            case ConstraintSet::subc: return !mesh.is_hanging(i);
            case ConstraintSet::kubc: return !mesh.is_hanging(i) && mesh.boundary_faces[i] == 0;
            case ConstraintSet::pbc: {
                if (mesh.is_hanging(i) || image[i] != i) return false;
                bool corner = true;
                for (int a = 0; a < d; ++a) corner = corner && mesh.nodes[i][a] == 0;
                return !corner;  // origin corner is pinned to Ebar * x
            }
        }
        return true;
    };
    for (int i = 0; i < nn; ++i)
        if (is_primary(i)) primary[i] = n_primary++;

    std::vector<std::optional<NodeExpr>> memo(nn);
    std::function<const NodeExpr&(int, int)> resolve = [&](int i, int depth) -> const NodeExpr& {
        if (memo[i]) return *memo[i];
        if (depth > 64) throw std::logic_error("constraint chain too deep");
        NodeExpr e;
        const auto x = mesh.coordinate(i);
        if (primary[i] >= 0) {
            e.terms.push_back({primary[i], 1.0});
        } else if (set != ConstraintSet::none && mesh.is_hanging(i)) {
            const auto& hc = mesh.hanging[mesh.hanging_of_node[i]];
            std::map<int, double> acc;
            for (std::size_t k = 0; k < hc.masters.size(); ++k) {
                const auto& m = resolve(hc.masters[k], depth + 1);
                for (auto [p, w] : m.terms) acc[p] += hc.weights[k] * w;
                for (int a = 0; a < 3; ++a) e.shift[a] += hc.weights[k] * m.shift[a];
            }
            e.terms.assign(acc.begin(), acc.end());
        } else if (set == ConstraintSet::kubc) {
            e.shift = x;
        } else if (set == ConstraintSet::pbc) {
            if (image[i] == i) {
                e.shift = x;  // pinned corner
            } else {
                const auto& r = resolve(image[i], depth + 1);
                const auto xr = mesh.coordinate(image[i]);
                e.terms = r.terms;
                for (int a = 0; a < 3; ++a) e.shift[a] = r.shift[a] + x[a] - xr[a];
            }
        }
        memo[i] = std::move(e);
        return *memo[i];
    };

    // SUBC: pin the minimal set of dofs that removes rigid motions.
    std::vector<char> pinned(static_cast<std::size_t>(n_primary) * d, 0);
    if (set == ConstraintSet::subc) {
        auto corner = [&](Lattice p) {
            for (int i = 0; i < nn; ++i)
                if (mesh.nodes[i] == p) return primary[i];
            throw std::logic_error("corner node missing");
        };
        const int o = corner({0, 0, 0});
        for (int a = 0; a < d; ++a) pinned[o * d + a] = 1;
        const int px = corner({mesh.cells[0], 0, 0});
        for (int a = 1; a < d; ++a) pinned[px * d + a] = 1;
        if (d == 3) pinned[corner({0, mesh.cells[1], 0}) * d + 2] = 1;
    }
    std::vector<long> reduced_of(static_cast<std::size_t>(n_primary) * d, -1);
    long nr = 0;
    for (std::size_t k = 0; k < reduced_of.size(); ++k)
        if (!pinned[k]) reduced_of[k] = nr++;

    DofMap map;
    map.dim = d;
    map.reduced = nr;
    map.begin.assign(static_cast<std::size_t>(nn) * d + 1, 0);
    map.shift.resize(nn);
    for (int i = 0; i < nn; ++i) {
        const auto& e = resolve(i, 0);
        map.shift[i] = e.shift;
        for (int a = 0; a < d; ++a) {
            for (auto [p, w] : e.terms) {
                const long r = reduced_of[static_cast<std::size_t>(p) * d + a];
                if (r < 0) continue;
                map.cols.push_back(r);
                map.weights.push_back(w);
            }
            map.begin[static_cast<std::size_t>(i) * d + a + 1] = static_cast<long>(map.cols.size());
        }
    }
    return map;
}

namespace {

struct KernelCache {
    std::map<std::tuple<int, double, double>, Eigen::MatrixXd> K;
    const Eigen::MatrixXd& get(const Mesh& mesh, const Element& e) {
        auto key = std::make_tuple(e.level, e.E, e.nu);
        auto it = K.find(key);
        if (it != K.end()) return it->second;
        const double s = e.edge() * mesh.h;
        return K.emplace(key, element_stiffness(mesh.dim, {s, s, s}, phase_stiffness(e.E, e.nu, mesh.dim)))
            .first->second;
    }
};

std::array<double, 3> unit_strain_offset(const Eigen::Matrix3d& eps, const std::array<double, 3>& s) {
    return {eps(0, 0) * s[0] + eps(0, 1) * s[1] + eps(0, 2) * s[2], eps(1, 0) * s[0] + eps(1, 1) * s[1] + eps(1, 2) * s[2],
            eps(2, 0) * s[0] + eps(2, 1) * s[1] + eps(2, 2) * s[2]};
}

}  // namespace

SparseMatrix assemble_reduced(const Mesh& mesh, const DofMap& map) {
    const int d = mesh.dim;
    const int nl = mesh.nodes_per_element() * d;
    KernelCache cache;
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(mesh.elements.size() * static_cast<std::size_t>(nl * (nl + 1) / 2));
    std::vector<long> dofs(nl);
    for (const auto& e : mesh.elements) {
        const auto& Ke = cache.get(mesh, e);
        for (int c = 0; c < mesh.nodes_per_element(); ++c)
            for (int a = 0; a < d; ++a) dofs[c * d + a] = static_cast<long>(e.nodes[c]) * d + a;
        for (int l = 0; l < nl; ++l)
            for (long pl = map.begin[dofs[l]]; pl < map.begin[dofs[l] + 1]; ++pl) {
                const long ci = map.cols[pl];
                const double wi = map.weights[pl];
                for (int m = 0; m < nl; ++m)
                    for (long pm = map.begin[dofs[m]]; pm < map.begin[dofs[m] + 1]; ++pm) {
                        const long cj = map.cols[pm];
                        if (ci < cj) continue;
                        trip.emplace_back(static_cast<int>(ci), static_cast<int>(cj), wi * map.weights[pm] * Ke(l, m));
                    }
            }
    }
    SparseMatrix K(map.reduced, map.reduced);
    K.setFromTriplets(trip.begin(), trip.end());
    K.makeCompressed();
    return K;
}

AssembledSystem assemble(const Mesh& mesh) {
    AssembledSystem s;
    s.map = build_dof_map(mesh, ConstraintSet::hanging_only);
    s.K = assemble_reduced(mesh, s.map);
    return s;
}

// ---------------------------------------------------------------------------
// Linear solvers

class LinearSolver {
public:
    virtual ~LinearSolver() = default;
    virtual Eigen::VectorXd solve(const Eigen::VectorXd& b, int& iterations) const = 0;
};

namespace {

template <class Factorization>
class DirectSolver final : public LinearSolver {
public:
    explicit DirectSolver(const SparseMatrix& K) {
        llt_.compute(K);
        if (llt_.info() != Eigen::Success)
            throw NumericalError("direct factorization failed: system is singular or indefinite (n = " +
                                 std::to_string(K.rows()) + ")");
    }
    Eigen::VectorXd solve(const Eigen::VectorXd& b, int& iterations) const override {
        iterations = 1;
        Eigen::VectorXd x = llt_.solve(b);
        if (llt_.info() != Eigen::Success) throw NumericalError("direct solve failed");
        return x;
    }

private:
    Factorization llt_;
};

class CgSolver final : public LinearSolver {
public:
    CgSolver(const SparseMatrix& K, const SolverOptions& opt) {
        cg_.setTolerance(opt.tolerance);
        cg_.setMaxIterations(opt.max_iterations);
        cg_.compute(K);
    }
    Eigen::VectorXd solve(const Eigen::VectorXd& b, int& iterations) const override {
        Eigen::VectorXd x = cg_.solve(b);
        iterations = static_cast<int>(cg_.iterations());
        if (cg_.info() != Eigen::Success)
            throw NumericalError("conjugate gradients did not converge: relative residual " +
                                 std::to_string(cg_.error()) + " after " + std::to_string(cg_.iterations()) +
                                 " iterations");
        return x;
    }

private:
    Eigen::ConjugateGradient<SparseMatrix, Eigen::Lower, Eigen::DiagonalPreconditioner<double>> cg_;
};

std::unique_ptr<LinearSolver> make_solver(const SparseMatrix& K, const SolverOptions& opt, int dim) {
    const long limit = dim == 3 ? opt.direct_limit_3d : opt.direct_limit;
    const bool direct = opt.method == SolverOptions::Method::direct ||
                        (opt.method == SolverOptions::Method::automatic && K.rows() <= limit);
    if (!direct) return std::make_unique<CgSolver>(K, opt);
#ifdef SRD_HAVE_CHOLMOD
    return std::make_unique<DirectSolver<Eigen::CholmodSupernodalLLT<SparseMatrix, Eigen::Lower>>>(K);
#else
    return std::make_unique<DirectSolver<Eigen::SimplicialLDLT<SparseMatrix, Eigen::Lower>>>(K);
#endif
}

ConstraintSet constraint_set(BoundaryCondition bc) {
    switch (bc) {
        case BoundaryCondition::kubc: return ConstraintSet::kubc;
        case BoundaryCondition::pbc: return ConstraintSet::pbc;
        case BoundaryCondition::subc: return ConstraintSet::subc;
    }
    return ConstraintSet::none;
}

}  // namespace

// ---------------------------------------------------------------------------
// MicroProblem

MicroProblem::MicroProblem(const Mesh& mesh, BoundaryCondition bc, SolverOptions options)
    : mesh_(&mesh), bc_(bc), options_(options) {
    map_ = build_dof_map(mesh, constraint_set(bc));
    if (map_.reduced > 0) {
        K_ = assemble_reduced(mesh, map_);
        solver_ = make_solver(K_, options_, mesh.dim);
    }
}

MicroProblem::~MicroProblem() = default;
MicroProblem::MicroProblem(MicroProblem&&) noexcept = default;
MicroProblem& MicroProblem::operator=(MicroProblem&&) noexcept = default;

Eigen::VectorXd MicroProblem::rhs(const MacroLoad& load, Eigen::VectorXd& offsets) const {
    const Mesh& mesh = *mesh_;
    const int d = mesh.dim;
    const int npe = mesh.nodes_per_element();
    const int nl = npe * d;

    // Affine part g of the full displacement.
    offsets = Eigen::VectorXd::Zero(static_cast<long>(mesh.nodes.size()) * d);
    if (load.kind == MacroLoad::Kind::strain) {
        const Eigen::Matrix3d eps = strain_tensor(load.voigt, d);
        for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
            const auto g = unit_strain_offset(eps, map_.shift[i]);
            for (int a = 0; a < d; ++a) offsets[static_cast<long>(i) * d + a] = g[a];
        }
    }

    Eigen::VectorXd b = Eigen::VectorXd::Zero(map_.reduced);
    KernelCache cache;
    Eigen::VectorXd fe(nl), ge(nl);
    const Eigen::Matrix3d sig = load.kind == MacroLoad::Kind::stress ? stress_tensor(load.voigt, d) : Eigen::Matrix3d::Zero();
    for (const auto& e : mesh.elements) {
        fe.setZero();
        for (int c = 0; c < npe; ++c)
            for (int a = 0; a < d; ++a) ge[c * d + a] = offsets[static_cast<long>(e.nodes[c]) * d + a];
        if (load.kind == MacroLoad::Kind::stress) {
            // Consistent nodal forces of the uniform traction sigma * n.
            const double s = e.edge() * mesh.h;
            const double share = std::pow(s, d - 1) / (1 << (d - 1));
            for (int a = 0; a < d; ++a)
                for (int side = 0; side < 2; ++side) {
                    const bool on = side == 0 ? e.origin[a] == 0 : e.origin[a] + e.edge() == mesh.cells[a];
                    if (!on) continue;
                    const double n = side == 0 ? -1.0 : 1.0;
                    for (int c = 0; c < npe; ++c) {
                        if (((c >> a) & 1) != side) continue;
                        for (int k = 0; k < d; ++k) fe[c * d + k] += share * sig(k, a) * n;
                    }
                }
        }
        if (!ge.isZero(0.0)) fe.noalias() -= cache.get(mesh, e) * ge;
        for (int c = 0; c < npe; ++c)
            for (int a = 0; a < d; ++a) {
                const long dof = static_cast<long>(e.nodes[c]) * d + a;
                for (long p = map_.begin[dof]; p < map_.begin[dof + 1]; ++p) b[map_.cols[p]] += map_.weights[p] * fe[c * d + a];
            }
    }
    return b;
}

void MicroProblem::remove_rigid_motion(Eigen::VectorXd& u) const {
    const Mesh& mesh = *mesh_;
    const int d = mesh.dim;
    const auto& q = gauss_quadrature(d);
    Eigen::Matrix3d skew_int = Eigen::Matrix3d::Zero();
    Eigen::Vector3d u_int = Eigen::Vector3d::Zero();
    Eigen::Vector3d x_int = Eigen::Vector3d::Zero();
    for (const auto& e : mesh.elements) {
        const double s = e.edge() * mesh.h;
        const double vol = mesh.element_volume(e);
        for (std::size_t g = 0; g < q.points.size(); ++g) {
            const auto N = shape_values(d, q.points[g]);
            Eigen::Matrix3d grad = Eigen::Matrix3d::Zero();
            for (int c = 0; c < mesh.nodes_per_element(); ++c) {
                for (int a = 0; a < d; ++a) {
                    u_int[a] += q.weights[g] * vol * N[c] * u[static_cast<long>(e.nodes[c]) * d + a];
                    double dN = (((c >> a) & 1) ? 1.0 : -1.0) / s;
                    for (int b = 0; b < d; ++b)
                        if (b != a) dN *= ((c >> b) & 1) ? q.points[g][b] : 1.0 - q.points[g][b];
                    for (int k = 0; k < d; ++k) grad(k, a) += dN * u[static_cast<long>(e.nodes[c]) * d + k];
                }
            }
            skew_int += q.weights[g] * vol * 0.5 * (grad - grad.transpose());
            for (int a = 0; a < d; ++a) x_int[a] += q.weights[g] * vol * (e.origin[a] * mesh.h + q.points[g][a] * s);
        }
    }
    const double V = mesh.volume();
    const Eigen::Matrix3d W = skew_int / V;
    const Eigen::Vector3d t = (u_int - W * x_int) / V;
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
        const auto x = mesh.coordinate(i);
        const Eigen::Vector3d r = t + W * Eigen::Vector3d(x[0], x[1], x[2]);
        for (int a = 0; a < d; ++a) u[static_cast<long>(i) * d + a] -= r[a];
    }
}

MicroSolution MicroProblem::solve(const MacroLoad& load) const {
    const Mesh& mesh = *mesh_;
    const int d = mesh.dim;
    if (load.voigt.size() != voigt_size(d)) throw std::invalid_argument("macro load has wrong Voigt size");
    if (bc_ == BoundaryCondition::subc && load.kind != MacroLoad::Kind::stress)
        throw std::invalid_argument("SUBC requires a stress-driven load");
    if (bc_ != BoundaryCondition::subc && load.kind != MacroLoad::Kind::strain)
        throw std::invalid_argument(to_string(bc_) + " requires a strain-driven load");

    Eigen::VectorXd g;
    const Eigen::VectorXd b = rhs(load, g);
    MicroSolution s;
    s.dim = d;
    s.load = load;
    Eigen::VectorXd q = Eigen::VectorXd::Zero(map_.reduced);
    if (map_.reduced > 0) {
        q = solver_->solve(b, s.iterations);
        const double bn = b.norm();
        s.residual = bn > 0.0 ? (K_.selfadjointView<Eigen::Lower>() * q - b).norm() / bn : 0.0;
        if (!std::isfinite(s.residual)) throw NumericalError("solver returned non-finite values");
    }

    s.displacements = g;
    for (long dof = 0; dof < map_.full(); ++dof)
        for (long p = map_.begin[dof]; p < map_.begin[dof + 1]; ++p) s.displacements[dof] += map_.weights[p] * q[map_.cols[p]];
    if (bc_ == BoundaryCondition::subc) remove_rigid_motion(s.displacements);

    compute_qp_fields(mesh, s.displacements, s.qp_strain, s.qp_stress);

    // Reactions K u - f on dofs without an unknown of their own.
    s.constraint_forces = Eigen::VectorXd::Zero(map_.full());
    {
        KernelCache cache;
        const int npe = mesh.nodes_per_element();
        Eigen::VectorXd ue(npe * d);
        for (const auto& e : mesh.elements) {
            for (int c = 0; c < npe; ++c)
                for (int a = 0; a < d; ++a) ue[c * d + a] = s.displacements[static_cast<long>(e.nodes[c]) * d + a];
            const Eigen::VectorXd fe = cache.get(mesh, e) * ue;
            for (int c = 0; c < npe; ++c)
                for (int a = 0; a < d; ++a) s.constraint_forces[static_cast<long>(e.nodes[c]) * d + a] += fe[c * d + a];
        }
        for (long dof = 0; dof < map_.full(); ++dof) {
            const bool own = map_.begin[dof + 1] - map_.begin[dof] == 1 && map_.weights[map_.begin[dof]] == 1.0 &&
                             !mesh.is_hanging(static_cast<int>(dof / d));
            if (own) s.constraint_forces[dof] = 0.0;
        }
    }
    return s;
}

MicroSolution solve_micro(const Mesh& mesh, const MacroLoad& load, SolverOptions options) {
    return MicroProblem(mesh, load.bc, options).solve(load);
}

// ---------------------------------------------------------------------------
// Fields and norms

void compute_qp_fields(const Mesh& mesh, const Eigen::VectorXd& u, Eigen::MatrixXd& strain, Eigen::MatrixXd& stress) {
    const int d = mesh.dim;
    const int nv = voigt_size(d);
    const int npe = mesh.nodes_per_element();
    const auto& q = gauss_quadrature(d);
    const int nq = static_cast<int>(q.points.size());
    strain.resize(nv, static_cast<long>(mesh.elements.size()) * nq);
    stress.resize(nv, static_cast<long>(mesh.elements.size()) * nq);
    std::map<int, std::vector<Eigen::MatrixXd>> Bcache;
    std::map<std::pair<double, double>, Eigen::MatrixXd> Ccache;
    Eigen::VectorXd ue(npe * d);
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
        const auto& e = mesh.elements[i];
        auto& Bs = Bcache[e.level];
        if (Bs.empty()) {
            const double s = e.edge() * mesh.h;
            for (int g = 0; g < nq; ++g) Bs.push_back(strain_displacement(d, {s, s, s}, q.points[g]));
        }
        auto cit = Ccache.find({e.E, e.nu});
        if (cit == Ccache.end()) cit = Ccache.emplace(std::pair{e.E, e.nu}, phase_stiffness(e.E, e.nu, d).voigt).first;
        for (int c = 0; c < npe; ++c)
            for (int a = 0; a < d; ++a) ue[c * d + a] = u[static_cast<long>(e.nodes[c]) * d + a];
        for (int g = 0; g < nq; ++g) {
            const long col = static_cast<long>(i) * nq + g;
            strain.col(col) = Bs[g] * ue;
            stress.col(col) = cit->second * strain.col(col);
        }
    }
}

Eigen::VectorXd element_energy_squared(const Mesh& mesh, const MicroSolution& s) {
    const auto& q = gauss_quadrature(mesh.dim);
    const int nq = static_cast<int>(q.points.size());
    Eigen::VectorXd out(mesh.elements.size());
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
        const double vol = mesh.element_volume(mesh.elements[i]);
        double acc = 0.0;
        for (int g = 0; g < nq; ++g) {
            const long col = static_cast<long>(i) * nq + g;
            acc += q.weights[g] * vol * s.qp_stress.col(col).dot(s.qp_strain.col(col));
        }
        out[static_cast<long>(i)] = acc;
    }
    return out;
}

double energy_norm_squared(const Mesh& mesh, const MicroSolution& s) {
    const auto per = element_energy_squared(mesh, s);
    double sum = 0.0;
    for (long i = 0; i < per.size(); ++i) sum += per[i];
    return std::max(0.0, sum);
}

double energy_norm(const Mesh& mesh, const MicroSolution& s) { return std::sqrt(energy_norm_squared(mesh, s)); }

double energy_norm(const Mesh& mesh, const Eigen::VectorXd& u) {
    MicroSolution s;
    s.dim = mesh.dim;
    compute_qp_fields(mesh, u, s.qp_strain, s.qp_stress);
    return energy_norm(mesh, s);
}

VolumeAverages volume_averages(const Mesh& mesh, const MicroSolution& s) {
    const int nv = voigt_size(mesh.dim);
    const auto& q = gauss_quadrature(mesh.dim);
    const int nq = static_cast<int>(q.points.size());
    VolumeAverages avg;
    avg.strain = Eigen::VectorXd::Zero(nv);
    avg.stress = Eigen::VectorXd::Zero(nv);
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
        const double vol = mesh.element_volume(mesh.elements[i]);
        for (int g = 0; g < nq; ++g) {
            const long col = static_cast<long>(i) * nq + g;
            const double w = q.weights[g] * vol;
            avg.strain += w * s.qp_strain.col(col);
            avg.stress += w * s.qp_stress.col(col);
            avg.energy_density += w * s.qp_stress.col(col).dot(s.qp_strain.col(col));
        }
    }
    const double V = mesh.volume();
    avg.strain /= V;
    avg.stress /= V;
    avg.energy_density /= V;
    return avg;
}

HillMandel hill_mandel_residual(const Mesh& mesh, const MicroSolution& s) {
    const auto avg = volume_averages(mesh, s);
    const double macro = avg.stress.dot(avg.strain);
    const double diff = std::abs(avg.energy_density - macro);
    if (macro == 0.0) return {diff, false};
    return {diff / std::abs(macro), true};
}

}  // namespace srd
