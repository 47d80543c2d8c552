#include <doctest.h>

#include <set>

#include "srd/coarsening.hpp"
#include "srd/errors.hpp"

using namespace srd;

namespace {

MicroSolution solve_pbc(const Mesh& m, double scale = 1e-3, SolverOptions opt = {}) {
    Eigen::VectorXd eps = Eigen::VectorXd::Zero(voigt_size(m.dim));
    eps[0] = scale;
    eps[voigt_size(m.dim) - 1] = 0.5 * scale;
    return solve_micro(m, MacroLoad::strain(BoundaryCondition::pbc, eps), opt);
}

// Stands in for a reference solve: the coarse field carried onto the
// reference mesh.
MicroSolution prolongated_solution(const Mesh& m, const MicroSolution& s, const Mesh& ref) {
    MicroSolution r;
    r.dim = m.dim;
    r.load = s.load;
    r.displacements = prolongate(m, s.displacements, ref);
    compute_qp_fields(ref, r.displacements, r.qp_strain, r.qp_stress);
    return r;
}

bool touches_other_phase(const Mesh& m, std::size_t ei) {
    const auto& e = m.elements[ei];
    for (const auto& o : m.elements) {
        if (o.phase == e.phase) continue;
        for (int c = 0; c < m.nodes_per_element(); ++c)
            for (int k = 0; k < m.nodes_per_element(); ++k)
                if (e.nodes[c] == o.nodes[k]) return true;
    }
    return false;
}

}  // namespace

TEST_SUITE("errors") {

TEST_CASE("corner extrapolation is exact for linear fields") {
    for (int dim : {2, 3}) {
        VoxelGrid g(dim, {1, 1, 1}, 2.0);
        auto m = build_uniform_mesh(g, PhaseTable::concrete());
        const int nv = voigt_size(dim), n = 1 << dim;
        auto field = [&](const std::array<double, 3>& x) {
            Eigen::VectorXd v(nv);
            for (int k = 0; k < nv; ++k) v[k] = 1.0 + k + 2.0 * x[0] - 0.5 * k * x[1] + (dim == 3 ? 0.25 * x[2] : 0.0);
            return v;
        };
        MicroSolution s;
        s.dim = dim;
        s.qp_stress.resize(nv, n);
        s.qp_strain.resize(nv, n);
        const auto& q = gauss_quadrature(dim);
        for (int g2 = 0; g2 < n; ++g2) {
            std::array<double, 3> x{2.0 * q.points[g2][0], 2.0 * q.points[g2][1], 2.0 * q.points[g2][2]};
            s.qp_stress.col(g2) = field(x);
            s.qp_strain.col(g2) = 3.0 * field(x);
        }
        auto rec = recover_stresses(m, s);
        for (std::size_t node = 0; node < m.nodes.size(); ++node) {
            REQUIRE(rec.nodes[node].size() == 1);
            const auto x = m.coordinate(static_cast<int>(node));
            CHECK((rec.nodes[node][0].stress - field(x)).norm() <= 1e-12 * field(x).norm());
            CHECK((rec.nodes[node][0].strain - 3.0 * field(x)).norm() <= 1e-12 * field(x).norm());
        }
    }
}

TEST_CASE("homogeneous media: recovered field is exact and errors vanish") {
    for (int dim : {2, 3}) {
        CAPTURE(dim);
        const double E = 20000.0, nu = 0.3;
        const auto t = PhaseTable::two_phase(E, nu, E, nu);
        auto g = generate_synthetic(synthetic::SphereInclusion{0.5}, dim, {16, 16, 16}, 0.1);
        auto coarse = adaptive_coarsen(build_uniform_mesh(g, t), 2, true).first;
        REQUIRE(!coarse.hanging.empty());
        auto s = solve_pbc(coarse);
        const Eigen::VectorXd sig = s.load.voigt.size() ? phase_stiffness(E, nu, dim).voigt * s.load.voigt : Eigen::VectorXd();
        auto rec = recover_stresses(coarse, s);
        for (std::size_t node = 0; node < coarse.nodes.size(); ++node) {
            REQUIRE(!rec.nodes[node].empty());
            for (const auto& entry : rec.nodes[node]) CHECK((entry.stress - sig).norm() <= 1e-10 * sig.norm());
        }
        auto rep = estimated_error(coarse, s, rec);
        CHECK(rep.e_bar_mic <= 1e-10 * rep.solution_norm);

        auto ref = build_uniform_mesh(g, t, 2);
        SolverOptions tight;
        tight.tolerance = 1e-13;
        auto rs = solve_pbc(ref, 1e-3, tight);
        actual_error(rep, coarse, s, ref, rs);
        CHECK(*rep.e_mic <= 1e-9 * rep.solution_norm);

        auto rel = relative_error_field(rep, coarse, s);
        CHECK(rel.estimated.cwiseAbs().maxCoeff() <= 1e-8);
        CHECK(rel.vanishing_energy.empty());
    }
}

TEST_CASE("recovered field keys follow adjacent phases") {
    auto g = generate_synthetic(synthetic::Blobs{0.5, 3, 3.0}, 2, {32, 32, 1}, 0.1);
    auto m = adaptive_coarsen(build_uniform_mesh(g, PhaseTable::concrete()), 2, true).first;
    auto s = solve_pbc(m);
    auto rec = recover_stresses(m, s);
    std::vector<std::set<PhaseId>> adjacent(m.nodes.size());
    for (const auto& e : m.elements)
        for (int c = 0; c < 4; ++c) adjacent[e.nodes[c]].insert(e.phase);
    for (std::size_t node = 0; node < m.nodes.size(); ++node) {
        std::set<PhaseId> keys;
        for (const auto& entry : rec.nodes[node]) keys.insert(entry.phase);
        CHECK(keys.size() == rec.nodes[node].size());
        CHECK(keys == adjacent[node]);
    }
}

TEST_CASE("laminate interface carries two consistent entries") {
    const auto t = PhaseTable::two_phase(50000.0, 0.3, 20000.0, 0.3);
    auto g = generate_synthetic(synthetic::Laminate{0, 0.5}, 2, {8, 8, 1}, 0.1);
    auto m = build_uniform_mesh(g, t);
    Eigen::VectorXd eps(3);
    eps << 1e-3, 0.0, 0.0;
    auto s = solve_micro(m, MacroLoad::strain(BoundaryCondition::pbc, eps));
    auto rec = recover_stresses(m, s);
    int interface_nodes = 0;
    for (std::size_t node = 0; node < m.nodes.size(); ++node) {
        if (rec.nodes[node].size() != 2) continue;
        ++interface_nodes;
        const auto& a = rec.nodes[node][0];
        const auto& b = rec.nodes[node][1];
        CHECK(a.phase != b.phase);
        CHECK(std::abs(a.stress[0] - b.stress[0]) <= 1e-8 * std::abs(a.stress[0]));  // normal traction
        CHECK(std::abs(a.strain[1] - b.strain[1]) <= 1e-10);                         // tangential strain
        CHECK(std::abs(a.strain[0] - b.strain[0]) > 1e-5);                           // normal strain jumps
    }
    // Recovery follows mesh adjacency, so only the x = 4 interface is shared.
    CHECK(interface_nodes == 9);
}

TEST_CASE("actual error matches the energy norm of the difference field") {
    auto g = generate_synthetic(synthetic::Random{0.5, 77}, 2, {16, 16, 1}, 0.1);
    const auto t = PhaseTable::concrete();
    auto m = build_uniform_mesh(g, t);
    auto ref = build_uniform_mesh(g, t, 4);
    auto s = solve_pbc(m);
    auto rs = solve_pbc(ref);
    auto rep = estimated_error(m, s);
    actual_error(rep, m, s, ref, rs);
    const Eigen::VectorXd diff = rs.displacements - prolongate(m, s.displacements, ref);
    const double oracle = energy_norm(ref, diff);
    CHECK(std::abs(*rep.e_mic - oracle) <= 1e-10 * oracle);
    CHECK(std::abs(rep.element_actual->squaredNorm() - oracle * oracle) <= 1e-10 * oracle * oracle);
    REQUIRE(rep.theta);
    CHECK(*rep.theta == doctest::Approx(rep.e_bar_mic / *rep.e_mic));

    SUBCASE("prolongated solution gives zero error") {
        auto ps = prolongated_solution(m, s, ref);
        ErrorReport r2 = rep;
        actual_error(r2, m, s, ref, ps);
        CHECK(*r2.e_mic <= 1e-12 * rep.solution_norm);
        CHECK_FALSE(r2.theta);
    }
}

TEST_CASE("non-nested reference meshes are rejected") {
    auto g = generate_synthetic(synthetic::Random{0.5, 4}, 2, {4, 4, 1}, 0.1);
    const auto t = PhaseTable::concrete();
    auto m = build_uniform_mesh(g, t, 2);
    auto s = solve_pbc(m);
    auto rep = estimated_error(m, s);
    auto odd = build_uniform_mesh(g, t, 3);
    CHECK_THROWS_AS(actual_error(rep, m, s, odd, solve_pbc(odd)), std::invalid_argument);

    VoxelGrid flat(2, {8, 8, 1}, 0.1, 0);
    auto fine = build_uniform_mesh(flat, t);
    auto merged = adaptive_coarsen(fine, 1, false).first;
    auto fs = solve_pbc(fine);
    auto frep = estimated_error(fine, fs);
    CHECK_THROWS_AS(actual_error(frep, fine, fs, merged, solve_pbc(merged)), std::invalid_argument);
}

TEST_CASE("effectivity") {
    CHECK(*effectivity(2.5, 2.5) == 1.0);
    CHECK(*effectivity(1.0, 4.0) == 0.25);
    CHECK_FALSE(effectivity(1.0, 0.0));
    CHECK_FALSE(effectivity(1.0, 1e-14, 100.0));
    CHECK(effectivity(1.0, 1e-9, 100.0));
}

TEST_CASE("load scaling leaves relative quantities unchanged") {
    auto g = generate_synthetic(synthetic::Random{0.5, 13}, 2, {8, 8, 1}, 0.1);
    const auto t = PhaseTable::concrete();
    auto m = build_uniform_mesh(g, t);
    auto ref = build_uniform_mesh(g, t, 2);
    auto s1 = solve_pbc(m, 1e-3), s2 = solve_pbc(m, 2e-3);
    auto r1 = estimated_error(m, s1), r2 = estimated_error(m, s2);
    actual_error(r1, m, s1, ref, solve_pbc(ref, 1e-3));
    actual_error(r2, m, s2, ref, solve_pbc(ref, 2e-3));
    CHECK(r2.e_bar_mic == doctest::Approx(2.0 * r1.e_bar_mic).epsilon(1e-10));
    CHECK(*r2.e_mic == doctest::Approx(2.0 * *r1.e_mic).epsilon(1e-10));
    CHECK(*r2.theta == doctest::Approx(*r1.theta).epsilon(1e-10));
    auto f1 = relative_error_field(r1, m, s1), f2 = relative_error_field(r2, m, s2);
    CHECK((f1.estimated - f2.estimated).cwiseAbs().maxCoeff() <= 1e-10 * f1.estimated.cwiseAbs().maxCoeff());
    CHECK((*f1.actual - *f2.actual).cwiseAbs().maxCoeff() <= 1e-10 * f1.actual->cwiseAbs().maxCoeff());
}

TEST_CASE("errors concentrate at the interfaces of a laminate") {
    const auto t = PhaseTable::two_phase(50000.0, 0.3, 20000.0, 0.3);
    auto g = generate_synthetic(synthetic::Laminate{0, 0.5}, 2, {8, 8, 1}, 0.1);
    auto m = build_uniform_mesh(g, t);
    // Shear across the layers plus a transverse stretch makes the interfaces bite.
    Eigen::VectorXd eps(3);
    eps << 1e-3, -0.5e-3, 1e-3;
    auto s = solve_micro(m, MacroLoad::strain(BoundaryCondition::kubc, eps));
    auto rep = estimated_error(m, s);
    auto rel = relative_error_field(rep, m, s);
    double at = 0, away = 0;
    int n_at = 0, n_away = 0;
    long argmax = 0;
    rel.estimated.maxCoeff(&argmax);
    for (std::size_t e = 0; e < m.elements.size(); ++e) {
        if (touches_other_phase(m, e)) {
            at += rel.estimated[static_cast<long>(e)];
            ++n_at;
        } else {
            away += rel.estimated[static_cast<long>(e)];
            ++n_away;
        }
    }
    REQUIRE(n_at > 0);
    REQUIRE(n_away > 0);
    CHECK(at / n_at > away / n_away);
    CHECK(touches_other_phase(m, static_cast<std::size_t>(argmax)));
}

TEST_CASE("refining D lowers the estimate") {
    auto g = generate_synthetic(synthetic::Random{0.5, 19}, 2, {8, 8, 1}, 0.1);
    const auto t = PhaseTable::concrete();
    auto m1 = build_uniform_mesh(g, t), m2 = build_uniform_mesh(g, t, 2);
    auto e1 = estimated_error(m1, solve_pbc(m1)).e_bar_mic;
    auto e2 = estimated_error(m2, solve_pbc(m2)).e_bar_mic;
    CHECK(e2 < e1);
}

}
