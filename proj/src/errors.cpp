#include "srd/errors.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace srd {

namespace {

// Linear extrapolation from the Gauss points (0.5 -+ 0.5/sqrt3) to the ends
// of [0,1]: end0 = (1+c) v- - c v+, end1 = -c v- + (1+c) v+.
const double kExtra = (std::sqrt(3.0) - 1.0) / 2.0;

/// Corner value c from Gauss-point values, both in lexicographic order.
Eigen::MatrixXd extrapolation_matrix(int dim) {
    const int n = 1 << dim;
    Eigen::MatrixXd M(n, n);
    for (int c = 0; c < n; ++c)
        for (int q = 0; q < n; ++q) {
            double w = 1.0;
            for (int a = 0; a < dim; ++a) w *= (((c >> a) & 1) == ((q >> a) & 1)) ? 1.0 + kExtra : -kExtra;
            M(c, q) = w;
        }
    return M;
}

Eigen::VectorXd gather(const Mesh& mesh, const Element& e, const Eigen::VectorXd& u) {
    const int n = mesh.nodes_per_element(), d = mesh.dim;
    Eigen::VectorXd ue(n * d);
    for (int c = 0; c < n; ++c)
        for (int a = 0; a < d; ++a) ue[c * d + a] = u[static_cast<long>(e.nodes[c]) * d + a];
    return ue;
}

std::array<double, 3> edge_lengths(const Mesh& mesh, const Element& e) {
    const double s = e.edge() * mesh.h;
    return {s, s, mesh.dim == 3 ? s : 1.0};
}

}  // namespace

const RecoveredField::Entry* RecoveredField::find(int node, PhaseId phase) const {
    for (const auto& e : nodes[node])
        if (e.phase == phase) return &e;
    return nullptr;
}

RecoveredField recover_stresses(const Mesh& mesh, const MicroSolution& s) {
    const int d = mesh.dim, nv = voigt_size(d), n = mesh.nodes_per_element();
    const Eigen::MatrixXd X = extrapolation_matrix(d);
    RecoveredField out;
    out.dim = d;
    out.nodes.resize(mesh.nodes.size());
    std::vector<std::vector<int>> counts(mesh.nodes.size());

    for (std::size_t ei = 0; ei < mesh.elements.size(); ++ei) {
        const auto& e = mesh.elements[ei];
        const long base = static_cast<long>(ei) * n;
        // voigt x corners
        const Eigen::MatrixXd sig = s.qp_stress.middleCols(base, n) * X.transpose();
        const Eigen::MatrixXd eps = s.qp_strain.middleCols(base, n) * X.transpose();
        for (int c = 0; c < n; ++c) {
            const int node = e.nodes[c];
            if (mesh.is_hanging(node)) continue;
            auto& list = out.nodes[node];
            std::size_t k = 0;
            while (k < list.size() && list[k].phase != e.phase) ++k;
            if (k == list.size()) {
                list.push_back({e.phase, Eigen::VectorXd::Zero(nv), Eigen::VectorXd::Zero(nv)});
                counts[node].push_back(0);
            }
            list[k].stress += sig.col(c);
            list[k].strain += eps.col(c);
            ++counts[node][k];
        }
    }
    for (std::size_t node = 0; node < out.nodes.size(); ++node)
        for (std::size_t k = 0; k < out.nodes[node].size(); ++k) {
            out.nodes[node][k].stress /= counts[node][k];
            out.nodes[node][k].strain /= counts[node][k];
        }

    // Hanging nodes: one entry per adjacent phase, interpolated from the
    // masters' entries of that phase. Masters lacking the phase (not produced
    // by the coarsening rules, which keep interfaces fine) fall back to the
    // direct average at the slave.
    std::vector<std::vector<PhaseId>> slave_phases(mesh.nodes.size());
    for (const auto& e : mesh.elements)
        for (int c = 0; c < n; ++c) {
            const int node = e.nodes[c];
            if (!mesh.is_hanging(node)) continue;
            auto& ph = slave_phases[node];
            if (std::find(ph.begin(), ph.end(), e.phase) == ph.end()) ph.push_back(e.phase);
        }
    std::vector<std::pair<int, RecoveredField::Entry>> fallback;
    for (const auto& hc : mesh.hanging) {
        for (PhaseId p : slave_phases[hc.slave]) {
            RecoveredField::Entry entry{p, Eigen::VectorXd::Zero(nv), Eigen::VectorXd::Zero(nv)};
            bool complete = true;
            for (std::size_t m = 0; m < hc.masters.size() && complete; ++m) {
                // Masters of a 2:1 balanced mesh are never hanging themselves.
                const auto* me = out.find(hc.masters[m], p);
                if (!me) {
                    complete = false;
                    break;
                }
                entry.stress += hc.weights[m] * me->stress;
                entry.strain += hc.weights[m] * me->strain;
            }
            if (complete) out.nodes[hc.slave].push_back(std::move(entry));
            else fallback.push_back({hc.slave, {p, Eigen::VectorXd(), Eigen::VectorXd()}});
        }
    }
    for (auto& [node, entry] : fallback) {
        Eigen::VectorXd sig = Eigen::VectorXd::Zero(nv), eps = Eigen::VectorXd::Zero(nv);
        int count = 0;
        for (std::size_t ei = 0; ei < mesh.elements.size(); ++ei) {
            const auto& e = mesh.elements[ei];
            if (e.phase != entry.phase) continue;
            for (int c = 0; c < n; ++c)
                if (e.nodes[c] == node) {
                    const long base = static_cast<long>(ei) * n;
                    sig += s.qp_stress.middleCols(base, n) * X.row(c).transpose();
                    eps += s.qp_strain.middleCols(base, n) * X.row(c).transpose();
                    ++count;
                }
        }
        entry.stress = sig / count;
        entry.strain = eps / count;
        out.nodes[node].push_back(std::move(entry));
    }
    return out;
}

ErrorReport estimated_error(const Mesh& mesh, const MicroSolution& s) {
    return estimated_error(mesh, s, recover_stresses(mesh, s));
}

ErrorReport estimated_error(const Mesh& mesh, const MicroSolution& s, const RecoveredField& rec) {
    const int d = mesh.dim, nv = voigt_size(d), n = mesh.nodes_per_element();
    const auto& q = gauss_quadrature(d);
    ErrorReport r;
    r.element_estimated = Eigen::VectorXd::Zero(static_cast<long>(mesh.elements.size()));
    double total = 0.0;
    for (std::size_t ei = 0; ei < mesh.elements.size(); ++ei) {
        const auto& e = mesh.elements[ei];
        const double vol = mesh.element_volume(e);
        Eigen::MatrixXd sig_n(nv, n), eps_n(nv, n);
        for (int c = 0; c < n; ++c) {
            const auto* entry = rec.find(e.nodes[c], e.phase);
            if (!entry) throw std::logic_error("recovered field lacks an own-phase entry");
            sig_n.col(c) = entry->stress;
            eps_n.col(c) = entry->strain;
        }
        double sum = 0.0;
        for (int g = 0; g < n; ++g) {
            const Eigen::VectorXd N = shape_values(d, q.points[g]);
            const long col = static_cast<long>(ei) * n + g;
            const Eigen::VectorXd ds = sig_n * N - s.qp_stress.col(col);
            const Eigen::VectorXd de = eps_n * N - s.qp_strain.col(col);
            sum += q.weights[g] * vol * ds.dot(de);
        }
        sum = std::max(sum, 0.0);
        r.element_estimated[static_cast<long>(ei)] = std::sqrt(sum);
        total += sum;
    }
    r.e_bar_mic = std::sqrt(total);
    r.solution_norm = energy_norm(mesh, s);
    return r;
}

namespace {

struct Embedding {
    int ratio = 1;            // coarse lattice unit / reference lattice unit
    std::vector<int> parent;  // reference element -> coarse element
};

Embedding embed(const Mesh& mesh, const Mesh& ref) {
    if (mesh.dim != ref.dim) throw std::invalid_argument("reference mesh dimension differs");
    const double r = mesh.h / ref.h;
    const int ratio = static_cast<int>(std::lround(r));
    if (ratio < 1 || std::abs(r - ratio) > 1e-9 * r)
        throw std::invalid_argument("reference mesh is not nested: spacing ratio " + std::to_string(r));
    for (int a = 0; a < mesh.dim; ++a)
        if (ref.cells[a] != mesh.cells[a] * ratio)
            throw std::invalid_argument("reference mesh is not nested: extent mismatch on axis " + std::to_string(a));
    const auto owner = mesh.owner_raster();
    Embedding emb{ratio, std::vector<int>(ref.elements.size())};
    for (std::size_t i = 0; i < ref.elements.size(); ++i) {
        const auto& re = ref.elements[i];
        Lattice c{0, 0, 0};
        for (int a = 0; a < mesh.dim; ++a) c[a] = re.origin[a] / ratio;
        const int parent = owner[mesh.cell_index(c[0], c[1], c[2])];
        const auto& pe = mesh.elements[parent];
        for (int a = 0; a < mesh.dim; ++a) {
            const long lo = static_cast<long>(pe.origin[a]) * ratio;
            const long hi = lo + static_cast<long>(pe.edge()) * ratio;
            if (re.origin[a] < lo || re.origin[a] + re.edge() > hi)
                throw std::invalid_argument("reference mesh is not nested: element " + std::to_string(i) +
                                            " crosses a coarse element boundary");
        }
        emb.parent[i] = parent;
    }
    return emb;
}

std::array<double, 3> local_in(const Mesh& mesh, const Element& pe, int ratio, const std::array<double, 3>& ref_lattice) {
    std::array<double, 3> xi{0.0, 0.0, 0.0};
    for (int a = 0; a < mesh.dim; ++a) xi[a] = (ref_lattice[a] / ratio - pe.origin[a]) / pe.edge();
    return xi;
}

}  // namespace

void actual_error(ErrorReport& report, const Mesh& mesh, const MicroSolution& s, const Mesh& ref, const MicroSolution& rs) {
    const Embedding emb = embed(mesh, ref);
    const int d = mesh.dim, n = mesh.nodes_per_element();
    const auto& q = gauss_quadrature(d);
    Eigen::VectorXd per = Eigen::VectorXd::Zero(static_cast<long>(mesh.elements.size()));
    std::vector<Eigen::VectorXd> ue(mesh.elements.size());
    std::vector<ElasticityTensor> Ce(mesh.elements.size());
    for (std::size_t i = 0; i < mesh.elements.size(); ++i) {
        ue[i] = gather(mesh, mesh.elements[i], s.displacements);
        Ce[i] = phase_stiffness(mesh.elements[i].E, mesh.elements[i].nu, d);
    }
    for (std::size_t i = 0; i < ref.elements.size(); ++i) {
        const auto& re = ref.elements[i];
        const int p = emb.parent[i];
        const auto& pe = mesh.elements[p];
        const double vol = ref.element_volume(re);
        const auto pedge = edge_lengths(mesh, pe);
        double sum = 0.0;
        for (int g = 0; g < n; ++g) {
            std::array<double, 3> x{0.0, 0.0, 0.0};
            for (int a = 0; a < d; ++a) x[a] = re.origin[a] + q.points[g][a] * re.edge();
            const auto xi = local_in(mesh, pe, emb.ratio, x);
            const Eigen::VectorXd eps_h = strain_displacement(d, pedge, xi) * ue[p];
            const Eigen::VectorXd sig_h = Ce[p].voigt * eps_h;
            const long col = static_cast<long>(i) * n + g;
            sum += q.weights[g] * vol * (rs.qp_stress.col(col) - sig_h).dot(rs.qp_strain.col(col) - eps_h);
        }
        per[p] += sum;
    }
    double total = 0.0;
    for (long i = 0; i < per.size(); ++i) {
        per[i] = std::max(per[i], 0.0);
        total += per[i];
    }
    report.e_mic = std::sqrt(total);
    report.element_actual = per.cwiseSqrt();
    report.theta = effectivity(report.e_bar_mic, *report.e_mic, report.solution_norm);
}

std::optional<double> effectivity(double e_bar, double e, double scale) {
    if (!(e > 1e-12 * scale)) return std::nullopt;
    return e_bar / e;
}

Eigen::VectorXd prolongate(const Mesh& mesh, const Eigen::VectorXd& u, const Mesh& ref) {
    const Embedding emb = embed(mesh, ref);
    const int d = mesh.dim, n = mesh.nodes_per_element();
    Eigen::VectorXd out(static_cast<long>(ref.nodes.size()) * d);
    std::vector<bool> done(ref.nodes.size(), false);
    for (std::size_t i = 0; i < ref.elements.size(); ++i) {
        const auto& re = ref.elements[i];
        const auto& pe = mesh.elements[emb.parent[i]];
        const Eigen::VectorXd ue = gather(mesh, pe, u);
        for (int c = 0; c < n; ++c) {
            const int node = re.nodes[c];
            if (done[node]) continue;
            const auto& L = ref.nodes[node];
            const auto xi = local_in(mesh, pe, emb.ratio, {double(L[0]), double(L[1]), double(L[2])});
            const Eigen::VectorXd N = shape_values(d, xi);
            for (int a = 0; a < d; ++a) {
                double v = 0.0;
                for (int k = 0; k < n; ++k) v += N[k] * ue[k * d + a];
                out[static_cast<long>(node) * d + a] = v;
            }
            done[node] = true;
        }
    }
    return out;
}

RelativeErrorField relative_error_field(const ErrorReport& report, const Mesh& mesh, const MicroSolution& s) {
    const Eigen::VectorXd energy = element_energy_squared(mesh, s);
    RelativeErrorField f;
    const long ne = energy.size();
    f.estimated = Eigen::VectorXd::Zero(ne);
    if (report.element_actual) f.actual = Eigen::VectorXd::Zero(ne);
    for (long i = 0; i < ne; ++i) {
        if (!(energy[i] > 0.0)) {
            f.vanishing_energy.push_back(static_cast<int>(i));
            continue;
        }
        const double norm = std::sqrt(energy[i]);
        f.estimated[i] = 100.0 * report.element_estimated[i] / norm;
        if (f.actual) (*f.actual)[i] = 100.0 * (*report.element_actual)[i] / norm;
    }
    return f;
}

}  // namespace srd
