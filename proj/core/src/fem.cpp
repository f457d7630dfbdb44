#include "stvf/fem.hpp"

#include <algorithm>
#include <cmath>

namespace stvf {

ElementMatrix element_mass_matrix(double area)
{
    const double d = area / 6.0;
    const double o = area / 12.0;
    return {{{d, o, o}, {o, d, o}, {o, o, d}}};
}

ElementMatrix element_stiffness_matrix(const Mesh& mesh, Index element)
{
    ElementMatrix out{};
    const double area = mesh.area(element);
    for (int a = 0; a < 3; ++a) {
        const Point2& ga = mesh.basis_gradient(element, a);
        for (int b = 0; b < 3; ++b) {
            const Point2& gb = mesh.basis_gradient(element, b);
            out[a][b] = area * (ga.x * gb.x + ga.y * gb.y);
        }
    }
    return out;
}

namespace {

template <typename ElementFn>
CsrMatrix assemble_full(const Mesh& mesh, ElementFn&& element_matrix)
{
    std::vector<CsrMatrix::Triplet> triplets;
    triplets.reserve(9 * mesh.num_elements());
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const Triangle& t = mesh.triangle(k);
        const ElementMatrix em = element_matrix(k);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                triplets.push_back({t[a], t[b], em[a][b]});
            }
        }
    }
    return CsrMatrix::from_triplets(mesh.num_nodes(), mesh.num_nodes(), std::move(triplets));
}

}  // namespace

CsrMatrix assemble_mass(const Mesh& mesh)
{
    return assemble_full(mesh, [&](Index k) { return element_mass_matrix(mesh.area(k)); });
}

CsrMatrix assemble_stiffness(const Mesh& mesh)
{
    return assemble_full(mesh, [&](Index k) { return element_stiffness_matrix(mesh, k); });
}

Point2 element_gradient(const Mesh& mesh, std::span<const double> u, Index element)
{
    if (u.size() != mesh.num_nodes()) {
        throw std::invalid_argument("element_gradient: vector length differs from node count");
    }
    const Triangle& t = mesh.triangle(element);
    Point2 g;
    for (int a = 0; a < 3; ++a) {
        const Point2& ga = mesh.basis_gradient(element, a);
        g.x += u[t[a]] * ga.x;
        g.y += u[t[a]] * ga.y;
    }
    return g;
}

Vector tv_operator_load(const Mesh& mesh, std::span<const double> u, double eps)
{
    if (eps < 0.0) {
        throw std::invalid_argument("tv_operator_load: eps must be nonnegative");
    }
    Vector b(mesh.num_nodes(), 0.0);
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const Point2 g = element_gradient(mesh, u, k);
        const double denom = std::sqrt(g.x * g.x + g.y * g.y + eps * eps);
        if (denom == 0.0) {
            throw std::domain_error("tv_operator_load: zero gradient with eps = 0");
        }
        const double scale = mesh.area(k) / denom;
        const Triangle& t = mesh.triangle(k);
        for (int a = 0; a < 3; ++a) {
            if (mesh.is_boundary(t[a])) {
                continue;
            }
            const Point2& ga = mesh.basis_gradient(k, a);
            b[t[a]] += scale * (g.x * ga.x + g.y * ga.y);
        }
    }
    return b;
}

FemSpace::FemSpace(Mesh mesh)
    : mesh_(std::move(mesh)),
      mass_(assemble_mass(mesh_)),
      stiffness_(assemble_stiffness(mesh_))
{
    free_index_.assign(mesh_.num_nodes(), CsrMatrix::npos);
    const auto& free = mesh_.free_nodes();
    for (Index i = 0; i < free.size(); ++i) {
        free_index_[free[i]] = i;
    }

    std::vector<CsrMatrix::Triplet> m_trip;
    std::vector<CsrMatrix::Triplet> a_trip;
    for (Index k = 0; k < mesh_.num_elements(); ++k) {
        const Triangle& t = mesh_.triangle(k);
        const ElementMatrix me = element_mass_matrix(mesh_.area(k));
        const ElementMatrix ae = element_stiffness_matrix(mesh_, k);
        for (int a = 0; a < 3; ++a) {
            const Index ra = free_index_[t[a]];
            if (ra == CsrMatrix::npos) {
                continue;
            }
            for (int b = 0; b < 3; ++b) {
                const Index cb = free_index_[t[b]];
                if (cb == CsrMatrix::npos) {
                    continue;
                }
                m_trip.push_back({ra, cb, me[a][b]});
                a_trip.push_back({ra, cb, ae[a][b]});
            }
        }
    }
    free_mass_ = CsrMatrix::from_triplets(free.size(), free.size(), std::move(m_trip));
    free_stiffness_ = CsrMatrix::from_triplets(free.size(), free.size(), std::move(a_trip));

    element_slots_.resize(mesh_.num_elements());
    for (Index k = 0; k < mesh_.num_elements(); ++k) {
        const Triangle& t = mesh_.triangle(k);
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                const Index ra = free_index_[t[a]];
                const Index cb = free_index_[t[b]];
                element_slots_[k][3 * a + b] = (ra == CsrMatrix::npos || cb == CsrMatrix::npos)
                                                   ? CsrMatrix::npos
                                                   : free_mass_.find(ra, cb);
            }
        }
    }
}

Vector FemSpace::restrict_to_free(std::span<const double> full) const
{
    if (full.size() != mesh_.num_nodes()) {
        throw std::invalid_argument("restrict_to_free: vector length differs from node count");
    }
    const auto& free = mesh_.free_nodes();
    Vector out(free.size());
    for (Index i = 0; i < free.size(); ++i) {
        out[i] = full[free[i]];
    }
    return out;
}

FeFunction FemSpace::extend_from_free(std::span<const double> free_values) const
{
    const auto& free = mesh_.free_nodes();
    if (free_values.size() != free.size()) {
        throw std::invalid_argument("extend_from_free: vector length differs from free-node count");
    }
    FeFunction out = FeFunction::zeros(mesh_, Space::zero_trace);
    for (Index i = 0; i < free.size(); ++i) {
        out.values[free[i]] = free_values[i];
    }
    return out;
}

CsrMatrix FemSpace::weighted_free_stiffness(std::span<const double> element_weights) const
{
    if (element_weights.size() != mesh_.num_elements()) {
        throw std::invalid_argument("weighted_free_stiffness: one weight per element required");
    }
    CsrMatrix out = free_mass_;
    auto vals = out.mutable_values();
    std::fill(vals.begin(), vals.end(), 0.0);
    for (Index k = 0; k < mesh_.num_elements(); ++k) {
        const double w = element_weights[k] * mesh_.area(k);
        for (int a = 0; a < 3; ++a) {
            const Point2& ga = mesh_.basis_gradient(k, a);
            for (int b = 0; b < 3; ++b) {
                const Index slot = element_slots_[k][3 * a + b];
                if (slot == CsrMatrix::npos) {
                    continue;
                }
                const Point2& gb = mesh_.basis_gradient(k, b);
                vals[slot] += w * (ga.x * gb.x + ga.y * gb.y);
            }
        }
    }
    return out;
}

double FemSpace::mass_inner(std::span<const double> u, std::span<const double> v) const
{
    return dot(u, spmv(mass_, v));
}

double FemSpace::grad_norm_sq(std::span<const double> u) const
{
    return dot(u, spmv(stiffness_, u));
}

EnergyBreakdown energy(const FemSpace& space, std::span<const double> u, std::span<const double> g,
                       double eps, double lambda)
{
    const Mesh& mesh = space.mesh();
    if (u.size() != mesh.num_nodes() || g.size() != mesh.num_nodes()) {
        throw std::invalid_argument("energy: vector length differs from node count");
    }
    CompensatedSum tv_eps;
    CompensatedSum tv;
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const Point2 gr = element_gradient(mesh, u, k);
        const double sq = gr.x * gr.x + gr.y * gr.y;
        tv_eps.add(mesh.area(k) * std::sqrt(sq + eps * eps));
        tv.add(mesh.area(k) * std::sqrt(sq));
    }
    Vector diff(u.size());
    for (Index i = 0; i < u.size(); ++i) {
        diff[i] = u[i] - g[i];
    }
    EnergyBreakdown e;
    e.tv_eps = tv_eps.value();
    e.tv = tv.value();
    e.fidelity = 0.5 * lambda * space.mass_norm_sq(diff);
    e.total = e.tv_eps + e.fidelity;
    return e;
}

FeFunction discrete_laplacian(const FemSpace& space, const FeFunction& u, double tol)
{
    if (!has_zero_trace(space.mesh(), u.values)) {
        throw std::invalid_argument("discrete_laplacian: argument must have zero trace");
    }
    const Vector uf = space.restrict_to_free(u.values);
    Vector rhs = spmv(space.free_stiffness(), uf);
    for (double& v : rhs) {
        v = -v;
    }
    CgOptions opts;
    opts.tol = tol;
    const CgResult sol = cg_solve(space.free_mass(), rhs, opts);
    return space.extend_from_free(sol.x);
}

double check_positivity(const FemSpace& space, const FeFunction& u, double eps)
{
    if (!(eps > 0.0)) {
        throw std::invalid_argument("check_positivity: eps must be positive");
    }
    const Mesh& mesh = space.mesh();
    const FeFunction w = discrete_laplacian(space, u);
    CompensatedSum q;
    for (Index k = 0; k < mesh.num_elements(); ++k) {
        const Point2 gu = element_gradient(mesh, u.values, k);
        const Point2 gw = element_gradient(mesh, w.values, k);
        const double c = 1.0 / std::sqrt(gu.x * gu.x + gu.y * gu.y + eps * eps);
        q.add(-mesh.area(k) * c * (gu.x * gw.x + gu.y * gw.y));
    }
    return q.value();
}

namespace {

FeFunction solve_projection(const FemSpace& space, const Vector& full_rhs, Space target, double tol)
{
    CgOptions opts;
    opts.tol = tol;
    if (target == Space::whole) {
        CgResult sol = cg_solve(space.mass(), full_rhs, opts);
        return FeFunction{std::move(sol.x), Space::whole};
    }
    const Vector rhs = space.restrict_to_free(full_rhs);
    const CgResult sol = cg_solve(space.free_mass(), rhs, opts);
    return space.extend_from_free(sol.x);
}

}  // namespace

FeFunction l2_project(const FemSpace& space, std::span<const double> nodal_values, Space target,
                      double tol)
{
    if (nodal_values.size() != space.mesh().num_nodes()) {
        throw std::invalid_argument("l2_project: vector length differs from node count");
    }
    return solve_projection(space, spmv(space.mass(), nodal_values), target, tol);
}

FeFunction l2_project(const FemSpace& space, const Mesh& source_mesh,
                      std::span<const double> source_values, Space target, double tol)
{
    const Mesh& mesh = space.mesh();
    if (!mesh.is_structured() || !source_mesh.is_structured() ||
        source_mesh.structured_n() % mesh.structured_n() != 0) {
        throw std::invalid_argument("l2_project: source mesh must be a structured refinement");
    }
    if (source_values.size() != source_mesh.num_nodes()) {
        throw std::invalid_argument("l2_project: source vector length differs from node count");
    }
    Vector rhs(mesh.num_nodes(), 0.0);
    for (Index ks = 0; ks < source_mesh.num_elements(); ++ks) {
        const Triangle& ts = source_mesh.triangle(ks);
        const auto nodes = source_mesh.nodes();
        const Point2 centroid{(nodes[ts[0]].x + nodes[ts[1]].x + nodes[ts[2]].x) / 3.0,
                              (nodes[ts[0]].y + nodes[ts[1]].y + nodes[ts[2]].y) / 3.0};
        const Index kt = locate_element(mesh, centroid);
        const Triangle& tt = mesh.triangle(kt);
        // phi[c][b]: coarse basis b evaluated at fine vertex c.
        std::array<std::array<double, 3>, 3> phi{};
        for (int c = 0; c < 3; ++c) {
            phi[c] = barycentric(mesh, kt, nodes[ts[c]]);
        }
        const ElementMatrix me = element_mass_matrix(source_mesh.area(ks));
        for (int b = 0; b < 3; ++b) {
            double acc = 0.0;
            for (int a = 0; a < 3; ++a) {
                for (int c = 0; c < 3; ++c) {
                    acc += source_values[ts[a]] * me[a][c] * phi[c][b];
                }
            }
            rhs[tt[b]] += acc;
        }
    }
    return solve_projection(space, rhs, target, tol);
}

Index locate_element(const Mesh& structured, const Point2& p)
{
    if (!structured.is_structured()) {
        throw std::invalid_argument("locate_element: mesh is not structured");
    }
    const Index n = structured.structured_n();
    const double dn = static_cast<double>(n);
    const double sx = std::clamp(p.x, 0.0, 1.0) * dn;
    const double sy = std::clamp(p.y, 0.0, 1.0) * dn;
    const Index i = std::min(static_cast<Index>(sx), n - 1);
    const Index j = std::min(static_cast<Index>(sy), n - 1);
    const double fx = sx - static_cast<double>(i);
    const double fy = sy - static_cast<double>(j);
    const Index cell = j * n + i;
    return fy <= fx ? 2 * cell : 2 * cell + 1;
}

std::array<double, 3> barycentric(const Mesh& mesh, Index element, const Point2& p)
{
    const Triangle& t = mesh.triangle(element);
    const auto nodes = mesh.nodes();
    std::array<double, 3> lam{};
    for (int a = 0; a < 3; ++a) {
        const Point2& g = mesh.basis_gradient(element, a);
        const Point2& q = nodes[t[(a + 1) % 3]];
        lam[a] = g.x * (p.x - q.x) + g.y * (p.y - q.y);
    }
    return lam;
}

}  // namespace stvf
