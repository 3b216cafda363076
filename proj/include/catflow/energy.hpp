#pragma once

// Discrete energy on cotangent-weighted meshes, the pullback tensor, the Hopf
// differential, conformality defect, traces and the degree of sphere-valued maps.

#include <complex>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "catflow/errors.hpp"
#include "catflow/surface_domain.hpp"
#include "catflow/target_space.hpp"

namespace catflow {

// Fixed-order pairwise summation.
inline double pairwise_sum(std::span<const double> x) {
    if (x.size() <= 16) {
        double s = 0.0;
        for (double v : x) s += v;
        return s;
    }
    const std::size_t h = x.size() / 2;
    return pairwise_sum(x.subspan(0, h)) + pairwise_sum(x.subspan(h));
}

struct DiscreteMap {
    std::shared_ptr<const SurfaceMesh> mesh;
    TargetSpace space;
    std::vector<TargetPoint> values;

    DiscreteMap() = default;
    DiscreteMap(std::shared_ptr<const SurfaceMesh> m, TargetSpace sp, std::vector<TargetPoint> v)
        : mesh(std::move(m)), space(std::move(sp)), values(std::move(v)) {
        if (static_cast<int>(values.size()) != mesh->num_vertices())
            throw PreconditionError("map has " + std::to_string(values.size()) + " values for " +
                                    std::to_string(mesh->num_vertices()) + " vertices");
    }

    static DiscreteMap constant(std::shared_ptr<const SurfaceMesh> m, TargetSpace sp, const TargetPoint& p) {
        const int n = m->num_vertices();
        return DiscreteMap(std::move(m), std::move(sp), std::vector<TargetPoint>(n, p));
    }

    const TargetPoint& operator[](int v) const { return values[v]; }
    TargetPoint& operator[](int v) { return values[v]; }
    int size() const { return static_cast<int>(values.size()); }

    double dist(int a, int b) const { return detail::distance_unchecked(space, values[a], values[b]); }

    void validate() const {
        for (const auto& p : values) validate_point(space, p);
    }
};

inline double edge_energy(const DiscreteMap& u, int e) {
    const auto& ed = u.mesh->edges[e];
    const double d = u.dist(ed[0], ed[1]);
    return u.mesh->edge_weight[e] * d * d;
}

inline double energy(const DiscreteMap& u, const std::vector<int>& edges) {
    std::vector<double> terms;
    terms.reserve(edges.size());
    for (int e : edges) terms.push_back(edge_energy(u, e));
    return pairwise_sum(terms);
}

inline double energy(const DiscreteMap& u, const Region& r) { return energy(u, r.edges); }

inline double energy(const DiscreteMap& u) {
    std::vector<double> terms(u.mesh->edges.size());
    for (std::size_t e = 0; e < terms.size(); ++e) terms[e] = edge_energy(u, static_cast<int>(e));
    return pairwise_sum(terms);
}

// Energy per unit area at each vertex: half the incident edge energy over the vertex area.
inline std::vector<double> energy_density(const DiscreteMap& u) {
    const auto& m = *u.mesh;
    std::vector<double> dens(m.num_vertices(), 0.0);
    for (std::size_t e = 0; e < m.edges.size(); ++e) {
        const double v = 0.5 * edge_energy(u, static_cast<int>(e));
        dens[m.edges[e][0]] += v;
        dens[m.edges[e][1]] += v;
    }
    for (int i = 0; i < m.num_vertices(); ++i) dens[i] /= m.vertex_area[i];
    return dens;
}

struct Sym2 {
    double p11 = 0.0, p12 = 0.0, p22 = 0.0;
    double trace() const { return p11 + p22; }
    std::complex<double> hopf() const { return {p11 - p22, -2.0 * p12}; }
};

struct PullbackTensor {
    std::vector<Sym2> tri;
};

namespace detail {

// Planar triangle with the given side lengths: Y0 = 0, Y1 on the x-axis.
// Built on the longest side, so a near-zero side costs no precision.
inline std::array<Vec2, 3> comparison_triangle(double d01, double d02, double d12) {
    if (d01 >= d02 && d01 >= d12) {
        if (d01 <= 0.0) return {Vec2(0, 0), Vec2(0, 0), Vec2(0, 0)};
        const double x = (d01 * d01 + d02 * d02 - d12 * d12) / (2 * d01);
        const double y = std::sqrt(std::max(0.0, d02 * d02 - x * x));
        return {Vec2(0, 0), Vec2(d01, 0), Vec2(x, y)};
    }
    if (d02 >= d12) {
        const auto t = comparison_triangle(d02, d01, d12);  // vertices 0, 2, 1
        return {t[0], t[2], t[1]};
    }
    const auto t = comparison_triangle(d12, d01, d02);  // vertices 1, 2, 0 with 1 at the origin
    return {t[2], t[0], t[1]};
}

}  // namespace detail

// Per triangle, the affine map X -> Y from the chart triangle to the planar
// comparison triangle of the image distances; pi = J^T J. Its area-weighted
// trace sums to the cotangent energy exactly.
inline PullbackTensor pullback_tensor(const DiscreteMap& u) {
    const auto& m = *u.mesh;
    PullbackTensor out;
    out.tri.resize(m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tr = m.triangles[t];
        const auto& c = m.corners[t];
        const auto Y = detail::comparison_triangle(u.dist(tr[0], tr[1]), u.dist(tr[0], tr[2]), u.dist(tr[1], tr[2]));
        Eigen::Matrix2d X, Ym;
        X << c[1] - c[0], c[2] - c[0];
        Ym << Y[1] - Y[0], Y[2] - Y[0];
        const Eigen::Matrix2d J = Ym * X.inverse();
        const Eigen::Matrix2d P = J.transpose() * J;
        out.tri[t] = {P(0, 0), 0.5 * (P(0, 1) + P(1, 0)), P(1, 1)};
    }
    return out;
}

struct HopfReport {
    std::vector<std::complex<double>> phi;  // per triangle
    double l1 = 0.0;                         // sum of area * |phi|
    double dbar_residual = 0.0;              // L1 norm of dbar(phi) / energy, both over the interior triangles
    int interior_triangles = 0;
};

// phi = pi11 - pi22 - 2i pi12 per triangle. The dbar residual interpolates
// area-averaged vertex values of phi linearly and measures the Cauchy-Riemann
// defect of that interpolant over triangles with no vertex in `exclude`
// (typically the region boundary). Only meaningful on flat charts; on the
// sphere mesh the triangle frames are unrelated and the residual is NaN.
inline HopfReport hopf_differential(const DiscreteMap& u, const std::vector<char>& exclude = {}) {
    const auto& m = *u.mesh;
    const PullbackTensor pt = pullback_tensor(u);
    HopfReport rep;
    rep.phi.resize(m.triangles.size());
    std::vector<double> l1_terms(m.triangles.size()), tr_terms(m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        rep.phi[t] = pt.tri[t].hopf();
        l1_terms[t] = m.triangle_area[t] * std::abs(rep.phi[t]);
        tr_terms[t] = m.triangle_area[t] * pt.tri[t].trace();
    }
    rep.l1 = pairwise_sum(l1_terms);
    if (m.kind == MeshKind::RoundSphere) {
        rep.dbar_residual = std::numeric_limits<double>::quiet_NaN();
        return rep;
    }
    std::vector<std::complex<double>> vphi(m.num_vertices(), 0.0);
    std::vector<double> vw(m.num_vertices(), 0.0);
    for (std::size_t t = 0; t < m.triangles.size(); ++t)
        for (int k = 0; k < 3; ++k) {
            vphi[m.triangles[t][k]] += m.triangle_area[t] * rep.phi[t];
            vw[m.triangles[t][k]] += m.triangle_area[t];
        }
    for (int v = 0; v < m.num_vertices(); ++v) vphi[v] /= vw[v];
    std::vector<double> res, inner_energy;
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tr = m.triangles[t];
        bool skip = false;
        for (int k = 0; k < 3; ++k) skip = skip || m.on_mesh_boundary[tr[k]] || (!exclude.empty() && exclude[tr[k]]);
        if (skip) continue;
        const auto& c = m.corners[t];
        Eigen::Matrix2d X;
        X << c[1] - c[0], c[2] - c[0];
        const Eigen::Matrix2d Xi = X.inverse();
        const std::complex<double> d1 = vphi[tr[1]] - vphi[tr[0]], d2 = vphi[tr[2]] - vphi[tr[0]];
        // grad = X^{-T} (d1, d2)
        const std::complex<double> gx = Xi(0, 0) * d1 + Xi(1, 0) * d2;
        const std::complex<double> gy = Xi(0, 1) * d1 + Xi(1, 1) * d2;
        const std::complex<double> dbar = 0.5 * (gx + std::complex<double>(0, 1) * gy);
        res.push_back(m.triangle_area[t] * std::abs(dbar));
        inner_energy.push_back(tr_terms[t]);
        ++rep.interior_triangles;
    }
    const double e = pairwise_sum(inner_energy);
    rep.dbar_residual = e > 0.0 ? pairwise_sum(res) / e : 0.0;
    return rep;
}

// Integral of |(pi11 - pi22, 2 pi12)| over the energy; 0/0 counts as 0.
inline double conformality_defect(const DiscreteMap& u) {
    const auto& m = *u.mesh;
    const PullbackTensor pt = pullback_tensor(u);
    std::vector<double> num(m.triangles.size()), den(m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        num[t] = m.triangle_area[t] * std::abs(pt.tri[t].hopf());
        den[t] = m.triangle_area[t] * pt.tri[t].trace();
    }
    const double e = pairwise_sum(den);
    if (e <= 1e-300) return 0.0;
    return pairwise_sum(num) / e;
}

using BoundaryData = std::vector<std::pair<int, TargetPoint>>;

inline BoundaryData restrict_trace(const DiscreteMap& u, const Region& r) {
    if (r.boundary.empty()) throw EmptyBoundaryError("region has no boundary vertices");
    BoundaryData out;
    out.reserve(r.boundary.size());
    for (int v : r.boundary) out.push_back({v, u.values[v]});
    return out;
}

// Total signed image area of a sphere-valued map divided by 4 pi.
inline double degree_real(const DiscreteMap& u) {
    if (u.space.kind != SpaceKind::UnitSphere) return 0.0;
    const auto& m = *u.mesh;
    std::vector<double> omega(m.triangles.size());
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const Vec3& a = u.values[m.triangles[t][0]].x;
        const Vec3& b = u.values[m.triangles[t][1]].x;
        const Vec3& c = u.values[m.triangles[t][2]].x;
        const double num = a.dot(b.cross(c));
        const double den = 1.0 + a.dot(b) + b.dot(c) + c.dot(a);
        omega[t] = 2.0 * std::atan2(num, den);
    }
    return pairwise_sum(omega) / (4 * kPi);
}

inline int degree(const DiscreteMap& u) { return static_cast<int>(std::lround(degree_real(u))); }

}  // namespace catflow
