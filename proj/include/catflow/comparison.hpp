#pragma once

// Margin evaluators for the quadrilateral and triangle comparison estimates,
// the interpolation maps built from them, the energy-convexity witness and the
// comparison maps used for subharmonicity.

#include <cmath>
#include <string>
#include <tuple>
#include <vector>

#include "catflow/constants.hpp"
#include "catflow/energy.hpp"
#include "catflow/errors.hpp"
#include "catflow/rng.hpp"
#include "catflow/sampling.hpp"
#include "catflow/target_space.hpp"

namespace catflow {

struct QuadConfig {
    TargetSpace space;
    TargetPoint P, Q, R, S;
    double d_PQ = 0, d_QR = 0, d_RS = 0, d_SP = 0, d_PR = 0, d_QS = 0;

    QuadConfig() = default;
    QuadConfig(TargetSpace sp, TargetPoint p, TargetPoint q, TargetPoint r, TargetPoint s)
        : space(std::move(sp)), P(p), Q(q), R(r), S(s) {
        d_PQ = distance(space, P, Q);
        d_QR = distance(space, Q, R);
        d_RS = distance(space, R, S);
        d_SP = distance(space, S, P);
        d_PR = distance(space, P, R);
        d_QS = distance(space, Q, S);
    }

    double size() const { return std::max({d_PQ, d_RS, std::abs(d_QR - d_SP)}); }
    double max_distance() const { return std::max({d_PQ, d_QR, d_RS, d_SP, d_PR, d_QS}); }
};

struct MarginReport {
    double lhs = 0.0;
    double rhs = 0.0;
    double margin = 0.0;
    double error_budget = 0.0;
    double scale = 0.0;  // size term multiplying the budget constant
    bool pass = true;
};

inline MarginReport make_report(double lhs, double rhs, double K, double scale) {
    MarginReport r;
    r.lhs = lhs;
    r.rhs = rhs;
    r.margin = rhs - lhs;
    r.scale = scale;
    r.error_budget = K * scale + constants::kBudgetFloor;
    r.pass = r.margin >= -r.error_budget;
    return r;
}

namespace detail {

inline void require_quad_below(const QuadConfig& q, double bound, const char* what) {
    if (!(q.max_distance() < bound)) throw PreconditionError(std::string(what) + ": quadrilateral too large");
}

inline void require_unit(double eta, double hi, const char* name) {
    if (!(eta >= 0.0 && eta <= hi)) throw PreconditionError(std::string(name) + " outside its allowed range");
}

// sin(t x) / sin x with the limit t as x -> 0.
inline double sin_ratio(double t, double x) {
    const double s = std::sin(x);
    if (std::abs(s) < 1e-9) return t;
    return std::sin(t * x) / s;
}

// tan(x) / x with the limit 1.
inline double tan_ratio(double x) { return std::abs(x) < 1e-8 ? 1.0 : std::tan(x) / x; }

// x / sin(x) with the limit 1.
inline double x_over_sin(double x) { return std::abs(x) < 1e-8 ? 1.0 : x / std::sin(x); }

}  // namespace detail

// Reshetnyak's diagonal bound; lhs is the lower-bound side, rhs = cos PR + cos QS.
inline MarginReport reshetnyak_margin(const QuadConfig& q) {
    detail::require_quad_below(q, kPi / 2, "reshetnyak_margin");
    const double dqr_ps = q.d_QR - q.d_SP;
    const double lhs = -0.5 * (q.d_PQ * q.d_PQ + q.d_RS * q.d_RS) + 0.25 * (1 + std::cos(q.d_SP)) * dqr_ps * dqr_ps +
                       std::cos(q.d_QR) + std::cos(q.d_SP);
    const double rhs = std::cos(q.d_PR) + std::cos(q.d_QS);
    const double eps = q.size();
    return make_report(lhs, rhs, constants::kReshetnyakK, eps * eps * eps);
}

inline MarginReport estimate_I_margin(const QuadConfig& q) {
    detail::require_quad_below(q, kPi / 2, "estimate_I_margin");
    const auto& sp = q.space;
    const TargetPoint P_half = detail::geodesic_unchecked(sp, q.P, q.S, 0.5);
    const TargetPoint Q_half = detail::geodesic_unchecked(sp, q.Q, q.R, 0.5);
    const double m = detail::distance_unchecked(sp, P_half, Q_half);
    const double c = std::cos(0.5 * q.d_SP);
    const double dqr_ps = q.d_QR - q.d_SP;
    const double lhs = c * c * m * m;
    const double rhs = 0.5 * (q.d_PQ * q.d_PQ + q.d_RS * q.d_RS) - 0.25 * dqr_ps * dqr_ps;
    const double eps = std::max(q.size(), m);
    return make_report(lhs, rhs, constants::kEstimateIK, eps * eps * eps);
}

inline MarginReport estimate_II_margin(const TargetSpace& sp, const TargetPoint& P, const TargetPoint& Q,
                                       const TargetPoint& S, double eta, double eta_prime) {
    detail::require_unit(eta, 1.0, "eta");
    detail::require_unit(eta_prime, 1.0, "eta_prime");
    const double d_PS = distance(sp, P, S), d_QS = distance(sp, Q, S), d_QP = distance(sp, Q, P);
    if (!(std::max({d_PS, d_QS, d_QP}) < kPi / 2)) throw PreconditionError("estimate_II_margin: triangle too large");
    const TargetPoint P_ep = detail::geodesic_unchecked(sp, P, Q, eta_prime);
    const TargetPoint S_e = detail::geodesic_unchecked(sp, S, Q, eta);
    const double dd = detail::distance_unchecked(sp, P_ep, S_e);
    const double alpha = detail::sin_ratio(1 - eta, d_QS);
    const double gap = d_QS - d_QP;
    const double lin = (1 - eta) * gap + (eta_prime - eta) * d_QS;
    const double lhs = dd * dd;
    const double rhs = alpha * alpha * (d_PS * d_PS - gap * gap) + lin * lin;
    const double eps = std::max({d_PS, std::abs(gap), std::abs(eta - eta_prime)});
    return make_report(lhs, rhs, constants::kEstimateIIK, eps * eps * eps);
}

inline MarginReport estimate_III_margin(const QuadConfig& q, double eta, double eta_prime) {
    detail::require_unit(eta, 0.5, "eta");
    detail::require_unit(eta_prime, 0.5, "eta_prime");
    detail::require_quad_below(q, kPi / 2, "estimate_III_margin");
    const auto& sp = q.space;
    const TargetPoint Q_ep = detail::geodesic_unchecked(sp, q.Q, q.R, eta_prime);
    const TargetPoint P_e = detail::geodesic_unchecked(sp, q.P, q.S, eta);
    const TargetPoint Q_1ep = detail::geodesic_unchecked(sp, q.Q, q.R, 1 - eta_prime);
    const TargetPoint P_1e = detail::geodesic_unchecked(sp, q.P, q.S, 1 - eta);
    const double a = detail::distance_unchecked(sp, Q_ep, P_e);
    const double b = detail::distance_unchecked(sp, Q_1ep, P_1e);
    const double x = q.d_SP;
    const double xt = x * std::tan(0.5 * x);
    const double gap = q.d_QR - q.d_SP;
    const double lhs = a * a + b * b;
    const double rhs = (1 + 2 * eta * xt) * (q.d_PQ * q.d_PQ + q.d_RS * q.d_RS) -
                       2 * eta * (1 + 0.5 * xt) * gap * gap + 2 * (2 * eta - 1) * (eta_prime - eta) * x * gap;
    const double eps = std::max(q.size(), std::abs(eta - eta_prime));
    const double de = eta - eta_prime;
    return make_report(lhs, rhs, constants::kEstimateIIIK, eta * eta * eps * eps + eps * eps * eps + de * de);
}

// ---------------------------------------------------------------------------
// Random configurations for the audits.

inline constexpr double kMinDiagonal = 0.05;
inline constexpr double kMaxDiagonal = 1.2;

namespace detail {

inline TargetPoint sample_anchor(const TargetSpace& sp, Rng& rng) {
    if (sp.kind == SpaceKind::SphericalBook && rng.uniform() < 0.5) {
        const TargetPoint s{0, spine_point(rng.uniform(0.0, 2 * kPi))};
        return random_step(sp, s, rng.uniform(0.0, 0.1), rng);
    }
    return random_point(sp, rng);
}

}  // namespace detail

inline QuadConfig sample_quad(const TargetSpace& sp, double eps, Rng& rng) {
    for (;;) {
        const TargetPoint P = detail::sample_anchor(sp, rng);
        TargetPoint S;
        if (sp.kind == SpaceKind::FlatCone && rng.uniform() < 0.5)
            S = random_point(sp, rng);
        else
            S = random_step(sp, P, rng.uniform(kMinDiagonal, kMaxDiagonal), rng);
        const TargetPoint Q = random_step(sp, P, rng.uniform(0.0, eps), rng);
        const TargetPoint R = random_step(sp, S, rng.uniform(0.0, eps), rng);
        QuadConfig q(sp, P, Q, R, S);
        if (q.max_distance() < kPi / 2) return q;
    }
}

struct TriangleConfig {
    TargetPoint P, Q, S;
    double eta = 0.0, eta_prime = 0.0;
};

inline TriangleConfig sample_triangle(const TargetSpace& sp, double eps, Rng& rng) {
    for (;;) {
        TriangleConfig t;
        t.Q = detail::sample_anchor(sp, rng);
        t.S = random_step(sp, t.Q, rng.uniform(kMinDiagonal, kMaxDiagonal), rng);
        t.P = random_step(sp, t.S, rng.uniform(0.0, eps), rng);
        t.eta = rng.uniform();
        t.eta_prime = std::clamp(t.eta + rng.uniform(-eps, eps), 0.0, 1.0);
        const double m = std::max({distance(sp, t.P, t.Q), distance(sp, t.Q, t.S), distance(sp, t.P, t.S)});
        if (m < kPi / 2) return t;
    }
}

inline std::pair<double, double> sample_eta_pair(double eps, Rng& rng) {
    const double eta = rng.uniform(0.0, 0.5);
    const double eta_prime = std::clamp(eta + rng.uniform(-eps, eps), 0.0, 0.5);
    return {eta, eta_prime};
}

// ---------------------------------------------------------------------------
// Interpolation maps.

using ScalarField = std::vector<double>;

inline double max_distance_to(const DiscreteMap& u, const TargetPoint& c) {
    double m = 0.0;
    for (const auto& p : u.values) m = std::max(m, detail::distance_unchecked(u.space, c, p));
    return m;
}

inline void require_same_domain(const DiscreteMap& a, const DiscreteMap& b) {
    if (a.mesh != b.mesh && a.mesh->name() != b.mesh->name()) throw PreconditionError("maps live on different meshes");
    if (!(a.space == b.space)) throw PreconditionError("maps use different targets");
}

// u_hat(x) = (1 - eta(x)) u(x) + eta(x) Q.
inline DiscreteMap interpolate_toward_point(const DiscreteMap& u, const ScalarField& eta, const TargetPoint& Q) {
    if (static_cast<int>(eta.size()) != u.size()) throw PreconditionError("eta has the wrong length");
    if (max_distance_to(u, Q) >= u.space.rho + 1e-12) throw AdmissibilityError("map image leaves the ball about Q");
    DiscreteMap out = u;
    for (int v = 0; v < u.size(); ++v) {
        detail::require_unit(eta[v], 1.0, "eta");
        if (u.mesh->on_mesh_boundary[v] && eta[v] != 0.0) throw PreconditionError("eta must vanish on the boundary");
        out.values[v] = detail::geodesic_unchecked(u.space, u.values[v], Q, eta[v]);
    }
    return out;
}

// Edge-wise replay of the triangle estimate on u_hat: summed over the edges
// with cotangent weights, lhs = E(u_hat).
inline MarginReport interpolation_point_audit(const DiscreteMap& u, const ScalarField& eta, const TargetPoint& Q,
                                              const std::vector<int>& edges) {
    const DiscreteMap uh = interpolate_toward_point(u, eta, Q);
    std::vector<double> L, Rr, B;
    for (int e : edges) {
        const int x = u.mesh->edges[e][0], y = u.mesh->edges[e][1];
        const double w = u.mesh->edge_weight[e];
        const MarginReport r = estimate_II_margin(u.space, u.values[x], Q, u.values[y], eta[y], eta[x]);
        L.push_back(w * r.lhs);
        Rr.push_back(w * r.rhs);
        B.push_back(w * r.scale);
    }
    return make_report(pairwise_sum(L), pairwise_sum(Rr), constants::kEstimateIIK, pairwise_sum(B));
}

inline std::pair<DiscreteMap, DiscreteMap> pair_interpolation(const DiscreteMap& u0, const DiscreteMap& u1,
                                                              const ScalarField& eta) {
    require_same_domain(u0, u1);
    if (static_cast<int>(eta.size()) != u0.size()) throw PreconditionError("eta has the wrong length");
    DiscreteMap a = u0, b = u1;
    for (int v = 0; v < u0.size(); ++v) {
        detail::require_unit(eta[v], 0.5, "eta");
        if (u0.mesh->on_mesh_boundary[v] && eta[v] != 0.0) throw PreconditionError("eta must vanish on the boundary");
        if (detail::distance_unchecked(u0.space, u0.values[v], u1.values[v]) >= kPi)
            throw NonUniqueGeodesicError("maps are antipodal at vertex " + std::to_string(v));
        a.values[v] = detail::geodesic_unchecked(u0.space, u0.values[v], u1.values[v], eta[v]);
        b.values[v] = detail::geodesic_unchecked(u0.space, u0.values[v], u1.values[v], 1 - eta[v]);
    }
    return {a, b};
}

// Edge-wise replay of the quadrilateral estimate with P = u0(y), Q = u0(x),
// R = u1(x), S = u1(y); lhs = E(u_eta) + E(u_{1-eta}) over the edges.
inline MarginReport pair_interpolation_audit(const DiscreteMap& u0, const DiscreteMap& u1, const ScalarField& eta,
                                             const std::vector<int>& edges) {
    std::vector<double> L, Rr, B;
    for (int e : edges) {
        const int x = u0.mesh->edges[e][0], y = u0.mesh->edges[e][1];
        const double w = u0.mesh->edge_weight[e];
        const QuadConfig q(u0.space, u0.values[y], u0.values[x], u1.values[x], u1.values[y]);
        const MarginReport r = estimate_III_margin(q, eta[y], eta[x]);
        L.push_back(w * r.lhs);
        Rr.push_back(w * r.rhs);
        B.push_back(w * r.scale);
    }
    return make_report(pairwise_sum(L), pairwise_sum(Rr), constants::kEstimateIIIK, pairwise_sum(B));
}

// ---------------------------------------------------------------------------
// Energy convexity witness.

struct ConvexityWitness {
    DiscreteMap w;
    ScalarField F;
    ScalarField eta;
    MarginReport margin;
};

// Root of sin((1 - eta) R) / sin R = c on [0, 1] by bisection.
inline double solve_witness_eta(double R, double c) {
    if (R < 1e-12) return 0.0;
    double lo = 0.0, hi = 1.0;
    const double sR = std::sin(R);
    while (hi - lo > 1e-12) {
        const double mid = 0.5 * (lo + hi);
        if (std::sin((1 - mid) * R) / sR > c)
            lo = mid;
        else
            hi = mid;
    }
    return 0.5 * (lo + hi);
}

inline void require_same_trace(const DiscreteMap& u0, const DiscreteMap& u1, const Region& region) {
    for (int v : region.boundary)
        if (detail::distance_unchecked(u0.space, u0.values[v], u1.values[v]) > kIdentifyTol)
            throw TraceMismatchError("maps differ at boundary vertex " + std::to_string(v));
}

inline ConvexityWitness convexity_witness(const DiscreteMap& u0, const DiscreteMap& u1, const TargetPoint& O,
                                          const Region& region) {
    require_same_domain(u0, u1);
    require_same_trace(u0, u1, region);
    const auto& sp = u0.space;
    for (int v : region.vertices)
        if (detail::distance_unchecked(sp, O, u0.values[v]) > sp.rho + 1e-12 ||
            detail::distance_unchecked(sp, O, u1.values[v]) > sp.rho + 1e-12)
            throw AdmissibilityError("map image leaves the closed ball about O");
    ConvexityWitness out;
    out.w = u0;
    out.F.assign(u0.size(), 0.0);
    out.eta.assign(u0.size(), 0.0);
    for (int v : region.vertices) {
        const double d = detail::distance_unchecked(sp, u0.values[v], u1.values[v]);
        const TargetPoint half = detail::geodesic_unchecked(sp, u0.values[v], u1.values[v], 0.5);
        const double R = detail::distance_unchecked(sp, half, O);
        const double eta = solve_witness_eta(R, std::cos(0.5 * d));
        out.eta[v] = eta;
        out.w.values[v] = detail::geodesic_unchecked(sp, half, O, eta);
        out.F[v] = std::tan(0.5 * d) / std::cos(R);
    }
    const double c = std::pow(std::cos(sp.rho), 8);
    std::vector<double> grad;
    for (int e : region.edges) {
        const double df = out.F[u0.mesh->edges[e][0]] - out.F[u0.mesh->edges[e][1]];
        grad.push_back(u0.mesh->edge_weight[e] * df * df);
    }
    const double lhs = c * pairwise_sum(grad);
    const double rhs = 0.5 * (energy(u0, region) + energy(u1, region)) - energy(out.w, region);
    out.margin = make_report(lhs, rhs, 0.0, 0.0);
    out.margin.error_budget = constants::kConvexityTol;
    out.margin.pass = out.margin.margin >= -constants::kConvexityTol;
    return out;
}

// ---------------------------------------------------------------------------
// Comparison maps for subharmonicity.

struct ComparisonF {
    DiscreteMap u_hat_eta;
    DiscreteMap u_hat_one_minus_eta;
    ScalarField F_eta;
    MarginReport margin;
};

inline ComparisonF comparison_F_eta(const DiscreteMap& u0, const DiscreteMap& u1, const TargetPoint& Q,
                                    const ScalarField& eta, const Region& region) {
    require_same_domain(u0, u1);
    const auto& sp = u0.space;
    if (max_distance_to(u0, Q) >= sp.rho + 1e-12 || max_distance_to(u1, Q) >= sp.rho + 1e-12)
        throw AdmissibilityError("map image leaves the ball about Q");
    for (int v = 0; v < u0.size(); ++v) {
        if (!(eta[v] >= 0.0 && eta[v] < 0.5)) throw PreconditionError("eta must lie in [0, 1/2)");
        if (eta[v] != 0.0 && (!region.contains(v) || std::binary_search(region.boundary.begin(), region.boundary.end(), v)))
            throw PreconditionError("eta must vanish outside the region interior");
    }
    auto [ue, uf] = pair_interpolation(u0, u1, eta);
    ComparisonF out{ue, uf, ScalarField(u0.size(), 0.0), {}};
    ScalarField dvec(u0.size()), cbar(u0.size());
    for (int v = 0; v < u0.size(); ++v) {
        const double d = detail::distance_unchecked(sp, u0.values[v], u1.values[v]);
        const double Re = detail::distance_unchecked(sp, ue.values[v], Q);
        const double Rf = detail::distance_unchecked(sp, uf.values[v], Q);
        const double t = d * std::tan(0.5 * d);
        const double phi = std::min(1.0, eta[v] * detail::tan_ratio(Re) * t);
        const double psi = std::min(1.0, eta[v] * detail::tan_ratio(Rf) * t);
        out.u_hat_eta.values[v] = detail::geodesic_unchecked(sp, ue.values[v], Q, phi);
        out.u_hat_one_minus_eta.values[v] = detail::geodesic_unchecked(sp, uf.values[v], Q, psi);
        const double cc = std::cos(Re) * std::cos(Rf);
        out.F_eta[v] = std::sqrt((1 - std::cos(d)) / cc);
        dvec[v] = d;
        cbar[v] = cc;
    }
    const auto& m = *u0.mesh;
    std::vector<double> div, deta2;
    for (int e : region.edges) {
        const int a = m.edges[e][0], b = m.edges[e][1];
        const double ga = detail::x_over_sin(dvec[a]) * eta[a] * out.F_eta[a];
        const double gb = detail::x_over_sin(dvec[b]) * eta[b] * out.F_eta[b];
        div.push_back(m.edge_weight[e] * 0.5 * (cbar[a] + cbar[b]) * (ga - gb) * (out.F_eta[a] - out.F_eta[b]));
        deta2.push_back(m.edge_weight[e] * (eta[a] - eta[b]) * (eta[a] - eta[b]));
    }
    std::vector<double> eta2;
    for (int v : region.vertices) eta2.push_back(m.vertex_area[v] * eta[v] * eta[v]);
    const double lhs = energy(out.u_hat_eta, region) + energy(out.u_hat_one_minus_eta, region) - energy(u0, region) -
                       energy(u1, region);
    const double rhs = -2.0 * pairwise_sum(div);
    out.margin = make_report(lhs, rhs, constants::kComparisonFK, pairwise_sum(deta2) + pairwise_sum(eta2));
    return out;
}

}  // namespace catflow
