#pragma once

// Certificates for computed maps: Courant-Lebesgue radii, extrinsic area
// profiles and monotonicity, weak subharmonicity of the distance function F,
// and a local harmonicity residual.

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "catflow/dirichlet.hpp"
#include "catflow/energy.hpp"
#include "catflow/surface_domain.hpp"

namespace catflow {

inline double courant_lebesgue_budget(double energy0, double delta) {
    return std::sqrt(8 * kPi * energy0 / std::log(1.0 / (delta * delta)));
}

struct CourantLebesgueResult {
    double radius = 0.0;
    double oscillation = 0.0;
    double budget = 0.0;
    bool found = false;
};

// Target diameter of the image of the vertex shell at domain distance ~ r.
inline double circle_oscillation(const DiscreteMap& u, int center, double r) {
    const auto& m = *u.mesh;
    const double half = 0.5 * m.mean_edge;
    std::vector<int> shell;
    for (int v = 0; v < m.num_vertices(); ++v)
        if (std::abs(m.distance(center, v) - r) <= half) shell.push_back(v);
    double diam = 0.0;
    for (std::size_t i = 0; i < shell.size(); ++i)
        for (std::size_t j = i + 1; j < shell.size(); ++j) diam = std::max(diam, u.dist(shell[i], shell[j]));
    return diam;
}

// Scans radii log-uniformly in (delta^2, delta) for a circle whose image
// oscillation is within the budget; returns the first such radius or the best seen.
inline CourantLebesgueResult courant_lebesgue_radius(const DiscreteMap& u, int center, double delta, double energy0,
                                                     int samples = 24) {
    const auto& m = *u.mesh;
    if (!(delta > 0.0 && delta < 1.0)) throw PreconditionError("delta must lie in (0, 1)");
    if (delta * delta < m.max_edge) throw ResolutionError("delta^2 is below the mesh resolution");
    CourantLebesgueResult res;
    res.budget = courant_lebesgue_budget(energy0, delta);
    res.oscillation = 1e300;
    const double a = std::log(delta * delta), b = std::log(delta);
    for (int i = 1; i <= samples; ++i) {
        const double r = std::exp(a + (b - a) * i / (samples + 1));
        const double osc = circle_oscillation(u, center, r);
        if (osc < res.oscillation) {
            res.oscillation = osc;
            res.radius = r;
        }
        if (osc <= res.budget) {
            res.radius = r;
            res.oscillation = osc;
            res.found = true;
            return res;
        }
    }
    return res;
}

namespace detail {

// Fraction of a triangle where the linear interpolant of the corner values is <= s.
inline double sublevel_fraction(double f0, double f1, double f2, double s) {
    if (f0 > f1) std::swap(f0, f1);
    if (f1 > f2) std::swap(f1, f2);
    if (f0 > f1) std::swap(f0, f1);
    if (s >= f2) return 1.0;
    if (s <= f0) return 0.0;
    if (s <= f1) return (s - f0) * (s - f0) / ((f1 - f0) * (f2 - f0));
    return 1.0 - (f2 - s) * (f2 - s) / ((f2 - f0) * (f2 - f1));
}

}  // namespace detail

// A(sigma): sum over triangles of (1/2) * comparison energy times the fraction
// of the triangle whose image lies in the closed ball B_sigma(Q). Each triangle
// is split into `subdivisions`^2 pieces; images of interior points use the
// two-step geodesic interpolation and the distance to Q is linear on each piece.
inline std::vector<double> extrinsic_area_profile(const DiscreteMap& u, const TargetPoint& Q,
                                                  const std::vector<double>& sigmas,
                                                  const std::vector<char>& triangle_mask = {}, int subdivisions = 8) {
    const auto& m = *u.mesh;
    const auto& sp = u.space;
    if (subdivisions < 1) throw PreconditionError("subdivisions must be positive");
    const PullbackTensor pt = pullback_tensor(u);
    const double smax = sigmas.empty() ? 0.0 : *std::max_element(sigmas.begin(), sigmas.end());
    const int n = subdivisions;
    std::vector<std::vector<double>> terms(sigmas.size());
    std::vector<double> f((n + 1) * (n + 2) / 2);
    auto at = [n](int i, int j) { return j * (n + 1) - j * (j - 1) / 2 + i; };  // i + j <= n
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        if (!triangle_mask.empty() && !triangle_mask[t]) continue;
        const auto& tr = m.triangles[t];
        const TargetPoint &A = u.values[tr[0]], &B = u.values[tr[1]], &C = u.values[tr[2]];
        const double dmin = std::min({detail::distance_unchecked(sp, Q, A), detail::distance_unchecked(sp, Q, B),
                                      detail::distance_unchecked(sp, Q, C)});
        const double diam = std::max({u.dist(tr[0], tr[1]), u.dist(tr[0], tr[2]), u.dist(tr[1], tr[2])});
        if (dmin - diam > smax) continue;
        for (int j = 0; j <= n; ++j)
            for (int i = 0; i + j <= n; ++i) {
                // barycentric (n - i - j, i, j) / n
                const int a = n - i - j;
                const TargetPoint ab = a + i > 0 ? detail::geodesic_unchecked(sp, A, B, double(i) / (a + i)) : A;
                const TargetPoint p = detail::geodesic_unchecked(sp, ab, C, double(j) / n);
                f[at(i, j)] = detail::distance_unchecked(sp, Q, p);
            }
        const double w = 0.5 * m.triangle_area[t] * pt.tri[t].trace() / (n * n);
        for (std::size_t k = 0; k < sigmas.size(); ++k) {
            const double s = sigmas[k];
            double frac = 0.0;
            for (int j = 0; j < n; ++j)
                for (int i = 0; i + j < n; ++i) {
                    frac += detail::sublevel_fraction(f[at(i, j)], f[at(i + 1, j)], f[at(i, j + 1)], s);
                    if (i + j + 1 < n)
                        frac += detail::sublevel_fraction(f[at(i + 1, j)], f[at(i + 1, j + 1)], f[at(i, j + 1)], s);
                }
            if (frac > 0.0) terms[k].push_back(w * frac);
        }
    }
    std::vector<double> out;
    for (const auto& tk : terms) out.push_back(pairwise_sum(tk));
    return out;
}

struct MonotonicityResult {
    bool pass = true;
    double worst_ratio = 1.0;  // smallest v_{i+1} / v_i
    double theta = std::numeric_limits<double>::quiet_NaN();
    bool theta_defined = false;
    std::vector<double> normalized;  // e^{c s^2} A(s) / s^2
};

// Discrete monotonicity of e^{c s^2} A(s) / s^2 up to a relative tolerance, and
// the density A / (pi s^2) extrapolated to s = 0 by a least-squares fit in s^2.
inline MonotonicityResult monotonicity_check(const std::vector<double>& sigmas, const std::vector<double>& area,
                                             double c = 1.0, double tol = 0.01) {
    if (sigmas.size() != area.size() || sigmas.empty()) throw PreconditionError("profile and sigma grid differ");
    MonotonicityResult res;
    for (std::size_t i = 0; i < sigmas.size(); ++i)
        res.normalized.push_back(std::exp(c * sigmas[i] * sigmas[i]) * area[i] / (sigmas[i] * sigmas[i]));
    for (std::size_t i = 0; i + 1 < sigmas.size(); ++i) {
        if (res.normalized[i] <= 0.0) continue;
        const double ratio = res.normalized[i + 1] / res.normalized[i];
        res.worst_ratio = std::min(res.worst_ratio, ratio);
        if (ratio < 1.0 - tol) res.pass = false;
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const int n = static_cast<int>(sigmas.size());
    bool any = false;
    for (int i = 0; i < n; ++i) {
        const double x = sigmas[i] * sigmas[i];
        const double y = area[i] / (kPi * x);
        any = any || area[i] > 0.0;
        sx += x, sy += y, sxx += x * x, sxy += x * y;
    }
    if (any) {
        res.theta_defined = true;
        const double det = n * sxx - sx * sx;
        res.theta = n == 1 || std::abs(det) < 1e-300 ? sy / n : (sy * sxx - sx * sxy) / det;
    }
    return res;
}

// Largest move of one vertex-update sweep on the region interior (the map is not modified).
inline double sweep_move(const DiscreteMap& u, const DirichletProblem& prob) {
    DiscreteMap w = u;
    double move = 0.0;
    for (int v : prob.region.interior) {
        const TargetPoint p = vertex_update(w, v, prob);
        move = std::max(move, detail::distance_unchecked(u.space, w.values[v], p));
        w.values[v] = p;
    }
    return move;
}

struct SubharmonicityResult {
    double worst_hat = 0.0;      // min over hats of residual / sup-norm
    int worst_hat_vertex = -1;
    double worst_log_cutoff = 0.0;
    std::vector<double> hat_residuals;
    std::vector<double> log_cutoff_residuals;
};

inline constexpr double kHarmonicCertTol = 1e-6;

// Residuals -sum_e w_e a_e (eta_a - eta_b)(F_a - F_b) / sup(eta) with
// F = sqrt((1 - cos d) / (cos R0 cos R1)), a_e the edge average of cos R0 cos R1.
// Test functions: hats at interior vertices, and for every `cutoff_center`
// a tent of radius `tent_radius` times the log cutoff at eps = 1e-1 and 1e-2.
inline SubharmonicityResult subharmonicity_residual(const DiscreteMap& u0, const DiscreteMap& u1,
                                                    const TargetPoint& O, const DirichletProblem& prob0,
                                                    const DirichletProblem& prob1,
                                                    const std::vector<int>& cutoff_centers = {},
                                                    double tent_radius = 0.0) {
    if (sweep_move(u0, prob0) > kHarmonicCertTol || sweep_move(u1, prob1) > kHarmonicCertTol)
        throw NotHarmonicError("subharmonicity needs solver-certified harmonic inputs");
    const auto& m = *u0.mesh;
    const Region& reg = prob0.region;
    std::vector<double> F(m.num_vertices(), 0.0), a(m.num_vertices(), 0.0);
    for (int v : reg.vertices) {
        const double d = detail::distance_unchecked(u0.space, u0.values[v], u1.values[v]);
        const double c0 = std::cos(detail::distance_unchecked(u0.space, u0.values[v], O));
        const double c1 = std::cos(detail::distance_unchecked(u0.space, u1.values[v], O));
        a[v] = c0 * c1;
        F[v] = std::sqrt(std::max(0.0, 1 - std::cos(d)) / a[v]);
    }
    auto residual = [&](const std::vector<double>& eta) {
        std::vector<double> terms;
        double sup = 0.0;
        for (int v : reg.vertices) sup = std::max(sup, std::abs(eta[v]));
        for (int e : reg.edges) {
            const int x = m.edges[e][0], y = m.edges[e][1];
            terms.push_back(-m.edge_weight[e] * 0.5 * (a[x] + a[y]) * (eta[x] - eta[y]) * (F[x] - F[y]));
        }
        return sup > 0.0 ? pairwise_sum(terms) / sup : 0.0;
    };
    SubharmonicityResult res;
    for (int v : reg.interior) {
        double r = 0.0;
        for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
            const int w = m.adj_vertex[k];
            r += m.edge_weight[m.adj_edge[k]] * 0.5 * (a[v] + a[w]) * (F[w] - F[v]);
        }
        res.hat_residuals.push_back(r);
        if (res.worst_hat_vertex < 0 || r < res.worst_hat) {
            res.worst_hat = r;
            res.worst_hat_vertex = v;
        }
    }
    for (int c : cutoff_centers) {
        for (double eps : {1e-1, 1e-2}) {
            std::vector<double> eta(m.num_vertices(), 0.0);
            for (int v : reg.interior) {
                const double r = m.distance(c, v);
                const double tent = std::max(0.0, 1.0 - r / tent_radius);
                double phi = 1.0;
                if (r < eps * eps)
                    phi = 0.0;
                else if (r < eps)
                    phi = (std::log(r) - std::log(eps * eps)) / (-std::log(eps));
                eta[v] = tent * phi;
            }
            const double r = residual(eta);
            res.log_cutoff_residuals.push_back(r);
            res.worst_log_cutoff = std::min(res.worst_log_cutoff, r);
        }
    }
    return res;
}

struct HarmonicityOptions {
    double floor = 0.0;  // lower bound on the normalizing energy
    double tol = 1e-10;
    int max_sweeps = 100000;
};

// Largest relative energy drop over the given centers after re-solving the
// Dirichlet problem on B_r(center), seeded with the map itself.
inline double harmonicity_residual(const DiscreteMap& u, double r, const std::vector<int>& centers,
                                   const HarmonicityOptions& opt = {}) {
    const auto& m = *u.mesh;
    if (r < 2 * m.max_edge) throw ResolutionError("harmonicity scale below mesh resolution");
    double worst = 0.0;
    for (int c : centers) {
        const Region reg = make_region(m, geodesic_ball(m, c, r));
        if (reg.interior.empty() || reg.boundary.empty()) continue;
        const double e0 = energy(u, reg);
        const double norm = std::max(e0, opt.floor);
        if (norm <= 0.0) continue;
        std::vector<TargetPoint> pts;
        for (int v : reg.vertices) pts.push_back(u.values[v]);
        const TargetPoint P = frechet_mean(u.space, pts);
        double rad = 0.0;
        for (const auto& p : pts) rad = std::max(rad, detail::distance_unchecked(u.space, P, p));
        if (rad >= kPi / 4 - 1e-9) {
            worst = std::max(worst, 1.0);
            continue;
        }
        DirichletProblem prob = make_problem(u, reg, P, std::max(rad + 1e-12, std::min(u.space.rho, kPi / 4 - 1e-9)));
        DiscreteMap w = u;
        SolveOptions so;
        so.tol = opt.tol;
        so.max_sweeps = opt.max_sweeps;
        solve_in_place(w, prob, so);
        worst = std::max(worst, std::max(0.0, e0 - energy(w, reg)) / norm);
    }
    return worst;
}

}  // namespace catflow
