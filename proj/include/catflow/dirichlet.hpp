#pragma once

// Dirichlet problem into a small closed ball: Gauss-Seidel sweeps of exact
// vertex minimizations, with maximum-principle, uniqueness and Lipschitz checks.

#include <cmath>
#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Sparse>

#include "catflow/energy.hpp"
#include "catflow/errors.hpp"
#include "catflow/surface_domain.hpp"
#include "catflow/target_space.hpp"

namespace catflow {

inline constexpr double kFrechetStepTol = 1e-12;
inline constexpr int kFrechetMaxIter = 200;

namespace detail {

inline double sphere_objective(const Vec3& p, const std::vector<Vec3>& q, const std::vector<double>& w) {
    double f = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double d = angle_between(p, q[j]);
        f += w[j] * d * d;
    }
    return f;
}

// Weighted Frechet mean on the unit sphere, for points inside a small cap.
inline Vec3 sphere_frechet_mean(const std::vector<Vec3>& q, const std::vector<double>& w) {
    Vec3 p = Vec3::Zero();
    double W = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        p += w[j] * q[j];
        W += w[j];
    }
    if (W <= 0.0) return q.front();
    if (p.norm() < 1e-12) p = q.front();
    p.normalize();
    for (int it = 0; it < kFrechetMaxIter; ++it) {
        Vec3 g = Vec3::Zero();
        for (std::size_t j = 0; j < q.size(); ++j) g += w[j] * sphere_log(p, q[j]);
        g /= W;
        p = sphere_exp(p, g);
        if (g.norm() < kFrechetStepTol) break;
    }
    return p;
}

inline double book_objective(const TargetSpace& sp, const TargetPoint& p, const std::vector<TargetPoint>& q,
                             const std::vector<double>& w) {
    double f = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double d = distance_unchecked(sp, p, q[j]);
        f += w[j] * d * d;
    }
    return f;
}

inline TargetPoint book_frechet_mean(const TargetSpace& sp, const std::vector<TargetPoint>& q,
                                     const std::vector<double>& w, const TargetPoint& init) {
    std::vector<int> pages;
    auto add_page = [&](int c) {
        if (std::find(pages.begin(), pages.end(), c) == pages.end()) pages.push_back(c);
    };
    if (!on_spine(init)) add_page(init.chart);
    for (const auto& p : q)
        if (!on_spine(p)) add_page(p.chart);
    std::sort(pages.begin(), pages.end());

    // A critical point strictly inside a page is the global minimizer, since
    // the objective is geodesically convex on the small balls we work in.
    TargetPoint best = init;
    double best_f = book_objective(sp, init, q, w);
    std::vector<Vec3> unfolded(q.size());
    Vec3 any_mean = q.front().x;
    for (int k : pages) {
        for (std::size_t j = 0; j < q.size(); ++j)
            unfolded[j] = (on_spine(q[j]) || q[j].chart == k) ? q[j].x : reflect_z(q[j].x);
        const Vec3 m = sphere_frechet_mean(unfolded, w);
        any_mean = m;
        if (m.z() > kIdentifyTol) return TargetPoint{k, m};
    }
    // Best point on the spine; spine distances do not depend on pages.
    std::vector<Vec3> flat(q.size());
    for (std::size_t j = 0; j < q.size(); ++j) flat[j] = q[j].x;
    const double t0 = std::atan2(any_mean.y(), any_mean.x());
    auto g = [&](double t) { return sphere_objective(spine_point(t), flat, w); };
    double gmin = 0.0;
    const double t = golden_section_min(g, t0 - kPi / 2, t0 + kPi / 2, 1e-13, &gmin);
    if (gmin < best_f) best = TargetPoint{0, spine_point(t)};
    return best;
}

inline double cone_objective(const TargetSpace& sp, double r, double phi, const std::vector<TargetPoint>& q,
                             const std::vector<double>& w) {
    double f = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        const double d = cone_distance_raw(r, phi, q[j].x[0], q[j].x[1], sp.cone_angle);
        f += w[j] * d * d;
    }
    return f;
}

// Weighted mean on a flat cone of angle >= 2 pi. The objective is geodesically
// convex; safeguarded Newton steps in the development about the current point,
// with the apex handled through its one-sided directional derivatives.
inline TargetPoint cone_frechet_mean(const TargetSpace& sp, const std::vector<TargetPoint>& q,
                                     const std::vector<double>& w, const TargetPoint& init) {
    const double theta = sp.cone_angle;
    double r = init.x[0], phi = init.x[1];
    const double f_apex = cone_objective(sp, 0.0, 0.0, q, w);
    auto apex_slope = [&](double psi) {
        double s = 0.0;
        for (std::size_t j = 0; j < q.size(); ++j) {
            if (q[j].x[0] <= 0.0) continue;
            const double delta = std::abs(signed_angle_diff(psi, q[j].x[1], theta));
            s -= w[j] * q[j].x[0] * std::cos(std::min(delta, kPi));
        }
        return 2.0 * s;
    };
    if (r <= kIdentifyTol) {
        int best = 0;
        double best_s = 1e300;
        const int n = 720;
        for (int i = 0; i < n; ++i) {
            const double s = apex_slope(theta * i / n);
            if (s < best_s) best_s = s, best = i;
        }
        if (best_s >= 0.0) return TargetPoint{0, Vec3::Zero()};
        phi = theta * best / n;
        double W = 0.0;
        for (double x : w) W += x;
        r = std::max(1e-9, -best_s / (2.0 * std::max(W, 1e-300)));
    }
    double f = cone_objective(sp, r, phi, q, w);
    for (int it = 0; it < kFrechetMaxIter; ++it) {
        Eigen::Vector2d g = Eigen::Vector2d::Zero();
        Eigen::Matrix2d H = Eigen::Matrix2d::Zero();
        for (std::size_t j = 0; j < q.size(); ++j) {
            const double rj = q[j].x[0];
            const double delta = signed_angle_diff(phi, q[j].x[1], theta);
            if (rj <= 0.0 || std::abs(delta) < kPi) {
                const Eigen::Vector2d qd(rj * std::cos(delta), rj * std::sin(delta));
                g += 2 * w[j] * (Eigen::Vector2d(r, 0) - qd);
                H += 2 * w[j] * Eigen::Matrix2d::Identity();
            } else {
                g += 2 * w[j] * (r + rj) * Eigen::Vector2d(1, 0);
                H(0, 0) += 2 * w[j];
                H(1, 1) += 2 * w[j] * (r + rj) / r;
            }
        }
        Eigen::Vector2d step = -H.ldlt().solve(g);
        if (step.norm() < 1e-6 * std::max(r, 1e-3)) {
            // objective differences are below roundoff here; trust the Newton step
            const Eigen::Vector2d p(r + step.x(), step.y());
            r = p.norm();
            phi = wrap_angle(phi + std::atan2(p.y(), p.x()), theta);
            f = cone_objective(sp, r, phi, q, w);
            if (step.norm() < kFrechetStepTol) break;
            continue;
        }
        double t = 1.0;
        bool moved = false;
        for (int ls = 0; ls < 60; ++ls) {
            const Eigen::Vector2d p(r + t * step.x(), t * step.y());
            const double nr = p.norm();
            const double nphi = wrap_angle(phi + std::atan2(p.y(), p.x()), theta);
            const double nf = nr <= kIdentifyTol ? f_apex : cone_objective(sp, nr, nphi, q, w);
            if (nf <= f) {
                moved = nf < f || (t * step).norm() == 0.0;
                r = nr;
                phi = nphi;
                f = nf;
                break;
            }
            t *= 0.5;
        }
        if (!moved || t * step.norm() < kFrechetStepTol || r <= kIdentifyTol) break;
    }
    if (f_apex <= f || r <= kIdentifyTol) return TargetPoint{0, Vec3::Zero()};
    return canonical(sp, TargetPoint{0, Vec3(r, phi, 0.0)});
}

}  // namespace detail

// Minimizer of sum_j w_j d^2(p, q_j); `init` selects the starting point
// (and is returned unchanged when every weight is zero).
inline TargetPoint weighted_frechet_mean(const TargetSpace& sp, const std::vector<TargetPoint>& q,
                                         const std::vector<double>& w, const TargetPoint& init) {
    if (q.empty()) return init;
    double W = 0.0;
    for (double x : w) W += x;
    if (W <= 0.0) return init;
    switch (sp.kind) {
        case SpaceKind::UnitSphere: {
            std::vector<Vec3> x(q.size());
            for (std::size_t j = 0; j < q.size(); ++j) x[j] = q[j].x;
            return TargetPoint{0, detail::sphere_frechet_mean(x, w)};
        }
        case SpaceKind::SphericalBook:
            return detail::book_frechet_mean(sp, q, w, init);
        case SpaceKind::FlatCone:
            return detail::cone_frechet_mean(sp, q, w, init);
    }
    return init;
}

inline TargetPoint frechet_mean(const TargetSpace& sp, const std::vector<TargetPoint>& q) {
    if (q.empty()) throw PreconditionError("mean of an empty point set");
    return weighted_frechet_mean(sp, q, std::vector<double>(q.size(), 1.0), q.front());
}

struct DirichletProblem {
    std::shared_ptr<const SurfaceMesh> mesh;
    Region region;
    BoundaryData boundary;
    TargetSpace space;
    TargetPoint center;
    double rho = kPi / 8;
};

struct SolveCertificate {
    bool max_principle_pass = true;
    double max_principle_excess = 0.0;
    bool uniqueness_checked = false;
    bool uniqueness_pass = true;
    double uniqueness_gap = 0.0;
    double lipschitz_proxy = 0.0;
};

struct SolveReport {
    int iterations = 0;
    double final_energy = 0.0;
    std::vector<double> energy_trace;  // seed, accelerated seed when used, then one entry per sweep
    double max_move = 0.0;
    bool converged = false;
    SolveCertificate certificate;
};

struct BudgetExceededError : Error {
    BudgetExceededError(const std::string& what, DiscreteMap partial_map, SolveReport rep)
        : Error(what), partial(std::move(partial_map)), report(std::move(rep)) {}
    const char* kind() const noexcept override { return "budget-exceeded"; }
    DiscreteMap partial;
    SolveReport report;
};

inline DirichletProblem make_problem(const DiscreteMap& boundary_source, Region region, const TargetPoint& center,
                                     double rho) {
    DirichletProblem p;
    p.mesh = boundary_source.mesh;
    p.boundary = restrict_trace(boundary_source, region);
    p.region = std::move(region);
    p.space = boundary_source.space;
    p.center = center;
    p.rho = rho;
    return p;
}

inline void validate_problem(const DirichletProblem& prob) {
    if (!(prob.rho > 0.0 && prob.rho < kPi / 4)) throw AdmissibilityError("rho must lie in (0, pi/4)");
    if (prob.boundary.empty()) throw EmptyBoundaryError("Dirichlet problem without boundary data");
    for (const auto& [v, p] : prob.boundary) {
        validate_point(prob.space, p);
        if (detail::distance_unchecked(prob.space, prob.center, p) > prob.rho + 1e-12)
            throw AdmissibilityError("boundary value at vertex " + std::to_string(v) + " lies outside the ball");
    }
}

// Minimizer over the closed ball of sum over neighbors of w_e d^2(p, u(y)).
inline TargetPoint vertex_update(const DiscreteMap& u, int v, const DirichletProblem& prob) {
    const auto& m = *u.mesh;
    std::vector<TargetPoint> q;
    std::vector<double> w;
    for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
        const double we = m.edge_weight[m.adj_edge[k]];
        if (we <= 0.0) continue;
        q.push_back(u.values[m.adj_vertex[k]]);
        w.push_back(we);
    }
    TargetPoint p = weighted_frechet_mean(prob.space, q, w, u.values[v]);
    const double d = detail::distance_unchecked(prob.space, prob.center, p);
    if (d > prob.rho) {
        if (d >= kPi) throw NonUniqueGeodesicError("vertex update left the admissible ball");
        p = detail::geodesic_unchecked(prob.space, prob.center, p, prob.rho / d);
    }
    return p;
}

// Largest distance from the center over the region, compared with the largest
// boundary distance sigma.
inline std::pair<bool, double> maximum_principle_check(const DiscreteMap& sol, const DirichletProblem& prob,
                                                       double sigma) {
    double bmax = 0.0;
    for (int v : prob.region.boundary)
        bmax = std::max(bmax, detail::distance_unchecked(sol.space, prob.center, sol.values[v]));
    if (bmax > sigma + 1e-9) return {true, 0.0};  // hypothesis not met: vacuous
    double excess = 0.0;
    for (int v : prob.region.vertices)
        excess = std::max(excess, detail::distance_unchecked(sol.space, prob.center, sol.values[v]) - sigma);
    return {excess <= 1e-9, std::max(0.0, excess)};
}

// Vertices at combinatorial distance >= margin from the region boundary.
inline std::vector<int> inner_vertices(const SurfaceMesh& m, const Region& r, int margin) {
    std::vector<int> depth(m.num_vertices(), -1), queue;
    for (int v : r.boundary) {
        depth[v] = 0;
        queue.push_back(v);
    }
    for (std::size_t i = 0; i < queue.size(); ++i) {
        const int v = queue[i];
        for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
            const int w = m.adj_vertex[k];
            if (r.mask[w] && depth[w] < 0) {
                depth[w] = depth[v] + 1;
                queue.push_back(w);
            }
        }
    }
    std::vector<int> out;
    for (int v : r.vertices)
        if (depth[v] >= margin) out.push_back(v);
    return out;
}

// Largest difference quotient d(u(x), u(y)) / |x - y| over edges inside the inner subregion.
inline double lipschitz_proxy(const DiscreteMap& sol, const Region& r, int margin) {
    const auto& m = *sol.mesh;
    const auto inner = inner_vertices(m, r, margin);
    std::vector<char> in(m.num_vertices(), 0);
    for (int v : inner) in[v] = 1;
    double best = 0.0;
    for (std::size_t e = 0; e < m.edges.size(); ++e) {
        const int a = m.edges[e][0], b = m.edges[e][1];
        if (in[a] && in[b]) best = std::max(best, sol.dist(a, b) / m.edge_length[e]);
    }
    return best;
}

struct SolveOptions {
    double tol = 1e-8;
    int max_sweeps = 100000;
    int lipschitz_margin = 2;
    // Seed the sweeps with a Laplacian solve where the ball about the center has
    // a smooth chart: always on the sphere, on a book when the ball misses the
    // spine, on a cone when it misses the apex. The sweeps and their stopping
    // rule are unchanged.
    bool accelerate = true;
};

namespace detail {

// Cotangent Laplacian on the region interior, factored.
struct InteriorLaplacian {
    std::vector<int> idx;  // vertex -> row, -1 off the interior
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> chol;
    bool ok = false;
};

inline void factor_interior_laplacian(InteriorLaplacian& L, const SurfaceMesh& m, const std::vector<int>& interior) {
    const int n = static_cast<int>(interior.size());
    L.idx.assign(m.num_vertices(), -1);
    for (int i = 0; i < n; ++i) L.idx[interior[i]] = i;
    std::vector<Eigen::Triplet<double>> trip;
    for (int i = 0; i < n; ++i) {
        const int v = interior[i];
        double diag = 0.0;
        for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
            const double we = m.edge_weight[m.adj_edge[k]];
            if (we <= 0.0) continue;
            diag += we;
            const int j = L.idx[m.adj_vertex[k]];
            if (j >= 0) trip.emplace_back(i, j, -we);
        }
        trip.emplace_back(i, i, diag);
    }
    Eigen::SparseMatrix<double> A(n, n);
    A.setFromTriplets(trip.begin(), trip.end());
    L.chol.compute(A);
    L.ok = L.chol.info() == Eigen::Success;
}

// Laplacian-preconditioned Riemannian gradient iteration on the sphere (or on
// one page of a book, whose chart it keeps). Returns false, leaving u
// untouched, when it fails to reduce the energy.
inline bool sphere_preconditioned_seed(DiscreteMap& u, const DirichletProblem& prob, int max_iter = 60) {
    const auto& m = *u.mesh;
    const auto& interior = prob.region.interior;
    const int n = static_cast<int>(interior.size());
    if (n == 0) return true;
    InteriorLaplacian lap;
    factor_interior_laplacian(lap, m, interior);
    if (!lap.ok) return false;
    const auto& chol = lap.chol;
    const std::vector<TargetPoint> saved = u.values;
    const double e_start = energy(u, prob.region);
    Eigen::MatrixXd g(n, 3);
    for (int it = 0; it < max_iter; ++it) {
        for (int i = 0; i < n; ++i) {
            const int v = interior[i];
            Vec3 s = Vec3::Zero();
            for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
                const double we = m.edge_weight[m.adj_edge[k]];
                if (we > 0.0) s += we * sphere_log(u.values[v].x, u.values[m.adj_vertex[k]].x);
            }
            g.row(i) = s.transpose();
        }
        const Eigen::MatrixXd step = chol.solve(g);
        double biggest = 0.0;
        for (int i = 0; i < n; ++i) {
            const int v = interior[i];
            const Vec3& p = u.values[v].x;
            Vec3 t = step.row(i).transpose();
            t -= t.dot(p) * p;
            biggest = std::max(biggest, t.norm());
            TargetPoint q{prob.center.chart, sphere_exp(p, t)};
            const double d = angle_between(prob.center.x, q.x);
            if (d > prob.rho) q = TargetPoint{prob.center.chart, slerp(prob.center.x, q.x, prob.rho / d)};
            u.values[v] = q;
        }
        if (biggest < 1e-14) break;
    }
    if (!(energy(u, prob.region) <= e_start)) {
        u.values = saved;
        return false;
    }
    return true;
}

// Cone ball that misses the apex: develop it isometrically onto a planar disk
// about the center's ray and solve two scalar Laplace problems.
inline bool cone_flat_seed(DiscreteMap& u, const DirichletProblem& prob) {
    const auto& m = *u.mesh;
    const auto& interior = prob.region.interior;
    const int n = static_cast<int>(interior.size());
    if (n == 0) return true;
    InteriorLaplacian lap;
    factor_interior_laplacian(lap, m, interior);
    if (!lap.ok) return false;
    const double theta = prob.space.cone_angle, phi0 = prob.center.x[1];
    auto develop = [&](const TargetPoint& p) {
        const double d = signed_angle_diff(phi0, p.x[1], theta);
        return Vec2(p.x[0] * std::cos(d), p.x[0] * std::sin(d));
    };
    Eigen::MatrixXd rhs = Eigen::MatrixXd::Zero(n, 2);
    for (int i = 0; i < n; ++i) {
        const int v = interior[i];
        for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
            const double we = m.edge_weight[m.adj_edge[k]];
            const int j = m.adj_vertex[k];
            if (we > 0.0 && lap.idx[j] < 0) rhs.row(i) += we * develop(u.values[j]).transpose();
        }
    }
    const Eigen::MatrixXd x = lap.chol.solve(rhs);
    const double e_start = energy(u, prob.region);
    const std::vector<TargetPoint> saved = u.values;
    for (int i = 0; i < n; ++i) {
        const Vec2 p = x.row(i).transpose();
        u.values[interior[i]] = canonical(prob.space, TargetPoint{0, Vec3(p.norm(), phi0 + std::atan2(p.y(), p.x()), 0.0)});
    }
    if (!(energy(u, prob.region) <= e_start)) {
        u.values = saved;
        return false;
    }
    return true;
}

inline bool accelerated_seed(DiscreteMap& u, const DirichletProblem& prob) {
    const auto& sp = prob.space;
    switch (sp.kind) {
        case SpaceKind::UnitSphere: return sphere_preconditioned_seed(u, prob);
        case SpaceKind::SphericalBook:
            // distance from the center to the spine is asin(z)
            if (std::asin(std::min(1.0, prob.center.x.z())) <= prob.rho + 1e-12) return false;
            return sphere_preconditioned_seed(u, prob);
        case SpaceKind::FlatCone:
            if (prob.center.x[0] <= prob.rho + 1e-12) return false;
            return cone_flat_seed(u, prob);
    }
    return false;
}

}  // namespace detail

// Runs the sweeps in place on `u`, whose region boundary is overwritten with the
// boundary data. Throws BudgetExceededError with the partial map on exhaustion.
inline SolveReport solve_in_place(DiscreteMap& u, const DirichletProblem& prob, const SolveOptions& opt = {}) {
    validate_problem(prob);
    if (!(opt.tol > 0.0)) throw PreconditionError("tolerance must be positive");
    for (const auto& [v, p] : prob.boundary) u.values[v] = p;
    for (int v : prob.region.interior) {
        const double d = detail::distance_unchecked(prob.space, prob.center, u.values[v]);
        if (d > prob.rho) u.values[v] = detail::geodesic_unchecked(prob.space, prob.center, u.values[v], prob.rho / d);
    }
    SolveReport rep;
    rep.energy_trace.push_back(energy(u, prob.region));
    if (opt.accelerate && detail::accelerated_seed(u, prob))
        rep.energy_trace.push_back(energy(u, prob.region));
    for (int sweep = 1;; ++sweep) {
        double move = 0.0;
        for (int v : prob.region.interior) {
            const TargetPoint p = vertex_update(u, v, prob);
            move = std::max(move, detail::distance_unchecked(prob.space, u.values[v], p));
            u.values[v] = p;
        }
        rep.iterations = sweep;
        rep.max_move = move;
        rep.energy_trace.push_back(energy(u, prob.region));
        if (move < opt.tol) {
            rep.converged = true;
            break;
        }
        if (sweep >= opt.max_sweeps) {
            rep.final_energy = rep.energy_trace.back();
            throw BudgetExceededError("Dirichlet solve exceeded " + std::to_string(opt.max_sweeps) + " sweeps", u, rep);
        }
    }
    rep.final_energy = rep.energy_trace.back();
    double sigma = 0.0;
    for (int v : prob.region.boundary)
        sigma = std::max(sigma, detail::distance_unchecked(prob.space, prob.center, u.values[v]));
    const auto [mp, excess] = maximum_principle_check(u, prob, sigma);
    rep.certificate.max_principle_pass = mp;
    rep.certificate.max_principle_excess = excess;
    rep.certificate.lipschitz_proxy = lipschitz_proxy(u, prob.region, opt.lipschitz_margin);
    return rep;
}

// Default seed: constant at the Frechet mean of the boundary values.
inline DiscreteMap boundary_mean_seed(const DirichletProblem& prob, const DiscreteMap* base = nullptr) {
    std::vector<TargetPoint> pts;
    for (const auto& bp : prob.boundary) pts.push_back(bp.second);
    const TargetPoint mean = frechet_mean(prob.space, pts);
    DiscreteMap u = base ? *base : DiscreteMap::constant(prob.mesh, prob.space, mean);
    for (int v : prob.region.interior) u.values[v] = mean;
    return u;
}

inline std::pair<DiscreteMap, SolveReport> solve_dirichlet(const DirichletProblem& prob,
                                                           const std::optional<DiscreteMap>& seed = std::nullopt,
                                                           const SolveOptions& opt = {}) {
    validate_problem(prob);
    DiscreteMap u = seed ? *seed : boundary_mean_seed(prob);
    if (u.mesh->num_vertices() != prob.mesh->num_vertices()) throw PreconditionError("seed lives on another mesh");
    SolveReport rep = solve_in_place(u, prob, opt);
    return {std::move(u), std::move(rep)};
}

// Solves from two seeds and records the largest vertex-wise distance.
inline double uniqueness_gap(const DirichletProblem& prob, const DiscreteMap& seed_a, const DiscreteMap& seed_b,
                             const SolveOptions& opt = {}) {
    auto [a, ra] = solve_dirichlet(prob, seed_a, opt);
    auto [b, rb] = solve_dirichlet(prob, seed_b, opt);
    double gap = 0.0;
    for (int v : prob.region.vertices) gap = std::max(gap, detail::distance_unchecked(prob.space, a.values[v], b.values[v]));
    return gap;
}

}  // namespace catflow
