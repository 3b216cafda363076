#include <gtest/gtest.h>

#include <Eigen/Sparse>

#include "catflow/dirichlet.hpp"
#include "catflow/rng.hpp"
#include "catflow/sampling.hpp"

using namespace catflow;

namespace {

std::shared_ptr<const SurfaceMesh> square(int level) {
    return std::make_shared<const SurfaceMesh>(build_mesh(MeshKind::FlatSquare, level));
}

Region unit_disk(const SurfaceMesh& m) {
    std::vector<int> vs;
    for (int v = 0; v < m.num_vertices(); ++v)
        if (m.vertices[v].head<2>().norm() <= 1.0 + 1e-12) vs.push_back(v);
    return make_region(m, vs);
}

// Cotangent-Laplace extension of boundary values by a sparse direct solve.
std::vector<double> scalar_harmonic(const SurfaceMesh& m, const Region& r, const std::vector<double>& g) {
    std::vector<int> idx(m.num_vertices(), -1);
    for (std::size_t i = 0; i < r.interior.size(); ++i) idx[r.interior[i]] = static_cast<int>(i);
    const int n = static_cast<int>(r.interior.size());
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    for (int e : r.edges) {
        const int a = m.edges[e][0], b = m.edges[e][1];
        const double w = m.edge_weight[e];
        for (auto [x, y] : {std::pair{a, b}, std::pair{b, a}}) {
            if (idx[x] < 0) continue;
            trip.emplace_back(idx[x], idx[x], w);
            if (idx[y] >= 0)
                trip.emplace_back(idx[x], idx[y], -w);
            else
                rhs[idx[x]] += w * g[y];
        }
    }
    Eigen::SparseMatrix<double> L(n, n);
    L.setFromTriplets(trip.begin(), trip.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(L);
    const Eigen::VectorXd x = solver.solve(rhs);
    std::vector<double> out = g;
    for (int v : r.interior) out[v] = x[idx[v]];
    return out;
}

struct GeodesicCase {
    TargetSpace sp;
    TargetPoint A, B;
};

std::vector<GeodesicCase> geodesic_cases() {
    const auto sph = TargetSpace::sphere();
    const auto book = TargetSpace::book(3);
    const auto cone = TargetSpace::cone(2.5 * kPi);
    return {{sph, TargetPoint{0, Vec3(0, 0, 1)}, sphere_point(std::sin(0.6), 0, std::cos(0.6))},
            // crosses the spine from page 0 to page 2
            {book, make_point(book, 0, Vec3(std::cos(0.3), 0, std::sin(0.3))),
             make_point(book, 2, Vec3(std::cos(0.3), 0.2, std::sin(0.3)))},
            // passes near the apex over an angle larger than pi
            {cone, make_point(cone, 0, Vec3(0.3, 0.0, 0)), make_point(cone, 0, Vec3(0.3, 3.5, 0))}};
}

}  // namespace

TEST(Dirichlet, FrechetMeanOfTwoPointsIsTheMidpoint) {
    Rng rng(41, "midpoint");
    for (const auto& sp : {TargetSpace::sphere(), TargetSpace::book(3), TargetSpace::cone(2.5 * kPi)})
        for (int i = 0; i < 200; ++i) {
            const TargetPoint p = random_point(sp, rng);
            const TargetPoint q = random_step(sp, p, rng.uniform(0.0, 0.7), rng);
            const TargetPoint m = frechet_mean(sp, {p, q});
            EXPECT_NEAR(distance(sp, m, p), 0.5 * distance(sp, p, q), 1e-7) << sp.description;
            EXPECT_NEAR(distance(sp, m, q), 0.5 * distance(sp, p, q), 1e-7) << sp.description;
        }
}

// The vertex update minimizes the weighted sum of squared distances: no point
// of a dense local scan does better.
TEST(Dirichlet, VertexUpdateBeatsGridSearch) {
    Rng rng(42, "grid-search");
    for (const auto& sp : {TargetSpace::sphere(), TargetSpace::book(3), TargetSpace::cone(2.5 * kPi)})
        for (int trial = 0; trial < 10; ++trial) {
            const TargetPoint c = random_point(sp, rng);
            std::vector<TargetPoint> q;
            std::vector<double> w;
            for (int j = 0; j < 6; ++j) {
                q.push_back(random_step(sp, c, rng.uniform(0.0, 0.3), rng));
                w.push_back(rng.uniform(0.1, 1.0));
            }
            auto f = [&](const TargetPoint& p) {
                double s = 0.0;
                for (std::size_t j = 0; j < q.size(); ++j) s += w[j] * std::pow(distance(sp, p, q[j]), 2);
                return s;
            };
            const TargetPoint best = weighted_frechet_mean(sp, q, w, c);
            const double fb = f(best);
            Rng scan(7, "scan");
            for (int s = 0; s < 3000; ++s) {
                const TargetPoint p = random_step(sp, c, 0.35 * std::sqrt(scan.uniform()), scan);
                EXPECT_LE(fb, f(p) + 1e-10) << sp.description;
            }
        }
}

TEST(Dirichlet, GeodesicBoundaryDataMatchesScalarLaplace) {
    auto m = square(1);
    const Region r = unit_disk(*m);
    for (const auto& gc : geodesic_cases()) {
        const double L = distance(gc.sp, gc.A, gc.B);
        std::vector<double> h(m->num_vertices(), 0.5);
        for (int v : r.boundary) {
            const double x = m->vertices[v].x(), y = m->vertices[v].y();
            h[v] = 0.5 + 0.3 * x + 0.15 * std::sin(3 * y);
        }
        const auto s = scalar_harmonic(*m, r, h);
        std::vector<TargetPoint> vals(m->num_vertices());
        for (int v = 0; v < m->num_vertices(); ++v) vals[v] = geodesic_point(gc.sp, gc.A, gc.B, h[v]);
        const DiscreteMap src(m, gc.sp, vals);
        const TargetPoint mid = geodesic_point(gc.sp, gc.A, gc.B, 0.5);
        SolveOptions o;
        o.tol = 1e-13;
        auto [u, rep] = solve_dirichlet(make_problem(src, r, mid, std::min(0.5 * L + 1e-6, kPi / 4 - 1e-9)), std::nullopt, o);
        EXPECT_TRUE(rep.converged);
        for (int v : r.vertices)
            EXPECT_NEAR(distance(gc.sp, u[v], geodesic_point(gc.sp, gc.A, gc.B, s[v])), 0.0, 1e-7) << gc.sp.description;
    }
}

TEST(Dirichlet, EnergyTraceIsNonincreasing) {
    auto m = square(1);
    const Region r = unit_disk(*m);
    Rng rng(43, "trace");
    for (const auto& sp : {TargetSpace::sphere(), TargetSpace::book(3), TargetSpace::cone(2.5 * kPi)}) {
        const TargetPoint P = random_point(sp, rng);
        DiscreteMap src = DiscreteMap::constant(m, sp, P);
        for (int v : r.boundary) src[v] = random_step(sp, P, rng.uniform(0.0, 0.3), rng);
        SolveOptions o;
        o.accelerate = false;
        auto [u, rep] = solve_dirichlet(make_problem(src, r, P, kPi / 8), std::nullopt, o);
        for (std::size_t i = 1; i < rep.energy_trace.size(); ++i)
            EXPECT_LE(rep.energy_trace[i], rep.energy_trace[i - 1] + 1e-12) << sp.description;
        EXPECT_NEAR(rep.final_energy, energy(u, r), 1e-12);
    }
}

TEST(Dirichlet, MaximumPrincipleAndUniqueness) {
    auto m = square(1);
    const Region r = unit_disk(*m);
    Rng rng(44, "max-principle");
    for (const auto& sp : {TargetSpace::sphere(), TargetSpace::book(3), TargetSpace::cone(2.5 * kPi)})
        for (int i = 0; i < 3; ++i) {
            const TargetPoint P = random_point(sp, rng);
            DiscreteMap src = DiscreteMap::constant(m, sp, P);
            for (int v : r.boundary) src[v] = random_step(sp, P, rng.uniform(0.0, 0.5 * sp.rho), rng);
            const DirichletProblem prob = make_problem(src, r, P, sp.rho);
            SolveOptions o;
            o.tol = 1e-12;
            auto [u, rep] = solve_dirichlet(prob, std::nullopt, o);
            EXPECT_TRUE(rep.certificate.max_principle_pass) << sp.description;
            for (int v : r.vertices) EXPECT_LE(distance(sp, P, u[v]), 0.5 * sp.rho + 1e-9);
            DiscreteMap other = src;
            for (int v : r.interior) other[v] = random_step(sp, P, rng.uniform(0.0, sp.rho), rng);
            EXPECT_LT(uniqueness_gap(prob, boundary_mean_seed(prob), other, o), 1e-6) << sp.description;
        }
}

// Balls inside one page, or away from the cone apex, get a Laplacian seed; the
// solution must not depend on it.
TEST(Dirichlet, ChartSeedsDoNotChangeTheSolution) {
    auto m = square(2);
    const Region r = unit_disk(*m);
    Rng rng(46, "chart-seed");
    const auto book = TargetSpace::book(3), cone = TargetSpace::cone(2.5 * kPi);
    const std::pair<TargetSpace, TargetPoint> cases[] = {
        {book, make_point(book, 1, Vec3(std::sin(0.3), 0.1, std::cos(0.3)).normalized())},
        {cone, make_point(cone, 0, Vec3(1.0, 4.0, 0.0))}};
    for (const auto& [sp, P] : cases) {
        DiscreteMap src = DiscreteMap::constant(m, sp, P);
        for (int v : r.boundary) src[v] = random_step(sp, P, rng.uniform(0.0, sp.rho), rng);
        const DirichletProblem prob = make_problem(src, r, P, sp.rho);
        SolveOptions fast, plain;
        fast.tol = plain.tol = 1e-12;
        plain.accelerate = false;
        const auto [a, ra] = solve_dirichlet(prob, std::nullopt, fast);
        const auto [b, rb] = solve_dirichlet(prob, std::nullopt, plain);
        EXPECT_EQ(ra.energy_trace.size(), static_cast<std::size_t>(ra.iterations) + 2) << sp.description;
        EXPECT_LT(ra.iterations, rb.iterations / 10) << sp.description;
        for (int v : r.vertices) EXPECT_LT(distance(sp, a[v], b[v]), 1e-9) << sp.description;
    }
}

TEST(Dirichlet, RejectsBadProblems) {
    auto m = square(0);
    const Region r = unit_disk(*m);
    const auto sp = TargetSpace::sphere();
    const TargetPoint P{0, Vec3(0, 0, 1)};
    DiscreteMap src = DiscreteMap::constant(m, sp, P);
    src[r.boundary.front()] = TargetPoint{0, Vec3(1, 0, 0)};
    EXPECT_THROW(solve_dirichlet(make_problem(src, r, P, kPi / 8)), AdmissibilityError);
    EXPECT_THROW(solve_dirichlet(make_problem(src, r, P, 1.0)), AdmissibilityError);
}

TEST(Dirichlet, BudgetExceededCarriesThePartialMap) {
    auto m = square(1);
    const Region r = unit_disk(*m);
    const auto sp = TargetSpace::book(3);
    Rng rng(45, "budget");
    const TargetPoint P = random_point(sp, rng);
    DiscreteMap src = DiscreteMap::constant(m, sp, P);
    for (int v : r.boundary) src[v] = random_step(sp, P, 0.3, rng);
    SolveOptions o;
    o.max_sweeps = 2;
    o.tol = 1e-14;
    try {
        solve_dirichlet(make_problem(src, r, P, kPi / 8), std::nullopt, o);
        FAIL() << "expected BudgetExceededError";
    } catch (const BudgetExceededError& e) {
        EXPECT_EQ(e.report.iterations, 2);
        EXPECT_EQ(e.partial.size(), m->num_vertices());
        EXPECT_STREQ(e.kind(), "budget-exceeded");
    }
}
