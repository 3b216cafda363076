// Acceptance run: one PASS/FAIL line per criterion.
//
//   acceptance            all criteria
//   acceptance 3 8 9      selected criteria

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <map>
#include <set>
#include <string>

#include <Eigen/Sparse>

#include "catflow/catflow.hpp"

using namespace catflow;

namespace {

constexpr std::uint64_t kSeed = 0xacce5715eedull;

// Tolerances and budgets.
constexpr int kAuditSamples = 100000;
constexpr double kAuditSize = 0.05;
constexpr double kAuditSeconds = 300;
constexpr int kConvexityPairs = 1000;
constexpr double kConvexityFloor = -1e-8;
constexpr double kConvexitySeconds = 120;
constexpr double kOracleTol = 1e-6;
constexpr double kOracleSeconds = 30;
constexpr int kMaxPrincipleProblems = 100;
constexpr double kMaxPrincipleSlack = 1e-9;
constexpr double kMaxPrincipleSeconds = 120;
constexpr int kUniquenessProblems = 50;
constexpr double kUniquenessTol = 1e-6;
constexpr double kUniquenessSeconds = 300;
constexpr double kLadderTol = 1e-12;
constexpr double kFlowTol = 1e-6;
constexpr double kFlowSeconds = 1800;
constexpr double kMonotoneTol = 0.01;
constexpr double kThetaLo = 0.95, kThetaHi = 1.05;
constexpr double kMonotoneSeconds = 60;
constexpr double kHopfOrder = 0.8;
constexpr double kEightPiTol = 0.01;
constexpr int kSubharmonicPairs = 20;
constexpr double kHatFloor = -1e-6;
constexpr double kSubharmonicSeconds = 300;
constexpr double kSolverTol = 1e-12;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
    bool pass = true;
    std::string detail;
};

std::string fmt(const char* f, double a) {
    char buf[128];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

const char* kTargetNames[] = {"sphere", "book:3", "cone:5pi/2"};

TargetSpace target(int i) { return parse_target_spec(kTargetNames[i], kPi / 8); }

std::shared_ptr<const SurfaceMesh> mesh_of(MeshKind kind, int level) {
    return std::make_shared<const SurfaceMesh>(build_mesh(kind, level));
}

Region unit_disk(const SurfaceMesh& m, double radius = 1.0) {
    std::vector<int> vs;
    for (int v = 0; v < m.num_vertices(); ++v)
        if (m.vertices[v].head<2>().norm() <= radius + 1e-12) vs.push_back(v);
    return make_region(m, vs);
}

int origin_vertex(const SurfaceMesh& m) {
    int best = 0;
    for (int v = 0; v < m.num_vertices(); ++v)
        if (m.vertices[v].head<2>().norm() < m.vertices[best].head<2>().norm()) best = v;
    return best;
}

// Cotangent-Laplace extension of scalar boundary values (sparse direct solve).
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

// Boundary data geodesic(geodesic(O, A, s), B, t / 2) with s, t smooth random
// trigonometric profiles of the boundary angle and A, B within `reach` of O.
DiscreteMap random_boundary_map(std::shared_ptr<const SurfaceMesh> m, const Region& r, const TargetSpace& sp,
                                const TargetPoint& O, double reach, int center, Rng& rng) {
    const TargetPoint A = random_step(sp, O, rng.uniform(0.3, 1.0) * reach, rng);
    const TargetPoint B = random_step(sp, O, rng.uniform(0.3, 1.0) * reach, rng);
    double c[8];
    for (double& x : c) x = rng.uniform(-1.0, 1.0);
    DiscreteMap u = DiscreteMap::constant(m, sp, O);
    for (int v : r.boundary) {
        const Vec2 d = m->chart_offset(center, v);
        const double th = std::atan2(d.y(), d.x());
        const double s = 0.5 + 0.25 * (c[0] * std::cos(th) + c[1] * std::sin(th)) + 0.25 * c[2] * std::cos(2 * th + c[3]);
        const double t = 0.5 + 0.25 * (c[4] * std::cos(th) + c[5] * std::sin(2 * th)) + 0.25 * c[6] * std::sin(3 * th + c[7]);
        const TargetPoint a = detail::geodesic_unchecked(sp, O, A, std::clamp(s, 0.0, 1.0));
        u[v] = detail::geodesic_unchecked(sp, a, B, 0.5 * std::clamp(t, 0.0, 1.0));
    }
    return u;
}

SolveOptions tight() {
    SolveOptions o;
    o.tol = kSolverTol;
    return o;
}

// ---------------------------------------------------------------------------
// Flow runs shared by criteria 6, 7 and 11.

struct FlowRun {
    std::string name;
    DichotomyCertificate cert;
    double seconds = 0.0;
};

std::map<std::string, FlowRun>& flow_runs() {
    static std::map<std::string, FlowRun> runs;
    return runs;
}

const FlowRun& flow_run(const std::string& initial, int level, int target_index = 0) {
    const std::string key = initial + "@torus:" + std::to_string(level) + "/" + kTargetNames[target_index];
    auto& runs = flow_runs();
    auto it = runs.find(key);
    if (it != runs.end()) return it->second;
    const auto t0 = Clock::now();
    FlowRun r{key, run_flow(builtin_initial_map(mesh_of(MeshKind::FlatTorus, level), target(target_index), initial)), 0.0};
    r.seconds = seconds_since(t0);
    return runs.emplace(key, std::move(r)).first->second;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
    Outcome o;
    const auto t0 = Clock::now();
    int failures = 0;
    double worst = 0.0;
    for (Estimate e : {Estimate::A1, Estimate::A2, Estimate::A4, Estimate::A6})
        for (int t = 0; t < 3; ++t) {
            const AuditResult r = run_estimate_audit(e, target(t), kAuditSamples, kAuditSize, kSeed);
            failures += r.failures;
            worst = std::max(worst, r.worst_ratio);
            if (r.failures > 0) o.detail += std::string(estimate_name(e)) + "/" + kTargetNames[t] + " failed; ";
        }
    const double secs = seconds_since(t0);
    o.pass = failures == 0 && secs < kAuditSeconds;
    o.detail += "12 audits x 1e5, failures " + std::to_string(failures) + fmt(", worst -margin/scale %.3g", worst) +
                fmt(", %.1f s", secs);
    return o;
}

Outcome criterion2() {
    Outcome o;
    const auto t0 = Clock::now();
    int failures = 0;
    double worst = 1e300;
    for (int t = 0; t < 3; ++t) {
        const AuditResult r = run_estimate_audit(Estimate::B1, target(t), kConvexityPairs, kAuditSize, kSeed);
        for (const auto& row : r.rows) {
            worst = std::min(worst, row.margin);
            failures += row.margin < kConvexityFloor;
        }
    }
    const double secs = seconds_since(t0);
    o.pass = failures == 0 && secs < kConvexitySeconds;
    o.detail = "3 targets x 1000 pairs, min margin " + fmt("%.3g", worst) + fmt(", %.1f s", secs);
    return o;
}

Outcome criterion3() {
    Outcome o;
    const auto t0 = Clock::now();
    auto m = mesh_of(MeshKind::FlatSquare, 2);  // 33 x 33 grid on [-1, 1]^2
    const Region r = unit_disk(*m);
    double worst = 0.0;
    for (int t = 0; t < 3; ++t) {
        const TargetSpace sp = target(t);
        TargetPoint A, B;
        if (t == 0) {
            A = TargetPoint{0, Vec3(0, 0, 1)};
            B = sphere_point(std::sin(0.7), 0.0, std::cos(0.7));
        } else if (t == 1) {
            A = make_point(sp, 0, Vec3(std::cos(0.35), 0, std::sin(0.35)));
            B = make_point(sp, 2, Vec3(std::cos(0.35), 0.2, std::sin(0.35)));
        } else {
            A = make_point(sp, 0, Vec3(0.35, 0.0, 0));
            B = make_point(sp, 0, Vec3(0.35, 3.6, 0));
        }
        const double L = distance(sp, A, B);
        std::vector<double> h(m->num_vertices(), 0.5);
        for (int v : r.boundary) {
            const double x = m->vertices[v].x(), y = m->vertices[v].y();
            h[v] = 0.5 + 0.3 * x * y + 0.2 * std::sin(2 * x + y);
        }
        const auto s = scalar_harmonic(*m, r, h);
        std::vector<TargetPoint> vals(m->num_vertices());
        for (int v = 0; v < m->num_vertices(); ++v) vals[v] = geodesic_point(sp, A, B, h[v]);
        const DirichletProblem prob =
            make_problem(DiscreteMap(m, sp, vals), r, geodesic_point(sp, A, B, 0.5), std::min(0.5 * L + 1e-9, kPi / 4 - 1e-9));
        const auto [u, rep] = solve_dirichlet(prob, std::nullopt, tight());
        for (int v : r.vertices) worst = std::max(worst, distance(sp, u[v], geodesic_point(sp, A, B, s[v])));
    }
    const double secs = seconds_since(t0);
    o.pass = worst <= kOracleTol && secs < kOracleSeconds;
    o.detail = fmt("max vertex distance to the scalar oracle %.3g", worst) + fmt(", %.1f s", secs);
    return o;
}

Outcome criterion4() {
    Outcome o;
    const auto t0 = Clock::now();
    auto m = mesh_of(MeshKind::FlatSquare, 1);
    const Region r = unit_disk(*m);
    Rng rng(kSeed, "max-principle");
    double worst = -1e300;
    for (int i = 0; i < kMaxPrincipleProblems; ++i) {
        const TargetSpace sp = target(i % 3);
        const TargetPoint P = random_point(sp, rng);
        const DiscreteMap src = random_boundary_map(m, r, sp, P, 0.5 * sp.rho, origin_vertex(*m), rng);
        const auto [u, rep] = solve_dirichlet(make_problem(src, r, P, sp.rho), std::nullopt, tight());
        for (int v : r.vertices) worst = std::max(worst, distance(sp, P, u[v]) - 0.5 * sp.rho);
    }
    const double secs = seconds_since(t0);
    o.pass = worst <= kMaxPrincipleSlack && secs < kMaxPrincipleSeconds;
    o.detail = fmt("max d(P, u) - rho/2 = %.3g", worst) + fmt(", %.1f s", secs);
    return o;
}

Outcome criterion5() {
    Outcome o;
    const auto t0 = Clock::now();
    auto m = mesh_of(MeshKind::FlatSquare, 1);
    const Region r = unit_disk(*m);
    Rng rng(kSeed, "uniqueness");
    double worst = 0.0;
    for (int i = 0; i < kUniquenessProblems; ++i) {
        const TargetSpace sp = target(i % 3);
        const TargetPoint P = random_point(sp, rng);
        const DiscreteMap src = random_boundary_map(m, r, sp, P, 0.9 * sp.rho, origin_vertex(*m), rng);
        const DirichletProblem prob = make_problem(src, r, P, sp.rho);
        DiscreteMap other = src;
        for (int v : r.interior) other[v] = random_step(sp, P, rng.uniform(0.0, sp.rho), rng);
        worst = std::max(worst, uniqueness_gap(prob, boundary_mean_seed(prob), other, tight()));
    }
    const double secs = seconds_since(t0);
    o.pass = worst <= kUniquenessTol && secs < kUniquenessSeconds;
    o.detail = fmt("max two-seed gap %.3g", worst) + fmt(", %.1f s", secs);
    return o;
}

Outcome criterion6() {
    Outcome o;
    // Every flow recorded by this run: criterion 7 at level 4 and the level 3
    // runs on all three targets.
    flow_run("bump", 4);
    flow_run("degree1", 4);
    for (int t = 0; t < 3; ++t) flow_run("bump", 3, t);
    int steps = 0;
    double worst = 0.0;
    for (const auto& [key, run] : flow_runs()) {
        const auto& cycles = run.cert.state.cycles;
        for (std::size_t n = 0; n < cycles.size(); ++n) {
            const auto& lad = cycles[n].ladder;
            if (static_cast<int>(lad.size()) != run.cert.state.lambda + 1) {
                o.pass = false;
                o.detail += key + " ladder has the wrong length; ";
            }
            for (std::size_t l = 1; l < lad.size(); ++l, ++steps) {
                const double excess = (lad[l] - lad[l - 1]) / std::max(lad[l - 1], 1e-300);
                worst = std::max(worst, excess);
                if (lad[l] > lad[l - 1] + kLadderTol * lad[l - 1]) o.pass = false;
            }
            if (n > 0 && lad.front() != cycles[n - 1].ladder.back()) {
                o.pass = false;
                o.detail += key + " cycle " + std::to_string(n) + " does not telescope; ";
            }
        }
    }
    o.detail += std::to_string(flow_runs().size()) + " runs, " + std::to_string(steps) + " steps" +
                fmt(", largest relative increase %.3g", worst);
    return o;
}

Outcome criterion7() {
    Outcome o;
    const FlowRun& a = flow_run("bump", 4);
    const bool a_ok = a.cert.outcome == FlowOutcome::Converged && a.cert.residual < kFlowTol &&
                      a.cert.final_energy < kFlowTol && a.seconds < kFlowSeconds;
    o.detail = std::string("(a) ") + outcome_name(a.cert.outcome) + " after " + std::to_string(a.cert.state.cycles.size()) +
               " cycles" + fmt(", residual %.3g", a.cert.residual) + fmt(", energy %.3g", a.cert.final_energy) +
               fmt(", %.1f s", a.seconds);
    const FlowRun& b = flow_run("degree1", 4);
    bool b_ok = b.cert.outcome != FlowOutcome::Converged && b.seconds < kFlowSeconds;
    o.detail += std::string("; (b) ") + outcome_name(b.cert.outcome);
    if (b.cert.outcome == FlowOutcome::Bubbled) {
        const bool replay = b.cert.bubble && b.cert.bubble->replay();
        b_ok = b_ok && replay;
        o.detail += std::string(", replay ") + (replay ? "true" : "false");
        if (b.cert.candidate)
            o.detail += std::string(", candidate ") + (b.cert.candidate->accepted ? "accepted" : "rejected (" + b.cert.candidate->reason + ")");
    }
    o.detail += fmt(", %.1f s", b.seconds);
    o.pass = a_ok && b_ok;
    return o;
}

// Inverse stereographic parametrization of the hemisphere bounded by the
// equator, over the unit disk; Q is the image of the disk center.
Outcome criterion8() {
    Outcome o;
    const auto t0 = Clock::now();
    auto m = mesh_of(MeshKind::FlatSquare, 4);
    std::vector<TargetPoint> vals;
    for (const Vec3& x : m->vertices) {
        const double n = x.x() * x.x() + x.y() * x.y();
        vals.push_back(TargetPoint{0, Vec3(2 * x.x(), 2 * x.y(), n - 1) / (n + 1)});
    }
    const DiscreteMap u(m, TargetSpace::sphere(), std::move(vals));
    std::vector<char> mask(m->num_triangles(), 0);
    for (int t = 0; t < m->num_triangles(); ++t) {
        bool in = true;
        for (int k = 0; k < 3; ++k) in = in && m->vertices[m->triangles[t][k]].head<2>().norm() <= 1.0 + 1e-12;
        mask[t] = in;
    }
    const int center = origin_vertex(*m);
    std::vector<double> sigmas;
    for (int i = 1; i <= 16; ++i) sigmas.push_back(kPi / 8 * i / 16);
    const auto area = extrinsic_area_profile(u, u[center], sigmas, mask);
    const MonotonicityResult r = monotonicity_check(sigmas, area, 1.0, kMonotoneTol);
    const double secs = seconds_since(t0);
    o.pass = r.pass && r.theta_defined && r.theta >= kThetaLo && r.theta <= kThetaHi && secs < kMonotoneSeconds;
    o.detail = fmt("worst step ratio %.5f", r.worst_ratio) + fmt(", Theta %.4f", r.theta) + fmt(", %.1f s", secs);
    return o;
}

Outcome criterion9() {
    Outcome o;
    const auto sp = TargetSpace::sphere();
    const TargetPoint N{0, Vec3(0, 0, 1)};
    std::vector<double> res;
    for (int level = 2; level <= 4; ++level) {
        auto m = mesh_of(MeshKind::FlatSquare, level);
        const Region r = unit_disk(*m);
        std::vector<TargetPoint> vals(m->num_vertices(), N);
        for (int v = 0; v < m->num_vertices(); ++v) {
            const double x = m->vertices[v].x(), y = m->vertices[v].y();
            const Vec3 t(0.2 * (x * x - 0.5 * y + 0.3 * x * y), 0.2 * (0.7 * x + x * y * y - 0.2), 0.0);
            vals[v] = TargetPoint{0, detail::sphere_exp(N.x, t)};
        }
        const auto [u, rep] = solve_dirichlet(make_problem(DiscreteMap(m, sp, vals), r, N, sp.rho), std::nullopt, tight());
        // interior estimate: measured on the concentric disk of half the radius
        std::vector<char> exclude(m->num_vertices(), 1);
        for (int v : r.interior)
            if (m->vertices[v].head<2>().norm() < 0.5) exclude[v] = 0;
        res.push_back(hopf_differential(u, exclude).dbar_residual);
    }
    const double o1 = std::log2(res[0] / res[1]), o2 = std::log2(res[1] / res[2]);
    auto id = mesh_of(MeshKind::RoundSphere, 4);
    std::vector<TargetPoint> ivals;
    for (const Vec3& x : id->vertices) ivals.push_back(TargetPoint{0, x});
    const double e = energy(DiscreteMap(id, sp, std::move(ivals)));
    const double rel = std::abs(e - 8 * kPi) / (8 * kPi);
    o.pass = o1 >= kHopfOrder && o2 >= kHopfOrder && rel <= kEightPiTol;
    o.detail = fmt("dbar residuals %.3g", res[0]) + fmt(" / %.3g", res[1]) + fmt(" / %.3g", res[2]) +
               fmt(", orders %.3f", o1) + fmt(" and %.3f", o2) + fmt(", identity energy / 8pi - 1 = %.2e", e / (8 * kPi) - 1);
    return o;
}

Outcome criterion10() {
    Outcome o;
    const auto t0 = Clock::now();
    auto m = mesh_of(MeshKind::FlatTorus, 3);
    Rng rng(kSeed, "subharmonicity");
    double worst = 1e300;
    int hats = 0;
    for (int i = 0; i < kSubharmonicPairs; ++i) {
        const TargetSpace sp = target(i % 3);
        const int c = rng.index(m->num_vertices());
        const Region r = make_region(*m, geodesic_ball(*m, c, 0.15));
        const TargetPoint O = random_point(sp, rng);
        DiscreteMap u[2];
        DirichletProblem p[2];
        for (int s = 0; s < 2; ++s) {
            const DiscreteMap src = random_boundary_map(m, r, sp, O, 0.45 * sp.rho, c, rng);
            p[s] = make_problem(src, r, O, sp.rho);
            u[s] = solve_dirichlet(p[s], std::nullopt, tight()).first;
        }
        const SubharmonicityResult res = subharmonicity_residual(u[0], u[1], O, p[0], p[1]);
        worst = std::min(worst, res.worst_hat);
        hats += static_cast<int>(res.hat_residuals.size());
    }
    const double secs = seconds_since(t0);
    o.pass = worst >= kHatFloor && secs < kSubharmonicSeconds;
    o.detail = std::to_string(kSubharmonicPairs) + " pairs, " + std::to_string(hats) + " hats" +
               fmt(", min residual / sup eta %.3g", worst) + fmt(", %.1f s", secs);
    return o;
}

// Reruns of seeded computations must reproduce their artifacts byte for byte.
Outcome criterion11() {
    Outcome o;
    std::vector<std::pair<std::string, std::function<std::string()>>> artifacts{
        {"A6 margins", [] { return margins_csv(run_estimate_audit(Estimate::A6, target(1), 20000, kAuditSize, kSeed)); }},
        {"B1 margins", [] { return margins_csv(run_estimate_audit(Estimate::B1, target(2), 200, kAuditSize, kSeed)); }},
        {"Dirichlet map",
         [] {
             auto m = mesh_of(MeshKind::FlatSquare, 1);
             const Region r = unit_disk(*m);
             Rng rng(kSeed, "max-principle");
             const TargetSpace sp = target(1);
             const TargetPoint P = random_point(sp, rng);
             const DiscreteMap src = random_boundary_map(m, r, sp, P, 0.45 * sp.rho, origin_vertex(*m), rng);
             return map_json(solve_dirichlet(make_problem(src, r, P, sp.rho), std::nullopt, tight()).first).dump();
         }},
        {"flow certificate", [] {
             const auto c = run_flow(builtin_initial_map(mesh_of(MeshKind::FlatTorus, 3), target(2), "bump"));
             return certificate_json(c).dump() + flow_state_json(c.state, static_cast<int>(c.state.cycles.size()) - 1).dump() +
                    energy_ladder_csv(c.state);
         }}};
    for (const auto& [name, make] : artifacts) {
        const std::string a = make(), b = make();
        const bool same = a == b;
        o.pass = o.pass && same;
        o.detail += name + (same ? " identical" : " DIFFER") + " (" + hex64(fnv1a64(a)) + "); ";
    }
    return o;
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::function<Outcome()>> criteria{criterion1, criterion2, criterion3, criterion4,
                                                         criterion5, criterion6, criterion7, criterion8,
                                                         criterion9, criterion10, criterion11};
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) selected.insert(std::atoi(argv[i]));
    int failed = 0;
    for (int i = 1; i <= static_cast<int>(criteria.size()); ++i) {
        if (!selected.empty() && !selected.count(i)) continue;
        Outcome o;
        try {
            o = criteria[i - 1]();
        } catch (const Error& e) {
            o.pass = false;
            o.detail = std::string("error [") + e.kind() + "]: " + e.what();
        }
        failed += !o.pass;
        std::printf("criterion %2d: %s  %s\n", i, o.pass ? "PASS" : "FAIL", o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
