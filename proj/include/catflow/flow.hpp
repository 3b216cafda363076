#pragma once

// Harmonic replacement flow on a closed surface: replacement radius, class
// sweeps over a partitioned cover, energy ladder, convergence monitor, and
// bubble detection with rescaling and extraction onto the sphere.

#include <cmath>
#include <limits>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "catflow/comparison.hpp"
#include "catflow/constants.hpp"
#include "catflow/diagnostics.hpp"
#include "catflow/dirichlet.hpp"
#include "catflow/energy.hpp"
#include "catflow/surface_domain.hpp"

namespace catflow {

inline constexpr double kLadderRelTol = 1e-12;
inline constexpr double kBubbleConformalityMax = 0.5;
inline constexpr double kRescaledEnergySlack = 1e-9;

struct FlowOptions {
    double tol = 1e-6;             // L2 difference and harmonicity residual
    int max_cycles = 60;
    int containment_exponent = 1;  // images of doubled balls must fit in radius 3^-c rho
    double r_floor_edges = 4.0;    // r_floor in mean edge lengths
    double solver_tol = 1e-10;
    int solver_max_sweeps = 20000;
    double epsilon = -1.0;         // Courant-Lebesgue epsilon, negative means rho / 10
    int polish_sweeps = 200;
    int bubble_sphere_level = 4;
};

struct RadiusResult {
    double r = 0.0;
    int k = 0;
    bool floor_hit = false;  // no resolvable scale passed the containment test
    int worst_center = -1;
    double worst_radius = 0.0;
};

struct ModulusEntry {
    double delta = 0.0;
    double oscillation = 0.0;
};

struct ModulusRecord {
    double epsilon = 0.0;
    double log_delta = 0.0;  // Courant-Lebesgue scale, kept as a logarithm
    double budget = 0.0;
    double target = 0.0;     // 3^-c epsilon
    bool budget_ok = false;
    std::vector<ModulusEntry> table;
};

struct CycleRecord {
    int n = 0;
    double r = 0.0;
    int k = 0;
    std::vector<double> ladder;  // E(u_n^0), ..., E(u_n^Lambda)
    double l2_diff = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
    std::optional<int> degree;
    double degree_real = 0.0;
    int classes_used = 0;
    int balls_solved = 0;
    int guard_rejections = 0;
    int budget_hits = 0;
    ModulusRecord modulus;
};

struct FlowState {
    int n = 0;
    int l = 0;
    DiscreteMap map;
    int lambda = 0;
    int kappa0 = 0;
    double r = 0.0;
    double r_floor = 0.0;
    double energy0 = 0.0;
    std::optional<int> degree0;
    std::vector<CycleRecord> cycles;
    std::vector<double> r_history;
};

struct RescaledWindow {
    int R = 1;
    int level = 0;
    DiscreteMap map;  // on the scaled square grid [-R, R]^2
    Region disk;
    double energy = 0.0;
    int ball_count = 0;
    int ball_bound = 0;
};

struct BubbleReport {
    double r = 0.0;
    int k = 0;
    double r_floor = 0.0;
    bool floor_hit = false;
    int y = -1, y_prime = -1;
    double domain_distance = 0.0;
    double target_distance = 0.0;
    double threshold = 0.0;
    Vec2 z{0.0, 0.0};
    double energy0 = 0.0;
    double nonconstancy = 0.0;  // d(u~(z), u~(0)) on the rescaled map
    std::vector<RescaledWindow> windows;

    // Replays the recorded witness inequalities and window energy bounds.
    bool replay() const {
        const double tiny = 1e-12;
        if (!(domain_distance >= 2 * r - tiny && domain_distance <= 4 * r + tiny)) return false;
        if (!(target_distance >= threshold)) return false;
        if (!(z.norm() >= 2 - 1e-9 && z.norm() <= 4 + 1e-9)) return false;
        if (!(nonconstancy >= threshold - 1e-9)) return false;
        for (const auto& w : windows) {
            if (!(w.energy <= energy0 + kRescaledEnergySlack)) return false;
            if (w.ball_count > w.ball_bound) return false;
        }
        return !windows.empty();
    }
};

struct BubbleCandidate {
    int R = 0;
    int polish_sweeps = 0;
    double polish_move = 0.0;
    double window_energy = 0.0;
    double hopf_l1_relative = 0.0;
    double dbar_residual = 0.0;
    DiscreteMap sphere_map;
    TargetPoint cap;
    double conformality_defect = 0.0;
    double energy = 0.0;
    double degree_real = 0.0;
    double nonconstancy_margin = 0.0;
    MonotonicityResult monotonicity;
    bool accepted = false;
    std::string reason;
};

enum class FlowOutcome { Converged, Bubbled, BudgetExceeded };

inline const char* outcome_name(FlowOutcome o) {
    switch (o) {
        case FlowOutcome::Converged: return "Converged";
        case FlowOutcome::Bubbled: return "Bubbled";
        case FlowOutcome::BudgetExceeded: return "BudgetExceeded";
    }
    return "?";
}

struct DichotomyCertificate {
    FlowOutcome outcome = FlowOutcome::BudgetExceeded;
    FlowState state;
    double final_energy = 0.0;
    double residual = std::numeric_limits<double>::quiet_NaN();
    bool degree_preserved = true;
    std::optional<BubbleReport> bubble;
    std::optional<BubbleCandidate> candidate;
    std::string reason;
};

namespace detail {

inline double containment_sigma(const TargetSpace& sp, int exponent, int l) {
    return std::min(std::pow(3.0, -exponent + (l - 1)) * sp.rho, sp.rho);
}

inline double l2_distance(const DiscreteMap& a, const DiscreteMap& b) {
    const auto& m = *a.mesh;
    std::vector<double> t(m.num_vertices());
    for (int v = 0; v < m.num_vertices(); ++v) {
        const double d = distance_unchecked(a.space, a.values[v], b.values[v]);
        t[v] = m.vertex_area[v] * d * d;
    }
    return std::sqrt(pairwise_sum(t));
}

// Approximate circumcenter of the image of `verts`: the Frechet mean refined by
// Badoiu-Clarkson steps toward the farthest point. Returns the best center and
// its radius; stops early once the radius is at most `good_enough`.
inline std::pair<TargetPoint, double> image_center(const DiscreteMap& u, const std::vector<int>& verts, int anchor,
                                                   double good_enough = 0.0) {
    std::vector<TargetPoint> pts;
    pts.reserve(verts.size());
    for (int v : verts) pts.push_back(u.values[v]);
    auto farthest = [&](const TargetPoint& c) {
        std::pair<double, int> f{0.0, 0};
        for (std::size_t i = 0; i < pts.size(); ++i)
            f = std::max(f, {distance_unchecked(u.space, c, pts[i]), static_cast<int>(i)});
        return f;
    };
    TargetPoint c = weighted_frechet_mean(u.space, pts, std::vector<double>(pts.size(), 1.0), u.values[anchor]);
    std::pair<TargetPoint, double> best{c, 1e300};
    for (int it = 1; it <= 64; ++it) {
        const auto [rad, i] = farthest(c);
        if (rad < best.second) best = {c, rad};
        if (best.second <= good_enough) break;
        c = geodesic_unchecked(u.space, c, pts[i], 1.0 / (it + 1));
    }
    return best;
}

// Approximate circumradius of the image of `verts`; the distance from the
// anchor's image decides directly when it is within `sigma` or above 2 sigma.
inline double image_circumradius(const DiscreteMap& u, const std::vector<int>& verts, int anchor, double sigma) {
    double from_anchor = 0.0;
    for (int v : verts) from_anchor = std::max(from_anchor, u.dist(anchor, v));
    if (from_anchor <= sigma || from_anchor > 2 * sigma) return from_anchor;
    return std::min(from_anchor, image_center(u, verts, anchor, sigma).second);
}

// Domain point of a vertex offset by z (chart units); the frame on the sphere is
// fixed per vertex.
struct DomainSampler {
    const DiscreteMap* u = nullptr;
    std::vector<std::vector<int>> vertex_triangles;

    explicit DomainSampler(const DiscreteMap& map) : u(&map) {
        const auto& m = *map.mesh;
        if (m.kind == MeshKind::RoundSphere) {
            vertex_triangles.assign(m.num_vertices(), {});
            for (int t = 0; t < m.num_triangles(); ++t)
                for (int k = 0; k < 3; ++k) vertex_triangles[m.triangles[t][k]].push_back(t);
        }
    }

    static std::pair<Vec3, Vec3> frame(const Vec3& y) {
        const Vec3 e1 = y.unitOrthogonal();
        return {e1, y.cross(e1)};
    }

    Vec2 offset(int y, int yp) const {
        const auto& m = *u->mesh;
        if (m.kind != MeshKind::RoundSphere) return m.chart_offset(y, yp);
        const Vec3 l = sphere_log(m.vertices[y], m.vertices[yp]);
        const auto [e1, e2] = frame(m.vertices[y]);
        return {l.dot(e1), l.dot(e2)};
    }

    TargetPoint corners(int a, int b, int c, double la, double lb, double lc) const {
        const auto& sp = u->space;
        const double ab = la + lb;
        const TargetPoint p = ab > 0.0 ? geodesic_unchecked(sp, u->values[a], u->values[b], lb / ab) : u->values[b];
        return geodesic_unchecked(sp, p, u->values[c], lc);
    }

    TargetPoint sample(int y, const Vec2& z) const {
        const auto& m = *u->mesh;
        if (m.kind == MeshKind::RoundSphere) return sample_sphere(y, z);
        const int side = m.side;
        const bool periodic = m.kind == MeshKind::FlatTorus;
        const double ext_x = periodic ? m.periods.x() : 2.0, ext_y = periodic ? m.periods.y() : 2.0;
        const int cells = periodic ? side : side - 1;
        const double hx = ext_x / cells, hy = ext_y / cells;
        double px = m.vertices[y].x() + z.x(), py = m.vertices[y].y() + z.y();
        if (periodic) {
            px -= ext_x * std::floor(px / ext_x);
            py -= ext_y * std::floor(py / ext_y);
        } else {
            px += 1.0, py += 1.0;
        }
        return grid_sample(u->values, u->space, side, periodic, px / hx, py / hy);
    }

    static TargetPoint grid_sample(const std::vector<TargetPoint>& values, const TargetSpace& sp, int side,
                                   bool periodic, double gx, double gy) {
        const int cells = periodic ? side : side - 1;
        int i = static_cast<int>(std::floor(gx)), j = static_cast<int>(std::floor(gy));
        i = std::clamp(i, 0, cells - 1), j = std::clamp(j, 0, cells - 1);
        const double fx = std::clamp(gx - i, 0.0, 1.0), fy = std::clamp(gy - j, 0.0, 1.0);
        auto id = [&](int a, int b) { return (a % side) + side * (b % side); };
        const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
        auto mix = [&](int p, int q, int r, double lp, double lq, double lr) {
            const double pq = lp + lq;
            const TargetPoint s = pq > 0.0 ? geodesic_unchecked(sp, values[p], values[q], lq / pq) : values[q];
            return geodesic_unchecked(sp, s, values[r], lr);
        };
        if (fx >= fy) return mix(a, b, c, 1 - fx, fx - fy, fy);
        return mix(a, d, c, 1 - fy, fy - fx, fx);
    }

    TargetPoint sample_sphere(int y, const Vec2& z) const {
        const auto& m = *u->mesh;
        const auto [e1, e2] = frame(m.vertices[y]);
        const Vec3 p = sphere_exp(m.vertices[y], z.x() * e1 + z.y() * e2);
        int cur = y;
        for (bool moved = true; moved;) {
            moved = false;
            for (int k = m.adj_offset[cur]; k < m.adj_offset[cur + 1]; ++k) {
                const int w = m.adj_vertex[k];
                if (m.vertices[w].dot(p) > m.vertices[cur].dot(p) + 1e-15) {
                    cur = w;
                    moved = true;
                }
            }
        }
        int best_t = -1;
        double best_min = -1e300;
        std::array<double, 3> best_l{1, 0, 0};
        for (int t : vertex_triangles[cur]) {
            const auto& tri = m.triangles[t];
            const Vec3 &A = m.vertices[tri[0]], &B = m.vertices[tri[1]], &C = m.vertices[tri[2]];
            const Vec3 n = (B - A).cross(C - A);
            const double s = n.dot(A) / n.dot(p);
            const Vec3 q = s * p;
            const double area = n.norm();
            const double la = (B - q).cross(C - q).dot(n) / (area * area);
            const double lb = (C - q).cross(A - q).dot(n) / (area * area);
            const double lc = 1 - la - lb;
            const double mn = std::min({la, lb, lc});
            if (mn > best_min) {
                best_min = mn;
                best_t = t;
                best_l = {la, lb, lc};
            }
        }
        for (auto& x : best_l) x = std::max(x, 0.0);
        const double s = best_l[0] + best_l[1] + best_l[2];
        const auto& tri = m.triangles[best_t];
        return corners(tri[0], tri[1], tri[2], best_l[0] / s, best_l[1] / s, best_l[2] / s);
    }
};

// The square grid on [-R, R]^2 at the given level.
inline std::shared_ptr<const SurfaceMesh> window_mesh(int level, double R) {
    SurfaceMesh m = build_mesh(MeshKind::FlatSquare, level);
    for (auto& v : m.vertices) v *= R;
    for (auto& c : m.corners)
        for (auto& p : c) p *= R;
    for (auto& l : m.edge_length) l *= R;
    for (auto& a : m.triangle_area) a *= R * R;
    for (auto& a : m.vertex_area) a *= R * R;
    m.max_edge *= R;
    m.mean_edge *= R;
    return std::make_shared<const SurfaceMesh>(std::move(m));
}

}  // namespace detail

// Coarsest containment-passing dyadic scale: the image of every doubled ball
// B_2r(x) must fit in a ball of radius 3^-c rho. Tested on a net of spacing r/2
// with balls of radius 2r + r/2.
inline RadiusResult compute_replacement_radius(const DiscreteMap& u, int exponent, double rho, int kappa0) {
    const auto& m = *u.mesh;
    const double sigma = std::pow(3.0, -exponent) * rho;
    const int k_fin = finest_resolved_scale(m);
    RadiusResult res;
    std::vector<int> stamp(m.num_vertices(), -1);
    int tag = 0;
    for (int k = kappa0; k <= k_fin; ++k) {
        const double r = std::ldexp(1.0, -k);
        res.r = r;
        res.k = k;
        bool pass = true;
        for (int c : vertex_net(m, 0.5 * r)) {
            const auto ball = detail::vertices_within(m, m.vertices[c], c, 2.5 * r, stamp, tag++);
            const double rad = detail::image_circumradius(u, ball, c, sigma);
            if (rad > sigma) {
                pass = false;
                res.worst_center = c;
                res.worst_radius = rad;
                break;
            }
        }
        if (pass) return res;
    }
    res.floor_hit = true;
    return res;
}

// Largest class count over the admissible scales of the mesh.
inline int flow_lambda(const SurfaceMesh& m) {
    int lambda = 0;
    for (int k = coarsest_disk_scale(m); k <= finest_resolved_scale(m); ++k)
        lambda = std::max(lambda, partition_cover(m, build_cover(m, k)).lambda);
    return lambda;
}

inline int lambda_constant(MeshKind kind) {
    switch (kind) {
        case MeshKind::FlatTorus: return constants::kLambdaTorus;
        case MeshKind::RoundSphere: return constants::kLambdaSphere;
        case MeshKind::FlatSquare: break;
    }
    throw PreconditionError("the flow runs on closed meshes only");
}

struct SweepStats {
    int balls = 0;
    int guard_rejections = 0;
    int budget_hits = 0;
};

// Replaces the map on every doubled ball of class l (1-based) by its Dirichlet
// solution into the ball of radius sigma_l about the Frechet mean of the image.
inline SweepStats sweep_class(FlowState& state, const PartitionedCover& pc, const std::vector<Region>& regions, int l,
                              const FlowOptions& opt) {
    SweepStats st;
    state.l = l;
    if (l > static_cast<int>(pc.classes.size())) return st;
    DiscreteMap& u = state.map;
    const double sigma = detail::containment_sigma(u.space, opt.containment_exponent, l);
    SolveOptions so;
    so.tol = opt.solver_tol;
    so.max_sweeps = opt.solver_max_sweeps;
    for (int i : pc.classes[l - 1]) {
        const Region& reg = regions[i];
        if (reg.interior.empty() || reg.boundary.empty()) continue;
        const auto [P, rad] = detail::image_center(u, reg.vertices, pc.cover.centers[i]);
        if (rad > sigma + 1e-12)
            throw FlowInvariantError("cycle " + std::to_string(state.n) + " class " + std::to_string(l) + " ball " +
                                     std::to_string(i) + " (center vertex " + std::to_string(pc.cover.centers[i]) +
                                     "): image radius " + std::to_string(rad) + " exceeds " + std::to_string(sigma));
        const double e_old = energy(u, reg);
        DirichletProblem prob = make_problem(u, reg, P, sigma);
        DiscreteMap w = u;
        try {
            solve_in_place(w, prob, so);
        } catch (const BudgetExceededError& e) {
            w = e.partial;
            ++st.budget_hits;
        }
        ++st.balls;
        if (energy(w, reg) > e_old) {
            ++st.guard_rejections;
            continue;
        }
        for (int v : reg.interior) u.values[v] = w.values[v];
    }
    return st;
}

inline ModulusRecord modulus_record(const DiscreteMap& u, double r, double energy0, int exponent, double epsilon) {
    const auto& m = *u.mesh;
    ModulusRecord rec;
    rec.epsilon = epsilon;
    rec.target = std::pow(3.0, -exponent) * epsilon;
    rec.log_delta = std::min(-4 * kPi * energy0 / (rec.target * rec.target), std::log(0.5));
    rec.budget = std::sqrt(8 * kPi * energy0 / (-2 * rec.log_delta));
    rec.budget_ok = rec.budget <= rec.target * (1 + 1e-12);
    std::vector<int> stamp(m.num_vertices(), -1);
    int tag = 0;
    for (double delta : {r, 0.5 * r}) {
        if (delta < 2 * m.mean_edge) break;
        double osc = 0.0;
        for (int c : vertex_net(m, delta))
            for (int v : detail::vertices_within(m, m.vertices[c], c, delta, stamp, tag++))
                osc = std::max(osc, u.dist(c, v));
        rec.table.push_back({delta, osc});
    }
    return rec;
}

struct ConvergenceStatus {
    bool converged = false;
    double l2_diff = std::numeric_limits<double>::quiet_NaN();
    double residual = std::numeric_limits<double>::quiet_NaN();
    bool degree_preserved = true;
};

// L2 difference of the last cycle and, when it is below tol, the harmonicity
// residual at the current scale normalized by max(local energy, E(u_0^0)).
inline ConvergenceStatus convergence_monitor(FlowState& state, const FlowOptions& opt) {
    ConvergenceStatus st;
    if (state.cycles.empty()) return st;
    CycleRecord& rec = state.cycles.back();
    st.l2_diff = rec.l2_diff;
    st.degree_preserved = !state.degree0 || rec.degree == state.degree0;
    if (state.cycles.size() < 2 || !(rec.l2_diff < opt.tol)) return st;
    HarmonicityOptions ho;
    ho.floor = state.energy0;
    ho.tol = opt.solver_tol;
    ho.max_sweeps = opt.solver_max_sweeps;
    const auto& m = *state.map.mesh;
    rec.residual = harmonicity_residual(state.map, rec.r, vertex_net(m, rec.r), ho);
    st.residual = rec.residual;
    st.converged = rec.residual < opt.tol && st.degree_preserved;
    return st;
}

struct CoverCache {
    std::map<int, std::pair<PartitionedCover, std::vector<Region>>> by_k;

    const std::pair<PartitionedCover, std::vector<Region>>& get(const SurfaceMesh& m, int k) {
        auto it = by_k.find(k);
        if (it != by_k.end()) return it->second;
        PartitionedCover pc = partition_cover(m, build_cover(m, k));
        std::vector<Region> regions;
        regions.reserve(pc.cover.size());
        for (const auto& d : pc.cover.doubled) regions.push_back(make_region(m, d));
        return by_k.emplace(k, std::make_pair(std::move(pc), std::move(regions))).first->second;
    }
};

// One cycle: radius, cover at that radius, class sweeps 1..Lambda, ladder and
// monitors. Returns the radius result; on a bubbling radius nothing is swept.
inline RadiusResult full_cycle(FlowState& state, CoverCache& cache, const FlowOptions& opt) {
    const auto& m = *state.map.mesh;
    const RadiusResult rr =
        compute_replacement_radius(state.map, opt.containment_exponent, state.map.space.rho, state.kappa0);
    state.r = rr.r;
    state.r_history.push_back(rr.r);
    if (rr.floor_hit || rr.r < state.r_floor) return rr;
    const auto& [pc, regions] = cache.get(m, rr.k);
    if (pc.lambda > state.lambda)
        throw FlowInvariantError("cover at scale 2^-" + std::to_string(rr.k) + " needs " + std::to_string(pc.lambda) +
                                 " classes, more than Lambda = " + std::to_string(state.lambda));
    CycleRecord rec;
    rec.n = state.n;
    rec.r = rr.r;
    rec.k = rr.k;
    rec.classes_used = pc.lambda;
    const DiscreteMap start = state.map;
    rec.ladder.push_back(energy(state.map));
    for (int l = 1; l <= state.lambda; ++l) {
        const SweepStats s = sweep_class(state, pc, regions, l, opt);
        rec.balls_solved += s.balls;
        rec.guard_rejections += s.guard_rejections;
        rec.budget_hits += s.budget_hits;
        rec.ladder.push_back(energy(state.map));
    }
    rec.l2_diff = detail::l2_distance(start, state.map);
    if (state.map.space.kind == SpaceKind::UnitSphere) {
        rec.degree_real = degree_real(state.map);
        rec.degree = static_cast<int>(std::lround(rec.degree_real));
    }
    const double eps = opt.epsilon > 0.0 ? opt.epsilon : state.map.space.rho / 10;
    rec.modulus = modulus_record(state.map, rr.r, state.energy0, opt.containment_exponent, eps);
    state.cycles.push_back(std::move(rec));
    ++state.n;
    return rr;
}

// Witness pair in the annulus 2r <= d <= 4r with the largest target distance,
// then rescaled windows D_R, R in {1, 2, 4, 8}, about y.
inline BubbleReport detect_and_rescale_bubble(const FlowState& state, const RadiusResult& rr, int exponent = 1) {
    const DiscreteMap& u = state.map;
    const auto& m = *u.mesh;
    BubbleReport rep;
    rep.r = rr.r;
    rep.k = rr.k;
    rep.r_floor = state.r_floor;
    rep.floor_hit = rr.floor_hit;
    rep.energy0 = state.energy0;
    rep.threshold = std::pow(3.0, -exponent) * u.space.rho;
    const double r = rr.r;
    std::vector<int> stamp(m.num_vertices(), -1);
    int tag = 0;
    double best = -1.0;
    for (int y = 0; y < m.num_vertices(); ++y)
        for (int w : detail::vertices_within(m, m.vertices[y], y, 4 * r, stamp, tag++)) {
            const double dd = m.distance(y, w);
            if (dd < 2 * r) continue;
            const double dt = u.dist(y, w);
            if (dt > best) {
                best = dt;
                rep.y = y;
                rep.y_prime = w;
                rep.domain_distance = dd;
            }
        }
    rep.target_distance = best;
    if (rep.y < 0 || best < rep.threshold)
        throw InconsistencyError("no witness pair at scale " + std::to_string(r) + ": largest annulus oscillation " +
                                 std::to_string(std::max(best, 0.0)) + " is below " + std::to_string(rep.threshold));
    const detail::DomainSampler sampler(u);
    rep.z = sampler.offset(rep.y, rep.y_prime) / r;
    rep.nonconstancy =
        detail::distance_unchecked(u.space, sampler.sample(rep.y, r * rep.z), sampler.sample(rep.y, Vec2::Zero()));
    const BallCover cover = build_cover(m, rr.k);
    for (int R : {1, 2, 4, 8}) {
        RescaledWindow w;
        w.R = R;
        const double cells = 2.0 * R * r / m.mean_edge;
        w.level = std::clamp(static_cast<int>(std::ceil(std::log2(std::max(cells, 1.0)))) - 3, 0, 4);
        auto wm = detail::window_mesh(w.level, R);
        std::vector<TargetPoint> vals(wm->num_vertices());
        std::vector<int> disk;
        for (int v = 0; v < wm->num_vertices(); ++v) {
            const Vec2 z(wm->vertices[v].x(), wm->vertices[v].y());
            vals[v] = sampler.sample(rep.y, r * z);
            if (z.norm() <= R + 1e-12) disk.push_back(v);
        }
        w.map = DiscreteMap(wm, u.space, std::move(vals));
        w.disk = make_region(*wm, std::move(disk));
        w.energy = energy(w.map, w.disk);
        w.ball_count = count_balls_in_window(m, cover, rep.y, r * R);
        w.ball_bound = 1024 * R * R;
        rep.windows.push_back(std::move(w));
    }
    if (!rep.replay()) throw InconsistencyError("bubble report fails its own replay");
    return rep;
}

// Polishes the largest window by one-ring sweeps on the disk interior, checks
// the Hopf differential, and maps the disk onto the sphere by inverse
// stereographic projection with the puncture capped by the outer-ring mean.
inline BubbleCandidate extract_bubble(const BubbleReport& rep, const FlowOptions& opt = {}) {
    if (rep.windows.empty() || rep.windows.back().R < 8) throw PreconditionError("extraction needs the R = 8 window");
    const RescaledWindow& win = rep.windows.back();
    const auto& wm = *win.map.mesh;
    const TargetSpace& sp = win.map.space;
    BubbleCandidate c;
    c.R = win.R;
    DiscreteMap w = win.map;
    for (int s = 0; s < opt.polish_sweeps; ++s) {
        double move = 0.0;
        for (int v : win.disk.interior) {
            std::vector<TargetPoint> q;
            std::vector<double> wt;
            for (int k = wm.adj_offset[v]; k < wm.adj_offset[v + 1]; ++k) {
                const double we = wm.edge_weight[wm.adj_edge[k]];
                if (we <= 0.0) continue;
                q.push_back(w.values[wm.adj_vertex[k]]);
                wt.push_back(we);
            }
            const TargetPoint p = weighted_frechet_mean(sp, q, wt, w.values[v]);
            move = std::max(move, detail::distance_unchecked(sp, p, w.values[v]));
            w.values[v] = p;
        }
        c.polish_sweeps = s + 1;
        c.polish_move = move;
        if (move < opt.solver_tol) break;
    }
    c.window_energy = energy(w, win.disk);
    std::vector<char> outside(wm.num_vertices(), 1);
    for (int v : win.disk.interior) outside[v] = 0;
    const HopfReport hr = hopf_differential(w, outside);
    c.hopf_l1_relative = c.window_energy > 0.0 ? hr.l1 / c.window_energy : 0.0;
    c.dbar_residual = hr.dbar_residual;

    std::vector<TargetPoint> ring;
    for (int v : win.disk.boundary) ring.push_back(w.values[v]);
    c.cap = frechet_mean(sp, ring);
    auto sm = std::make_shared<const SurfaceMesh>(build_mesh(MeshKind::RoundSphere, opt.bubble_sphere_level));
    std::vector<TargetPoint> vals(sm->num_vertices(), c.cap);
    const int n = wm.side - 1;
    const double R = win.R;
    for (int v = 0; v < sm->num_vertices(); ++v) {
        const Vec3& x = sm->vertices[v];
        if (x.z() > 1 - 1e-15) continue;
        const Vec2 z = Vec2(x.x(), x.y()) / (1 - x.z());
        if (z.norm() > R) continue;
        vals[v] = detail::DomainSampler::grid_sample(w.values, sp, wm.side, false, (z.x() + R) / (2 * R) * n,
                                                     (z.y() + R) / (2 * R) * n);
    }
    c.sphere_map = DiscreteMap(sm, sp, std::move(vals));
    c.conformality_defect = conformality_defect(c.sphere_map);
    c.energy = energy(c.sphere_map);
    c.degree_real = degree_real(c.sphere_map);
    auto at = [&](const Vec2& z) {
        return detail::DomainSampler::grid_sample(w.values, sp, wm.side, false, (z.x() + R) / (2 * R) * n,
                                                  (z.y() + R) / (2 * R) * n);
    };
    c.nonconstancy_margin = detail::distance_unchecked(sp, at(rep.z), at(Vec2::Zero())) - rep.threshold;
    std::vector<double> sigmas;
    for (int i = 1; i <= 16; ++i) sigmas.push_back(sp.rho * i / 16);
    c.monotonicity = monotonicity_check(sigmas, extrinsic_area_profile(c.sphere_map, c.cap, sigmas));
    if (c.conformality_defect > kBubbleConformalityMax) {
        c.reason = "conformality defect " + std::to_string(c.conformality_defect) + " above " +
                   std::to_string(kBubbleConformalityMax);
    } else if (c.nonconstancy_margin < -1e-9) {
        c.reason = "polished candidate is constant at the witness scale";
    } else {
        c.accepted = true;
    }
    return c;
}

inline FlowState make_flow_state(const DiscreteMap& initial, const FlowOptions& opt) {
    const auto& m = *initial.mesh;
    if (!m.closed()) throw PreconditionError("the flow runs on closed meshes only");
    if (opt.containment_exponent < 0) throw PreconditionError("containment exponent must be nonnegative");
    initial.validate();
    FlowState s;
    s.map = initial;
    s.lambda = lambda_constant(m.kind);
    s.kappa0 = coarsest_disk_scale(m);
    s.r_floor = opt.r_floor_edges * m.mean_edge;
    if (std::ldexp(1.0, -s.kappa0) < s.r_floor)
        throw ResolutionError("mesh " + m.name() + " is too coarse for the flow: coarsest radius " +
                              std::to_string(std::ldexp(1.0, -s.kappa0)) + " is below the floor " + std::to_string(s.r_floor));
    s.energy0 = energy(initial);
    if (initial.space.kind == SpaceKind::UnitSphere) s.degree0 = degree(initial);
    return s;
}

// Runs cycles until convergence, bubbling, or the cycle budget.
inline DichotomyCertificate run_flow(const DiscreteMap& initial, const FlowOptions& opt = {}) {
    DichotomyCertificate cert;
    cert.state = make_flow_state(initial, opt);
    FlowState& st = cert.state;
    CoverCache cache;
    for (int c = 0; c < opt.max_cycles; ++c) {
        const RadiusResult rr = full_cycle(st, cache, opt);
        if (rr.floor_hit || rr.r < st.r_floor) {
            cert.outcome = FlowOutcome::Bubbled;
            cert.bubble = detect_and_rescale_bubble(st, rr, opt.containment_exponent);
            cert.candidate = extract_bubble(*cert.bubble, opt);
            cert.reason = rr.floor_hit ? "no resolvable scale passes the containment test"
                                       : "replacement radius below the resolution floor";
            break;
        }
        const ConvergenceStatus cs = convergence_monitor(st, opt);
        cert.degree_preserved = cs.degree_preserved;
        if (cs.converged) {
            cert.outcome = FlowOutcome::Converged;
            cert.residual = cs.residual;
            cert.reason = "L2 difference and harmonicity residual below tolerance";
            break;
        }
    }
    if (cert.reason.empty()) cert.reason = "cycle budget of " + std::to_string(opt.max_cycles) + " exhausted";
    cert.final_energy = energy(st.map);
    return cert;
}

// Builtin initial maps.
inline DiscreteMap builtin_initial_map(std::shared_ptr<const SurfaceMesh> mesh, const TargetSpace& sp,
                                       const std::string& name) {
    const auto& m = *mesh;
    TargetPoint base, tip;
    switch (sp.kind) {
        case SpaceKind::UnitSphere:
            base = TargetPoint{0, Vec3(0, 0, 1)};
            tip = TargetPoint{0, Vec3(std::sin(0.25), 0, std::cos(0.25))};
            break;
        case SpaceKind::SphericalBook:
            base = canonical(sp, TargetPoint{0, Vec3(0, 0, 1)});
            tip = canonical(sp, TargetPoint{0, Vec3(std::sin(0.25), 0, std::cos(0.25))});
            break;
        case SpaceKind::FlatCone:
            base = canonical(sp, TargetPoint{0, Vec3(0.5, 0, 0)});
            tip = canonical(sp, TargetPoint{0, Vec3(0.5, 2 * std::asin(0.25), 0)});
            break;
    }
    if (name == "constant") return DiscreteMap::constant(mesh, sp, base);
    std::vector<TargetPoint> vals(m.num_vertices());
    if (name == "bump") {
        for (int v = 0; v < m.num_vertices(); ++v) {
            const Vec3& x = m.vertices[v];
            double b;
            if (m.kind == MeshKind::RoundSphere)
                b = 0.5 * (1 + x.z());
            else
                b = 0.25 * (1 - std::cos(2 * kPi * x.x() / m.periods.x())) * (1 - std::cos(2 * kPi * x.y() / m.periods.y()));
            vals[v] = detail::geodesic_unchecked(sp, base, tip, b);
        }
        return DiscreteMap(std::move(mesh), sp, std::move(vals));
    }
    if (name == "degree1") {
        if (sp.kind != SpaceKind::UnitSphere) throw UsageError("builtin:degree1 needs the sphere target");
        if (m.kind == MeshKind::RoundSphere) {
            for (int v = 0; v < m.num_vertices(); ++v) vals[v] = TargetPoint{0, m.vertices[v]};
            return DiscreteMap(std::move(mesh), sp, std::move(vals));
        }
        const double s0 = 0.3;
        const Vec2 c(0.5 * m.periods.x(), 0.5 * m.periods.y());
        for (int v = 0; v < m.num_vertices(); ++v) {
            const Vec2 d(m.vertices[v].x() - c.x(), m.vertices[v].y() - c.y());
            const double s = d.norm();
            const double th = s < s0 ? kPi * (1 - s / s0) : 0.0;
            const double a = std::atan2(d.y(), d.x());
            vals[v] = TargetPoint{0, Vec3(std::sin(th) * std::cos(a), -std::sin(th) * std::sin(a), std::cos(th))};
        }
        return DiscreteMap(std::move(mesh), sp, std::move(vals));
    }
    throw UsageError("unknown builtin initial map '" + name + "'");
}

}  // namespace catflow
