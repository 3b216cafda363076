#pragma once

// Seeded batch audits of the comparison estimates (A1, A2, A4, A6 on random
// configurations; B1, B3 on random map pairs over a torus patch).

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "catflow/comparison.hpp"
#include "catflow/rng.hpp"
#include "catflow/sampling.hpp"
#include "catflow/surface_domain.hpp"

namespace catflow {

enum class Estimate { A1, A2, A4, A6, B1, B3 };

inline const char* estimate_name(Estimate e) {
    switch (e) {
        case Estimate::A1: return "A1";
        case Estimate::A2: return "A2";
        case Estimate::A4: return "A4";
        case Estimate::A6: return "A6";
        case Estimate::B1: return "B1";
        case Estimate::B3: return "B3";
    }
    return "?";
}

inline Estimate parse_estimate(const std::string& s) {
    for (Estimate e : {Estimate::A1, Estimate::A2, Estimate::A4, Estimate::A6, Estimate::B1, Estimate::B3})
        if (s == estimate_name(e)) return e;
    throw UsageError("estimate: unknown id '" + s + "' (expected A1, A2, A4, A6, B1 or B3)");
}

struct AuditRow {
    double lhs = 0.0, rhs = 0.0, margin = 0.0, budget = 0.0, scale = 0.0;
    bool pass = true;
};

struct AuditResult {
    Estimate estimate = Estimate::A1;
    int samples = 0;
    double size = 0.0;
    std::uint64_t seed = 0;
    std::vector<AuditRow> rows;
    int failures = 0;
    double pass_rate = 1.0;
    double worst_margin = 0.0;
    double worst_budget = 0.0;  // budget of the sample with the worst margin
    double worst_ratio = 0.0;   // max over samples of -margin / scale (0 when none negative)
};

// The 16 x 16 vertex block [8, 24)^2 of the level-2 torus, with a bump that
// vanishes on the block boundary.
struct TorusPatch {
    std::shared_ptr<const SurfaceMesh> mesh;
    Region region;
    std::vector<double> bump;

    TorusPatch() {
        mesh = std::make_shared<const SurfaceMesh>(build_mesh(MeshKind::FlatTorus, 2));
        const int side = mesh->side;
        std::vector<int> verts;
        bump.assign(mesh->num_vertices(), 0.0);
        for (int j = 8; j < 24; ++j)
            for (int i = 8; i < 24; ++i) {
                const int v = i + side * j;
                verts.push_back(v);
                const double s = (i - 8) / 15.0, t = (j - 8) / 15.0;
                bump[v] = std::sin(kPi * s) * std::sin(kPi * t);
            }
        region = make_region(*mesh, std::move(verts));
        for (int v : region.boundary) bump[v] = 0.0;
    }
};

namespace detail {

// Smooth field in [0, 1] from a few random low modes.
inline std::vector<double> random_profile(const SurfaceMesh& m, Rng& rng) {
    const int kx = 1 + rng.index(2), ky = 1 + rng.index(2);
    const double px = rng.uniform(0.0, 2 * kPi), py = rng.uniform(0.0, 2 * kPi);
    std::vector<double> f(m.num_vertices());
    for (int v = 0; v < m.num_vertices(); ++v) {
        const double x = m.vertices[v].x(), y = m.vertices[v].y();
        f[v] = 0.5 + 0.25 * std::sin(2 * kPi * kx * x + px) + 0.25 * std::cos(2 * kPi * ky * y + py);
    }
    return f;
}

// u(x) = geodesic(geodesic(O, A, s(x)), B, t(x) / 2) with A, B inside B_{0.45 rho}(O).
inline DiscreteMap two_anchor_map(std::shared_ptr<const SurfaceMesh> mesh, const TargetSpace& sp, const TargetPoint& O,
                                  const TargetPoint& A, const TargetPoint& B, const std::vector<double>& s,
                                  const std::vector<double>& t) {
    std::vector<TargetPoint> vals(mesh->num_vertices());
    for (int v = 0; v < mesh->num_vertices(); ++v) {
        const TargetPoint a = geodesic_unchecked(sp, O, A, std::clamp(s[v], 0.0, 1.0));
        vals[v] = geodesic_unchecked(sp, a, B, 0.5 * std::clamp(t[v], 0.0, 1.0));
    }
    return DiscreteMap(std::move(mesh), sp, std::move(vals));
}

struct MapPair {
    DiscreteMap u0, u1;
    TargetPoint O;
};

// Random pair in B_rho(O); with `same_trace` the second map differs from the
// first only through `size * bump`.
inline MapPair random_map_pair(const TorusPatch& patch, const TargetSpace& sp, double size, bool same_trace, Rng& rng) {
    const TargetPoint O = random_point(sp, rng);
    const TargetPoint A = random_step(sp, O, rng.uniform(0.0, 0.45 * sp.rho), rng);
    const TargetPoint B = random_step(sp, O, rng.uniform(0.0, 0.45 * sp.rho), rng);
    const auto s0 = random_profile(*patch.mesh, rng), t0 = random_profile(*patch.mesh, rng);
    std::vector<double> s1 = s0, t1 = t0;
    if (same_trace) {
        const double a = rng.uniform(-1.0, 1.0), b = rng.uniform(-1.0, 1.0);
        for (int v = 0; v < patch.mesh->num_vertices(); ++v) {
            s1[v] += size * a * patch.bump[v];
            t1[v] += size * b * patch.bump[v];
        }
    } else {
        s1 = random_profile(*patch.mesh, rng);
        t1 = random_profile(*patch.mesh, rng);
    }
    return {two_anchor_map(patch.mesh, sp, O, A, B, s0, t0), two_anchor_map(patch.mesh, sp, O, A, B, s1, t1), O};
}

inline AuditRow row_of(const MarginReport& r) { return {r.lhs, r.rhs, r.margin, r.error_budget, r.scale, r.pass}; }

}  // namespace detail

// One audit sample; `rng` is consumed in a fixed order.
inline AuditRow audit_sample(Estimate e, const TargetSpace& sp, double size, Rng& rng, const TorusPatch* patch) {
    switch (e) {
        case Estimate::A1:
            return detail::row_of(reshetnyak_margin(sample_quad(sp, size, rng)));
        case Estimate::A2:
            return detail::row_of(estimate_I_margin(sample_quad(sp, size, rng)));
        case Estimate::A4: {
            const TriangleConfig t = sample_triangle(sp, size, rng);
            return detail::row_of(estimate_II_margin(sp, t.P, t.Q, t.S, t.eta, t.eta_prime));
        }
        case Estimate::A6: {
            const QuadConfig q = sample_quad(sp, size, rng);
            const auto [eta, eta_prime] = sample_eta_pair(size, rng);
            return detail::row_of(estimate_III_margin(q, eta, eta_prime));
        }
        case Estimate::B1: {
            const auto mp = detail::random_map_pair(*patch, sp, size, true, rng);
            return detail::row_of(convexity_witness(mp.u0, mp.u1, mp.O, patch->region).margin);
        }
        case Estimate::B3: {
            const auto mp = detail::random_map_pair(*patch, sp, size, false, rng);
            ScalarField eta(patch->mesh->num_vertices());
            for (int v = 0; v < patch->mesh->num_vertices(); ++v) eta[v] = size * patch->bump[v];
            return detail::row_of(comparison_F_eta(mp.u0, mp.u1, mp.O, eta, patch->region).margin);
        }
    }
    return {};
}

inline AuditResult run_estimate_audit(Estimate e, const TargetSpace& sp, int samples, double size, std::uint64_t seed) {
    if (samples <= 0) throw UsageError("samples: must be positive");
    if (!(size > 0.0 && size <= 0.5)) throw UsageError("size: must lie in (0, 0.5]");
    AuditResult res;
    res.estimate = e;
    res.samples = samples;
    res.size = size;
    res.seed = seed;
    Rng rng(seed, std::string("verify-estimates/") + estimate_name(e));
    std::unique_ptr<TorusPatch> patch;
    if (e == Estimate::B1 || e == Estimate::B3) patch = std::make_unique<TorusPatch>();
    res.rows.reserve(samples);
    for (int i = 0; i < samples; ++i) {
        const AuditRow r = audit_sample(e, sp, size, rng, patch.get());
        if (!r.pass) ++res.failures;
        if (i == 0 || r.margin < res.worst_margin) {
            res.worst_margin = r.margin;
            res.worst_budget = r.budget;
        }
        if (r.margin < 0.0 && r.scale > 0.0) res.worst_ratio = std::max(res.worst_ratio, -r.margin / r.scale);
        res.rows.push_back(r);
    }
    res.pass_rate = 1.0 - static_cast<double>(res.failures) / samples;
    return res;
}

}  // namespace catflow
