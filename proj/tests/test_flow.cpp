#include <gtest/gtest.h>

#include "catflow/flow.hpp"

using namespace catflow;

namespace {

std::shared_ptr<const SurfaceMesh> torus(int level) {
    return std::make_shared<const SurfaceMesh>(build_mesh(MeshKind::FlatTorus, level));
}

Vec3 inverse_stereographic(const Vec2& z) {
    const double n = z.squaredNorm();
    return Vec3(2 * z.x(), 2 * z.y(), n - 1) / (n + 1);
}

void expect_ladder_telescopes(const FlowState& s) {
    for (std::size_t n = 0; n < s.cycles.size(); ++n) {
        const auto& lad = s.cycles[n].ladder;
        ASSERT_EQ(static_cast<int>(lad.size()), s.lambda + 1);
        for (std::size_t l = 1; l < lad.size(); ++l) EXPECT_LE(lad[l], lad[l - 1] * (1 + kLadderRelTol));
        if (n > 0) EXPECT_EQ(lad.front(), s.cycles[n - 1].ladder.back());
    }
}

}  // namespace

TEST(Flow, ConstantMapIsAFixedPoint) {
    const auto sp = TargetSpace::sphere();
    const DiscreteMap u = builtin_initial_map(torus(3), sp, "constant");
    const DichotomyCertificate c = run_flow(u);
    EXPECT_EQ(c.outcome, FlowOutcome::Converged);
    EXPECT_EQ(c.state.cycles.size(), 2u);
    EXPECT_EQ(c.final_energy, 0.0);
    for (int v = 0; v < u.size(); ++v) EXPECT_TRUE(same_point(sp, u[v], c.state.map[v]));
}

TEST(Flow, BumpConvergesAndLadderTelescopes) {
    for (const auto& sp : {TargetSpace::sphere(), TargetSpace::book(3), TargetSpace::cone(2.5 * kPi)}) {
        const DiscreteMap u = builtin_initial_map(torus(3), sp, "bump");
        const DichotomyCertificate c = run_flow(u);
        EXPECT_EQ(c.outcome, FlowOutcome::Converged) << sp.description << ": " << c.reason;
        EXPECT_LT(c.final_energy, 1e-6) << sp.description;
        EXPECT_LT(c.residual, 1e-6);
        EXPECT_TRUE(c.degree_preserved);
        expect_ladder_telescopes(c.state);
        EXPECT_EQ(c.state.cycles.front().ladder.front(), energy(u));
    }
}

TEST(Flow, SweepOnlyTouchesInteriorsOfItsClass) {
    const auto sp = TargetSpace::sphere();
    const DiscreteMap u = builtin_initial_map(torus(3), sp, "bump");
    FlowOptions opt;
    FlowState st = make_flow_state(u, opt);
    CoverCache cache;
    const RadiusResult rr = compute_replacement_radius(u, opt.containment_exponent, sp.rho, st.kappa0);
    ASSERT_FALSE(rr.floor_hit);
    const auto& [pc, regions] = cache.get(*u.mesh, rr.k);
    for (int l = 1; l <= pc.lambda; ++l) {
        const DiscreteMap before = st.map;
        sweep_class(st, pc, regions, l, opt);
        std::vector<char> allowed(u.size(), 0);
        for (int i : pc.classes[l - 1])
            for (int v : regions[i].interior) allowed[v] = 1;
        for (int v = 0; v < u.size(); ++v)
            if (!allowed[v]) EXPECT_TRUE(same_point(sp, before[v], st.map[v])) << "class " << l << " vertex " << v;
        EXPECT_LE(energy(st.map), energy(before) * (1 + kLadderRelTol));
    }
}

TEST(Flow, ReplacementRadiusOfConstantMapIsCoarsest) {
    const DiscreteMap u = builtin_initial_map(torus(2), TargetSpace::sphere(), "constant");
    const RadiusResult rr = compute_replacement_radius(u, 1, kPi / 8, 3);
    EXPECT_FALSE(rr.floor_hit);
    EXPECT_EQ(rr.k, 3);
    EXPECT_EQ(rr.r, 0.125);
}

TEST(Flow, ConcentratedMapHitsTheFloor) {
    const DiscreteMap u = builtin_initial_map(torus(2), TargetSpace::sphere(), "degree1");
    const RadiusResult rr = compute_replacement_radius(u, 1, kPi / 8, 3);
    EXPECT_TRUE(rr.floor_hit || rr.r < 4 * u.mesh->mean_edge);
}

TEST(Flow, ModulusBudgetMeetsItsTarget) {
    const DiscreteMap u = builtin_initial_map(torus(2), TargetSpace::sphere(), "bump");
    for (double e0 : {0.01, 1.0, 40.0}) {
        const ModulusRecord rec = modulus_record(u, 0.125, e0, 1, kPi / 80);
        EXPECT_NEAR(rec.target, kPi / 240, 1e-15);
        EXPECT_NEAR(rec.budget, std::sqrt(8 * kPi * e0 / (-2 * rec.log_delta)), 1e-15);
        EXPECT_TRUE(rec.budget_ok);
        EXPECT_LE(rec.log_delta, std::log(0.5));
        ASSERT_FALSE(rec.table.empty());
        EXPECT_EQ(rec.table.front().delta, 0.125);
    }
}

TEST(Flow, DegreeOneBubbles) {
    const DiscreteMap u = builtin_initial_map(torus(3), TargetSpace::sphere(), "degree1");
    const DichotomyCertificate c = run_flow(u);
    ASSERT_EQ(c.outcome, FlowOutcome::Bubbled) << c.reason;
    ASSERT_TRUE(c.bubble.has_value());
    EXPECT_TRUE(c.bubble->replay());
    EXPECT_EQ(c.bubble->windows.size(), 4u);
    ASSERT_TRUE(c.candidate.has_value());
    EXPECT_EQ(c.candidate->R, 8);

    BubbleReport b = *c.bubble;
    b.target_distance = 0.5 * b.threshold;
    EXPECT_FALSE(b.replay());
    b = *c.bubble;
    b.windows.back().energy = b.energy0 + 1.0;
    EXPECT_FALSE(b.replay());
    b = *c.bubble;
    b.domain_distance = 5 * b.r;
    EXPECT_FALSE(b.replay());
    b = *c.bubble;
    b.windows.clear();
    EXPECT_FALSE(b.replay());
}

// A window holding the inverse stereographic projection maps back onto the
// identity of the sphere away from the cap.
TEST(Flow, ExtractsASyntheticStereographicBubble) {
    const auto sp = TargetSpace::sphere();
    BubbleReport rep;
    rep.threshold = sp.rho / 3;
    rep.z = Vec2(3.0, 0.0);
    for (int R : {1, 2, 4, 8}) {
        RescaledWindow w;
        w.R = R;
        w.level = 4;
        auto wm = detail::window_mesh(4, R);
        std::vector<TargetPoint> vals;
        std::vector<int> disk;
        for (int v = 0; v < wm->num_vertices(); ++v) {
            const Vec2 z(wm->vertices[v].x(), wm->vertices[v].y());
            vals.push_back(TargetPoint{0, inverse_stereographic(z)});
            if (z.norm() <= R + 1e-12) disk.push_back(v);
        }
        w.map = DiscreteMap(wm, sp, std::move(vals));
        w.disk = make_region(*wm, disk);
        rep.windows.push_back(std::move(w));
    }
    FlowOptions opt;
    opt.polish_sweeps = 20;
    const BubbleCandidate c = extract_bubble(rep, opt);
    EXPECT_TRUE(c.accepted) << c.reason;
    EXPECT_LT(c.conformality_defect, 0.1);
    EXPECT_NEAR(c.degree_real, 1.0, 0.05);
    EXPECT_NEAR(c.energy, 8 * kPi, 0.1 * 8 * kPi);
    EXPECT_LT(c.hopf_l1_relative, 0.1);
    EXPECT_GT(c.nonconstancy_margin, 0.0);
}

TEST(Flow, HelpersAndErrors) {
    const auto sp = TargetSpace::sphere();
    const DiscreteMap a = builtin_initial_map(torus(1), sp, "bump");
    EXPECT_EQ(detail::l2_distance(a, a), 0.0);
    const DiscreteMap b = builtin_initial_map(torus(1), sp, "constant");
    EXPECT_GT(detail::l2_distance(a, b), 0.0);
    EXPECT_THROW(builtin_initial_map(torus(1), sp, "nope"), UsageError);
    EXPECT_THROW(builtin_initial_map(torus(1), TargetSpace::book(3), "degree1"), UsageError);
    auto sq = std::make_shared<const SurfaceMesh>(build_mesh(MeshKind::FlatSquare, 1));
    EXPECT_THROW(make_flow_state(DiscreteMap::constant(sq, sp, TargetPoint{0, Vec3(0, 0, 1)}), {}), PreconditionError);
    EXPECT_THROW(make_flow_state(builtin_initial_map(torus(2), sp, "bump"), {}), ResolutionError);
    EXPECT_EQ(lambda_constant(MeshKind::FlatTorus), constants::kLambdaTorus);
    EXPECT_DOUBLE_EQ(detail::containment_sigma(sp, 1, 1), sp.rho / 3);
    EXPECT_EQ(detail::containment_sigma(sp, 1, 5), sp.rho);
}
