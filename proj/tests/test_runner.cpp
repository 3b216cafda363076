#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

#include "catflow/runner.hpp"

using namespace catflow;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("catflow_test_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

int count_rows(const std::string& csv) {
    std::istringstream in(csv);
    std::string line;
    int n = -1;  // header
    while (std::getline(in, line))
        if (!line.empty()) ++n;
    return n;
}

}  // namespace

TEST(Runner, RejectsLargeRhoNamingTheField) {
    try {
        resolve_config(Json{{"command", "run-flow"}, {"mesh", "torus:2"}, {"rho", 1.0}});
        FAIL() << "expected UsageError";
    } catch (const UsageError& e) {
        EXPECT_EQ(std::string(e.what()).rfind("rho:", 0), 0u) << e.what();
    }
}

TEST(Runner, RejectsUnknownAndMistypedFields) {
    EXPECT_THROW(resolve_config(Json{{"command", "run-flow"}, {"mesh", "torus:2"}, {"bogus", 1}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "run-flow"}, {"mesh", 3}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "run-flow"}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "fly"}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "verify-estimates"}, {"estimate", "A9"}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "verify-estimates"}, {"estimate", "A1"}, {"size", 0.9}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "diagnose"}, {"map", "m.json"}, {"checks", {"spectral"}}}), UsageError);
    EXPECT_THROW(resolve_config(Json{{"command", "run-flow"}, {"mesh", "torus:9"}}), LevelRangeError);
}

TEST(Runner, FillsDefaults) {
    const Json c = resolve_config(Json{{"command", "run-flow"}, {"mesh", "torus:2"}});
    EXPECT_EQ(c["target"], "sphere");
    EXPECT_EQ(c["initial"], "builtin:bump");
    EXPECT_EQ(c["max_cycles"], 60);
    EXPECT_DOUBLE_EQ(c["rho"].get<double>(), kPi / 8);
}

TEST(Runner, SpecStrings) {
    EXPECT_DOUBLE_EQ(parse_angle("5pi/2"), 2.5 * kPi);
    EXPECT_DOUBLE_EQ(parse_angle("pi"), kPi);
    EXPECT_DOUBLE_EQ(parse_angle("7.5"), 7.5);
    EXPECT_THROW(parse_angle("5pi*2"), UsageError);
    EXPECT_EQ(parse_target_spec("book:4", 0.3).pages, 4);
    EXPECT_THROW(parse_target_spec("book:1", 0.3), UsageError);
    EXPECT_THROW(parse_target_spec("cone:pi", 0.3), UsageError);
    EXPECT_THROW(parse_target_spec("torus", 0.3), UsageError);
    EXPECT_EQ(parse_mesh_spec("sphere:3").kind, MeshKind::RoundSphere);
    EXPECT_THROW(parse_mesh_spec("torus"), UsageError);
    EXPECT_THROW(parse_mesh_spec("torus:x"), UsageError);
    const TargetSpace c = parse_target_spec("cone:5pi/2", 0.3);
    EXPECT_DOUBLE_EQ(parse_target_spec(target_spec_string(c), 0.3).cone_angle, c.cone_angle);
}

TEST(Runner, MapJsonRoundTrip) {
    for (const char* target : {"sphere", "book:3", "cone:5pi/2"}) {
        const TargetSpace sp = parse_target_spec(target, kPi / 8);
        auto mesh = std::make_shared<const SurfaceMesh>(build_mesh(MeshKind::FlatTorus, 1));
        const DiscreteMap u = builtin_initial_map(mesh, sp, "bump");
        const DiscreteMap w = map_from_json(Json::parse(map_json(u).dump()));
        ASSERT_EQ(w.size(), u.size());
        for (int v = 0; v < u.size(); ++v) EXPECT_EQ(distance(sp, u[v], w[v]), 0.0) << target;
        Json bad = map_json(u);
        bad["values"].erase(0);
        EXPECT_THROW(map_from_json(bad), UsageError);
    }
}

TEST(Runner, ProfileCsvRoundTrip) {
    ProfileTable p;
    for (int i = 1; i <= 5; ++i) {
        p.sigma.push_back(0.1 * i / 3);
        p.area.push_back(std::exp(-i) / 7);
        p.normalized.push_back(1.0 / (i + 0.3));
    }
    const ProfileTable q = read_profile_csv(profile_csv(p));
    EXPECT_EQ(q.sigma, p.sigma);
    EXPECT_EQ(q.area, p.area);
    EXPECT_EQ(q.normalized, p.normalized);
    EXPECT_THROW(read_profile_csv("a,b\n"), UsageError);
}

TEST(Runner, HistogramCountsEverySample) {
    std::vector<double> x;
    for (int i = 0; i < 137; ++i) x.push_back(std::sin(i * 0.7));
    const std::string csv = margin_histogram_csv(x);
    EXPECT_EQ(count_rows(csv), 20);
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    long total = 0;
    while (std::getline(in, line)) total += std::stol(line.substr(line.rfind(',') + 1));
    EXPECT_EQ(total, 137);
}

TEST(Runner, LadderCsvHasOneRowPerRung) {
    FlowState s;
    s.lambda = constants::kLambdaTorus;
    for (int n = 0; n < 10; ++n) {
        CycleRecord r;
        r.n = n;
        r.ladder.assign(s.lambda + 1, 1.0 / (n + 1));
        s.cycles.push_back(r);
    }
    EXPECT_EQ(count_rows(energy_ladder_csv(s)), 10 * (constants::kLambdaTorus + 1));
}

TEST(Runner, VerifyWritesArtifactsWithStableHash) {
    const fs::path a = scratch_dir("verify_a"), b = scratch_dir("verify_b");
    const Json base{{"command", "verify-estimates"}, {"estimate", "A2"}, {"space", "book:3"}, {"samples", 500}, {"seed", 5}};
    Json ca = base, cb = base;
    ca["out_dir"] = a.string();
    cb["out_dir"] = b.string();
    EXPECT_EQ(run(ca), 0);
    EXPECT_EQ(run(cb), 0);
    const Json sa = read_json((a / "summary_A2.json").string()), sb = read_json((b / "summary_A2.json").string());
    EXPECT_EQ(sa["version"], kVersion);
    EXPECT_EQ(sa["config_hash"], sb["config_hash"]);
    EXPECT_EQ(read_text((a / "margins_A2.csv").string()), read_text((b / "margins_A2.csv").string()));
    EXPECT_EQ(count_rows(read_text((a / "margins_A2.csv").string())), 500);
    EXPECT_TRUE(fs::exists(a / "resolved_config.json"));
}

TEST(Runner, SolveDiagnoseAndExport) {
    const fs::path d = scratch_dir("solve");
    EXPECT_EQ(run(Json{{"command", "solve-dirichlet"},
                       {"mesh", "torus:1"},
                       {"region_center", 27},
                       {"region_radius", 0.3},
                       {"out_dir", d.string()}}),
              0);
    const Json rep = read_json((d / "solve_report.json").string());
    EXPECT_TRUE(rep["converged"].get<bool>());
    const std::string map = (d / "map.json").string();
    EXPECT_EQ(run(Json{{"command", "diagnose"}, {"map", map}, {"checks", {"monotonicity", "hopf"}}, {"out_dir", d.string()}}),
              0);
    const ProfileTable p = read_profile_csv(read_text((d / "profile.csv").string()));
    EXPECT_EQ(p.sigma.size(), 16u);
    EXPECT_EQ(run(Json{{"command", "export"}, {"artifact", map}, {"kind", "mesh-off"}, {"out_dir", d.string()}}), 0);
    EXPECT_EQ(read_text((d / "mesh.off").string()).rfind("OFF\n", 0), 0u);
    EXPECT_THROW(run(Json{{"command", "export"}, {"artifact", (d / "nothing.json").string()}, {"kind", "energy-density"},
                          {"out_dir", d.string()}}),
                 MissingArtifactError);
}
