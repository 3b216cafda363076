#pragma once

// Run configurations: defaults, validation with field paths, and the
// subcommands behind the command-line tool.

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "catflow/audit.hpp"
#include "catflow/diagnostics.hpp"
#include "catflow/dirichlet.hpp"
#include "catflow/flow.hpp"
#include "catflow/io.hpp"

namespace catflow {

namespace detail {

struct FieldRule {
    const char* name;
    Json::value_t type;  // number_float accepts any number
    bool required;
    Json fallback;
};

inline bool type_ok(const Json& v, Json::value_t t) {
    switch (t) {
        case Json::value_t::number_float: return v.is_number();
        case Json::value_t::number_unsigned: return v.is_number_unsigned() || (v.is_number_integer() && v.get<long long>() >= 0);
        case Json::value_t::number_integer: return v.is_number_integer();
        case Json::value_t::string: return v.is_string();
        case Json::value_t::array: return v.is_array();
        case Json::value_t::boolean: return v.is_boolean();
        default: return true;
    }
}

inline const char* type_label(Json::value_t t) {
    switch (t) {
        case Json::value_t::number_float: return "a number";
        case Json::value_t::number_unsigned: return "a nonnegative integer";
        case Json::value_t::number_integer: return "an integer";
        case Json::value_t::string: return "a string";
        case Json::value_t::array: return "an array";
        case Json::value_t::boolean: return "a boolean";
        default: return "a value";
    }
}

inline std::vector<FieldRule> rules_for(const std::string& cmd) {
    using T = Json::value_t;
    const double rho = kPi / 8;
    std::vector<FieldRule> r{{"command", T::string, true, nullptr},
                             {"seed", T::number_unsigned, false, 0},
                             {"out_dir", T::string, false, "."}};
    auto add = [&](std::vector<FieldRule> more) { r.insert(r.end(), more.begin(), more.end()); };
    if (cmd == "verify-estimates")
        add({{"estimate", T::string, true, nullptr},
             {"space", T::string, false, "sphere"},
             {"samples", T::number_integer, false, 100000},
             {"size", T::number_float, false, 0.05},
             {"rho", T::number_float, false, rho}});
    else if (cmd == "solve-dirichlet")
        add({{"mesh", T::string, true, nullptr},
             {"target", T::string, false, "sphere"},
             {"rho", T::number_float, false, rho},
             {"region_center", T::number_integer, false, 0},
             {"region_radius", T::number_float, false, 0.25},
             {"ball_center", T::array, false, Json::array()},
             {"ball_chart", T::number_integer, false, 0},
             {"boundary", T::string, false, "builtin:bump"},
             {"tol", T::number_float, false, 1e-10},
             {"max_sweeps", T::number_integer, false, 100000}});
    else if (cmd == "run-flow")
        add({{"mesh", T::string, true, nullptr},
             {"target", T::string, false, "sphere"},
             {"rho", T::number_float, false, rho},
             {"initial", T::string, false, "builtin:bump"},
             {"tol", T::number_float, false, 1e-6},
             {"max_cycles", T::number_integer, false, 60},
             {"containment_exponent", T::number_integer, false, 1}});
    else if (cmd == "diagnose")
        add({{"map", T::string, true, nullptr},
             {"map2", T::string, false, ""},
             {"checks", T::array, false, Json::array({"monotonicity", "hopf", "harmonicity", "courant"})},
             {"center_vertex", T::number_integer, false, 0},
             {"delta", T::number_float, false, 0.2},
             {"scale", T::number_float, false, 0.25},
             {"region_radius", T::number_float, false, 0.25},
             {"c", T::number_float, false, 1.0}});
    else if (cmd == "export")
        add({{"artifact", T::string, true, nullptr},
             {"kind", T::string, true, nullptr},
             {"out", T::string, false, ""},
             {"center_vertex", T::number_integer, false, 0}});
    else
        throw UsageError("command: unknown command '" + cmd +
                         "' (expected verify-estimates, solve-dirichlet, run-flow, diagnose or export)");
    return r;
}

inline void require(bool ok, const std::string& field, const std::string& msg) {
    if (!ok) throw UsageError(field + ": " + msg);
}

}  // namespace detail

// Fills defaults and validates; errors name the offending field.
inline Json resolve_config(const Json& raw) {
    if (!raw.is_object()) throw UsageError("config: expected a JSON object");
    if (!raw.contains("command") || !raw.at("command").is_string()) throw UsageError("command: missing or not a string");
    const std::string cmd = raw.at("command").get<std::string>();
    const auto rules = detail::rules_for(cmd);
    std::set<std::string> known;
    Json out = Json::object();
    for (const auto& r : rules) {
        known.insert(r.name);
        if (raw.contains(r.name)) {
            const Json& v = raw.at(r.name);
            detail::require(detail::type_ok(v, r.type), r.name, std::string("must be ") + detail::type_label(r.type));
            out[r.name] = v;
        } else {
            detail::require(!r.required, r.name, "is required");
            out[r.name] = r.fallback;
        }
    }
    for (const auto& [k, v] : raw.items()) detail::require(known.count(k) > 0, k, "unknown field for " + cmd);

    using detail::require;
    if (out.contains("rho")) {
        const double rho = out["rho"].get<double>();
        require(rho > 0.0 && rho < kPi / 4, "rho", "must lie in (0, pi/4)");
    }
    if (out.contains("mesh")) (void)parse_mesh_spec(out["mesh"].get<std::string>());
    if (out.contains("target")) (void)parse_target_spec(out["target"].get<std::string>(), out["rho"].get<double>());
    if (cmd == "verify-estimates") {
        (void)parse_estimate(out["estimate"].get<std::string>());
        (void)parse_target_spec(out["space"].get<std::string>(), out["rho"].get<double>());
        require(out["samples"].get<long long>() >= 1 && out["samples"].get<long long>() <= 100000000, "samples",
                "must lie in [1, 1e8]");
        const double s = out["size"].get<double>();
        require(s > 0.0 && s <= 0.5, "size", "must lie in (0, 0.5]");
    }
    if (out.contains("tol")) require(out["tol"].get<double>() > 0.0, "tol", "must be positive");
    if (out.contains("max_cycles")) require(out["max_cycles"].get<int>() >= 1, "max_cycles", "must be at least 1");
    if (out.contains("max_sweeps")) require(out["max_sweeps"].get<int>() >= 1, "max_sweeps", "must be at least 1");
    if (out.contains("containment_exponent"))
        require(out["containment_exponent"].get<int>() >= 0, "containment_exponent", "must be nonnegative");
    if (out.contains("region_radius")) require(out["region_radius"].get<double>() > 0.0, "region_radius", "must be positive");
    if (out.contains("ball_center")) {
        for (std::size_t i = 0; i < out["ball_center"].size(); ++i)
            require(out["ball_center"][i].is_number(), "ball_center[" + std::to_string(i) + "]", "must be a number");
    }
    if (cmd == "diagnose") {
        static const std::set<std::string> names{"monotonicity", "hopf", "subharmonicity", "harmonicity", "courant"};
        for (std::size_t i = 0; i < out["checks"].size(); ++i) {
            const Json& c = out["checks"][i];
            require(c.is_string() && names.count(c.get<std::string>()) > 0, "checks[" + std::to_string(i) + "]",
                    "must be one of monotonicity, hopf, subharmonicity, harmonicity, courant");
        }
        const double d = out["delta"].get<double>();
        require(d > 0.0 && d < 1.0, "delta", "must lie in (0, 1)");
        require(out["scale"].get<double>() > 0.0, "scale", "must be positive");
    }
    if (cmd == "export") {
        static const std::set<std::string> kinds{"energy-ladder", "monotonicity-profile", "margin-histogram", "mesh-off",
                                                 "energy-density"};
        require(kinds.count(out["kind"].get<std::string>()) > 0, "kind",
                "must be one of energy-ladder, monotonicity-profile, margin-histogram, mesh-off, energy-density");
    }
    return out;
}

// The part of the config that identifies a computation (the output directory is excluded).
inline Json hashed_config(const Json& resolved) {
    Json h = resolved;
    h.erase("out_dir");
    return h;
}

namespace detail {

inline std::string out_path(const Json& cfg, const std::string& name) {
    return (std::filesystem::path(cfg["out_dir"].get<std::string>()) / name).string();
}

inline void write_artifact(const Json& cfg, const std::string& name, Json body) {
    write_json(out_path(cfg, name), envelope(std::move(body), hashed_config(cfg)));
}

inline DiscreteMap load_or_builtin(const std::string& what, std::shared_ptr<const SurfaceMesh> mesh,
                                   const TargetSpace& sp) {
    if (what.rfind("builtin:", 0) == 0) return builtin_initial_map(std::move(mesh), sp, what.substr(8));
    DiscreteMap u = map_from_json(read_json(what));
    if (u.mesh->name() != mesh->name()) throw UsageError("map file '" + what + "' lives on " + u.mesh->name());
    if (!(u.space == sp)) throw UsageError("map file '" + what + "' uses another target");
    return u;
}

inline std::vector<double> sigma_grid(double top, int n = 16) {
    std::vector<double> s;
    for (int i = 1; i <= n; ++i) s.push_back(top * i / n);
    return s;
}

inline int cmd_verify(const Json& cfg) {
    const std::string space = cfg["space"].get<std::string>();
    const TargetSpace sp = parse_target_spec(space, cfg["rho"].get<double>());
    const Estimate e = parse_estimate(cfg["estimate"].get<std::string>());
    const AuditResult r = run_estimate_audit(e, sp, cfg["samples"].get<int>(), cfg["size"].get<double>(),
                                             cfg["seed"].get<std::uint64_t>());
    const std::string id = estimate_name(e);
    write_text(out_path(cfg, "margins_" + id + ".csv"), margins_csv(r));
    write_artifact(cfg, "summary_" + id + ".json", audit_summary_json(r, space));
    return r.failures == 0 ? 0 : 3;
}

inline int cmd_solve(const Json& cfg) {
    const MeshSpec ms = parse_mesh_spec(cfg["mesh"].get<std::string>());
    auto mesh = std::make_shared<const SurfaceMesh>(build_mesh(ms.kind, ms.level));
    const TargetSpace sp = parse_target_spec(cfg["target"].get<std::string>(), cfg["rho"].get<double>());
    const DiscreteMap src = load_or_builtin(cfg["boundary"].get<std::string>(), mesh, sp);
    const int c = cfg["region_center"].get<int>();
    require(c >= 0 && c < mesh->num_vertices(), "region_center", "is not a vertex of the mesh");
    double radius = cfg["region_radius"].get<double>();
    if (!mesh->closed()) radius = std::min(radius, 2 * mesh->diameter());
    Region reg = make_region(*mesh, geodesic_ball(*mesh, c, radius));
    if (reg.boundary.empty()) throw EmptyBoundaryError("region_radius: the ball has no boundary");
    TargetPoint center;
    const Json& bc = cfg["ball_center"];
    if (bc.empty()) {
        std::vector<TargetPoint> pts;
        for (int v : reg.boundary) pts.push_back(src.values[v]);
        center = frechet_mean(sp, pts);
    } else {
        const std::size_t want = sp.kind == SpaceKind::FlatCone ? 2 : 3;
        require(bc.size() == want, "ball_center", "expected " + std::to_string(want) + " coordinates");
        Vec3 x = Vec3::Zero();
        for (std::size_t i = 0; i < want; ++i) x[i] = bc[i].get<double>();
        center = make_point(sp, cfg["ball_chart"].get<int>(), x);
    }
    DirichletProblem prob = make_problem(src, std::move(reg), center, sp.rho);
    SolveOptions so;
    so.tol = cfg["tol"].get<double>();
    so.max_sweeps = cfg["max_sweeps"].get<int>();
    try {
        auto [u, rep] = solve_dirichlet(prob, std::nullopt, so);
        write_artifact(cfg, "map.json", map_json(u));
        write_artifact(cfg, "solve_report.json", report_json(rep));
    } catch (const BudgetExceededError& e) {
        write_artifact(cfg, "map.json", map_json(e.partial));
        write_artifact(cfg, "solve_report.json", report_json(e.report));
        throw;
    }
    return 0;
}

inline int cmd_flow(const Json& cfg) {
    const MeshSpec ms = parse_mesh_spec(cfg["mesh"].get<std::string>());
    auto mesh = std::make_shared<const SurfaceMesh>(build_mesh(ms.kind, ms.level));
    const TargetSpace sp = parse_target_spec(cfg["target"].get<std::string>(), cfg["rho"].get<double>());
    const DiscreteMap u0 = load_or_builtin(cfg["initial"].get<std::string>(), mesh, sp);
    FlowOptions opt;
    opt.tol = cfg["tol"].get<double>();
    opt.max_cycles = cfg["max_cycles"].get<int>();
    opt.containment_exponent = cfg["containment_exponent"].get<int>();
    const DichotomyCertificate cert = run_flow(u0, opt);
    for (std::size_t n = 0; n < cert.state.cycles.size(); ++n) {
        char name[64];
        std::snprintf(name, sizeof name, "flow_state_%04zu.json", n);
        write_artifact(cfg, name, flow_state_json(cert.state, static_cast<int>(n)));
    }
    Json all = Json::array();
    for (const auto& c : cert.state.cycles) all.push_back(cycle_json(c));
    write_artifact(cfg, "flow_state.json",
                   Json{{"lambda", cert.state.lambda},
                        {"kappa0", cert.state.kappa0},
                        {"energy0", cert.state.energy0},
                        {"r_floor", cert.state.r_floor},
                        {"r_history", cert.state.r_history},
                        {"cycles", std::move(all)}});
    write_text(out_path(cfg, "energy_ladder.csv"), energy_ladder_csv(cert.state));
    write_artifact(cfg, "certificate.json", certificate_json(cert));
    write_artifact(cfg, "final_map.json", map_json(cert.state.map));
    if (cert.candidate) write_artifact(cfg, "bubble_sphere_map.json", map_json(cert.candidate->sphere_map));
    return 0;
}

inline ProfileTable monotonicity_profile(const DiscreteMap& u, int center, double c, MonotonicityResult* res = nullptr) {
    const TargetPoint Q = u.values.at(center);
    ProfileTable p;
    p.sigma = sigma_grid(u.space.rho);
    p.area = extrinsic_area_profile(u, Q, p.sigma);
    const MonotonicityResult m = monotonicity_check(p.sigma, p.area, c);
    p.normalized = m.normalized;
    if (res) *res = m;
    return p;
}

inline int cmd_diagnose(const Json& cfg) {
    const DiscreteMap u = map_from_json(read_json(cfg["map"].get<std::string>()));
    const auto& m = *u.mesh;
    const int center = cfg["center_vertex"].get<int>();
    require(center >= 0 && center < m.num_vertices(), "center_vertex", "is not a vertex of the mesh");
    Json out = Json::object();
    out["energy"] = energy(u);
    for (const auto& c : cfg["checks"]) {
        const std::string name = c.get<std::string>();
        if (name == "monotonicity") {
            MonotonicityResult r;
            const ProfileTable p = monotonicity_profile(u, center, cfg["c"].get<double>(), &r);
            write_text(out_path(cfg, "profile.csv"), profile_csv(p));
            out["monotonicity"] = {{"pass", r.pass},
                                   {"worst_ratio", r.worst_ratio},
                                   {"theta", number_or_null(r.theta)},
                                   {"theta_defined", r.theta_defined}};
        } else if (name == "hopf") {
            const HopfReport h = hopf_differential(u);
            out["hopf"] = {{"l1", h.l1},
                           {"dbar_residual", number_or_null(h.dbar_residual)},
                           {"interior_triangles", h.interior_triangles},
                           {"conformality_defect", conformality_defect(u)}};
        } else if (name == "harmonicity") {
            const double r = cfg["scale"].get<double>();
            out["harmonicity"] = {{"scale", r}, {"residual", harmonicity_residual(u, r, vertex_net(m, r))}};
        } else if (name == "courant") {
            const CourantLebesgueResult r = courant_lebesgue_radius(u, center, cfg["delta"].get<double>(), energy(u));
            out["courant"] = {{"radius", r.radius}, {"oscillation", r.oscillation}, {"budget", r.budget}, {"found", r.found}};
        } else if (name == "subharmonicity") {
            const std::string f2 = cfg["map2"].get<std::string>();
            require(!f2.empty(), "map2", "is required by the subharmonicity check");
            const DiscreteMap u1 = map_from_json(read_json(f2));
            require_same_domain(u, u1);
            const double radius = m.closed() ? cfg["region_radius"].get<double>() : 2 * m.diameter();
            const Region reg = make_region(m, geodesic_ball(m, center, radius));
            std::vector<TargetPoint> pts;
            for (int v : reg.vertices) pts.push_back(u.values[v]), pts.push_back(u1.values[v]);
            const TargetPoint O = frechet_mean(u.space, pts);
            const DirichletProblem p0 = make_problem(u, reg, O, u.space.rho);
            const DirichletProblem p1 = make_problem(u1, reg, O, u.space.rho);
            const SubharmonicityResult r = subharmonicity_residual(u, u1, O, p0, p1, {center}, 0.5 * radius);
            out["subharmonicity"] = {{"worst_hat", r.worst_hat},
                                     {"worst_hat_vertex", r.worst_hat_vertex},
                                     {"worst_log_cutoff", r.worst_log_cutoff},
                                     {"hats", r.hat_residuals.size()}};
        }
    }
    write_artifact(cfg, "diagnose.json", out);
    return 0;
}

inline int cmd_export(const Json& cfg) {
    const std::string art = cfg["artifact"].get<std::string>(), kind = cfg["kind"].get<std::string>();
    std::string out = cfg["out"].get<std::string>();
    auto dest = [&](const std::string& def) { return out.empty() ? out_path(cfg, def) : out; };
    if (kind == "energy-ladder") {
        const Json j = read_json(art);
        require(j.contains("cycles"), "artifact", "is not a flow_state.json file");
        FlowState s;
        for (const auto& c : j["cycles"]) {
            CycleRecord r;
            r.n = c.at("n").get<int>();
            r.ladder = c.at("ladder").get<std::vector<double>>();
            s.cycles.push_back(std::move(r));
        }
        write_text(dest("energy_ladder.csv"), energy_ladder_csv(s));
    } else if (kind == "margin-histogram") {
        const std::string text = read_text(art);
        std::istringstream in(text);
        std::string line;
        std::getline(in, line);
        require(line == "index,lhs,rhs,margin,budget,scale,pass", "artifact", "is not a margins CSV");
        std::vector<double> norm;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            std::vector<std::string> f;
            std::istringstream ls(line);
            for (std::string x; std::getline(ls, x, ',');) f.push_back(x);
            require(f.size() == 7, "artifact", "malformed margins row '" + line + "'");
            const double margin = std::stod(f[3]), budget = std::stod(f[4]);
            norm.push_back(budget > 0.0 ? margin / budget : margin);
        }
        write_text(dest("margin_histogram.csv"), margin_histogram_csv(norm));
    } else if (kind == "monotonicity-profile") {
        const DiscreteMap u = map_from_json(read_json(art));
        const int c = cfg["center_vertex"].get<int>();
        require(c >= 0 && c < u.size(), "center_vertex", "is not a vertex of the mesh");
        write_text(dest("profile.csv"), profile_csv(monotonicity_profile(u, c, 1.0)));
    } else if (kind == "energy-density") {
        write_text(dest("energy_density.csv"), energy_density_csv(map_from_json(read_json(art))));
    } else if (kind == "mesh-off") {
        const DiscreteMap u = map_from_json(read_json(art));
        const std::string path = dest("mesh.off");
        write_text(path, mesh_off(*u.mesh));
        write_json(path + ".json", mesh_sidecar(*u.mesh));
    }
    return 0;
}

}  // namespace detail

// Validates, writes the resolved config to the output directory, and runs.
// Returns the process exit status (3 when an audit records failures).
inline int run(const Json& raw) {
    const Json cfg = resolve_config(raw);
    std::filesystem::create_directories(cfg["out_dir"].get<std::string>());
    write_json(detail::out_path(cfg, "resolved_config.json"),
               Json{{"config", cfg}, {"config_hash", config_hash(hashed_config(cfg))}, {"version", kVersion}});
    const std::string cmd = cfg["command"].get<std::string>();
    if (cmd == "verify-estimates") return detail::cmd_verify(cfg);
    if (cmd == "solve-dirichlet") return detail::cmd_solve(cfg);
    if (cmd == "run-flow") return detail::cmd_flow(cfg);
    if (cmd == "diagnose") return detail::cmd_diagnose(cfg);
    return detail::cmd_export(cfg);
}

}  // namespace catflow
