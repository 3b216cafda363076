#pragma once

// Persistence: spec strings, JSON artifacts (sorted keys, version and config
// hash embedded), OFF meshes with a JSON sidecar, and the plot CSVs.

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "catflow/audit.hpp"
#include "catflow/diagnostics.hpp"
#include "catflow/dirichlet.hpp"
#include "catflow/energy.hpp"
#include "catflow/flow.hpp"
#include "catflow/rng.hpp"
#include "catflow/surface_domain.hpp"
#include "catflow/target_space.hpp"

namespace catflow {

using Json = nlohmann::json;

inline constexpr const char* kVersion = "catflow 0.1.0";

// ---------------------------------------------------------------------------
// Spec strings.

struct MeshSpec {
    MeshKind kind = MeshKind::FlatTorus;
    int level = 0;
};

inline MeshSpec parse_mesh_spec(const std::string& s) {
    const auto colon = s.find(':');
    if (colon == std::string::npos) throw UsageError("mesh: expected KIND:LEVEL, got '" + s + "'");
    const std::string kind = s.substr(0, colon), lvl = s.substr(colon + 1);
    MeshSpec m;
    if (kind == "torus")
        m.kind = MeshKind::FlatTorus;
    else if (kind == "sphere")
        m.kind = MeshKind::RoundSphere;
    else if (kind == "square")
        m.kind = MeshKind::FlatSquare;
    else
        throw UsageError("mesh: unknown kind '" + kind + "' (expected torus, sphere or square)");
    std::size_t used = 0;
    try {
        m.level = std::stoi(lvl, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != lvl.size()) throw UsageError("mesh: level '" + lvl + "' is not an integer");
    if (m.level < 0 || m.level > kMaxLevel) throw LevelRangeError("mesh: level must lie in [0, 8]");
    return m;
}

inline std::string mesh_spec_string(const SurfaceMesh& m) { return m.name(); }

// Number, or an expression of the form [a]pi[/b].
inline double parse_angle(const std::string& s) {
    const auto p = s.find("pi");
    try {
        if (p == std::string::npos) {
            std::size_t used = 0;
            const double v = std::stod(s, &used);
            if (used != s.size()) throw std::invalid_argument(s);
            return v;
        }
        const std::string num = s.substr(0, p), rest = s.substr(p + 2);
        double a = num.empty() ? 1.0 : std::stod(num);
        double b = 1.0;
        if (!rest.empty()) {
            if (rest[0] != '/') throw std::invalid_argument(s);
            b = std::stod(rest.substr(1));
        }
        return a * kPi / b;
    } catch (const std::exception&) {
        throw UsageError("target: cannot parse angle '" + s + "'");
    }
}

inline TargetSpace parse_target_spec(const std::string& s, double rho) {
    if (!(rho > 0.0 && rho < kPi / 4)) throw UsageError("rho: must lie in (0, pi/4), got " + std::to_string(rho));
    if (s == "sphere") return TargetSpace::sphere(rho);
    if (s.rfind("book:", 0) == 0) {
        int k = 0;
        try {
            k = std::stoi(s.substr(5));
        } catch (const std::exception&) {
            throw UsageError("target: page count in '" + s + "' is not an integer");
        }
        if (k < 2) throw UsageError("target: a book needs at least 2 pages");
        return TargetSpace::book(k, rho);
    }
    if (s.rfind("cone:", 0) == 0) {
        const double a = parse_angle(s.substr(5));
        if (!(a >= 2 * kPi - 1e-12)) throw UsageError("target: cone angle must be at least 2*pi");
        return TargetSpace::cone(a, rho);
    }
    throw UsageError("target: unknown target '" + s + "' (expected sphere, book:K or cone:THETA)");
}

inline std::string target_spec_string(const TargetSpace& sp) {
    switch (sp.kind) {
        case SpaceKind::UnitSphere: return "sphere";
        case SpaceKind::SphericalBook: return "book:" + std::to_string(sp.pages);
        case SpaceKind::FlatCone: {
            std::ostringstream o;
            o << std::setprecision(17) << sp.cone_angle;
            return "cone:" + o.str();
        }
    }
    return "";
}

inline const char* space_kind_name(SpaceKind k) {
    switch (k) {
        case SpaceKind::UnitSphere: return "UnitSphere";
        case SpaceKind::SphericalBook: return "SphericalBook";
        case SpaceKind::FlatCone: return "FlatCone";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// JSON.

inline Json point_json(const TargetSpace& sp, const TargetPoint& p) {
    Json j;
    j["space_kind"] = space_kind_name(sp.kind);
    j["chart"] = p.chart;
    if (sp.kind == SpaceKind::FlatCone)
        j["coordinates"] = {p.x[0], p.x[1]};
    else
        j["coordinates"] = {p.x[0], p.x[1], p.x[2]};
    return j;
}

inline TargetPoint point_from_json(const TargetSpace& sp, const Json& j) {
    if (!j.contains("chart") || !j.contains("coordinates")) throw UsageError("point: needs chart and coordinates");
    const auto& c = j.at("coordinates");
    const std::size_t want = sp.kind == SpaceKind::FlatCone ? 2 : 3;
    if (!c.is_array() || c.size() != want) throw UsageError("point.coordinates: expected " + std::to_string(want) + " numbers");
    Vec3 x = Vec3::Zero();
    for (std::size_t i = 0; i < want; ++i) x[i] = c[i].get<double>();
    return make_point(sp, j.at("chart").get<int>(), x);
}

inline std::string mesh_off(const SurfaceMesh& m) {
    std::ostringstream o;
    o << std::setprecision(17);
    o << "OFF\n" << m.num_vertices() << ' ' << m.num_triangles() << " 0\n";
    for (const auto& v : m.vertices) o << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
    for (const auto& t : m.triangles) o << "3 " << t[0] << ' ' << t[1] << ' ' << t[2] << '\n';
    return o.str();
}

inline std::string hex64(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string mesh_hash(const SurfaceMesh& m) { return hex64(fnv1a64(mesh_off(m))); }

inline Json mesh_sidecar(const SurfaceMesh& m) {
    return Json{{"kind", mesh_kind_name(m.kind)},
                {"level", m.level},
                {"periods", {m.periods.x(), m.periods.y()}},
                {"spec", m.name()},
                {"hash", mesh_hash(m)}};
}

inline Json map_json(const DiscreteMap& u) {
    Json vals = Json::array();
    for (const auto& p : u.values) {
        if (u.space.kind == SpaceKind::FlatCone)
            vals.push_back({p.chart, p.x[0], p.x[1]});
        else
            vals.push_back({p.chart, p.x[0], p.x[1], p.x[2]});
    }
    return Json{{"mesh", u.mesh->name()},
                {"mesh_hash", mesh_hash(*u.mesh)},
                {"target", target_spec_string(u.space)},
                {"rho", u.space.rho},
                {"values", std::move(vals)}};
}

inline DiscreteMap map_from_json(const Json& j) {
    for (const char* k : {"mesh", "target", "rho", "values"})
        if (!j.contains(k)) throw UsageError(std::string("map.") + k + ": missing");
    const MeshSpec ms = parse_mesh_spec(j.at("mesh").get<std::string>());
    auto mesh = std::make_shared<const SurfaceMesh>(build_mesh(ms.kind, ms.level));
    if (j.contains("mesh_hash") && j.at("mesh_hash").get<std::string>() != mesh_hash(*mesh))
        throw UsageError("map.mesh_hash: does not match the rebuilt mesh");
    const TargetSpace sp = parse_target_spec(j.at("target").get<std::string>(), j.at("rho").get<double>());
    const auto& v = j.at("values");
    if (!v.is_array() || static_cast<int>(v.size()) != mesh->num_vertices())
        throw UsageError("map.values: expected " + std::to_string(mesh->num_vertices()) + " entries");
    std::vector<TargetPoint> vals;
    vals.reserve(v.size());
    const std::size_t want = sp.kind == SpaceKind::FlatCone ? 3 : 4;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_array() || v[i].size() != want)
            throw UsageError("map.values[" + std::to_string(i) + "]: expected " + std::to_string(want) + " numbers");
        Vec3 x = Vec3::Zero();
        for (std::size_t c = 1; c < want; ++c) x[c - 1] = v[i][c].get<double>();
        vals.push_back(make_point(sp, v[i][0].get<int>(), x));
    }
    return DiscreteMap(mesh, sp, std::move(vals));
}

inline Json report_json(const SolveReport& r) {
    return Json{{"iterations", r.iterations},
                {"final_energy", r.final_energy},
                {"energy_trace", r.energy_trace},
                {"max_move", r.max_move},
                {"converged", r.converged},
                {"certificate",
                 {{"max_principle_pass", r.certificate.max_principle_pass},
                  {"max_principle_excess", r.certificate.max_principle_excess},
                  {"uniqueness_checked", r.certificate.uniqueness_checked},
                  {"uniqueness_pass", r.certificate.uniqueness_pass},
                  {"uniqueness_gap", r.certificate.uniqueness_gap},
                  {"lipschitz_proxy", r.certificate.lipschitz_proxy}}}};
}

inline Json number_or_null(double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); }

inline Json cycle_json(const CycleRecord& c) {
    Json mod = Json::array();
    for (const auto& e : c.modulus.table) mod.push_back({{"delta", e.delta}, {"oscillation", e.oscillation}});
    return Json{{"n", c.n},
                {"r", c.r},
                {"k", c.k},
                {"ladder", c.ladder},
                {"l2_diff", number_or_null(c.l2_diff)},
                {"residual", number_or_null(c.residual)},
                {"degree", c.degree ? Json(*c.degree) : Json(nullptr)},
                {"degree_real", c.degree_real},
                {"classes_used", c.classes_used},
                {"balls_solved", c.balls_solved},
                {"guard_rejections", c.guard_rejections},
                {"budget_hits", c.budget_hits},
                {"modulus",
                 {{"epsilon", c.modulus.epsilon},
                  {"log_delta", c.modulus.log_delta},
                  {"budget", c.modulus.budget},
                  {"target", c.modulus.target},
                  {"budget_ok", c.modulus.budget_ok},
                  {"table", std::move(mod)}}}};
}

inline Json flow_state_json(const FlowState& s, int upto_cycle) {
    Json cycles = Json::array();
    for (int i = 0; i <= upto_cycle && i < static_cast<int>(s.cycles.size()); ++i) cycles.push_back(cycle_json(s.cycles[i]));
    Json rh = Json::array();
    for (int i = 0; i <= upto_cycle && i < static_cast<int>(s.r_history.size()); ++i) rh.push_back(s.r_history[i]);
    return Json{{"n", upto_cycle},
                {"lambda", s.lambda},
                {"kappa0", s.kappa0},
                {"r_floor", s.r_floor},
                {"energy0", s.energy0},
                {"degree0", s.degree0 ? Json(*s.degree0) : Json(nullptr)},
                {"r_history", std::move(rh)},
                {"cycle", upto_cycle < static_cast<int>(s.cycles.size()) ? cycle_json(s.cycles[upto_cycle]) : Json(nullptr)}};
}

inline Json bubble_json(const BubbleReport& b) {
    Json wins = Json::array();
    for (const auto& w : b.windows)
        wins.push_back({{"R", w.R},
                        {"level", w.level},
                        {"energy", w.energy},
                        {"ball_count", w.ball_count},
                        {"ball_bound", w.ball_bound},
                        {"disk_vertices", w.disk.size()}});
    return Json{{"r", b.r},
                {"k", b.k},
                {"r_floor", b.r_floor},
                {"floor_hit", b.floor_hit},
                {"y", b.y},
                {"y_prime", b.y_prime},
                {"domain_distance", b.domain_distance},
                {"target_distance", b.target_distance},
                {"threshold", b.threshold},
                {"z", {b.z.x(), b.z.y()}},
                {"energy0", b.energy0},
                {"nonconstancy", b.nonconstancy},
                {"windows", std::move(wins)},
                {"replay", b.replay()}};
}

inline Json candidate_json(const BubbleCandidate& c) {
    return Json{{"R", c.R},
                {"polish_sweeps", c.polish_sweeps},
                {"polish_move", c.polish_move},
                {"window_energy", c.window_energy},
                {"hopf_l1_relative", c.hopf_l1_relative},
                {"dbar_residual", number_or_null(c.dbar_residual)},
                {"cap", point_json(c.sphere_map.space, c.cap)},
                {"conformality_defect", c.conformality_defect},
                {"energy", c.energy},
                {"degree_real", c.degree_real},
                {"nonconstancy_margin", c.nonconstancy_margin},
                {"monotonicity",
                 {{"pass", c.monotonicity.pass},
                  {"worst_ratio", c.monotonicity.worst_ratio},
                  {"theta", number_or_null(c.monotonicity.theta)}}},
                {"accepted", c.accepted},
                {"reason", c.reason}};
}

inline Json certificate_json(const DichotomyCertificate& c) {
    Json j{{"outcome", outcome_name(c.outcome)},
           {"final_energy", c.final_energy},
           {"residual", number_or_null(c.residual)},
           {"degree_preserved", c.degree_preserved},
           {"cycles", c.state.cycles.size()},
           {"energy0", c.state.energy0},
           {"lambda", c.state.lambda},
           {"r_history", c.state.r_history},
           {"reason", c.reason}};
    j["bubble"] = c.bubble ? bubble_json(*c.bubble) : Json(nullptr);
    j["candidate"] = c.candidate ? candidate_json(*c.candidate) : Json(nullptr);
    return j;
}

inline Json audit_summary_json(const AuditResult& r, const std::string& space) {
    return Json{{"estimate", estimate_name(r.estimate)},
                {"space", space},
                {"samples", r.samples},
                {"size", r.size},
                {"seed", r.seed},
                {"failures", r.failures},
                {"pass_rate", r.pass_rate},
                {"worst_margin", r.worst_margin},
                {"budget", r.worst_budget},
                {"worst_ratio", r.worst_ratio}};
}

// ---------------------------------------------------------------------------
// Files.

inline std::string config_hash(const Json& config) { return hex64(fnv1a64(config.dump())); }

// Embeds the version and config hash; keys come out sorted.
inline Json envelope(Json body, const Json& config) {
    body["version"] = kVersion;
    body["config_hash"] = config_hash(config);
    return body;
}

inline void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw UsageError("cannot write '" + path + "'");
    f << text;
}

inline std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw MissingArtifactError("cannot read '" + path + "'");
    std::ostringstream o;
    o << f.rdbuf();
    return o.str();
}

inline void write_json(const std::string& path, const Json& j) { write_text(path, j.dump(2) + "\n"); }

inline Json read_json(const std::string& path) {
    const std::string text = read_text(path);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw UsageError("'" + path + "' is not valid JSON: " + e.what());
    }
}

inline std::string fmt_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

// ---------------------------------------------------------------------------
// CSVs.

// Columns: cycle, class, energy. One row per ladder entry.
inline std::string energy_ladder_csv(const FlowState& s) {
    std::string out = "cycle,class,energy\n";
    for (const auto& c : s.cycles)
        for (std::size_t l = 0; l < c.ladder.size(); ++l)
            out += std::to_string(c.n) + "," + std::to_string(l) + "," + fmt_double(c.ladder[l]) + "\n";
    return out;
}

// Columns: index, lhs, rhs, margin, budget, scale, pass.
inline std::string margins_csv(const AuditResult& r) {
    std::string out = "index,lhs,rhs,margin,budget,scale,pass\n";
    for (std::size_t i = 0; i < r.rows.size(); ++i) {
        const auto& x = r.rows[i];
        out += std::to_string(i) + "," + fmt_double(x.lhs) + "," + fmt_double(x.rhs) + "," + fmt_double(x.margin) + "," +
               fmt_double(x.budget) + "," + fmt_double(x.scale) + "," + (x.pass ? "1" : "0") + "\n";
    }
    return out;
}

// Columns: bin_lo, bin_hi, count. Margins normalized by their budget; 20 equal
// bins over the observed range, last bin closed.
inline std::string margin_histogram_csv(const std::vector<double>& normalized, int bins = 20) {
    std::string out = "bin_lo,bin_hi,count\n";
    if (normalized.empty()) return out;
    double lo = *std::min_element(normalized.begin(), normalized.end());
    double hi = *std::max_element(normalized.begin(), normalized.end());
    if (hi <= lo) hi = lo + 1.0;
    std::vector<long> count(bins, 0);
    for (double x : normalized) {
        int b = static_cast<int>((x - lo) / (hi - lo) * bins);
        ++count[std::clamp(b, 0, bins - 1)];
    }
    for (int b = 0; b < bins; ++b)
        out += fmt_double(lo + (hi - lo) * b / bins) + "," + fmt_double(lo + (hi - lo) * (b + 1) / bins) + "," +
               std::to_string(count[b]) + "\n";
    return out;
}

struct ProfileTable {
    std::vector<double> sigma, area, normalized;
};

// Columns: sigma, area, normalized (e^{c s^2} A / s^2).
inline std::string profile_csv(const ProfileTable& p) {
    std::string out = "sigma,area,normalized\n";
    for (std::size_t i = 0; i < p.sigma.size(); ++i)
        out += fmt_double(p.sigma[i]) + "," + fmt_double(p.area[i]) + "," + fmt_double(p.normalized[i]) + "\n";
    return out;
}

inline ProfileTable read_profile_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line) || line != "sigma,area,normalized") throw UsageError("profile CSV: bad header");
    ProfileTable p;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream ls(line);
        std::string a, b, c;
        if (!std::getline(ls, a, ',') || !std::getline(ls, b, ',') || !std::getline(ls, c))
            throw UsageError("profile CSV: malformed row '" + line + "'");
        p.sigma.push_back(std::stod(a));
        p.area.push_back(std::stod(b));
        p.normalized.push_back(std::stod(c));
    }
    return p;
}

// Columns: vertex, density.
inline std::string energy_density_csv(const DiscreteMap& u) {
    const auto d = energy_density(u);
    std::string out = "vertex,density\n";
    for (std::size_t v = 0; v < d.size(); ++v) out += std::to_string(v) + "," + fmt_double(d[v]) + "\n";
    return out;
}

}  // namespace catflow
