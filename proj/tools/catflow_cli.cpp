#include <cstdio>
#include <cstdlib>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "catflow/runner.hpp"

using catflow::Json;

namespace {

// Flags collected as strings and typed when the config is assembled, so that
// validation reports the config field rather than a parser message.
struct Flags {
    std::map<std::string, std::string> values;
    std::map<std::string, std::vector<std::string>> lists;
    std::map<std::string, CLI::Option*> options;

    void add(CLI::App* app, const std::string& flag, const std::string& field, const std::string& help) {
        options[field] = app->add_option(flag, values[field], help);
    }
    void add_list(CLI::App* app, const std::string& flag, const std::string& field, const std::string& help) {
        app->add_option(flag, lists[field], help)->delimiter(',');
    }
};

Json typed(const std::string& field, const std::string& text) {
    static const std::map<std::string, char> kinds{
        {"seed", 'u'},        {"samples", 'i'},      {"size", 'f'},          {"rho", 'f'},
        {"tol", 'f'},         {"max_cycles", 'i'},   {"max_sweeps", 'i'},    {"region_center", 'i'},
        {"region_radius", 'f'}, {"center_vertex", 'i'}, {"delta", 'f'},      {"scale", 'f'},
        {"c", 'f'}, {"ball_center", 'f'}, {"ball_chart", 'i'},   {"containment_exponent", 'i'}};
    const auto it = kinds.find(field);
    if (it == kinds.end()) return text;
    std::size_t used = 0;
    try {
        if (it->second == 'f') {
            const double v = std::stod(text, &used);
            if (used == text.size()) return v;
        } else {
            const double v = std::stod(text, &used);
            if (used == text.size() && v == static_cast<double>(static_cast<long long>(v))) {
                if (it->second == 'u') {
                    if (text.find_first_of(".eE") == std::string::npos) return std::stoull(text);
                    if (v >= 0) return static_cast<std::uint64_t>(v);
                } else {
                    return static_cast<long long>(v);
                }
            }
        }
    } catch (const std::exception&) {
    }
    throw catflow::UsageError(field + ": cannot parse '" + text + "'");
}

int threads_from_env() {
    const char* s = std::getenv("CATFLOW_THREADS");
    if (!s || !*s) return 1;
    char* end = nullptr;
    const long n = std::strtol(s, &end, 10);
    if (*end != '\0' || n < 1) throw catflow::UsageError("CATFLOW_THREADS: must be a positive integer");
    return static_cast<int>(n);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Harmonic replacement flow into locally CAT(1) targets"};
    app.require_subcommand(1);
    app.set_version_flag("--version", catflow::kVersion);

    std::map<std::string, Flags> flags;
    auto common = [&](CLI::App* sub, Flags& f) {
        f.add(sub, "--seed", "seed", "64-bit seed");
        f.add(sub, "--out-dir", "out_dir", "output directory");
    };

    auto* verify = app.add_subcommand("verify-estimates", "audit a comparison estimate on random configurations");
    {
        Flags& f = flags["verify-estimates"];
        f.add(verify, "--estimate", "estimate", "A1, A2, A4, A6, B1 or B3");
        f.add(verify, "--space", "space", "sphere, book:K or cone:THETA");
        f.add(verify, "--samples", "samples", "number of configurations");
        f.add(verify, "--size", "size", "configuration size epsilon");
        f.add(verify, "--rho", "rho", "admissible ball radius");
        common(verify, f);
    }
    auto* solve = app.add_subcommand("solve-dirichlet", "solve a Dirichlet problem on a geodesic ball");
    {
        Flags& f = flags["solve-dirichlet"];
        f.add(solve, "--mesh", "mesh", "torus:L, sphere:L or square:L");
        f.add(solve, "--region-center", "region_center", "center vertex of the region");
        f.add(solve, "--region-radius", "region_radius", "domain radius of the region");
        f.add(solve, "--target", "target", "sphere, book:K or cone:THETA");
        f.add_list(solve, "--ball-center", "ball_center", "target ball center coordinates (comma separated)");
        f.add(solve, "--ball-chart", "ball_chart", "chart of the ball center");
        f.add(solve, "--rho", "rho", "target ball radius");
        f.add(solve, "--boundary-file", "boundary", "map JSON or builtin:NAME supplying boundary values");
        f.add(solve, "--tol", "tol", "sweep tolerance");
        f.add(solve, "--max-sweeps", "max_sweeps", "sweep budget");
        common(solve, f);
    }
    auto* flow = app.add_subcommand("run-flow", "run the harmonic replacement flow");
    {
        Flags& f = flags["run-flow"];
        f.add(flow, "--mesh", "mesh", "torus:L or sphere:L");
        f.add(flow, "--target", "target", "sphere, book:K or cone:THETA");
        f.add(flow, "--initial", "initial", "map JSON or builtin:constant|bump|degree1");
        f.add(flow, "--rho", "rho", "admissible ball radius");
        f.add(flow, "--tol", "tol", "convergence tolerance");
        f.add(flow, "--max-cycles", "max_cycles", "cycle budget");
        f.add(flow, "--containment-exponent", "containment_exponent", "doubled-ball images fit in 3^-c rho");
        common(flow, f);
    }
    auto* diag = app.add_subcommand("diagnose", "certificates for a stored map");
    {
        Flags& f = flags["diagnose"];
        f.add(diag, "--map", "map", "map JSON");
        f.add(diag, "--map2", "map2", "second map JSON (subharmonicity)");
        f.add_list(diag, "--checks", "checks", "monotonicity,hopf,subharmonicity,harmonicity,courant");
        f.add(diag, "--center-vertex", "center_vertex", "center vertex for profiles and radii");
        f.add(diag, "--delta", "delta", "Courant-Lebesgue delta");
        f.add(diag, "--scale", "scale", "harmonicity residual scale");
        f.add(diag, "--region-radius", "region_radius", "subharmonicity region radius");
        f.add(diag, "--c", "c", "monotonicity exponent factor");
        common(diag, f);
    }
    auto* exp = app.add_subcommand("export", "plot data from stored artifacts");
    {
        Flags& f = flags["export"];
        f.add(exp, "--artifact", "artifact", "input artifact");
        f.add(exp, "--kind", "kind", "energy-ladder, monotonicity-profile, margin-histogram, mesh-off, energy-density");
        f.add(exp, "--out", "out", "output file");
        f.add(exp, "--center-vertex", "center_vertex", "profile center vertex");
        common(exp, f);
    }
    std::string config_file;
    auto* runc = app.add_subcommand("run", "run a JSON config file");
    runc->add_option("--config", config_file, "config JSON")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        const int threads = threads_from_env();
        Json cfg;
        if (runc->parsed()) {
            cfg = catflow::read_json(config_file);
        } else {
            for (auto* sub : app.get_subcommands()) {
                const std::string name = sub->get_name();
                cfg["command"] = name;
                const Flags& f = flags.at(name);
                for (const auto& [field, text] : f.values)
                    if (f.options.at(field)->count() > 0) cfg[field] = typed(field, text);
                for (const auto& [field, items] : f.lists) {
                    if (items.empty()) continue;
                    Json arr = Json::array();
                    for (const auto& s : items) arr.push_back(field == "checks" ? Json(s) : typed(field, s));
                    cfg[field] = arr;
                }
            }
        }
        if (threads > 1) std::fprintf(stderr, "note: CATFLOW_THREADS=%d; computations run on one worker\n", threads);
        return catflow::run(cfg);
    } catch (const catflow::UsageError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return 2;
    } catch (const catflow::Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.kind(), e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
