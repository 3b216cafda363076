// Recomputes the values in include/catflow/constants.hpp.
//
//   calibrate [samples]
//
// Budget constants: worst ratio -margin / scale over the three catalog targets
// and sizes 0.1, 0.05, 0.025, times a safety factor of 2, rounded up to two
// significant digits, at least 1e-3. Seeds are disjoint from the acceptance seeds.

#include <cmath>
#include <cstdio>
#include <cstdlib>

#include "catflow/audit.hpp"
#include "catflow/flow.hpp"

using namespace catflow;

namespace {

constexpr std::uint64_t kCalibrationSeed = 0xca11b7a7e5eedull;

double round_up_2(double x) {
    if (x <= 0.0) return 0.0;
    const double p = std::pow(10.0, std::floor(std::log10(x)) - 1);
    return std::ceil(x / p - 1e-9) * p;
}

}  // namespace

int main(int argc, char** argv) {
    const int samples = argc > 1 ? std::atoi(argv[1]) : 20000;
    const TargetSpace spaces[] = {TargetSpace::sphere(), TargetSpace::book(3), TargetSpace::cone(2.5 * kPi)};
    const char* names[] = {"sphere", "book:3", "cone:5pi/2"};
    struct Row {
        Estimate e;
        const char* constant;
        const char* scale;
    };
    const Row rows[] = {{Estimate::A1, "kReshetnyakK", "eps^3"},
                        {Estimate::A2, "kEstimateIK", "eps^3"},
                        {Estimate::A4, "kEstimateIIK", "eps^3"},
                        {Estimate::A6, "kEstimateIIIK", "eta^2 eps^2 + eps^3 + (eta - eta')^2"},
                        {Estimate::B3, "kComparisonFK", "sum w (d eta)^2 + sum A eta^2"}};
    std::printf("// samples per cell: %d (map-pair estimates use 1%%)\n", samples);
    for (const Row& r : rows) {
        double worst = 0.0;
        for (int s = 0; s < 3; ++s)
            for (double size : {0.1, 0.05, 0.025}) {
                const int n = r.e == Estimate::B3 ? std::max(1, samples / 100) : samples;
                const AuditResult a = run_estimate_audit(r.e, spaces[s], n, size, kCalibrationSeed);
                std::printf("// %s %-10s size %.3f worst ratio %.6g\n", estimate_name(r.e), names[s], size, a.worst_ratio);
                worst = std::max(worst, a.worst_ratio);
            }
        const double K = std::max(round_up_2(2 * worst), 1e-3);
        std::printf("inline constexpr double %s = %.2g;  // scale %s\n", r.constant, K, r.scale);
    }
    for (MeshKind kind : {MeshKind::FlatTorus, MeshKind::RoundSphere}) {
        int lambda = 0;
        for (int level = 0; level <= 5; ++level) lambda = std::max(lambda, flow_lambda(build_mesh(kind, level)));
        std::printf("inline constexpr int kLambda%s = %d;\n", kind == MeshKind::FlatTorus ? "Torus" : "Sphere", lambda);
    }
    return 0;
}
