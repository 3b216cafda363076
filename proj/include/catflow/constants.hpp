#pragma once

// Calibrated constants. The budget constants K are produced by
// tools/calibrate.cpp (sizes 0.1, 0.05, 0.025; calibration seeds disjoint from
// the acceptance seeds; safety factor 2 over the worst observed ratio, rounded up
// to two digits, at least 1e-3).

namespace catflow::constants {

// margin >= -(K * scale + kBudgetFloor), scale as documented per estimate
inline constexpr double kReshetnyakK = 0.22;   // scale eps^3
inline constexpr double kEstimateIK = 0.45;    // scale eps^3
inline constexpr double kEstimateIIK = 8.2;   // scale eps^3
inline constexpr double kEstimateIIIK = 5.9;  // scale eta^2 eps^2 + eps^3 + (eta - eta')^2
inline constexpr double kComparisonFK = 0.001;  // scale sum w (d eta)^2 + sum A eta^2
inline constexpr double kBudgetFloor = 1e-13;

// Absolute tolerance of the discrete convexity witness.
inline constexpr double kConvexityTol = 1e-8;

// Largest class count over the admissible scales of each mesh kind at levels 0..5.
inline constexpr int kLambdaTorus = 37;
inline constexpr int kLambdaSphere = 23;

}  // namespace catflow::constants
