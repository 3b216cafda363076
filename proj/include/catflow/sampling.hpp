#pragma once

#include "catflow/rng.hpp"
#include "catflow/target_space.hpp"

namespace catflow {

inline constexpr double kConeSampleRadius = 0.6;

inline Vec3 random_unit_vector(Rng& rng) {
    Vec3 v;
    do {
        v = Vec3(rng.normal(), rng.normal(), rng.normal());
    } while (v.norm() < 1e-12);
    return v.normalized();
}

inline TargetPoint random_point(const TargetSpace& sp, Rng& rng) {
    switch (sp.kind) {
        case SpaceKind::UnitSphere:
            return TargetPoint{0, random_unit_vector(rng)};
        case SpaceKind::SphericalBook: {
            Vec3 v = random_unit_vector(rng);
            v.z() = std::abs(v.z());
            return canonical(sp, TargetPoint{rng.index(sp.pages), v});
        }
        case SpaceKind::FlatCone:
            return canonical(sp, TargetPoint{0, Vec3(rng.uniform(0.0, kConeSampleRadius),
                                                     rng.uniform(0.0, sp.cone_angle), 0.0)});
    }
    return {};
}

// A point at distance exactly `dist` (< pi) from p in a uniformly random direction.
inline TargetPoint random_step(const TargetSpace& sp, const TargetPoint& p, double dist, Rng& rng) {
    switch (sp.kind) {
        case SpaceKind::UnitSphere: {
            Vec3 w = random_unit_vector(rng);
            w -= w.dot(p.x) * p.x;
            if (w.norm() < 1e-12) w = p.x.unitOrthogonal();
            return TargetPoint{0, detail::sphere_exp(p.x, dist * w.normalized())};
        }
        case SpaceKind::SphericalBook: {
            const int page = detail::on_spine(p) ? rng.index(sp.pages) : p.chart;
            Vec3 w = random_unit_vector(rng);
            w -= w.dot(p.x) * p.x;
            if (w.norm() < 1e-12) w = p.x.unitOrthogonal();
            const Vec3 x = detail::sphere_exp(p.x, dist * w.normalized());
            if (x.z() >= 0.0) return canonical(sp, TargetPoint{page, x});
            int other = rng.index(sp.pages - 1);
            if (other >= page) ++other;
            return canonical(sp, TargetPoint{other, detail::reflect_z(x)});
        }
        case SpaceKind::FlatCone: {
            const double a = rng.uniform(0.0, 2 * kPi);
            if (p.x[0] <= kIdentifyTol) return canonical(sp, TargetPoint{0, Vec3(dist, rng.uniform(0.0, sp.cone_angle), 0)});
            const Vec2 w(p.x[0] + dist * std::cos(a), dist * std::sin(a));
            return canonical(sp, TargetPoint{0, Vec3(w.norm(), p.x[1] + std::atan2(w.y(), w.x()), 0.0)});
        }
    }
    return p;
}

}  // namespace catflow
