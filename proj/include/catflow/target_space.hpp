#pragma once

// Catalog of CAT(1) targets: unit sphere, spherical books and flat cones of
// angle at least 2*pi. Points carry a chart id and three coordinates:
//   sphere           chart 0, unit vector
//   book with k pages chart = page, unit vector in the closed upper hemisphere;
//                    the equator z = 0 is the spine shared by all pages
//   flat cone        chart 0, (r, phi, 0) with phi in [0, angle)

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "catflow/errors.hpp"

namespace catflow {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kIdentifyTol = 1e-12;
inline constexpr double kSpineTol = 1e-10;
inline constexpr int kSpineSamples = 256;

enum class SpaceKind { UnitSphere, SphericalBook, FlatCone };

struct TargetSpace {
    SpaceKind kind = SpaceKind::UnitSphere;
    int pages = 0;
    double cone_angle = 0.0;
    double rho = kPi / 8;
    std::string description = "unit sphere";

    static TargetSpace sphere(double rho = kPi / 8) {
        TargetSpace s;
        s.rho = rho;
        s.validate();
        return s;
    }
    static TargetSpace book(int pages, double rho = kPi / 8) {
        TargetSpace s;
        s.kind = SpaceKind::SphericalBook;
        s.pages = pages;
        s.rho = rho;
        s.description = "spherical book with " + std::to_string(pages) + " pages";
        s.validate();
        return s;
    }
    static TargetSpace cone(double angle, double rho = kPi / 8) {
        TargetSpace s;
        s.kind = SpaceKind::FlatCone;
        s.cone_angle = angle;
        s.rho = rho;
        s.description = "flat cone of angle " + std::to_string(angle);
        s.validate();
        return s;
    }

    void validate() const {
        if (!(rho > 0.0 && rho < kPi / 4))
            throw AdmissibilityError("rho must lie in (0, pi/4), got " + std::to_string(rho));
        if (kind == SpaceKind::SphericalBook && pages < 2)
            throw PreconditionError("spherical book needs at least 2 pages");
        if (kind == SpaceKind::FlatCone && !(cone_angle >= 2 * kPi - 1e-12))
            throw PreconditionError("flat cone angle must be at least 2*pi");
    }

    bool operator==(const TargetSpace& o) const {
        return kind == o.kind && pages == o.pages && cone_angle == o.cone_angle && rho == o.rho;
    }
};

struct TargetPoint {
    int chart = 0;
    Vec3 x = Vec3::Zero();
};

struct ConePoint {
    TargetPoint base;
    double height = 0.0;
};

namespace detail {

inline double clamp1(double c) { return std::clamp(c, -1.0, 1.0); }

inline double angle_between(const Vec3& a, const Vec3& b) {
    return std::atan2(a.cross(b).norm(), a.dot(b));
}

inline Vec3 slerp(const Vec3& a, const Vec3& b, double t) {
    const double th = angle_between(a, b);
    if (th < 1e-15) return a;
    const double s = std::sin(th);
    Vec3 r = (std::sin((1 - t) * th) / s) * a + (std::sin(t * th) / s) * b;
    return r.normalized();
}

inline Vec3 sphere_log(const Vec3& p, const Vec3& q) {
    const double c = p.dot(q);
    Vec3 v = q - c * p;
    const double s = v.norm();
    if (s < 1e-300) return Vec3::Zero();
    return v * (std::atan2(s, c) / s);
}

inline Vec3 sphere_exp(const Vec3& p, const Vec3& v) {
    const double t = v.norm();
    if (t < 1e-300) return p;
    return (std::cos(t) * p + (std::sin(t) / t) * v).normalized();
}

inline Vec3 reflect_z(const Vec3& q) { return {q.x(), q.y(), -q.z()}; }

inline Vec3 spine_point(double t) { return {std::cos(t), std::sin(t), 0.0}; }

inline bool on_spine(const TargetPoint& p) { return std::abs(p.x.z()) <= kIdentifyTol; }

template <class F>
double golden_section_min(F&& f, double a, double b, double tol, double* fmin) {
    constexpr double g = 0.6180339887498949;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    const double t = 0.5 * (a + b);
    const double ft = f(t);
    double best_t = t, best_f = ft;
    if (fc < best_f) best_t = c, best_f = fc;
    if (fd < best_f) best_t = d, best_f = fd;
    if (fmin) *fmin = best_f;
    return best_t;
}

struct SpineCrossing {
    double t = 0.0;
    double first = 0.0;   // length from p to the spine point
    double second = 0.0;  // length from the spine point to q
    double length() const { return first + second; }
};

inline const std::array<std::array<double, 2>, kSpineSamples>& spine_table() {
    static const auto table = [] {
        std::array<std::array<double, 2>, kSpineSamples> t{};
        for (int i = 0; i < kSpineSamples; ++i) {
            const double a = 2 * kPi * i / kSpineSamples;
            t[i] = {std::cos(a), std::sin(a)};
        }
        return t;
    }();
    return table;
}

// Shortest broken path p -> spine -> q over two different pages: coarse scan of
// the spine followed by golden-section refinement around the best sample.
inline SpineCrossing book_spine_crossing(const Vec3& p, const Vec3& q) {
    const auto& tab = spine_table();
    int best = 0;
    double best_f = 1e300;
    for (int i = 0; i < kSpineSamples; ++i) {
        const double f = std::acos(clamp1(p.x() * tab[i][0] + p.y() * tab[i][1])) +
                         std::acos(clamp1(q.x() * tab[i][0] + q.y() * tab[i][1]));
        if (f < best_f) best_f = f, best = i;
    }
    const double step = 2 * kPi / kSpineSamples;
    const double t0 = best * step;
    auto f = [&](double t) {
        const Vec3 s = spine_point(t);
        return angle_between(p, s) + angle_between(s, q);
    };
    double fmin = 0.0;
    const double t = golden_section_min(f, t0 - step, t0 + step, kSpineTol, &fmin);
    const Vec3 s = spine_point(t);
    return {t, angle_between(p, s), angle_between(s, q)};
}

inline double wrap_angle(double a, double period) {
    double r = std::fmod(a, period);
    if (r < 0) r += period;
    if (r >= period) r -= period;
    return r;
}

// b - a wrapped into (-period/2, period/2].
inline double signed_angle_diff(double a, double b, double period) {
    double d = wrap_angle(b - a, period);
    if (d > 0.5 * period) d -= period;
    return d;
}

inline double cone_distance_raw(double r1, double p1, double r2, double p2, double angle) {
    const double delta = std::abs(signed_angle_diff(p1, p2, angle));
    if (delta >= kPi) return r1 + r2;
    const double s = std::sin(0.5 * delta);
    return std::sqrt((r1 - r2) * (r1 - r2) + 4 * r1 * r2 * s * s);
}

inline double distance_unchecked(const TargetSpace& sp, const TargetPoint& p, const TargetPoint& q) {
    switch (sp.kind) {
        case SpaceKind::UnitSphere:
            return angle_between(p.x, q.x);
        case SpaceKind::SphericalBook:
            if (p.chart == q.chart || on_spine(p) || on_spine(q)) return angle_between(p.x, q.x);
            return book_spine_crossing(p.x, q.x).length();
        case SpaceKind::FlatCone:
            return cone_distance_raw(p.x[0], p.x[1], q.x[0], q.x[1], sp.cone_angle);
    }
    return 0.0;
}

}  // namespace detail

inline TargetPoint canonical(const TargetSpace& sp, TargetPoint p) {
    switch (sp.kind) {
        case SpaceKind::UnitSphere:
            p.chart = 0;
            p.x.normalize();
            break;
        case SpaceKind::SphericalBook:
            p.x.normalize();
            if (p.x.z() <= kIdentifyTol) {
                p.x.z() = 0.0;
                p.x.normalize();
                p.chart = 0;
            }
            break;
        case SpaceKind::FlatCone:
            p.chart = 0;
            p.x[2] = 0.0;
            if (p.x[0] <= kIdentifyTol) {
                p.x[0] = 0.0;
                p.x[1] = 0.0;
            } else {
                p.x[1] = detail::wrap_angle(p.x[1], sp.cone_angle);
            }
            break;
    }
    return p;
}

inline void validate_point(const TargetSpace& sp, const TargetPoint& p) {
    if (!p.x.allFinite()) throw InvalidPointError("non-finite coordinates");
    switch (sp.kind) {
        case SpaceKind::UnitSphere:
            if (p.chart != 0) throw InvalidPointError("sphere points use chart 0");
            if (std::abs(p.x.norm() - 1.0) > 1e-9) throw InvalidPointError("sphere point is not a unit vector");
            break;
        case SpaceKind::SphericalBook:
            if (p.chart < 0 || p.chart >= sp.pages) throw InvalidPointError("page id out of range");
            if (std::abs(p.x.norm() - 1.0) > 1e-9) throw InvalidPointError("book point is not a unit vector");
            if (p.x.z() < -1e-9) throw InvalidPointError("book point below its page");
            break;
        case SpaceKind::FlatCone:
            if (p.chart != 0) throw InvalidPointError("cone points use chart 0");
            if (p.x[0] < 0.0) throw InvalidPointError("negative cone radius");
            if (p.x[1] < -1e-12 || p.x[1] >= sp.cone_angle + 1e-12)
                throw InvalidPointError("cone angle coordinate outside [0, angle)");
            break;
    }
}

inline TargetPoint make_point(const TargetSpace& sp, int chart, const Vec3& x) {
    TargetPoint p{chart, x};
    if (sp.kind != SpaceKind::FlatCone) {
        if (!x.allFinite() || x.norm() < 1e-300) throw InvalidPointError("zero or non-finite vector");
        p.x.normalize();
    } else if (p.x[0] > kIdentifyTol) {
        p.x[1] = detail::wrap_angle(p.x[1], sp.cone_angle);
    }
    validate_point(sp, p);
    return canonical(sp, p);
}

inline TargetPoint sphere_point(double x, double y, double z) {
    return canonical(TargetSpace{}, TargetPoint{0, Vec3(x, y, z)});
}

inline double distance(const TargetSpace& sp, const TargetPoint& p, const TargetPoint& q) {
    validate_point(sp, p);
    validate_point(sp, q);
    return detail::distance_unchecked(sp, p, q);
}

inline bool same_point(const TargetSpace& sp, const TargetPoint& p, const TargetPoint& q) {
    return detail::distance_unchecked(sp, p, q) <= kIdentifyTol;
}

namespace detail {

inline TargetPoint geodesic_unchecked(const TargetSpace& sp, const TargetPoint& p, const TargetPoint& q,
                                      double tau) {
    if (tau <= 0.0) return p;
    if (tau >= 1.0) return q;
    switch (sp.kind) {
        case SpaceKind::UnitSphere:
            return TargetPoint{0, slerp(p.x, q.x, tau)};
        case SpaceKind::SphericalBook: {
            if (p.chart == q.chart || on_spine(p) || on_spine(q)) {
                const int chart = on_spine(p) ? q.chart : p.chart;
                return canonical(sp, TargetPoint{chart, slerp(p.x, q.x, tau)});
            }
            const SpineCrossing c = book_spine_crossing(p.x, q.x);
            const Vec3 s = spine_point(c.t);
            const double along = tau * c.length();
            if (along <= c.first) {
                if (c.first <= 0.0) return canonical(sp, TargetPoint{0, s});
                return canonical(sp, TargetPoint{p.chart, slerp(p.x, s, along / c.first)});
            }
            if (c.second <= 0.0) return q;
            return canonical(sp, TargetPoint{q.chart, slerp(s, q.x, (along - c.first) / c.second)});
        }
        case SpaceKind::FlatCone: {
            const double r1 = p.x[0], r2 = q.x[0];
            const double delta = signed_angle_diff(p.x[1], q.x[1], sp.cone_angle);
            if (std::abs(delta) < kPi) {
                const Vec2 a(r1, 0.0);
                const Vec2 b(r2 * std::cos(delta), r2 * std::sin(delta));
                const Vec2 m = (1 - tau) * a + tau * b;
                const double r = m.norm();
                if (r <= kIdentifyTol) return TargetPoint{0, Vec3::Zero()};
                return canonical(sp, TargetPoint{0, Vec3(r, p.x[1] + std::atan2(m.y(), m.x()), 0.0)});
            }
            const double along = tau * (r1 + r2);
            if (along <= r1) return canonical(sp, TargetPoint{0, Vec3(r1 - along, p.x[1], 0.0)});
            return canonical(sp, TargetPoint{0, Vec3(along - r1, q.x[1], 0.0)});
        }
    }
    return p;
}

}  // namespace detail

// The point at distance tau * d(p, q) from p along the unique geodesic.
inline TargetPoint geodesic_point(const TargetSpace& sp, const TargetPoint& p, const TargetPoint& q, double tau) {
    if (!(tau >= 0.0 && tau <= 1.0)) throw PreconditionError("geodesic parameter outside [0, 1]");
    const double d = distance(sp, p, q);
    if (d >= kPi) throw NonUniqueGeodesicError("points at distance >= pi have no unique geodesic");
    return detail::geodesic_unchecked(sp, p, q, tau);
}

// Radial projection onto the closed ball of radius sigma about center.
inline TargetPoint ball_projection(const TargetSpace& sp, const TargetPoint& center, double sigma,
                                   const TargetPoint& p) {
    if (!(sigma < kPi / 4)) throw AdmissibilityError("projection radius must be below pi/4");
    if (!(sigma >= 0.0)) throw AdmissibilityError("negative projection radius");
    const double d = distance(sp, center, p);
    if (d <= sigma) return p;
    if (d >= kPi) throw NonUniqueGeodesicError("projection of a point antipodal to the center");
    return detail::geodesic_unchecked(sp, center, p, sigma / d);
}

// Metric of the Euclidean cone over the target.
inline double cone_distance(const TargetSpace& sp, const ConePoint& a, const ConePoint& b) {
    if (!(a.height >= 0.0) || !(b.height >= 0.0)) throw InvalidPointError("cone height must be nonnegative");
    if (a.height == 0.0 || b.height == 0.0) return a.height + b.height;
    const double d = std::min(distance(sp, a.base, b.base), kPi);
    const double x = a.height, y = b.height;
    const double s = std::sin(0.5 * d);
    return std::sqrt(std::max(0.0, (x - y) * (x - y) + 4 * x * y * s * s));
}

}  // namespace catflow
