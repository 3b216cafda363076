#pragma once

// Triangulated domains (flat torus, round sphere, flat square patch), regions,
// geodesic balls, dyadic ball covers and their disjoint-class partition.

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "catflow/errors.hpp"
#include "catflow/target_space.hpp"

namespace catflow {

enum class MeshKind { FlatTorus, RoundSphere, FlatSquare };

inline const char* mesh_kind_name(MeshKind k) {
    switch (k) {
        case MeshKind::FlatTorus: return "FlatTorus";
        case MeshKind::RoundSphere: return "RoundSphere";
        case MeshKind::FlatSquare: return "FlatSquare";
    }
    return "?";
}

struct SurfaceMesh {
    MeshKind kind = MeshKind::FlatTorus;
    int level = 0;
    Vec2 periods{1.0, 1.0};
    int side = 0;  // vertices per grid row for the flat kinds

    std::vector<Vec3> vertices;  // chart position (flat kinds) or unit vector (sphere)
    std::vector<std::array<int, 3>> triangles;
    std::vector<std::array<Vec2, 3>> corners;  // per-triangle planar coordinates, counterclockwise
    std::vector<std::array<int, 2>> edges;
    std::vector<double> edge_weight;  // cotangent weights
    std::vector<double> edge_length;
    std::vector<double> triangle_area;
    std::vector<double> vertex_area;
    std::vector<int> adj_offset, adj_vertex, adj_edge;
    std::vector<char> on_mesh_boundary;
    double max_edge = 0.0;
    double mean_edge = 0.0;

    int num_vertices() const { return static_cast<int>(vertices.size()); }
    int num_triangles() const { return static_cast<int>(triangles.size()); }
    bool closed() const { return kind != MeshKind::FlatSquare; }

    double distance(int a, int b) const { return point_distance(vertices[a], vertices[b]); }

    double point_distance(const Vec3& a, const Vec3& b) const {
        switch (kind) {
            case MeshKind::RoundSphere:
                return detail::angle_between(a, b);
            case MeshKind::FlatTorus: {
                double dx = a.x() - b.x(), dy = a.y() - b.y();
                dx -= periods.x() * std::round(dx / periods.x());
                dy -= periods.y() * std::round(dy / periods.y());
                return std::hypot(dx, dy);
            }
            case MeshKind::FlatSquare:
                return std::hypot(a.x() - b.x(), a.y() - b.y());
        }
        return 0.0;
    }

    // Displacement b - a in the chart, using the nearest periodic image on the torus.
    Vec2 chart_offset(int a, int b) const {
        Vec2 d(vertices[b].x() - vertices[a].x(), vertices[b].y() - vertices[a].y());
        if (kind == MeshKind::FlatTorus) {
            d.x() -= periods.x() * std::round(d.x() / periods.x());
            d.y() -= periods.y() * std::round(d.y() / periods.y());
        }
        return d;
    }

    double injectivity_radius() const {
        switch (kind) {
            case MeshKind::FlatTorus: return 0.5 * std::min(periods.x(), periods.y());
            case MeshKind::RoundSphere: return kPi;
            case MeshKind::FlatSquare: return std::numeric_limits<double>::infinity();
        }
        return 0.0;
    }

    double diameter() const {
        switch (kind) {
            case MeshKind::FlatTorus: return 0.5 * periods.norm();
            case MeshKind::RoundSphere: return kPi;
            case MeshKind::FlatSquare: return 2 * std::sqrt(2.0);
        }
        return 0.0;
    }

    double analytic_area() const {
        switch (kind) {
            case MeshKind::FlatTorus: return periods.x() * periods.y();
            case MeshKind::RoundSphere: return 4 * kPi;
            case MeshKind::FlatSquare: return 4.0;
        }
        return 0.0;
    }

    double total_area() const {
        return std::accumulate(triangle_area.begin(), triangle_area.end(), 0.0);
    }

    std::string name() const {
        switch (kind) {
            case MeshKind::FlatTorus: return "torus:" + std::to_string(level);
            case MeshKind::RoundSphere: return "sphere:" + std::to_string(level);
            case MeshKind::FlatSquare: return "square:" + std::to_string(level);
        }
        return "";
    }
};

namespace detail {

inline double cot_at(const Vec2& c, const Vec2& a, const Vec2& b) {
    const Vec2 u = a - c, v = b - c;
    return u.dot(v) / std::abs(u.x() * v.y() - u.y() * v.x());
}

inline void finish_mesh(SurfaceMesh& m) {
    const int nv = m.num_vertices();
    std::map<std::pair<int, int>, int> edge_id;
    m.triangle_area.assign(m.triangles.size(), 0.0);
    m.vertex_area.assign(nv, 0.0);
    for (std::size_t t = 0; t < m.triangles.size(); ++t) {
        const auto& tri = m.triangles[t];
        const auto& c = m.corners[t];
        const Vec2 e1 = c[1] - c[0], e2 = c[2] - c[0];
        const double area = 0.5 * (e1.x() * e2.y() - e1.y() * e2.x());
        if (!(area > 0.0)) throw PreconditionError("degenerate or inverted triangle in mesh build");
        m.triangle_area[t] = area;
        for (int i = 0; i < 3; ++i) {
            m.vertex_area[tri[i]] += area / 3.0;
            const int a = tri[(i + 1) % 3], b = tri[(i + 2) % 3];
            const auto key = std::minmax(a, b);
            auto it = edge_id.find(key);
            int e;
            if (it == edge_id.end()) {
                e = static_cast<int>(m.edges.size());
                edge_id.emplace(key, e);
                m.edges.push_back({key.first, key.second});
                m.edge_weight.push_back(0.0);
                m.edge_length.push_back((c[(i + 2) % 3] - c[(i + 1) % 3]).norm());
            } else {
                e = it->second;
            }
            m.edge_weight[e] += 0.5 * cot_at(c[i], c[(i + 1) % 3], c[(i + 2) % 3]);
        }
    }
    std::vector<std::vector<std::pair<int, int>>> nbrs(nv);
    for (std::size_t e = 0; e < m.edges.size(); ++e) {
        nbrs[m.edges[e][0]].push_back({m.edges[e][1], static_cast<int>(e)});
        nbrs[m.edges[e][1]].push_back({m.edges[e][0], static_cast<int>(e)});
    }
    m.adj_offset.assign(nv + 1, 0);
    for (int v = 0; v < nv; ++v) {
        std::sort(nbrs[v].begin(), nbrs[v].end());
        m.adj_offset[v + 1] = m.adj_offset[v] + static_cast<int>(nbrs[v].size());
        for (auto [w, e] : nbrs[v]) {
            m.adj_vertex.push_back(w);
            m.adj_edge.push_back(e);
        }
    }
    m.max_edge = *std::max_element(m.edge_length.begin(), m.edge_length.end());
    m.mean_edge = std::accumulate(m.edge_length.begin(), m.edge_length.end(), 0.0) / m.edge_length.size();
    if (m.on_mesh_boundary.empty()) m.on_mesh_boundary.assign(nv, 0);
}

inline void build_grid(SurfaceMesh& m, int n, bool periodic, double x0, double extent) {
    const int side = periodic ? n : n + 1;
    m.side = side;
    const double hx = (periodic ? m.periods.x() : extent) / n;
    const double hy = (periodic ? m.periods.y() : extent) / n;
    m.vertices.resize(static_cast<std::size_t>(side) * side);
    m.on_mesh_boundary.assign(m.vertices.size(), 0);
    for (int j = 0; j < side; ++j)
        for (int i = 0; i < side; ++i) {
            m.vertices[i + side * j] = Vec3(x0 + i * hx, x0 + j * hy, 0.0);
            if (!periodic && (i == 0 || j == 0 || i == side - 1 || j == side - 1))
                m.on_mesh_boundary[i + side * j] = 1;
        }
    auto id = [&](int i, int j) { return (i % side) + side * (j % side); };
    const int cells = periodic ? side : side - 1;
    for (int j = 0; j < cells; ++j)
        for (int i = 0; i < cells; ++i) {
            const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1), d = id(i, j + 1);
            const Vec2 pa(0, 0), pb(hx, 0), pc(hx, hy), pd(0, hy);
            m.triangles.push_back({a, b, c});
            m.corners.push_back({pa, pb, pc});
            m.triangles.push_back({a, c, d});
            m.corners.push_back({pa, pc, pd});
        }
}

inline void build_icosphere(SurfaceMesh& m, int level) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3> v = {{-1, p, 0}, {1, p, 0}, {-1, -p, 0}, {1, -p, 0}, {0, -1, p}, {0, 1, p},
                           {0, -1, -p}, {0, 1, -p}, {p, 0, -1}, {p, 0, 1}, {-p, 0, -1}, {-p, 0, 1}};
    for (auto& x : v) x.normalize();
    std::vector<std::array<int, 3>> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            v.push_back((v[a] + v[b]).normalized());
            const int id = static_cast<int>(v.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> g;
        g.reserve(f.size() * 4);
        for (const auto& t : f) {
            const int a = midpoint(t[0], t[1]), b = midpoint(t[1], t[2]), c = midpoint(t[2], t[0]);
            g.push_back({t[0], a, c});
            g.push_back({t[1], b, a});
            g.push_back({t[2], c, b});
            g.push_back({a, b, c});
        }
        f = std::move(g);
    }
    m.vertices = v;
    for (auto t : f) {
        Vec3 A = v[t[0]], B = v[t[1]], C = v[t[2]];
        if ((B - A).cross(C - A).dot(A + B + C) < 0) {
            std::swap(t[1], t[2]);
            std::swap(B, C);
        }
        const Vec3 e1 = (B - A).normalized();
        const Vec3 n = (B - A).cross(C - A).normalized();
        const Vec3 e2 = n.cross(e1);
        m.triangles.push_back(t);
        m.corners.push_back({Vec2(0, 0), Vec2((B - A).dot(e1), 0.0), Vec2((C - A).dot(e1), (C - A).dot(e2))});
    }
}

}  // namespace detail

inline constexpr int kMaxLevel = 8;

// Torus: n x n periodic grid with diagonals, n = 2^(level+3), periods (1, 1).
// Square: (n+1) x (n+1) grid on [-1, 1]^2. Sphere: icosahedron refined `level` times.
inline SurfaceMesh build_mesh(MeshKind kind, int level, Vec2 periods = Vec2(1.0, 1.0)) {
    if (level < 0 || level > kMaxLevel) throw LevelRangeError("mesh level must lie in [0, 8]");
    SurfaceMesh m;
    m.kind = kind;
    m.level = level;
    m.periods = periods;
    const int n = 1 << (level + 3);
    switch (kind) {
        case MeshKind::FlatTorus: detail::build_grid(m, n, true, 0.0, 1.0); break;
        case MeshKind::FlatSquare: detail::build_grid(m, n, false, -1.0, 2.0); break;
        case MeshKind::RoundSphere: detail::build_icosphere(m, level); break;
    }
    detail::finish_mesh(m);
    for (double w : m.edge_weight)
        if (w < -1e-12) throw PreconditionError("mesh has a negative cotangent weight");
    return m;
}

// A vertex subset of the mesh split into interior and boundary vertices.
struct Region {
    std::vector<int> vertices;
    std::vector<int> interior;
    std::vector<int> boundary;
    std::vector<char> mask;
    std::vector<int> edges;

    bool contains(int v) const { return mask[v] != 0; }
    int size() const { return static_cast<int>(vertices.size()); }
};

inline Region make_region(const SurfaceMesh& m, std::vector<int> verts) {
    Region r;
    std::sort(verts.begin(), verts.end());
    verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
    r.vertices = std::move(verts);
    r.mask.assign(m.num_vertices(), 0);
    for (int v : r.vertices) r.mask[v] = 1;
    for (int v : r.vertices) {
        bool bdry = m.on_mesh_boundary[v] != 0;
        for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1] && !bdry; ++k)
            if (!r.mask[m.adj_vertex[k]]) bdry = true;
        (bdry ? r.boundary : r.interior).push_back(v);
    }
    for (std::size_t e = 0; e < m.edges.size(); ++e)
        if (r.mask[m.edges[e][0]] && r.mask[m.edges[e][1]]) r.edges.push_back(static_cast<int>(e));
    return r;
}

inline Region whole_mesh(const SurfaceMesh& m) {
    std::vector<int> all(m.num_vertices());
    std::iota(all.begin(), all.end(), 0);
    return make_region(m, std::move(all));
}

namespace detail {

// Breadth-first collection of the vertices within distance r of `center`.
inline std::vector<int> vertices_within(const SurfaceMesh& m, const Vec3& center, int seed, double r,
                                        std::vector<int>& stamp, int tag) {
    std::vector<int> out{seed}, queue{seed};
    stamp[seed] = tag;
    for (std::size_t q = 0; q < queue.size(); ++q) {
        const int v = queue[q];
        for (int k = m.adj_offset[v]; k < m.adj_offset[v + 1]; ++k) {
            const int w = m.adj_vertex[k];
            if (stamp[w] == tag) continue;
            stamp[w] = tag;
            if (m.point_distance(center, m.vertices[w]) <= r + 1e-12) {
                out.push_back(w);
                queue.push_back(w);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace detail

// Vertices within domain distance r of the center vertex. Distances are the
// exact closed-form metric of the domain restricted to the mesh vertices.
inline std::vector<int> geodesic_ball(const SurfaceMesh& m, int center, double r) {
    if (center < 0 || center >= m.num_vertices()) throw PreconditionError("ball center is not a vertex");
    if (!(r >= 0.0)) throw RadiusError("negative ball radius");
    if (!(r < m.injectivity_radius())) throw RadiusError("ball radius exceeds the injectivity bound");
    std::vector<int> stamp(m.num_vertices(), -1);
    return detail::vertices_within(m, m.vertices[center], center, r, stamp, 0);
}

struct BallCover {
    int k = 0;
    double radius = 1.0;
    std::vector<int> centers;
    std::vector<std::vector<int>> members;
    std::vector<std::vector<int>> doubled;

    int size() const { return static_cast<int>(centers.size()); }
};

struct PartitionedCover {
    BallCover cover;
    std::vector<std::vector<int>> classes;
    int lambda = 0;
    int max_degree = 0;
};

// Covering by balls of radius 2^-k whose centers are pairwise more than 2^-k
// apart: every uncovered vertex in index order becomes a new center. The scale
// must be at least 3 mean edge lengths.
inline BallCover build_cover(const SurfaceMesh& m, int k) {
    const double r = std::ldexp(1.0, -k);
    if (r < 3 * m.mean_edge) throw ResolutionError("cover scale 2^-" + std::to_string(k) + " is below 3 edge lengths");
    BallCover c;
    c.k = k;
    c.radius = r;
    std::vector<char> covered(m.num_vertices(), 0);
    std::vector<int> stamp(m.num_vertices(), -1);
    int tag = 0;
    for (int v = 0; v < m.num_vertices(); ++v) {
        if (covered[v]) continue;
        c.centers.push_back(v);
        auto ball = detail::vertices_within(m, m.vertices[v], v, r, stamp, tag++);
        for (int w : ball) covered[w] = 1;
        c.members.push_back(std::move(ball));
        c.doubled.push_back(detail::vertices_within(m, m.vertices[v], v, 2 * r, stamp, tag++));
    }
    return c;
}

// Greedy coloring, in reverse degeneracy order, of the graph whose edges join
// balls with intersecting doubled vertex sets.
inline PartitionedCover partition_cover(const SurfaceMesh& m, const BallCover& cover) {
    const int nb = cover.size();
    std::vector<std::vector<int>> holders(m.num_vertices());
    for (int i = 0; i < nb; ++i)
        for (int v : cover.doubled[i]) holders[v].push_back(i);
    std::vector<std::vector<int>> adj(nb);
    std::vector<int> seen(nb, -1);
    for (int i = 0; i < nb; ++i) {
        seen[i] = i;
        for (int v : cover.doubled[i])
            for (int j : holders[v])
                if (seen[j] != i) {
                    seen[j] = i;
                    adj[i].push_back(j);
                }
        std::sort(adj[i].begin(), adj[i].end());
    }
    std::vector<int> degree(nb);
    int max_degree = 0;
    for (int i = 0; i < nb; ++i) {
        degree[i] = static_cast<int>(adj[i].size());
        max_degree = std::max(max_degree, degree[i]);
    }
    std::vector<int> order;
    std::vector<char> removed(nb, 0);
    for (int step = 0; step < nb; ++step) {
        int best = -1;
        for (int i = 0; i < nb; ++i)
            if (!removed[i] && (best < 0 || degree[i] < degree[best])) best = i;
        removed[best] = 1;
        order.push_back(best);
        for (int j : adj[best])
            if (!removed[j]) --degree[j];
    }
    std::vector<int> color(nb, -1);
    int used = 0;
    std::vector<int> mark(nb + 1, -1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        const int i = *it;
        for (int j : adj[i])
            if (color[j] >= 0) mark[color[j]] = i;
        int c = 0;
        while (mark[c] == i) ++c;
        color[i] = c;
        used = std::max(used, c + 1);
    }
    PartitionedCover pc;
    pc.cover = cover;
    pc.lambda = used;
    pc.max_degree = max_degree;
    pc.classes.assign(used, {});
    for (int i = 0; i < nb; ++i) pc.classes[color[i]].push_back(i);
    return pc;
}

// Greedy net: scanning vertices in index order, each vertex farther than
// `spacing` from all earlier net points joins the net. Optional mask restricts
// the candidates.
inline std::vector<int> vertex_net(const SurfaceMesh& m, double spacing, const std::vector<char>& allowed = {}) {
    std::vector<int> centers;
    std::vector<char> covered(m.num_vertices(), 0);
    std::vector<int> stamp(m.num_vertices(), -1);
    int tag = 0;
    for (int v = 0; v < m.num_vertices(); ++v) {
        if (covered[v] || (!allowed.empty() && !allowed[v])) continue;
        centers.push_back(v);
        for (int w : detail::vertices_within(m, m.vertices[v], v, spacing, stamp, tag++)) covered[w] = 1;
    }
    return centers;
}

// Number of cover balls meeting the domain window of the given radius about `center`.
inline int count_balls_in_window(const SurfaceMesh& m, const BallCover& cover, int center, double window_radius) {
    int count = 0;
    for (int c : cover.centers)
        if (m.distance(c, center) <= window_radius + cover.radius) ++count;
    return count;
}

// Coarsest dyadic scale whose doubled balls stay inside the injectivity radius.
inline int coarsest_disk_scale(const SurfaceMesh& m) {
    int k = 0;
    while (std::ldexp(2.0, -k) >= m.injectivity_radius()) ++k;
    return k;
}

// Finest dyadic scale still resolved by the mesh (radius at least 3 mean edge
// lengths); -1 when not even radius 1 is resolved.
inline int finest_resolved_scale(const SurfaceMesh& m) {
    if (1.0 < 3 * m.mean_edge) return -1;
    int k = 0;
    while (std::ldexp(1.0, -(k + 1)) >= 3 * m.mean_edge) ++k;
    return k;
}

}  // namespace catflow
