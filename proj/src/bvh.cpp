#include "dstyle/bvh.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

namespace dstyle {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Per-ray precomputation for the watertight test of Woop, Benthin and Wald.
struct RayShear {
    int kx = 0;
    int ky = 1;
    int kz = 2;
    double sx = 0.0;
    double sy = 0.0;
    double sz = 0.0;

    explicit RayShear(const Vec3& d) {
        d.cwiseAbs().maxCoeff(&kz);
        kx = (kz + 1) % 3;
        ky = (kx + 1) % 3;
        if (d[kz] < 0.0) {
            std::swap(kx, ky);
        }
        sx = d[kx] / d[kz];
        sy = d[ky] / d[kz];
        sz = 1.0 / d[kz];
    }
};

struct TriangleHit {
    double t;
    Vec3 bary;
};

std::optional<TriangleHit> intersect_triangle(const Ray& ray, const RayShear& sh, const Vec3& v0, const Vec3& v1,
                                              const Vec3& v2) {
    const Vec3 a = v0 - ray.origin;
    const Vec3 b = v1 - ray.origin;
    const Vec3 c = v2 - ray.origin;

    const double ax = a[sh.kx] - sh.sx * a[sh.kz];
    const double ay = a[sh.ky] - sh.sy * a[sh.kz];
    const double bx = b[sh.kx] - sh.sx * b[sh.kz];
    const double by = b[sh.ky] - sh.sy * b[sh.kz];
    const double cx = c[sh.kx] - sh.sx * c[sh.kz];
    const double cy = c[sh.ky] - sh.sy * c[sh.kz];

    double u = cx * by - cy * bx;
    double v = ax * cy - ay * cx;
    double w = bx * ay - by * ax;

    // Edge cases on an edge: fall back to extended precision.
    if (u == 0.0 || v == 0.0 || w == 0.0) {
        using ld = long double;
        u = static_cast<double>(ld(cx) * ld(by) - ld(cy) * ld(bx));
        v = static_cast<double>(ld(ax) * ld(cy) - ld(ay) * ld(cx));
        w = static_cast<double>(ld(bx) * ld(ay) - ld(by) * ld(ax));
    }

    if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) {
        return std::nullopt;
    }
    const double det = u + v + w;
    if (det == 0.0) {
        return std::nullopt;
    }
    const double az = sh.sz * a[sh.kz];
    const double bz = sh.sz * b[sh.kz];
    const double cz = sh.sz * c[sh.kz];
    const double t = (u * az + v * bz + w * cz) / det;
    if (!(t > kRayEpsilon)) {
        return std::nullopt;
    }
    // u weights v0 (opposite edge v1-v2), v weights v1, w weights v2.
    return TriangleHit{t, Vec3(u / det, v / det, w / det)};
}

// Slab test over [0, t_max]; t_far is inflated so that rounding never culls
// a box containing the true hit.
bool hit_box(const Aabb& box, const Ray& ray, const Vec3& inv_dir, double t_max, double& t_enter) {
    constexpr double kGamma3 = 3.0 * std::numeric_limits<double>::epsilon() * 0.5 /
                               (1.0 - 3.0 * std::numeric_limits<double>::epsilon() * 0.5);
    double t0 = 0.0;
    double t1 = t_max;
    for (int axis = 0; axis < 3; ++axis) {
        if (ray.direction[axis] == 0.0) {
            if (ray.origin[axis] < box.lo[axis] || ray.origin[axis] > box.hi[axis]) {
                return false;
            }
            continue;
        }
        double t_near = (box.lo[axis] - ray.origin[axis]) * inv_dir[axis];
        double t_far = (box.hi[axis] - ray.origin[axis]) * inv_dir[axis];
        if (t_near > t_far) {
            std::swap(t_near, t_far);
        }
        t_far *= 1.0 + 2.0 * kGamma3;
        t0 = std::max(t0, t_near);
        t1 = std::min(t1, t_far);
        if (t0 > t1) {
            return false;
        }
    }
    t_enter = t0;
    return true;
}

Hit make_hit(const Mesh& mesh, const Ray& ray, std::uint32_t face, const TriangleHit& th) {
    Hit hit;
    hit.face_index = face;
    hit.ray_t = th.t;
    hit.point = ray.origin + th.t * ray.direction;
    hit.face_normal = mesh.face_normals[face];
    hit.barycentrics = th.bary;
    return hit;
}

struct Builder {
    const Mesh& mesh;
    std::vector<Vec3> centroids;
    std::vector<Aabb> tri_boxes;
    Bvh bvh;

    explicit Builder(const Mesh& m) : mesh(m) {
        const std::size_t n = m.face_count();
        centroids.reserve(n);
        tri_boxes.reserve(n);
        for (const auto& f : m.faces) {
            Aabb b;
            b.extend(m.vertices[f[0]]);
            b.extend(m.vertices[f[1]]);
            b.extend(m.vertices[f[2]]);
            tri_boxes.push_back(b);
            centroids.push_back((m.vertices[f[0]] + m.vertices[f[1]] + m.vertices[f[2]]) / 3.0);
        }
        bvh.order.resize(n);
        std::iota(bvh.order.begin(), bvh.order.end(), 0U);
        bvh.nodes.reserve(2 * n);
    }

    std::uint32_t build(std::uint32_t begin, std::uint32_t end) {
        const auto index = static_cast<std::uint32_t>(bvh.nodes.size());
        bvh.nodes.emplace_back();
        Aabb box;
        Aabb centroid_box;
        for (std::uint32_t i = begin; i < end; ++i) {
            box.extend(tri_boxes[bvh.order[i]]);
            centroid_box.extend(centroids[bvh.order[i]]);
        }
        bvh.nodes[index].box = box;

        const std::uint32_t count = end - begin;
        if (count <= Bvh::kMaxLeafSize) {
            bvh.nodes[index].first = begin;
            bvh.nodes[index].count = count;
            return index;
        }

        int axis = 0;
        centroid_box.extent().maxCoeff(&axis);
        const std::uint32_t mid = begin + count / 2;
        std::nth_element(bvh.order.begin() + begin, bvh.order.begin() + mid, bvh.order.begin() + end,
                         [&](std::uint32_t a, std::uint32_t b) {
                             const double ca = centroids[a][axis];
                             const double cb = centroids[b][axis];
                             return ca < cb || (ca == cb && a < b);
                         });
        build(begin, mid);
        const std::uint32_t right = build(mid, end);
        bvh.nodes[index].first = right;
        bvh.nodes[index].count = 0;
        return index;
    }
};

std::size_t node_depth(const Bvh& bvh, std::uint32_t node) {
    const auto& n = bvh.nodes[node];
    if (n.is_leaf()) {
        return 1;
    }
    return 1 + std::max(node_depth(bvh, node + 1), node_depth(bvh, n.first));
}

} // namespace

std::size_t Bvh::depth() const { return nodes.empty() ? 0 : node_depth(*this, 0); }

Bvh build_bvh(const Mesh& mesh) {
    Builder builder(mesh);
    if (mesh.face_count() > 0) {
        builder.build(0, static_cast<std::uint32_t>(mesh.face_count()));
    }
    return std::move(builder.bvh);
}

std::optional<Hit> intersect(const Bvh& bvh, const Mesh& mesh, const Ray& ray) {
    if (bvh.nodes.empty()) {
        return std::nullopt;
    }
    const RayShear shear(ray.direction);
    const Vec3 inv_dir = ray.direction.cwiseInverse();

    double best_t = kInf;
    std::uint32_t best_face = 0;
    std::optional<TriangleHit> best;

    std::array<std::uint32_t, 128> stack{};
    std::size_t top = 0;
    double t_enter = 0.0;
    if (!hit_box(bvh.nodes[0].box, ray, inv_dir, best_t, t_enter)) {
        return std::nullopt;
    }
    stack[top++] = 0;
    while (top > 0) {
        const BvhNode& node = bvh.nodes[stack[--top]];
        // Strict comparison keeps equal-t candidates alive for the tie-break.
        if (!hit_box(node.box, ray, inv_dir, best_t, t_enter)) {
            continue;
        }
        if (node.is_leaf()) {
            for (std::uint32_t i = node.first; i < node.first + node.count; ++i) {
                const std::uint32_t face = bvh.order[i];
                const auto& f = mesh.faces[face];
                auto th = intersect_triangle(ray, shear, mesh.vertices[f[0]], mesh.vertices[f[1]],
                                             mesh.vertices[f[2]]);
                if (th && (th->t < best_t || (th->t == best_t && face < best_face))) {
                    best_t = th->t;
                    best_face = face;
                    best = th;
                }
            }
            continue;
        }
        const std::uint32_t left = static_cast<std::uint32_t>(&node - bvh.nodes.data()) + 1;
        const std::uint32_t right = node.first;
        double t_left = 0.0;
        double t_right = 0.0;
        const bool hl = hit_box(bvh.nodes[left].box, ray, inv_dir, best_t, t_left);
        const bool hr = hit_box(bvh.nodes[right].box, ray, inv_dir, best_t, t_right);
        // Push the farther child first so the nearer one is visited next.
        if (hl && hr) {
            if (t_left <= t_right) {
                stack[top++] = right;
                stack[top++] = left;
            } else {
                stack[top++] = left;
                stack[top++] = right;
            }
        } else if (hl) {
            stack[top++] = left;
        } else if (hr) {
            stack[top++] = right;
        }
    }
    if (!best) {
        return std::nullopt;
    }
    return make_hit(mesh, ray, best_face, *best);
}

std::optional<Hit> brute_force_intersect(const Mesh& mesh, const Ray& ray) {
    const RayShear shear(ray.direction);
    std::optional<TriangleHit> best;
    std::uint32_t best_face = 0;
    for (std::uint32_t face = 0; face < mesh.face_count(); ++face) {
        const auto& f = mesh.faces[face];
        auto th = intersect_triangle(ray, shear, mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
        if (th && (!best || th->t < best->t)) {
            best = th;
            best_face = face;
        }
    }
    if (!best) {
        return std::nullopt;
    }
    return make_hit(mesh, ray, best_face, *best);
}

} // namespace dstyle
