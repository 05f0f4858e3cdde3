#pragma once

#include "dstyle/mesh.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace dstyle {

struct Ray {
    Vec3 origin;
    Vec3 direction; // unit length
};

struct Hit {
    Vec3 point;
    std::uint32_t face_index = 0;
    Vec3 face_normal;
    double ray_t = 0.0;
    Vec3 barycentrics; // weights of the face's vertices 0, 1, 2
};

/// Hits closer than this along the ray are ignored.
inline constexpr double kRayEpsilon = 1e-6;

struct BvhNode {
    Aabb box;
    // Leaf: triangles order[first, first + count). Interior: count == 0,
    // left child at (this + 1), right child at `first`.
    std::uint32_t first = 0;
    std::uint32_t count = 0;

    bool is_leaf() const { return count > 0; }
};

struct Bvh {
    std::vector<BvhNode> nodes;
    std::vector<std::uint32_t> order; // permutation of face indices

    static constexpr std::uint32_t kMaxLeafSize = 4;

    std::size_t depth() const;
};

/// Median split over triangle centroids along the widest centroid axis.
Bvh build_bvh(const Mesh& mesh);

/// Closest hit with ray_t > kRayEpsilon; ties at equal ray_t go to the
/// smallest face index. Both intersect paths share the same triangle test,
/// so they agree exactly.
std::optional<Hit> intersect(const Bvh& bvh, const Mesh& mesh, const Ray& ray);
std::optional<Hit> brute_force_intersect(const Mesh& mesh, const Ray& ray);

} // namespace dstyle
