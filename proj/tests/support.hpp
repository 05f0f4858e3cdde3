#pragma once

// Fixtures shared by the unit and acceptance tests.

#include "dstyle/mesh.hpp"
#include "dstyle/rng.hpp"

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <numbers>
#include <vector>

namespace dstyle::test {

/// n random triangles with vertices in [-1, 1]^3; near-degenerate ones are redrawn.
inline Mesh random_mesh(Pcg32& rng, int n) {
    std::vector<Vec3> v;
    std::vector<Face> f;
    auto point = [&] { return Vec3(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)); };
    while (static_cast<int>(f.size()) < n) {
        const Vec3 a = point();
        // Small triangles keep the scene from being a solid wall of overlaps.
        const Vec3 b = a + 0.4 * (point() - a).normalized() * rng.uniform(0.2, 1.0);
        const Vec3 c = a + 0.4 * (point() - a).normalized() * rng.uniform(0.2, 1.0);
        const double area = 0.5 * (b - a).cross(c - a).norm();
        const double longest = std::max({(b - a).norm(), (c - b).norm(), (a - c).norm()});
        if (area <= 1e-3 * longest * longest) {
            continue;
        }
        const auto base = static_cast<std::uint32_t>(v.size());
        v.insert(v.end(), {a, b, c});
        f.push_back({base, base + 1, base + 2});
    }
    return make_mesh(std::move(v), std::move(f));
}

/// Rays from a sphere of radius 2 aimed into the unit box.
inline Ray random_ray(Pcg32& rng) {
    Vec3 o(rng.normal(), rng.normal(), rng.normal());
    o = 2.0 * o.normalized();
    const Vec3 aim(rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7), rng.uniform(-0.7, 0.7));
    return {o, (aim - o).normalized()};
}

/// Closed UV sphere with outward winding.
inline Mesh uv_sphere(double radius, int stacks, int slices) {
    std::vector<Vec3> v;
    std::vector<Face> f;
    v.emplace_back(0, radius, 0);
    for (int i = 1; i < stacks; ++i) {
        const double phi = std::numbers::pi * i / stacks;
        for (int j = 0; j < slices; ++j) {
            const double th = 2 * std::numbers::pi * j / slices;
            v.emplace_back(radius * std::sin(phi) * std::sin(th), radius * std::cos(phi),
                           radius * std::sin(phi) * std::cos(th));
        }
    }
    v.emplace_back(0, -radius, 0);
    const auto ring = [&](int i, int j) { return static_cast<std::uint32_t>(1 + (i - 1) * slices + (j % slices)); };
    const auto bottom = static_cast<std::uint32_t>(v.size() - 1);
    for (int j = 0; j < slices; ++j) {
        f.push_back({0, ring(1, j), ring(1, j + 1)});
        for (int i = 1; i + 1 < stacks; ++i) {
            f.push_back({ring(i, j), ring(i + 1, j), ring(i + 1, j + 1)});
            f.push_back({ring(i, j), ring(i + 1, j + 1), ring(i, j + 1)});
        }
        f.push_back({ring(stacks - 1, j), bottom, ring(stacks - 1, j + 1)});
    }
    return make_mesh(std::move(v), std::move(f));
}

/// Axis-aligned square of side `size` in the plane z = z0, facing +z.
inline Mesh square(double size, double z0 = 0.0) {
    const double h = 0.5 * size;
    return make_mesh({{-h, -h, z0}, {h, -h, z0}, {h, h, z0}, {-h, h, z0}}, {{0, 1, 2}, {0, 2, 3}});
}

/// Upper-tail p-value of Pearson's chi-squared statistic against equal expected counts.
inline double chi_squared_p_value(const std::vector<long>& counts) {
    double total = 0.0;
    for (long c : counts) total += static_cast<double>(c);
    const double expected = total / static_cast<double>(counts.size());
    double stat = 0.0;
    for (long c : counts) stat += (c - expected) * (c - expected) / expected;
    const boost::math::chi_squared dist(static_cast<double>(counts.size() - 1));
    return boost::math::cdf(boost::math::complement(dist, stat));
}

} // namespace dstyle::test
