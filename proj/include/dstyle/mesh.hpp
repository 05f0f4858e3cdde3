#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace dstyle {

using Vec3 = Eigen::Vector3d;
using Face = std::array<std::uint32_t, 3>;

/// Fixed triangle mesh. Geometry is never modified by stylization.
struct Mesh {
    std::vector<Vec3> vertices;
    std::vector<Face> faces;
    std::vector<Vec3> face_normals; // unit, from counter-clockwise winding

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t face_count() const { return faces.size(); }
};

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = Vec3::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void extend(const Aabb& b) {
        lo = lo.cwiseMin(b.lo);
        hi = hi.cwiseMax(b.hi);
    }
    Vec3 extent() const { return hi - lo; }
    Vec3 center() const { return 0.5 * (lo + hi); }
};

/// Validates indices, rejects zero-area faces and computes face normals.
/// Throws FormatError on invalid input.
Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces);

/// Wavefront OBJ: `v` and `f` records only; polygons are fan-triangulated,
/// negative (relative) indices are supported, vn/vt/materials are ignored.
Mesh load_obj(const std::filesystem::path& path);
Mesh parse_obj(std::string_view text);

void save_obj(const Mesh& mesh, const std::filesystem::path& path);

/// Centers the bounding box at the origin and scales its longest side to 1.
Mesh normalize_mesh(const Mesh& mesh);

Aabb bounds(const Mesh& mesh);

} // namespace dstyle
