#include "dstyle/bvh.hpp"
#include "dstyle/errors.hpp"
#include "dstyle/mesh.hpp"
#include "support.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dstyle;

namespace {

Mesh cube(double lo, double hi) {
    std::vector<Vec3> v;
    for (int i = 0; i < 8; ++i) {
        v.emplace_back(i & 1 ? hi : lo, i & 2 ? hi : lo, i & 4 ? hi : lo);
    }
    std::vector<Face> f{{0, 2, 1}, {1, 2, 3}, {4, 5, 6}, {5, 7, 6}, {0, 1, 4}, {1, 5, 4},
                        {2, 6, 3}, {3, 6, 7}, {0, 4, 2}, {2, 4, 6}, {1, 3, 5}, {3, 7, 5}};
    return make_mesh(std::move(v), std::move(f));
}

void check_same(const std::optional<Hit>& a, const std::optional<Hit>& b) {
    REQUIRE(a.has_value() == b.has_value());
    if (a) {
        CHECK(a->face_index == b->face_index);
        CHECK(std::abs(a->ray_t - b->ray_t) <= 1e-9);
    }
}

} // namespace

TEST_CASE("parse_obj reads a single triangle") {
    const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    CHECK(m.vertex_count() == 3);
    CHECK(m.face_count() == 1);
    CHECK(m.face_normals[0].isApprox(Vec3(0, 0, 1)));
}

TEST_CASE("quad faces are fan triangulated along the shared diagonal") {
    const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n");
    REQUIRE(m.face_count() == 2);
    CHECK(m.faces[0] == Face{0, 1, 2});
    CHECK(m.faces[1] == Face{0, 2, 3});
}

TEST_CASE("obj records with slashes, negative indices and comments") {
    const Mesh m = parse_obj("# comment\nv 0 0 0\nv 1 0 0\nv 0 1 0\nvn 0 0 1\nvt 0 0\nf -3/1/1 -2/1/1 -1/1/1\n");
    CHECK(m.faces[0] == Face{0, 1, 2});
}

TEST_CASE("out of range face index names the line") {
    try {
        parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 5\n");
        FAIL("expected an error");
    } catch (const FormatError& e) {
        CHECK(std::string(e.what()).find("line 4") != std::string::npos);
    }
}

TEST_CASE("empty and degenerate meshes are rejected") {
    CHECK_THROWS_AS(parse_obj("# nothing\n"), FormatError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 0 0\nv 2 0 0\nf 1 2 3\n"), FormatError);
    CHECK_THROWS_AS(parse_obj("v 0 0 0\nv 1 zero 0\n"), FormatError);
}

TEST_CASE("load_obj and save_obj round trip") {
    const auto path = std::filesystem::temp_directory_path() / "dstyle_test_roundtrip.obj";
    const Mesh m = cube(-1, 1);
    save_obj(m, path);
    const Mesh back = load_obj(path);
    REQUIRE(back.face_count() == m.face_count());
    for (std::size_t i = 0; i < m.vertex_count(); ++i) {
        CHECK(back.vertices[i] == m.vertices[i]);
    }
    std::filesystem::remove(path);
    CHECK_THROWS_AS(load_obj(path), ConfigError);
}

TEST_CASE("normalize_mesh maps a cube over [2,4]^3 to [-0.5,0.5]^3") {
    const Mesh n = normalize_mesh(cube(2, 4));
    const Aabb b = bounds(n);
    CHECK((b.lo - Vec3::Constant(-0.5)).norm() < 1e-12);
    CHECK((b.hi - Vec3::Constant(0.5)).norm() < 1e-12);
}

TEST_CASE("normalize_mesh scales by the longest axis and is idempotent") {
    std::vector<Vec3> v{{-1, -0.5, -0.5}, {1, -0.5, -0.5}, {1, 0.5, -0.5}, {-1, 0.5, 0.5}};
    const Mesh box = make_mesh(v, {{0, 1, 2}, {0, 2, 3}});
    const Mesh n = normalize_mesh(box);
    const Vec3 ext = bounds(n).extent();
    CHECK(ext.x() == doctest::Approx(1.0));
    CHECK(ext.y() == doctest::Approx(0.5));
    CHECK(ext.z() == doctest::Approx(0.5));
    const Mesh nn = normalize_mesh(n);
    for (std::size_t i = 0; i < n.vertex_count(); ++i) {
        CHECK((nn.vertices[i] - n.vertices[i]).norm() < 1e-7);
    }
    for (std::size_t i = 0; i < n.face_count(); ++i) {
        CHECK(n.face_normals[i].dot(box.face_normals[i]) == doctest::Approx(1.0));
    }
}

TEST_CASE("face normals are unit length") {
    Pcg32 rng(3);
    const Mesh m = test::random_mesh(rng, 100);
    for (const Vec3& n : m.face_normals) {
        CHECK(std::abs(n.norm() - 1.0) < 1e-6);
    }
}

TEST_CASE("bvh over one triangle is a single leaf") {
    const Mesh m = parse_obj("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    const Bvh bvh = build_bvh(m);
    CHECK(bvh.nodes.size() == 1);
    CHECK(bvh.nodes[0].is_leaf());
}

TEST_CASE("bvh over 8 separated triangles has depth at most 4") {
    std::vector<Vec3> v;
    std::vector<Face> f;
    for (int i = 0; i < 8; ++i) {
        const double x = 3.0 * i;
        const auto b = static_cast<std::uint32_t>(v.size());
        v.insert(v.end(), {{x, 0, 0}, {x + 1, 0, 0}, {x, 1, 0}});
        f.push_back({b, b + 1, b + 2});
    }
    const Bvh bvh = build_bvh(make_mesh(v, f));
    CHECK(bvh.depth() <= 4);
}

TEST_CASE("bvh structure: every triangle in exactly one leaf, boxes nest") {
    Pcg32 rng(11);
    const Mesh m = test::random_mesh(rng, 300);
    const Bvh bvh = build_bvh(m);
    std::vector<int> seen(m.face_count(), 0);
    for (std::size_t i = 0; i < bvh.nodes.size(); ++i) {
        const BvhNode& node = bvh.nodes[i];
        if (node.is_leaf()) {
            CHECK(node.count <= Bvh::kMaxLeafSize);
            for (std::uint32_t k = node.first; k < node.first + node.count; ++k) {
                const std::uint32_t f = bvh.order[k];
                ++seen[f];
                for (std::uint32_t vi : m.faces[f]) {
                    const Vec3& p = m.vertices[vi];
                    CHECK((p.array() >= node.box.lo.array()).all());
                    CHECK((p.array() <= node.box.hi.array()).all());
                }
            }
        } else {
            for (const BvhNode* child : {&bvh.nodes[i + 1], &bvh.nodes[node.first]}) {
                CHECK((child->box.lo.array() >= node.box.lo.array()).all());
                CHECK((child->box.hi.array() <= node.box.hi.array()).all());
            }
        }
    }
    for (int s : seen) {
        CHECK(s == 1);
    }
}

TEST_CASE("axis-aligned ray hits the triangle at the origin") {
    const Mesh m = make_mesh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}}, {{0, 1, 2}});
    const Bvh bvh = build_bvh(m);
    const auto hit = intersect(bvh, m, Ray{{0, 0, 1}, {0, 0, -1}});
    REQUIRE(hit);
    CHECK(hit->point.norm() < 1e-12);
    CHECK(hit->ray_t == doctest::Approx(1.0));
    CHECK(hit->face_index == 0);
    CHECK(std::abs(hit->barycentrics.sum() - 1.0) < 1e-12);
    CHECK(!intersect(bvh, m, Ray{{0, 0, 1}, {0, 0, 1}}));
    check_same(hit, brute_force_intersect(m, Ray{{0, 0, 1}, {0, 0, -1}}));
}

TEST_CASE("coplanar stacked triangles tie to the lower face index") {
    const Mesh m = make_mesh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}, {-1, -1, 0}, {1, -1, 0}, {0, 1, 0}},
                             {{3, 4, 5}, {0, 1, 2}});
    const Ray r{{0.1, 0.0, 2.0}, {0, 0, -1}};
    const auto brute = brute_force_intersect(m, r);
    REQUIRE(brute);
    CHECK(brute->face_index == 0);
    check_same(intersect(build_bvh(m), m, r), brute);
}

TEST_CASE("hits closer than the ray epsilon are ignored") {
    const Mesh m = make_mesh({{-1, -1, 0}, {1, -1, 0}, {0, 1, 0}}, {{0, 1, 2}});
    CHECK(!brute_force_intersect(m, Ray{{0, 0, 1e-8}, {0, 0, -1}}));
}

TEST_CASE("bvh equals brute force on 200 triangles and 10^4 rays") {
    Pcg32 rng(200);
    const Mesh m = test::random_mesh(rng, 200);
    const Bvh bvh = build_bvh(m);
    int hits = 0;
    for (int i = 0; i < 10000; ++i) {
        const Ray r = test::random_ray(rng);
        const auto a = intersect(bvh, m, r);
        const auto b = brute_force_intersect(m, r);
        check_same(a, b);
        if (a) {
            ++hits;
            CHECK((a->point - (r.origin + a->ray_t * r.direction)).norm() < 1e-5);
            CHECK((a->barycentrics.array() >= -1e-9).all());
            CHECK(std::abs(a->barycentrics.sum() - 1.0) < 1e-6);
        }
    }
    CHECK(hits > 1000);
}

TEST_CASE("bvh equals brute force on 500 triangles") {
    Pcg32 rng(500);
    const Mesh m = test::random_mesh(rng, 500);
    const Bvh bvh = build_bvh(m);
    for (int i = 0; i < 10000; ++i) {
        const Ray r = test::random_ray(rng);
        check_same(intersect(bvh, m, r), brute_force_intersect(m, r));
    }
}
