#include "dstyle/errors.hpp"
#include "dstyle/image_io.hpp"
#include "dstyle/render.hpp"
#include "fd.hpp"
#include "support.hpp"

#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

using namespace dstyle;

namespace {

constexpr double kPi = std::numbers::pi;

/// Sets the output bias of one network channel (output weights stay zero
/// after initialization, so the channel becomes a constant).
template <class T>
void set_output_bias(AppearanceFields<T>& f, const MlpLayout& net, int channel, double value) {
    f.theta[net.bias_offset(net.layer_count() - 1) + channel] = static_cast<T>(value);
}

double logit(double p) { return std::log(p / (1.0 - p)); }
double inverse_softplus(double y) { return y + std::log(-std::expm1(-y)); }

/// Lambertian material with albedo `d` lit by constant radiance `c`.
AppearanceFields<double> lambertian(double d, double c) {
    auto f = AppearanceFields<double>::initialized(FieldsLayout{}, 3);
    for (int ch = 0; ch < 3; ++ch) {
        set_output_bias(f, f.layout.svbrdf, ch, logit(d));
        set_output_bias(f, f.layout.svbrdf, 3 + ch, -40.0);
        set_output_bias(f, f.layout.lighting, ch, inverse_softplus(c));
    }
    return f;
}

AppearanceFields<double> jittered(std::uint64_t seed, double sigma) {
    auto f = AppearanceFields<double>::initialized(FieldsLayout{}, seed);
    Pcg32 rng(seed + 17);
    for (Eigen::Index i = 0; i < f.theta.size(); ++i) {
        f.theta[i] += sigma * rng.normal();
    }
    // Dim the lights so the test images stay away from the clamp.
    for (int ch = 0; ch < 3; ++ch) {
        set_output_bias(f, f.layout.lighting, ch, -1.0);
    }
    return f;
}

Hit hit_at(const Vec3& p, const Vec3& n) {
    Hit h;
    h.point = p;
    h.face_normal = n;
    return h;
}

Camera looking_down_minus_z(int size, double fov = 60.0) {
    Camera c;
    c.position = Vec3::Zero();
    c.target = Vec3(0, 0, -1);
    c.fov_y_deg = fov;
    c.width = size;
    c.height = size;
    return c;
}

} // namespace

TEST_CASE("hemisphere quadrature: weights, orientation, constant and cosine integrands") {
    const Vec3 n = Vec3(0.3, -0.5, 0.8).normalized();
    for (int count : {8, 128, 1000}) {
        const auto q = hemisphere_quadrature(n, count);
        REQUIRE(q.size() == static_cast<std::size_t>(count));
        double total = 0.0;
        double cosine = 0.0;
        for (const auto& [w, weight] : q) {
            CHECK(weight == 2.0 * kPi / count);
            CHECK(w.dot(n) >= 0.0);
            CHECK(std::abs(w.norm() - 1.0) < 1e-12);
            total += weight;
            cosine += weight * w.dot(n);
        }
        CHECK(std::abs(total - 2.0 * kPi) < 1e-12);
        CHECK(std::abs(cosine - kPi) / kPi < 0.02);
    }
}

TEST_CASE("hemisphere quadrature: rotating the normal moves the set rigidly") {
    const HemisphereQuadrature local(64);
    for (const Vec3& n : {Vec3(0, 0, 1), Vec3(1, 2, 3).normalized(), Vec3(-0.2, 0.1, -0.97).normalized()}) {
        const auto q = hemisphere_quadrature(n, 64);
        for (int i = 0; i < 64; i += 7) {
            CHECK(q[static_cast<std::size_t>(i)].first.dot(n) == doctest::Approx(local.local(i, 2)).epsilon(1e-12));
            for (int j = 0; j < 64; j += 5) {
                const double world = q[static_cast<std::size_t>(i)].first.dot(q[static_cast<std::size_t>(j)].first);
                const double canon = local.local.row(i).dot(local.local.row(j));
                CHECK(std::abs(world - canon) < 1e-12);
            }
        }
    }
}

TEST_CASE("tangent frame is orthonormal on both sides of the reference switch") {
    const Vec3 r1 = Vec3(1, 2, 3).normalized();
    for (const Vec3& n : {Vec3(0, 0, 1), r1, Vec3(-r1), Vec3(r1 + Vec3(0.05, 0, 0)).normalized(),
                          Vec3(r1 + Vec3(0.2, 0, 0)).normalized()}) {
        const auto f = tangent_frame<double>(n);
        CHECK(std::abs(f.tangent.norm() - 1.0) < 1e-12);
        CHECK(std::abs(f.bitangent.norm() - 1.0) < 1e-12);
        CHECK(std::abs(f.tangent.dot(n)) < 1e-12);
        CHECK(std::abs(f.bitangent.dot(n)) < 1e-12);
        CHECK((f.tangent.cross(f.bitangent) - n).norm() < 1e-12);
    }
}

TEST_CASE("tangent frame backward matches finite differences") {
    Pcg32 rng(4);
    for (int trial = 0; trial < 5; ++trial) {
        const Vec3 n = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const Vec3 ct(rng.normal(), rng.normal(), rng.normal());
        const Vec3 cb(rng.normal(), rng.normal(), rng.normal());
        const auto f = tangent_frame<double>(n);
        Vec3 dn = Vec3::Zero();
        tangent_frame_backward<double>(n, f, ct, cb, dn);
        for (int k = 0; k < 3; ++k) {
            Vec3 up = n;
            Vec3 down = n;
            up[k] += 1e-6;
            down[k] -= 1e-6;
            const auto fu = tangent_frame<double>(up);
            const auto fd = tangent_frame<double>(down);
            const double num =
                (fu.tangent.dot(ct) + fu.bitangent.dot(cb) - fd.tangent.dot(ct) - fd.bitangent.dot(cb)) / 2e-6;
            CHECK(dn[k] == doctest::Approx(num).epsilon(1e-6));
        }
    }
}

TEST_CASE("Lambertian closed form: radiance equals albedo times light") {
    ShadingConfig cfg;
    cfg.quadrature_count = 128;
    cfg.clamp_radiance = false;
    for (const auto& [d, c] : {std::pair{0.6, 0.8}, std::pair{0.25, 1.7}}) {
        const auto f = lambertian(d, c);
        const Vec3 n = Vec3(0.2, 0.3, 0.9).normalized();
        const auto rgb = shade_pixel(f, hit_at(Vec3(0.1, 0.1, 0.0), n), Vec3(-n), cfg);
        for (int ch = 0; ch < 3; ++ch) {
            CHECK(std::abs(rgb[ch] - d * c) / (d * c) < 0.02);
        }
    }
}

TEST_CASE("zero lighting gives zero radiance and doubling light doubles it") {
    ShadingConfig cfg;
    cfg.clamp_radiance = false;
    const Vec3 n(0, 0, 1);
    const Hit h = hit_at(Vec3(0.2, -0.1, 0.0), n);
    const Vec3 v = Vec3(0.3, 0.1, -1).normalized();
    auto dark = jittered(5, 0.02);
    for (int ch = 0; ch < 3; ++ch) set_output_bias(dark, dark.layout.lighting, ch, -1000.0);
    dark.theta.segment(dark.layout.lighting.weight_offset(dark.layout.lighting.layer_count() - 1), 3 * 128).setZero();
    CHECK(shade_pixel(dark, h, v, cfg).isZero());

    auto once = jittered(6, 0.02);
    auto twice = once;
    const MlpLayout& light = once.layout.lighting;
    once.theta.segment(light.weight_offset(light.layer_count() - 1), 3 * 128).setZero();
    twice.theta = once.theta;
    for (int ch = 0; ch < 3; ++ch) {
        set_output_bias(once, light, ch, inverse_softplus(0.3));
        set_output_bias(twice, light, ch, inverse_softplus(0.6));
    }
    const auto a = shade_pixel(once, h, v, cfg);
    const auto b = shade_pixel(twice, h, v, cfg);
    CHECK((b - 2.0 * a).cwiseAbs().maxCoeff() < 1e-12 * a.cwiseAbs().maxCoeff());
}

TEST_CASE("quadrature converges: N=128 within 2% of N=8192") {
    const auto f = jittered(7, 0.05);
    ShadingConfig coarse;
    coarse.quadrature_count = 128;
    coarse.clamp_radiance = false;
    ShadingConfig fine = coarse;
    fine.quadrature_count = 8192;
    Pcg32 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        const Vec3 n = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
        const Vec3 v = (-n + 0.3 * Vec3(rng.normal(), rng.normal(), rng.normal())).normalized();
        const Hit h = hit_at(Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)), n);
        const auto a = shade_pixel(f, h, v, coarse);
        const auto b = shade_pixel(f, h, v, fine);
        CHECK((a - b).norm() / b.norm() < 0.02);
    }
}

TEST_CASE("depth: fronto-parallel plane at distance 2") {
    const Mesh plane = test::square(8.0, -2.0);
    const Camera cam = looking_down_minus_z(32);
    const auto f = AppearanceFields<float>::initialized(FieldsLayout{}, 1);
    const auto r = render_view(plane, build_bvh(plane), f, cam, ShadingConfig{});
    CHECK(r.view.hit_count() == 32 * 32);
    for (float d : r.view.depth) {
        CHECK(std::abs(d - 2.0F) <= 1e-5F);
    }
}

TEST_CASE("depth: sphere center pixel and both depth forms agree on every hit") {
    Mesh sphere = test::uv_sphere(1.0, 64, 128);
    for (auto& v : sphere.vertices) v.z() -= 3.0;
    sphere = make_mesh(sphere.vertices, sphere.faces);
    const Bvh bvh = build_bvh(sphere);
    const Camera cam = looking_down_minus_z(33, 45.0);
    const auto f = AppearanceFields<float>::initialized(FieldsLayout{}, 1);
    const auto r = render_view(sphere, bvh, f, cam, ShadingConfig{});
    CHECK(std::abs(r.view.depth[16 * 33 + 16] - 2.0F) <= 1e-5F);
    int hits = 0;
    for (int y = 0; y < 33; ++y) {
        for (int x = 0; x < 33; ++x) {
            const auto hit = intersect(bvh, sphere, generate_ray(cam, {x, y}));
            const std::size_t idx = static_cast<std::size_t>(y) * 33 + x;
            CHECK(hit.has_value() == (r.view.mask[idx] != 0));
            CHECK((r.view.depth[idx] > 0.0F) == (r.view.mask[idx] != 0));
            if (hit) {
                ++hits;
                const double a = depth_at(*hit, cam, {x, y});
                CHECK(std::abs(a - depth_by_projection(*hit, cam)) <= 1e-6);
                CHECK(std::abs(a - (hit->point - cam.position).norm() * center_ray_cosine(cam, {x, y})) < 1e-12);
            }
        }
    }
    CHECK(hits > 100);
}

TEST_CASE("camera facing away sees only background") {
    const Mesh plane = test::square(1.0, -2.0);
    Camera cam = looking_down_minus_z(16);
    cam.target = Vec3(0, 0, 1);
    ShadingConfig cfg;
    cfg.background = Vec3(0.1, 0.2, 0.3);
    const auto f = AppearanceFields<float>::initialized(FieldsLayout{}, 1);
    const auto r = render_view(plane, build_bvh(plane), f, cam, cfg);
    CHECK(r.view.hit_count() == 0);
    for (std::size_t p = 0; p < r.view.pixel_count(); ++p) {
        CHECK(r.view.depth[p] == 0.0F);
        CHECK(r.view.image[3 * p] == 0.1F);
        CHECK(r.view.image[3 * p + 1] == 0.2F);
        CHECK(r.view.image[3 * p + 2] == 0.3F);
    }
}

TEST_CASE("initialized fields render a gray silhouette") {
    Mesh sphere = test::uv_sphere(0.5, 16, 32);
    const Camera cam = orbit_camera(1.5, 20.0, 30.0, 45.0, 24, 24);
    const auto f = AppearanceFields<float>::initialized(FieldsLayout{}, 2);
    const auto r = render_view(sphere, build_bvh(sphere), f, cam, ShadingConfig{});
    CHECK(r.view.hit_count() > 50);
    for (std::size_t p = 0; p < r.view.pixel_count(); ++p) {
        if (r.view.mask[p]) {
            CHECK(r.view.image[3 * p] == r.view.image[3 * p + 1]);
            CHECK(r.view.image[3 * p] == r.view.image[3 * p + 2]);
        } else {
            CHECK(r.view.image[3 * p] == 1.0F);
        }
    }
}

TEST_CASE("16x16 triangle mask matches an independent per-ray inside test") {
    const Vec3 a(-0.6, -0.4, -2.0);
    const Vec3 b(0.7, -0.5, -2.5);
    const Vec3 c(0.1, 0.6, -1.8);
    const Mesh tri = make_mesh({a, b, c}, {{0, 1, 2}});
    const Camera cam = looking_down_minus_z(16);
    const auto f = AppearanceFields<float>::initialized(FieldsLayout{}, 1);
    const auto r = render_view(tri, build_bvh(tri), f, cam, ShadingConfig{});
    // Oracle: intersect the ray with the triangle's plane and test the
    // point against each edge's inward half-plane.
    const Vec3 n = (b - a).cross(c - a);
    std::size_t inside = 0;
    for (int y = 0; y < 16; ++y) {
        for (int x = 0; x < 16; ++x) {
            const Ray ray = generate_ray(cam, {x, y});
            const double t = n.dot(a - ray.origin) / n.dot(ray.direction);
            const Vec3 p = ray.origin + t * ray.direction;
            const bool in = t > 0 && n.dot((b - a).cross(p - a)) >= 0 && n.dot((c - b).cross(p - b)) >= 0 &&
                            n.dot((a - c).cross(p - c)) >= 0;
            inside += in ? 1 : 0;
            CHECK(in == (r.view.mask[static_cast<std::size_t>(y) * 16 + x] != 0));
        }
    }
    CHECK(r.view.hit_count() == inside);
    CHECK(inside > 20);
}

TEST_CASE("render_vjp: zero and miss-only cotangents give zero gradient") {
    const Mesh plane = test::square(0.6, 0.0);
    const Camera cam = orbit_camera(1.5, 10.0, 10.0, 45.0, 12, 12);
    const auto f = jittered(8, 0.05);
    auto r = render_view(plane, build_bvh(plane), f, cam, ShadingConfig{});
    REQUIRE(r.view.hit_count() > 0);
    REQUIRE(r.view.hit_count() < r.view.pixel_count());
    const auto n = static_cast<Eigen::Index>(r.view.image.size());
    CHECK(render_vjp(r.tape, Vector<double>(Vector<double>::Zero(n))).isZero());
    Vector<double> miss = Vector<double>::Zero(n);
    for (std::size_t p = 0; p < r.view.pixel_count(); ++p) {
        if (!r.view.mask[p]) miss.segment(static_cast<Eigen::Index>(3 * p), 3).setOnes();
    }
    CHECK(render_vjp(r.tape, miss).isZero());
    CHECK_THROWS_AS(render_vjp(r.tape, Vector<double>(Vector<double>::Zero(n + 1))), ShapeError);
}

TEST_CASE("saturated pixels pass no gradient") {
    const Mesh plane = test::square(0.6, 0.0);
    const Camera cam = orbit_camera(1.5, 10.0, 10.0, 45.0, 8, 8);
    auto f = jittered(9, 0.02);
    for (int ch = 0; ch < 3; ++ch) set_output_bias(f, f.layout.lighting, ch, 20.0);
    auto r = render_view(plane, build_bvh(plane), f, cam, ShadingConfig{});
    for (std::size_t p = 0; p < r.view.pixel_count(); ++p) {
        if (r.view.mask[p]) CHECK(r.view.image[3 * p] == 1.0);
    }
    const auto n = static_cast<Eigen::Index>(r.view.image.size());
    CHECK(render_vjp(r.tape, Vector<double>(Vector<double>::Ones(n))).isZero());
}

TEST_CASE("render gradient of sum of squared error matches finite differences on every field") {
    const Mesh sphere = test::uv_sphere(0.45, 12, 24);
    const Bvh bvh = build_bvh(sphere);
    const Camera cam = orbit_camera(1.4, 15.0, 25.0, 45.0, 8, 8);
    ShadingConfig cfg;
    cfg.quadrature_count = 16;
    const auto f64 = jittered(10, 0.05);
    Pcg32 rng(10);
    std::vector<double> target(8 * 8 * 3);
    for (double& t : target) t = rng.uniform(0.0, 1.0);

    auto loss = [&](const Vector<double>& theta) {
        const auto r = render_view(sphere, bvh, AppearanceFields<double>{f64.layout, theta}, cam, cfg);
        double s = 0.0;
        for (std::size_t i = 0; i < target.size(); ++i) s += (r.view.image[i] - target[i]) * (r.view.image[i] - target[i]);
        return s;
    };
    auto grad = [&](const auto& fields) {
        using T = typename std::decay_t<decltype(fields.theta)>::Scalar;
        auto r = render_view(sphere, bvh, fields, cam, cfg);
        Vector<T> cot(static_cast<Eigen::Index>(target.size()));
        for (std::size_t i = 0; i < target.size(); ++i) cot[static_cast<Eigen::Index>(i)] = T(2) * (r.view.image[i] - static_cast<T>(target[i]));
        return render_vjp(r.tape, cot);
    };
    const Vector<double> g64 = grad(f64);
    const auto f32 = f64.cast<float>();
    const Vector<double> g32 = grad(f32).cast<double>();
    const Vector<double> theta32 = f32.theta.cast<double>();
    const auto& lay = f64.layout;
    const std::pair<Eigen::Index, Eigen::Index> segments[] = {
        {lay.normal.offset, lay.normal.offset + lay.normal.param_count()},
        {lay.svbrdf.offset, lay.svbrdf.offset + lay.svbrdf.param_count()},
        {lay.lighting.offset, lay.lighting.offset + lay.lighting.param_count()},
    };
    for (const auto& [begin, end] : segments) {
        CAPTURE(begin);
        Pcg32 pick(static_cast<std::uint64_t>(begin) + 1);
        const auto r64 = test::fd_check(loss, f64.theta, g64, 4, 1e-5, pick, 1e-3, begin, end);
        CHECK(r64.checked == 4);
        CHECK(r64.max_rel_error < 1e-6);
        Pcg32 pick32(static_cast<std::uint64_t>(begin) + 2);
        const auto r32 = test::fd_check(loss, theta32, g32, 4, 1e-4, pick32, 1e-2, begin, end);
        CHECK(r32.checked == 4);
        CHECK(r32.max_rel_error < 1e-3);
    }
}

TEST_CASE("threads and record retention do not change results") {
    const Mesh sphere = test::uv_sphere(0.5, 10, 20);
    const Bvh bvh = build_bvh(sphere);
    const Camera cam = orbit_camera(1.5, 20.0, 40.0, 45.0, 24, 24);
    const auto f = jittered(11, 0.05).cast<float>();
    Vector<float> cot;
    for (int shard : {256, 7}) {
        ShadingConfig base;
        base.quadrature_count = 16;
        base.threads = 1;
        base.shard_size = shard;
        auto ref = render_view(sphere, bvh, f, cam, base);
        if (cot.size() == 0) {
            cot.resize(static_cast<Eigen::Index>(ref.view.image.size()));
            Pcg32 rng(11);
            for (auto& v : cot) v = static_cast<float>(rng.normal());
        }
        const Vector<float> gref = render_vjp(ref.tape, cot);
        for (const auto& [threads, retain] : {std::pair{4U, std::size_t{1} << 30}, std::pair{3U, std::size_t{0}},
                                              std::pair{1U, std::size_t{0}}}) {
            CAPTURE(shard);
            CAPTURE(threads);
            ShadingConfig cfg = base;
            cfg.threads = threads;
            cfg.retain_bytes = retain;
            auto r = render_view(sphere, bvh, f, cam, cfg);
            CHECK(r.view.image == ref.view.image);
            CHECK(render_vjp(r.tape, cot) == gref);
        }
    }
}

TEST_CASE("shard size only affects rounding") {
    const Mesh sphere = test::uv_sphere(0.5, 10, 20);
    const Bvh bvh = build_bvh(sphere);
    const Camera cam = orbit_camera(1.5, 20.0, 40.0, 45.0, 24, 24);
    const auto f = jittered(12, 0.05).cast<float>();
    ShadingConfig cfg;
    cfg.quadrature_count = 16;
    cfg.clamp_radiance = false;
    auto ref = render_view(sphere, bvh, f, cam, cfg);
    Vector<float> cot(static_cast<Eigen::Index>(ref.view.image.size()));
    Pcg32 rng(12);
    for (auto& v : cot) v = static_cast<float>(rng.normal());
    const Vector<float> gref = render_vjp(ref.tape, cot);
    for (int shard : {1, 7, 64}) {
        cfg.shard_size = shard;
        auto r = render_view(sphere, bvh, f, cam, cfg);
        for (std::size_t i = 0; i < r.view.image.size(); ++i) {
            CHECK(std::abs(r.view.image[i] - ref.view.image[i]) <= 1e-5F);
        }
        const Vector<float> g = render_vjp(r.tape, cot);
        CHECK((g - gref).cwiseAbs().maxCoeff() <= 1e-4F * gref.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("random gray background draws from the rng and stays in range") {
    const Mesh plane = test::square(0.2, 0.0);
    const Camera cam = orbit_camera(1.5, 0.0, 0.0, 45.0, 8, 8);
    ShadingConfig cfg;
    cfg.background_mode = BackgroundMode::RandomGray;
    const auto f = AppearanceFields<float>::initialized(FieldsLayout{}, 1);
    Pcg32 a(5);
    Pcg32 b(5);
    const auto ra = render_view(plane, build_bvh(plane), f, cam, cfg, &a);
    const auto rb = render_view(plane, build_bvh(plane), f, cam, cfg, &b);
    CHECK(ra.view.image == rb.view.image);
    CHECK(ra.view.background.x() >= 0.2);
    CHECK(ra.view.background.x() <= 0.8);
    CHECK_THROWS(render_view(plane, build_bvh(plane), f, cam, cfg));
    cfg.quadrature_count = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("png and pfm round trips") {
    const auto dir = std::filesystem::temp_directory_path() / "dstyle_test_image_io";
    std::filesystem::create_directories(dir);
    std::vector<float> rgb(5 * 3 * 3);
    for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<float>(i) / static_cast<float>(rgb.size() - 1);
    const Image8 img = quantize_rgb(rgb, 5, 3);
    CHECK(img.pixels.front() == 0);
    CHECK(img.pixels.back() == 255);
    CHECK(quantize_rgb(std::vector<float>{-1.0F, 0.5F, 2.0F}, 1, 1).pixels == std::vector<std::uint8_t>{0, 128, 255});
    write_png(dir / "a.png", img);
    const Image8 back = read_png(dir / "a.png");
    CHECK(back.width == 5);
    CHECK(back.height == 3);
    CHECK(back.pixels == img.pixels);

    std::vector<float> depth{1.0F, 2.0F, 3.0F, 4.0F, 5.0F, 6.0F};
    write_pfm(dir / "d.pfm", depth, 3, 2);
    int w = 0;
    int h = 0;
    CHECK(read_pfm(dir / "d.pfm", w, h) == depth);
    CHECK(w == 3);
    CHECK(h == 2);
    // Bottom row is stored first.
    std::ifstream raw(dir / "d.pfm", std::ios::binary);
    std::string header;
    std::getline(raw, header);
    CHECK(header == "Pf");
    std::getline(raw, header);
    std::getline(raw, header);
    CHECK(std::stod(header) < 0.0);
    float first = 0.0F;
    raw.read(reinterpret_cast<char*>(&first), sizeof first);
    CHECK(first == 4.0F);

    std::ofstream(dir / "bad.png") << "not a png";
    CHECK_THROWS_AS(read_png(dir / "bad.png"), FormatError);
    const Image8 sheet = contact_sheet({img, img, img}, 2);
    CHECK(sheet.width == 10);
    CHECK(sheet.height == 6);
    std::filesystem::remove_all(dir);
}
