#include "dstyle/errors.hpp"
#include "dstyle/fields.hpp"
#include "dstyle/mesh.hpp"
#include "dstyle/tape.hpp"
#include "fd.hpp"

#include <doctest.h>

#include <cmath>

using namespace dstyle;

namespace {

/// Initialized fields with every parameter jittered so that output layers
/// are non-zero and all paths carry gradient.
AppearanceFields<double> jittered_fields(std::uint64_t seed, double sigma = 0.05) {
    auto f = AppearanceFields<double>::initialized(FieldsLayout{}, seed);
    Pcg32 rng(seed + 1);
    for (Eigen::Index i = 0; i < f.theta.size(); ++i) {
        f.theta[i] += sigma * rng.normal();
    }
    return f;
}

Matrix<double> random_points(Pcg32& rng, int n) {
    Matrix<double> p(n, 3);
    for (int i = 0; i < n; ++i) {
        for (int c = 0; c < 3; ++c) p(i, c) = rng.uniform(-0.5, 0.5);
    }
    return p;
}

Matrix<double> random_units(Pcg32& rng, int n) {
    Matrix<double> p(n, 3);
    for (int i = 0; i < n; ++i) {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        p.row(i) = v.normalized().transpose();
    }
    return p;
}

Matrix<double> random_cotangent(Pcg32& rng, Eigen::Index rows, Eigen::Index cols) {
    Matrix<double> c(rows, cols);
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = rng.normal();
    return c;
}

double dot(const Matrix<double>& a, const Matrix<double>& b) { return (a.array() * b.array()).sum(); }

} // namespace

TEST_CASE("posenc of zero with two frequencies") {
    PositionalEncoding enc{2, true};
    const Matrix<double> out = posenc(Matrix<double>(Matrix<double>::Zero(1, 1)), enc);
    REQUIRE(out.cols() == 5);
    const double expected[] = {0, 0, 1, 0, 1};
    for (int i = 0; i < 5; ++i) CHECK(out(0, i) == expected[i]);
}

TEST_CASE("posenc output dimension") {
    CHECK(PositionalEncoding{6, true}.output_dim(3) == 39);
    CHECK(PositionalEncoding{4, true}.output_dim(3) == 27);
    CHECK(PositionalEncoding{4, false}.output_dim(3) == 24);
}

TEST_CASE("posenc parity: sin terms negate, cos terms match") {
    PositionalEncoding enc{6, true};
    Pcg32 rng(1);
    const Matrix<double> x = random_points(rng, 4);
    const Matrix<double> a = posenc(x, enc);
    const Matrix<double> b = posenc(Matrix<double>(-x), enc);
    CHECK(a.leftCols(3).isApprox(-b.leftCols(3)));
    for (int l = 0; l < 6; ++l) {
        const int col = 3 + 6 * l;
        CHECK((a.middleCols(col, 3) + b.middleCols(col, 3)).cwiseAbs().maxCoeff() < 1e-12);
        CHECK((a.middleCols(col + 3, 3) - b.middleCols(col + 3, 3)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("posenc backward matches finite differences") {
    PositionalEncoding enc{4, true};
    Pcg32 rng(2);
    const Matrix<double> x = random_points(rng, 3);
    const Matrix<double> c = random_cotangent(rng, 3, enc.output_dim(3));
    Matrix<double> dx;
    posenc_backward(x, enc, c, dx);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            Matrix<double> xp = x;
            Matrix<double> xm = x;
            xp(i, j) += 1e-6;
            xm(i, j) -= 1e-6;
            const double fd = (dot(posenc(xp, enc), c) - dot(posenc(xm, enc), c)) / 2e-6;
            CHECK(dx(i, j) == doctest::Approx(fd).epsilon(1e-6));
        }
    }
}

TEST_CASE("mlp parameter count is the sum of (in + 1) * out") {
    const MlpLayout lay({42, 256, 256, 256, 3}, 0);
    CHECK(lay.param_count() == 43 * 256 + 257 * 256 * 2 + 257 * 3);
    const FieldsLayout fl;
    CHECK(fl.normal.widths == std::vector<int>{42, 256, 256, 256, 3});
    CHECK(fl.svbrdf.widths == std::vector<int>{39, 256, 256, 256, 7});
    CHECK(fl.lighting.widths == std::vector<int>{27, 128, 128, 128, 3});
    CHECK(fl.svbrdf.offset == fl.normal.param_count());
    CHECK(fl.lighting.offset == fl.svbrdf.offset + fl.svbrdf.param_count());
    CHECK(fl.param_count == fl.lighting.offset + fl.lighting.param_count());
}

TEST_CASE("tape: gradient of sum of squares is 2 theta") {
    Pcg32 rng(3);
    Vector<double> theta(10);
    for (auto& v : theta) v = rng.normal();
    GradientTape<double> tape(theta.size());
    const auto x = param_slice(tape, theta, 0, theta.size());
    const auto out = sum(tape, square(tape, x));
    CHECK(tape.value(out)[0] == doctest::Approx(theta.squaredNorm()));
    const Vector<double> g = tape.backward(out, Vector<double>::Ones(1));
    CHECK((g - 2.0 * theta).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(tape.backward(out, Vector<double>::Zero(1)).isZero());
    CHECK_THROWS_AS(tape.backward(out, Vector<double>::Ones(2)), ShapeError);
}

TEST_CASE("tape: gradient of a sum is the sum of gradients") {
    Vector<double> theta(4);
    theta << 1, -2, 3, 0.5;
    GradientTape<double> tape(4);
    const auto a = param_slice(tape, theta, 0, 4);
    const auto b = param_slice(tape, theta, 1, 2);
    const auto sa = sum(tape, square(tape, a));
    const auto sb = sum(tape, b);
    const Vector<double> ga = tape.backward(sa, Vector<double>::Ones(1));
    const Vector<double> gb = tape.backward(sb, Vector<double>::Ones(1));
    const Vector<double> expected_b = (Vector<double>(4) << 0, 1, 1, 0).finished();
    CHECK(ga.isApprox(2.0 * theta));
    CHECK(gb.isApprox(expected_b));
}

TEST_CASE("initialized fields: residual normal identity and neutral outputs") {
    const auto f = AppearanceFields<double>::initialized(FieldsLayout{}, 5);
    Pcg32 rng(5);
    const Matrix<double> k = random_points(rng, 64);
    const Matrix<double> n = random_units(rng, 64);
    CHECK((normal_forward(f, k, n) - n).cwiseAbs().maxCoeff() < 1e-12);
    const Material<double> m = svbrdf_forward(f, k);
    CHECK((m.diffuse.array() == 0.5).all());
    CHECK((m.specular.array() == 0.5).all());
    CHECK((m.roughness.array() - 0.515).abs().maxCoeff() < 1e-15);
    const Matrix<double> light = lighting_forward(f, n);
    CHECK((light.array() - std::log(2.0)).abs().maxCoeff() < 1e-15);
}

TEST_CASE("single point wrappers agree with batched evaluation") {
    const auto f = jittered_fields(6);
    const Vec3 k(0.1, -0.2, 0.3);
    const Vec3 n = Vec3(0.2, 0.9, 0.1).normalized();
    const Vec3 nn = eval_normal(f, k, n);
    CHECK(std::abs(nn.norm() - 1.0) < 1e-12);
    const auto m = eval_svbrdf(f, k);
    const auto light = eval_lighting(f, n);
    const Material<double> mb = svbrdf_forward(f, Matrix<double>(k.transpose()));
    CHECK(m.diffuse.isApprox(mb.diffuse.row(0).transpose()));
    CHECK(light.minCoeff() >= 0.0);
}

TEST_CASE("field output ranges hold for random parameters and inputs") {
    Pcg32 rng(7);
    for (int trial = 0; trial < 4; ++trial) {
        const auto f = jittered_fields(100 + trial, 0.5).cast<float>();
        const Matrix<float> k = random_points(rng, 2500).cast<float>();
        const Matrix<float> n = random_units(rng, 2500).cast<float>();
        const Matrix<float> nn = normal_forward(f, k, n);
        CHECK(((nn.rowwise().norm().array() - 1.0F).abs() < 1e-6F).all());
        const Material<float> m = svbrdf_forward(f, k);
        CHECK((m.diffuse.array() >= 0.0F).all());
        CHECK((m.diffuse.array() <= 1.0F).all());
        CHECK((m.specular.array() >= 0.0F).all());
        CHECK((m.specular.array() <= 1.0F).all());
        CHECK((m.roughness.array() >= static_cast<float>(kMinRoughness)).all());
        CHECK((m.roughness.array() <= 1.0F).all());
        CHECK((lighting_forward(f, n).array() >= 0.0F).all());
    }
}

namespace {

struct PathCase {
    const char* name;
    std::function<double(const AppearanceFields<double>&)> loss;
    std::function<Vector<double>(const AppearanceFields<double>&)> grad64;
    std::function<Vector<float>(const AppearanceFields<float>&)> grad32;
};

std::vector<PathCase> field_paths() {
    Pcg32 rng(8);
    const Matrix<double> k = random_points(rng, 6);
    const Matrix<double> n = random_units(rng, 6);
    const Matrix<double> c3 = random_cotangent(rng, 6, 3);
    const Matrix<double> c3b = random_cotangent(rng, 6, 3);
    Vector<double> cr(6);
    for (auto& v : cr) v = rng.normal();

    auto normal_grad = [=](const auto& f) {
        using T = typename std::decay_t<decltype(f.theta)>::Scalar;
        NormalRecord<T> rec;
        normal_forward(f, Matrix<T>(k.cast<T>()), Matrix<T>(n.cast<T>()), &rec);
        Vector<T> g = Vector<T>::Zero(f.theta.size());
        normal_backward(f, rec, Matrix<T>(c3.cast<T>()), g);
        return g;
    };
    auto svbrdf_grad = [=](const auto& f) {
        using T = typename std::decay_t<decltype(f.theta)>::Scalar;
        SvbrdfRecord<T> rec;
        svbrdf_forward(f, Matrix<T>(k.cast<T>()), &rec);
        Vector<T> g = Vector<T>::Zero(f.theta.size());
        svbrdf_backward(f, rec, Matrix<T>(c3.cast<T>()), Matrix<T>(c3b.cast<T>()), Vector<T>(cr.cast<T>()), g);
        return g;
    };
    auto lighting_grad = [=](const auto& f) {
        using T = typename std::decay_t<decltype(f.theta)>::Scalar;
        LightingRecord<T> rec;
        lighting_forward(f, Matrix<T>(n.cast<T>()), &rec);
        Vector<T> g = Vector<T>::Zero(f.theta.size());
        lighting_backward(f, rec, Matrix<T>(c3.cast<T>()), g);
        return g;
    };
    return {
        {"normal", [=](const auto& f) { return dot(normal_forward(f, k, n), c3); }, normal_grad, normal_grad},
        {"svbrdf",
         [=](const auto& f) {
             const auto m = svbrdf_forward(f, k);
             return dot(m.diffuse, c3) + dot(m.specular, c3b) + m.roughness.dot(cr);
         },
         svbrdf_grad, svbrdf_grad},
        {"lighting", [=](const auto& f) { return dot(lighting_forward(f, n), c3); }, lighting_grad, lighting_grad},
    };
}

} // namespace

TEST_CASE("field gradients match central differences (f64 < 1e-6, f32 < 1e-3)") {
    const auto f64 = jittered_fields(9);
    const auto f32 = f64.cast<float>();
    for (const auto& path : field_paths()) {
        CAPTURE(path.name);
        auto loss = [&](const Vector<double>& theta) {
            return path.loss(AppearanceFields<double>{f64.layout, theta});
        };
        Pcg32 pick(10);
        const Vector<double> g64 = path.grad64(f64);
        const auto r64 = test::fd_check(loss, f64.theta, g64, 10, 1e-5, pick);
        CHECK(r64.checked == 10);
        CHECK(r64.max_rel_error < 1e-6);

        const Vector<double> g32 = path.grad32(f32).cast<double>();
        const auto f32_as64 = AppearanceFields<double>{f64.layout, f32.theta.cast<double>()};
        auto loss32 = [&](const Vector<double>& theta) {
            return path.loss(AppearanceFields<double>{f64.layout, theta});
        };
        Pcg32 pick32(11);
        const auto r32 = test::fd_check(loss32, f32_as64.theta, g32, 10, 1e-4, pick32);
        CHECK(r32.checked == 10);
        CHECK(r32.max_rel_error < 1e-3);
    }
}
