#include "dstyle/fields.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace dstyle {

namespace {

constexpr std::uint64_t kInitStream = 0x5eed'f1e1'd500'0001ULL;

std::vector<int> widths(int input, int width, int layers, int output) {
    std::vector<int> w{input};
    for (int i = 0; i < layers; ++i) {
        w.push_back(width);
    }
    w.push_back(output);
    return w;
}

template <class T>
T sigmoid(T x) {
    return T(1) / (T(1) + std::exp(-x));
}

template <class T>
T softplus(T x) {
    return std::max(x, T(0)) + std::log1p(std::exp(-std::abs(x)));
}

template <class T>
Matrix<T> rows3(const Vec3T<T>& v) {
    Matrix<T> m(1, 3);
    m << v.x(), v.y(), v.z();
    return m;
}

} // namespace

FieldsLayout::FieldsLayout(const FieldsConfig& cfg) : config(cfg) {
    if (cfg.normal_layers < 1 || cfg.svbrdf_layers < 1 || cfg.lighting_layers < 1) {
        throw ConfigError("each appearance network needs at least one hidden layer");
    }
    position_encoding = PositionalEncoding{cfg.position_frequencies, true};
    direction_encoding = PositionalEncoding{cfg.direction_frequencies, true};
    const int pos_dim = position_encoding.output_dim(3);
    const int dir_dim = direction_encoding.output_dim(3);
    Eigen::Index off = 0;
    normal = MlpLayout(widths(pos_dim + 3, cfg.normal_width, cfg.normal_layers, 3), off);
    off += normal.param_count();
    svbrdf = MlpLayout(widths(pos_dim, cfg.svbrdf_width, cfg.svbrdf_layers, 7), off);
    off += svbrdf.param_count();
    lighting = MlpLayout(widths(dir_dim, cfg.lighting_width, cfg.lighting_layers, 3), off);
    off += lighting.param_count();
    param_count = off;
}

std::string FieldsLayout::describe() const {
    auto list = [](const MlpLayout& m) { return fmt::format("[{}]", fmt::join(m.widths, ",")); };
    return fmt::format("normal={} svbrdf={} lighting={}", list(normal), list(svbrdf), list(lighting));
}

template <class T>
AppearanceFields<T> AppearanceFields<T>::initialized(const FieldsLayout& layout, std::uint64_t seed) {
    AppearanceFields<T> f{layout, Vector<T>::Zero(layout.param_count)};
    Pcg32 rng(seed, kInitStream);
    mlp_init(layout.normal, f.theta, rng);
    mlp_init(layout.svbrdf, f.theta, rng);
    mlp_init(layout.lighting, f.theta, rng);
    return f;
}

template <class T>
Matrix<T> normal_forward(const AppearanceFields<T>& fields, const Matrix<T>& positions,
                         const Matrix<T>& face_normals, NormalRecord<T>* record) {
    const auto& lay = fields.layout;
    const Matrix<T> enc = posenc(positions, lay.position_encoding);
    Matrix<T> input(positions.rows(), enc.cols() + 3);
    input << enc, face_normals;
    MlpRecord<T> mlp;
    const Matrix<T> raw = mlp_forward(lay.normal, fields.theta, input, record ? &mlp : nullptr);
    Matrix<T> th = raw.array().tanh().matrix();
    Matrix<T> u = face_normals + static_cast<T>(lay.config.normal_delta) * th;
    Vector<T> norms = u.rowwise().norm();
    Matrix<T> n = u.array().colwise() / norms.array();
    if (record) {
        record->mlp = std::move(mlp);
        record->tanh_out = std::move(th);
        record->unnormalized = std::move(u);
        record->norms = std::move(norms);
    }
    return n;
}

template <class T>
void normal_backward(const AppearanceFields<T>& fields, const NormalRecord<T>& record, const Matrix<T>& d_normals,
                     Vector<T>& grad) {
    // n = u / |u|  =>  du = (dn - n (n . dn)) / |u|
    const Matrix<T> n = record.unnormalized.array().colwise() / record.norms.array();
    const Vector<T> proj = (n.array() * d_normals.array()).rowwise().sum();
    Matrix<T> du = d_normals - (n.array().colwise() * proj.array()).matrix();
    du.array().colwise() /= record.norms.array();
    // u = n_face + delta tanh(o)
    const Matrix<T> d_raw = (du.array() * static_cast<T>(fields.layout.config.normal_delta) *
                             (T(1) - record.tanh_out.array().square()))
                                .matrix();
    mlp_backward(fields.layout.normal, fields.theta, record.mlp, d_raw, grad);
}

template <class T>
Material<T> svbrdf_forward(const AppearanceFields<T>& fields, const Matrix<T>& positions, SvbrdfRecord<T>* record) {
    const auto& lay = fields.layout;
    MlpRecord<T> mlp;
    const Matrix<T> raw =
        mlp_forward(lay.svbrdf, fields.theta, posenc(positions, lay.position_encoding), record ? &mlp : nullptr);
    const Matrix<T> s = raw.unaryExpr([](T x) { return sigmoid(x); });
    Material<T> m;
    m.diffuse = s.leftCols(3);
    m.specular = s.middleCols(3, 3);
    const Vector<T> rs = s.col(6);
    m.roughness = (static_cast<T>(kMinRoughness) + static_cast<T>(1.0 - kMinRoughness) * rs.array()).matrix();
    if (record) {
        record->mlp = std::move(mlp);
        record->material = m;
        record->roughness_sigmoid = rs;
    }
    return m;
}

template <class T>
void svbrdf_backward(const AppearanceFields<T>& fields, const SvbrdfRecord<T>& record, const Matrix<T>& d_diffuse,
                     const Matrix<T>& d_specular, const Vector<T>& d_roughness, Vector<T>& grad) {
    const auto& m = record.material;
    Matrix<T> d_raw(m.diffuse.rows(), 7);
    d_raw.leftCols(3) = (d_diffuse.array() * m.diffuse.array() * (T(1) - m.diffuse.array())).matrix();
    d_raw.middleCols(3, 3) = (d_specular.array() * m.specular.array() * (T(1) - m.specular.array())).matrix();
    const auto& rs = record.roughness_sigmoid.array();
    d_raw.col(6) = (d_roughness.array() * static_cast<T>(1.0 - kMinRoughness) * rs * (T(1) - rs)).matrix();
    mlp_backward(fields.layout.svbrdf, fields.theta, record.mlp, d_raw, grad);
}

template <class T>
Matrix<T> lighting_forward(const AppearanceFields<T>& fields, const Matrix<T>& directions,
                           LightingRecord<T>* record) {
    const auto& lay = fields.layout;
    MlpRecord<T> mlp;
    Matrix<T> raw = mlp_forward(lay.lighting, fields.theta, posenc(directions, lay.direction_encoding),
                                record ? &mlp : nullptr);
    Matrix<T> radiance = raw.unaryExpr([](T x) { return softplus(x); });
    if (record) {
        record->directions = directions;
        record->mlp = std::move(mlp);
        record->raw = std::move(raw);
    }
    return radiance;
}

template <class T>
void lighting_backward(const AppearanceFields<T>& fields, const LightingRecord<T>& record,
                       const Matrix<T>& d_radiance, Vector<T>& grad, Matrix<T>* d_directions) {
    const Matrix<T> d_raw =
        (d_radiance.array() * record.raw.unaryExpr([](T x) { return sigmoid(x); }).array()).matrix();
    if (d_directions == nullptr) {
        mlp_backward(fields.layout.lighting, fields.theta, record.mlp, d_raw, grad);
        return;
    }
    Matrix<T> d_enc;
    mlp_backward(fields.layout.lighting, fields.theta, record.mlp, d_raw, grad, &d_enc);
    Matrix<T> d_dir = Matrix<T>::Zero(record.directions.rows(), 3);
    posenc_backward(record.directions, fields.layout.direction_encoding, d_enc, d_dir);
    *d_directions = std::move(d_dir);
}

template <class T>
Vec3T<T> eval_normal(const AppearanceFields<T>& fields, const Vec3T<T>& position, const Vec3T<T>& face_normal) {
    const Matrix<T> n = normal_forward(fields, rows3(position), rows3(face_normal));
    return n.row(0).transpose();
}

template <class T>
MaterialSample<T> eval_svbrdf(const AppearanceFields<T>& fields, const Vec3T<T>& position) {
    const Material<T> m = svbrdf_forward(fields, rows3(position));
    return {m.diffuse.row(0).transpose(), m.specular.row(0).transpose(), m.roughness[0]};
}

template <class T>
Vec3T<T> eval_lighting(const AppearanceFields<T>& fields, const Vec3T<T>& direction) {
    return lighting_forward(fields, rows3(direction)).row(0).transpose();
}

#define DSTYLE_INSTANTIATE_FIELDS(T)                                                                           \
    template struct AppearanceFields<T>;                                                                       \
    template Matrix<T> normal_forward(const AppearanceFields<T>&, const Matrix<T>&, const Matrix<T>&,          \
                                      NormalRecord<T>*);                                                       \
    template void normal_backward(const AppearanceFields<T>&, const NormalRecord<T>&, const Matrix<T>&,       \
                                  Vector<T>&);                                                                 \
    template Material<T> svbrdf_forward(const AppearanceFields<T>&, const Matrix<T>&, SvbrdfRecord<T>*);      \
    template void svbrdf_backward(const AppearanceFields<T>&, const SvbrdfRecord<T>&, const Matrix<T>&,       \
                                  const Matrix<T>&, const Vector<T>&, Vector<T>&);                             \
    template Matrix<T> lighting_forward(const AppearanceFields<T>&, const Matrix<T>&, LightingRecord<T>*);    \
    template void lighting_backward(const AppearanceFields<T>&, const LightingRecord<T>&, const Matrix<T>&,   \
                                    Vector<T>&, Matrix<T>*);                                                   \
    template Vec3T<T> eval_normal(const AppearanceFields<T>&, const Vec3T<T>&, const Vec3T<T>&);              \
    template MaterialSample<T> eval_svbrdf(const AppearanceFields<T>&, const Vec3T<T>&);                      \
    template Vec3T<T> eval_lighting(const AppearanceFields<T>&, const Vec3T<T>&);

DSTYLE_INSTANTIATE_FIELDS(float)
DSTYLE_INSTANTIATE_FIELDS(double)

} // namespace dstyle
