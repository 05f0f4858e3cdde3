#pragma once

#include "dstyle/mlp.hpp"
#include "dstyle/posenc.hpp"

#include <cstdint>
#include <string>

namespace dstyle {

/// Sizes of the three appearance networks. Each width/layers pair means
/// `layers` hidden layers of `width` units followed by a linear output.
struct FieldsConfig {
    int normal_width = 256;
    int normal_layers = 3;
    int svbrdf_width = 256;
    int svbrdf_layers = 3;
    int lighting_width = 128;
    int lighting_layers = 3;
    int position_frequencies = 6;
    int direction_frequencies = 4;
    double normal_delta = 0.2; // bound on the residual added to the face normal

    bool operator==(const FieldsConfig&) const = default;
};

inline constexpr double kMinRoughness = 0.03;

/// Where each network lives inside theta: normal, then SVBRDF, then lighting.
struct FieldsLayout {
    FieldsConfig config;
    PositionalEncoding position_encoding;
    PositionalEncoding direction_encoding;
    MlpLayout normal;   // [posenc(k), n] -> 3
    MlpLayout svbrdf;   // posenc(k) -> diffuse(3), specular(3), roughness(1)
    MlpLayout lighting; // posenc(w) -> rgb
    Eigen::Index param_count = 0;

    explicit FieldsLayout(const FieldsConfig& cfg = {});

    std::string describe() const;
};

template <class T>
struct AppearanceFields {
    FieldsLayout layout;
    Vector<T> theta;

    /// Hidden layers Kaiming-uniform, output layers zero: the first render
    /// is neutral gray with normals equal to the face normals.
    static AppearanceFields initialized(const FieldsLayout& layout, std::uint64_t seed);

    template <class U>
    AppearanceFields<U> cast() const {
        return AppearanceFields<U>{layout, theta.template cast<U>()};
    }
};

// --- Batched evaluation with reverse-mode records ------------------------

template <class T>
struct NormalRecord {
    MlpRecord<T> mlp;
    Matrix<T> tanh_out;
    Matrix<T> unnormalized;
    Vector<T> norms;
};

template <class T>
Matrix<T> normal_forward(const AppearanceFields<T>& fields, const Matrix<T>& positions,
                         const Matrix<T>& face_normals, NormalRecord<T>* record = nullptr);

template <class T>
void normal_backward(const AppearanceFields<T>& fields, const NormalRecord<T>& record, const Matrix<T>& d_normals,
                     Vector<T>& grad);

template <class T>
struct Material {
    Matrix<T> diffuse;   // B x 3, in [0, 1]
    Matrix<T> specular;  // B x 3, in [0, 1]
    Vector<T> roughness; // B, in [kMinRoughness, 1]
};

template <class T>
struct SvbrdfRecord {
    MlpRecord<T> mlp;
    Material<T> material;
    Vector<T> roughness_sigmoid;
};

template <class T>
Material<T> svbrdf_forward(const AppearanceFields<T>& fields, const Matrix<T>& positions,
                           SvbrdfRecord<T>* record = nullptr);

template <class T>
void svbrdf_backward(const AppearanceFields<T>& fields, const SvbrdfRecord<T>& record, const Matrix<T>& d_diffuse,
                     const Matrix<T>& d_specular, const Vector<T>& d_roughness, Vector<T>& grad);

template <class T>
struct LightingRecord {
    Matrix<T> directions;
    MlpRecord<T> mlp;
    Matrix<T> raw;
};

template <class T>
Matrix<T> lighting_forward(const AppearanceFields<T>& fields, const Matrix<T>& directions,
                           LightingRecord<T>* record = nullptr);

/// When d_directions is non-null it receives dL/d(direction).
template <class T>
void lighting_backward(const AppearanceFields<T>& fields, const LightingRecord<T>& record,
                       const Matrix<T>& d_radiance, Vector<T>& grad, Matrix<T>* d_directions = nullptr);

// --- Single-point convenience wrappers ----------------------------------

template <class T>
using Vec3T = Eigen::Matrix<T, 3, 1>;

template <class T>
struct MaterialSample {
    Vec3T<T> diffuse;
    Vec3T<T> specular;
    T roughness;
};

template <class T>
Vec3T<T> eval_normal(const AppearanceFields<T>& fields, const Vec3T<T>& position, const Vec3T<T>& face_normal);

template <class T>
MaterialSample<T> eval_svbrdf(const AppearanceFields<T>& fields, const Vec3T<T>& position);

template <class T>
Vec3T<T> eval_lighting(const AppearanceFields<T>& fields, const Vec3T<T>& direction);

} // namespace dstyle
