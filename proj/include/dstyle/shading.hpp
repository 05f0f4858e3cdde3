#pragma once

#include "dstyle/fields.hpp"
#include "dstyle/quadrature.hpp"

namespace dstyle {

/// One row per shaded surface point.
template <class T>
struct ShadeInputs {
    Matrix<T> positions;    // k_p
    Matrix<T> face_normals; // n_p
    Matrix<T> view_dirs;    // unit, camera -> surface
};

/// Everything the reverse sweep needs for one batch of shaded points.
template <class T>
struct ShadeRecord {
    NormalRecord<T> normal;
    SvbrdfRecord<T> svbrdf;
    LightingRecord<T> lighting;
    Matrix<T> normals; // shading normals n-hat, B x 3
    std::vector<TangentFrame<T>> frames;
    Matrix<T> radiance; // L_i at every (point, direction) row, (B*N) x 3
};

/// Direct-lighting quadrature of
///   L_p = sum_i w L_i(w_i) f_r(k_p, v_p, w_i) (w_i . n-hat)
/// with f_r = diffuse / pi + specular (m + 2) / (2 pi) max(0, h . n-hat)^m,
/// h = normalize(w_i - v_p) and m = 2 / roughness^2 - 2. Returns the
/// unclamped radiance (B x 3).
template <class T>
Matrix<T> shade_batch(const AppearanceFields<T>& fields, const ShadeInputs<T>& in,
                      const HemisphereQuadrature& quad, ShadeRecord<T>* record = nullptr);

/// Adds dL/dtheta for cotangent d_color (B x 3, w.r.t. the unclamped radiance).
template <class T>
void shade_batch_backward(const AppearanceFields<T>& fields, const ShadeInputs<T>& in,
                          const HemisphereQuadrature& quad, const ShadeRecord<T>& record, const Matrix<T>& d_color,
                          Vector<T>& grad);

} // namespace dstyle
