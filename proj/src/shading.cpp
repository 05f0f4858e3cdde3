#include "dstyle/shading.hpp"

#include "dstyle/errors.hpp"

#include <cmath>
#include <numbers>

namespace dstyle {

namespace {

template <class T>
using V3 = Eigen::Matrix<T, 3, 1>;

template <class T>
V3<T> row3(const Matrix<T>& m, Eigen::Index r) {
    return V3<T>(m(r, 0), m(r, 1), m(r, 2));
}

// Specular lobe pieces for one (point, direction) pair.
template <class T>
struct Lobe {
    V3<T> half;      // h
    T half_len = 0;  // |w - v| before normalization
    T cos_h = 0;     // h . n-hat
    T value = 0;     // (m + 2) / (2 pi) max(0, h . n)^m
};

template <class T>
Lobe<T> specular_lobe(const V3<T>& w, const V3<T>& v, const V3<T>& n, T m) {
    Lobe<T> lobe;
    const V3<T> h_raw = w - v;
    lobe.half_len = h_raw.norm();
    if (!(lobe.half_len > T(1e-12))) {
        lobe.half = V3<T>::Zero();
        return lobe;
    }
    lobe.half = h_raw / lobe.half_len;
    lobe.cos_h = lobe.half.dot(n);
    if (lobe.cos_h > T(0)) {
        const T inv_2pi = static_cast<T>(0.5 / std::numbers::pi);
        lobe.value = (m + T(2)) * inv_2pi * std::exp(m * std::log(lobe.cos_h));
    }
    return lobe;
}

template <class T>
Matrix<T> quadrature_directions(const Matrix<T>& normals, const HemisphereQuadrature& quad,
                                std::vector<TangentFrame<T>>& frames) {
    const Eigen::Index b = normals.rows();
    const int n = quad.size();
    frames.resize(static_cast<std::size_t>(b));
    Matrix<T> dirs(b * n, 3);
    for (Eigen::Index p = 0; p < b; ++p) {
        const V3<T> nh = row3(normals, p);
        const TangentFrame<T> f = tangent_frame<T>(nh);
        frames[static_cast<std::size_t>(p)] = f;
        for (int i = 0; i < n; ++i) {
            const V3<T> w = static_cast<T>(quad.local(i, 0)) * f.tangent +
                            static_cast<T>(quad.local(i, 1)) * f.bitangent + static_cast<T>(quad.local(i, 2)) * nh;
            dirs.row(p * n + i) = w.transpose();
        }
    }
    return dirs;
}

} // namespace

template <class T>
Matrix<T> shade_batch(const AppearanceFields<T>& fields, const ShadeInputs<T>& in, const HemisphereQuadrature& quad,
                      ShadeRecord<T>* record) {
    const Eigen::Index b = in.positions.rows();
    if (in.face_normals.rows() != b || in.view_dirs.rows() != b) {
        throw ShapeError("shade inputs have inconsistent row counts");
    }
    const int n = quad.size();
    ShadeRecord<T> local;
    ShadeRecord<T>& rec = record ? *record : local;

    rec.normals = normal_forward(fields, in.positions, in.face_normals, record ? &rec.normal : nullptr);
    const Material<T> mat = svbrdf_forward(fields, in.positions, record ? &rec.svbrdf : nullptr);
    const Matrix<T> dirs = quadrature_directions(rec.normals, quad, rec.frames);
    rec.radiance = lighting_forward(fields, dirs, record ? &rec.lighting : nullptr);

    const T weight = static_cast<T>(quad.weight);
    const T inv_pi = static_cast<T>(1.0 / std::numbers::pi);
    Matrix<T> color = Matrix<T>::Zero(b, 3);
    for (Eigen::Index p = 0; p < b; ++p) {
        const V3<T> nh = row3(rec.normals, p);
        const V3<T> v = row3(in.view_dirs, p);
        const T rough = mat.roughness[p];
        const T m = T(2) / (rough * rough) - T(2);
        const V3<T> diffuse = row3(mat.diffuse, p) * inv_pi;
        const V3<T> spec = row3(mat.specular, p);
        V3<T> acc = V3<T>::Zero();
        for (int i = 0; i < n; ++i) {
            const Eigen::Index r = p * n + i;
            const V3<T> w = row3(dirs, r);
            // w . n-hat equals the local z coordinate for an orthonormal frame.
            const T cos_w = static_cast<T>(quad.local(i, 2));
            const Lobe<T> lobe = specular_lobe(w, v, nh, m);
            const V3<T> f = diffuse + spec * lobe.value;
            acc += (weight * cos_w) * row3(rec.radiance, r).cwiseProduct(f);
        }
        color.row(p) = acc.transpose();
    }
    return color;
}

template <class T>
void shade_batch_backward(const AppearanceFields<T>& fields, const ShadeInputs<T>& in,
                          const HemisphereQuadrature& quad, const ShadeRecord<T>& rec, const Matrix<T>& d_color,
                          Vector<T>& grad) {
    const Eigen::Index b = in.positions.rows();
    if (d_color.rows() != b || d_color.cols() != 3) {
        throw ShapeError("shading cotangent must be B x 3");
    }
    const int n = quad.size();
    const Material<T>& mat = rec.svbrdf.material;
    const Matrix<T>& dirs = rec.lighting.directions;
    const T weight = static_cast<T>(quad.weight);
    const T inv_pi = static_cast<T>(1.0 / std::numbers::pi);

    Matrix<T> d_radiance(b * n, 3);
    Matrix<T> d_diffuse = Matrix<T>::Zero(b, 3);
    Matrix<T> d_specular = Matrix<T>::Zero(b, 3);
    Vector<T> d_rough = Vector<T>::Zero(b);
    Matrix<T> d_normals = Matrix<T>::Zero(b, 3);
    Matrix<T> d_dirs = Matrix<T>::Zero(b * n, 3);

    for (Eigen::Index p = 0; p < b; ++p) {
        const V3<T> g = row3(d_color, p);
        if (g.isZero()) {
            d_radiance.middleRows(p * n, n).setZero();
            continue;
        }
        const V3<T> nh = row3(rec.normals, p);
        const V3<T> v = row3(in.view_dirs, p);
        const T rough = mat.roughness[p];
        const T m = T(2) / (rough * rough) - T(2);
        const V3<T> diffuse = row3(mat.diffuse, p) * inv_pi;
        const V3<T> spec = row3(mat.specular, p);
        V3<T> dn = V3<T>::Zero();
        T dm = 0;
        for (int i = 0; i < n; ++i) {
            const Eigen::Index r = p * n + i;
            const V3<T> w = row3(dirs, r);
            const T wc = weight * static_cast<T>(quad.local(i, 2));
            const Lobe<T> lobe = specular_lobe(w, v, nh, m);
            const V3<T> li = row3(rec.radiance, r);
            const V3<T> f = diffuse + spec * lobe.value;

            d_radiance.row(r) = (wc * g.cwiseProduct(f)).transpose();
            const V3<T> df = wc * g.cwiseProduct(li);
            d_diffuse.row(p) += (df * inv_pi).transpose();
            d_specular.row(p) += (df * lobe.value).transpose();
            if (lobe.value == T(0)) {
                continue;
            }
            const T d_lobe = df.dot(spec);
            // lobe = (m + 2)/(2 pi) c^m: d/dm = lobe (1/(m+2) + ln c), d/dc = lobe m / c
            dm += d_lobe * lobe.value * (T(1) / (m + T(2)) + std::log(lobe.cos_h));
            const T d_cos = d_lobe * lobe.value * m / lobe.cos_h;
            // c = h . n-hat
            const V3<T> dh = d_cos * nh;
            dn += d_cos * lobe.half;
            // h = (w - v) / |w - v|
            const V3<T> dw = (dh - lobe.half * lobe.half.dot(dh)) / lobe.half_len;
            d_dirs.row(r) += dw.transpose();
        }
        d_normals.row(p) += dn.transpose();
        // m = 2 / rough^2 - 2
        d_rough[p] += dm * (T(-4) / (rough * rough * rough));
    }

    // Lighting: radiance and its dependence on the quadrature directions.
    Matrix<T> d_dirs_light;
    lighting_backward(fields, rec.lighting, d_radiance, grad, &d_dirs_light);
    d_dirs += d_dirs_light;

    // Directions w = a t + b bt + c n-hat, with (t, bt) functions of n-hat.
    for (Eigen::Index p = 0; p < b; ++p) {
        const V3<T> nh = row3(rec.normals, p);
        V3<T> dt = V3<T>::Zero();
        V3<T> db = V3<T>::Zero();
        V3<T> dn = V3<T>::Zero();
        for (int i = 0; i < n; ++i) {
            const V3<T> dw = row3(d_dirs, p * n + i);
            dt += static_cast<T>(quad.local(i, 0)) * dw;
            db += static_cast<T>(quad.local(i, 1)) * dw;
            dn += static_cast<T>(quad.local(i, 2)) * dw;
        }
        tangent_frame_backward<T>(nh, rec.frames[static_cast<std::size_t>(p)], dt, db, dn);
        d_normals.row(p) += dn.transpose();
    }

    normal_backward(fields, rec.normal, d_normals, grad);
    svbrdf_backward(fields, rec.svbrdf, d_diffuse, d_specular, d_rough, grad);
}

template Matrix<float> shade_batch(const AppearanceFields<float>&, const ShadeInputs<float>&,
                                   const HemisphereQuadrature&, ShadeRecord<float>*);
template Matrix<double> shade_batch(const AppearanceFields<double>&, const ShadeInputs<double>&,
                                    const HemisphereQuadrature&, ShadeRecord<double>*);
template void shade_batch_backward(const AppearanceFields<float>&, const ShadeInputs<float>&,
                                   const HemisphereQuadrature&, const ShadeRecord<float>&, const Matrix<float>&,
                                   Vector<float>&);
template void shade_batch_backward(const AppearanceFields<double>&, const ShadeInputs<double>&,
                                   const HemisphereQuadrature&, const ShadeRecord<double>&, const Matrix<double>&,
                                   Vector<double>&);

} // namespace dstyle
