#include "dstyle/quadrature.hpp"

#include "dstyle/errors.hpp"

#include <cmath>
#include <numbers>

namespace dstyle {

HemisphereQuadrature::HemisphereQuadrature(int count) {
    if (count < 1) {
        throw ConfigError("quadrature needs at least one point");
    }
    const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
    local.resize(count, 3);
    for (int i = 0; i < count; ++i) {
        const double c = 1.0 - (i + 0.5) / count;
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double phi = golden * i;
        local(i, 0) = s * std::cos(phi);
        local(i, 1) = s * std::sin(phi);
        local(i, 2) = c;
    }
    weight = 2.0 * std::numbers::pi / count;
}

namespace {

template <class T>
Eigen::Matrix<T, 3, 1> primary_reference() {
    return Eigen::Matrix<T, 3, 1>(T(1), T(2), T(3)).normalized();
}

template <class T>
Eigen::Matrix<T, 3, 1> secondary_reference() {
    return Eigen::Matrix<T, 3, 1>(T(-3), T(1), T(2)).normalized();
}

} // namespace

template <class T>
TangentFrame<T> tangent_frame(const Eigen::Matrix<T, 3, 1>& n) {
    TangentFrame<T> f;
    f.reference = primary_reference<T>();
    Eigen::Matrix<T, 3, 1> v = f.reference.cross(n);
    if (v.norm() < T(0.1)) {
        f.reference = secondary_reference<T>();
        v = f.reference.cross(n);
    }
    f.cross_norm = v.norm();
    f.tangent = v / f.cross_norm;
    f.bitangent = n.cross(f.tangent);
    return f;
}

template <class T>
void tangent_frame_backward(const Eigen::Matrix<T, 3, 1>& n, const TangentFrame<T>& frame,
                            const Eigen::Matrix<T, 3, 1>& d_t, const Eigen::Matrix<T, 3, 1>& d_b,
                            Eigen::Matrix<T, 3, 1>& d_n) {
    // b = n x t
    d_n += frame.tangent.cross(d_b);
    const Eigen::Matrix<T, 3, 1> dt = d_t + d_b.cross(n);
    // t = v / |v|, v = r x n
    const Eigen::Matrix<T, 3, 1> dv = (dt - frame.tangent * frame.tangent.dot(dt)) / frame.cross_norm;
    d_n += dv.cross(frame.reference);
}

std::vector<std::pair<Vec3, double>> hemisphere_quadrature(const Vec3& normal, int count) {
    const HemisphereQuadrature q(count);
    const Vec3 n = normal.normalized();
    const TangentFrame<double> f = tangent_frame<double>(n);
    std::vector<std::pair<Vec3, double>> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        out.emplace_back(q.local(i, 0) * f.tangent + q.local(i, 1) * f.bitangent + q.local(i, 2) * n, q.weight);
    }
    return out;
}

template TangentFrame<float> tangent_frame(const Eigen::Matrix<float, 3, 1>&);
template TangentFrame<double> tangent_frame(const Eigen::Matrix<double, 3, 1>&);
template void tangent_frame_backward(const Eigen::Matrix<float, 3, 1>&, const TangentFrame<float>&,
                                     const Eigen::Matrix<float, 3, 1>&, const Eigen::Matrix<float, 3, 1>&,
                                     Eigen::Matrix<float, 3, 1>&);
template void tangent_frame_backward(const Eigen::Matrix<double, 3, 1>&, const TangentFrame<double>&,
                                     const Eigen::Matrix<double, 3, 1>&, const Eigen::Matrix<double, 3, 1>&,
                                     Eigen::Matrix<double, 3, 1>&);

} // namespace dstyle
