#pragma once

#include "dstyle/mesh.hpp"
#include "dstyle/tensor.hpp"

#include <utility>
#include <vector>

namespace dstyle {

/// Equal-area Fibonacci spiral over the hemisphere z >= 0 in a local frame.
/// Point i has cos(theta) = 1 - (i + 0.5) / N and azimuth i * golden angle;
/// every point carries weight 2 pi / N.
struct HemisphereQuadrature {
    Matrix<double> local; // N x 3, columns (tangent, bitangent, normal) coordinates
    double weight = 0.0;

    explicit HemisphereQuadrature(int count);
    int size() const { return static_cast<int>(local.rows()); }
};

/// Orthonormal tangent frame around a unit normal, smooth except within
/// ~6 degrees of the primary reference axis (where a second axis is used).
template <class T>
struct TangentFrame {
    Eigen::Matrix<T, 3, 1> tangent;
    Eigen::Matrix<T, 3, 1> bitangent;
    Eigen::Matrix<T, 3, 1> reference;
    T cross_norm;
};

template <class T>
TangentFrame<T> tangent_frame(const Eigen::Matrix<T, 3, 1>& n);

/// Reverse of tangent_frame: adds to d_n the contribution of (d_t, d_b).
template <class T>
void tangent_frame_backward(const Eigen::Matrix<T, 3, 1>& n, const TangentFrame<T>& frame,
                            const Eigen::Matrix<T, 3, 1>& d_t, const Eigen::Matrix<T, 3, 1>& d_b,
                            Eigen::Matrix<T, 3, 1>& d_n);

/// World-space (direction, weight) pairs around `normal`.
std::vector<std::pair<Vec3, double>> hemisphere_quadrature(const Vec3& normal, int count);

} // namespace dstyle
