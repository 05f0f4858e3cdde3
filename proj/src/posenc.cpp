#include "dstyle/posenc.hpp"

#include <cmath>
#include <numbers>

namespace dstyle {

template <class T>
Matrix<T> posenc(const Matrix<T>& x, const PositionalEncoding& enc) {
    const Eigen::Index k = x.cols();
    Matrix<T> out(x.rows(), enc.output_dim(static_cast<int>(k)));
    Eigen::Index col = 0;
    if (enc.include_input) {
        out.leftCols(k) = x;
        col = k;
    }
    for (int l = 0; l < enc.num_frequencies; ++l) {
        const T freq = static_cast<T>(std::ldexp(std::numbers::pi, l));
        const auto arg = (x.array() * freq).eval();
        out.middleCols(col, k) = arg.sin().matrix();
        out.middleCols(col + k, k) = arg.cos().matrix();
        col += 2 * k;
    }
    return out;
}

template <class T>
void posenc_backward(const Matrix<T>& x, const PositionalEncoding& enc, const Matrix<T>& d_out, Matrix<T>& d_x) {
    const Eigen::Index k = x.cols();
    if (d_x.rows() != x.rows() || d_x.cols() != k) {
        d_x = Matrix<T>::Zero(x.rows(), k);
    }
    Eigen::Index col = 0;
    if (enc.include_input) {
        d_x += d_out.leftCols(k);
        col = k;
    }
    for (int l = 0; l < enc.num_frequencies; ++l) {
        const T freq = static_cast<T>(std::ldexp(std::numbers::pi, l));
        const auto arg = (x.array() * freq).eval();
        d_x.array() += freq * (d_out.middleCols(col, k).array() * arg.cos() -
                               d_out.middleCols(col + k, k).array() * arg.sin());
        col += 2 * k;
    }
}

template Matrix<float> posenc(const Matrix<float>&, const PositionalEncoding&);
template Matrix<double> posenc(const Matrix<double>&, const PositionalEncoding&);
template void posenc_backward(const Matrix<float>&, const PositionalEncoding&, const Matrix<float>&, Matrix<float>&);
template void posenc_backward(const Matrix<double>&, const PositionalEncoding&, const Matrix<double>&,
                              Matrix<double>&);

} // namespace dstyle
