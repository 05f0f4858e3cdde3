#pragma once

#include "dstyle/tensor.hpp"

namespace dstyle {

/// Frequency encoding [x, sin(2^0 pi x), cos(2^0 pi x), ..., sin(2^{L-1} pi x),
/// cos(2^{L-1} pi x)], each term a block of input_dim columns.
struct PositionalEncoding {
    int num_frequencies = 6;
    bool include_input = true;

    int output_dim(int input_dim) const { return input_dim * (2 * num_frequencies + (include_input ? 1 : 0)); }
};

template <class T>
Matrix<T> posenc(const Matrix<T>& x, const PositionalEncoding& enc);

/// Accumulates d(encoding)/dx^T * d_out into d_x (same shape as x).
template <class T>
void posenc_backward(const Matrix<T>& x, const PositionalEncoding& enc, const Matrix<T>& d_out, Matrix<T>& d_x);

} // namespace dstyle
