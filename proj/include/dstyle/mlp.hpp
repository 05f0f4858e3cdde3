#pragma once

#include "dstyle/rng.hpp"
#include "dstyle/tensor.hpp"

#include <vector>

namespace dstyle {

/// Fully connected network stored as a segment of a flat parameter vector.
/// Layer l maps widths[l] -> widths[l + 1]; its weights are a row-major
/// (out x in) block followed by the out biases. Hidden layers use ReLU, the
/// last layer is linear (callers apply the field-specific activation).
struct MlpLayout {
    std::vector<int> widths;
    Eigen::Index offset = 0;

    MlpLayout() = default;
    MlpLayout(std::vector<int> w, Eigen::Index off);

    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
    int input_dim() const { return widths.front(); }
    int output_dim() const { return widths.back(); }
    Eigen::Index param_count() const;
    Eigen::Index weight_offset(int layer) const;
    Eigen::Index bias_offset(int layer) const;
};

/// Activations kept for the reverse sweep: inputs[l] is the input of layer l.
template <class T>
struct MlpRecord {
    std::vector<Matrix<T>> inputs;
};

template <class T>
Matrix<T> mlp_forward(const MlpLayout& layout, const Vector<T>& theta, const Matrix<T>& x,
                      MlpRecord<T>* record = nullptr);

/// Adds dL/dtheta for this network's segment into `grad` (full theta shape).
/// When d_input is non-null it receives dL/dx.
template <class T>
void mlp_backward(const MlpLayout& layout, const Vector<T>& theta, const MlpRecord<T>& record,
                  const Matrix<T>& d_output, Vector<T>& grad, Matrix<T>* d_input = nullptr);

/// Hidden layers Kaiming-uniform (bias uniform in +-1/sqrt(fan_in)); the
/// output layer is zeroed.
template <class T>
void mlp_init(const MlpLayout& layout, Vector<T>& theta, Pcg32& rng);

} // namespace dstyle
