#include "dstyle/mlp.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace dstyle {

MlpLayout::MlpLayout(std::vector<int> w, Eigen::Index off) : widths(std::move(w)), offset(off) {
    if (widths.size() < 2) {
        throw ConfigError("an MLP needs at least an input and an output width");
    }
    for (int v : widths) {
        if (v < 1) {
            throw ConfigError("MLP widths must be positive");
        }
    }
}

Eigen::Index MlpLayout::param_count() const {
    Eigen::Index n = 0;
    for (int l = 0; l < layer_count(); ++l) {
        n += static_cast<Eigen::Index>(widths[l] + 1) * widths[l + 1];
    }
    return n;
}

Eigen::Index MlpLayout::weight_offset(int layer) const {
    Eigen::Index off = offset;
    for (int l = 0; l < layer; ++l) {
        off += static_cast<Eigen::Index>(widths[l] + 1) * widths[l + 1];
    }
    return off;
}

Eigen::Index MlpLayout::bias_offset(int layer) const {
    return weight_offset(layer) + static_cast<Eigen::Index>(widths[layer]) * widths[layer + 1];
}

namespace {

template <class T>
using ConstWeights = Eigen::Map<const RowMatrix<T>>;
template <class T>
using Weights = Eigen::Map<RowMatrix<T>>;

} // namespace

template <class T>
Matrix<T> mlp_forward(const MlpLayout& layout, const Vector<T>& theta, const Matrix<T>& x, MlpRecord<T>* record) {
    if (x.cols() != layout.input_dim()) {
        throw ShapeError(fmt::format("MLP input has {} columns, expected {}", x.cols(), layout.input_dim()));
    }
    if (record) {
        record->inputs.clear();
        record->inputs.reserve(static_cast<std::size_t>(layout.layer_count()));
    }
    Matrix<T> h = x;
    for (int l = 0; l < layout.layer_count(); ++l) {
        const int in = layout.widths[l];
        const int out = layout.widths[l + 1];
        ConstWeights<T> w(theta.data() + layout.weight_offset(l), out, in);
        Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>> b(theta.data() + layout.bias_offset(l), out);
        Matrix<T> y(h.rows(), out);
        y.noalias() = h * w.transpose();
        y.rowwise() += b;
        if (l + 1 < layout.layer_count()) {
            y = y.cwiseMax(T(0));
        }
        if (record) {
            record->inputs.push_back(std::move(h));
        }
        h = std::move(y);
    }
    return h;
}

template <class T>
void mlp_backward(const MlpLayout& layout, const Vector<T>& theta, const MlpRecord<T>& record,
                  const Matrix<T>& d_output, Vector<T>& grad, Matrix<T>* d_input) {
    if (static_cast<int>(record.inputs.size()) != layout.layer_count()) {
        throw ShapeError("MLP record does not match layout");
    }
    if (d_output.cols() != layout.output_dim() || d_output.rows() != record.inputs.front().rows()) {
        throw ShapeError(fmt::format("MLP cotangent is {}x{}, expected {}x{}", d_output.rows(), d_output.cols(),
                                     record.inputs.front().rows(), layout.output_dim()));
    }
    if (grad.size() != theta.size()) {
        throw ShapeError("gradient buffer does not match theta");
    }
    Matrix<T> dy = d_output;
    for (int l = layout.layer_count() - 1; l >= 0; --l) {
        const int in = layout.widths[l];
        const int out = layout.widths[l + 1];
        const Matrix<T>& h = record.inputs[static_cast<std::size_t>(l)];
        Weights<T> gw(grad.data() + layout.weight_offset(l), out, in);
        Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> gb(grad.data() + layout.bias_offset(l), out);
        gw.noalias() += dy.transpose() * h;
        gb += dy.colwise().sum();
        if (l == 0 && d_input == nullptr) {
            break;
        }
        ConstWeights<T> w(theta.data() + layout.weight_offset(l), out, in);
        Matrix<T> dx(dy.rows(), in);
        dx.noalias() = dy * w;
        if (l > 0) {
            // h is the ReLU output of the previous layer.
            dx = (h.array() > T(0)).select(dx, T(0));
            dy = std::move(dx);
        } else {
            *d_input = std::move(dx);
        }
    }
}

template <class T>
void mlp_init(const MlpLayout& layout, Vector<T>& theta, Pcg32& rng) {
    for (int l = 0; l < layout.layer_count(); ++l) {
        const int in = layout.widths[l];
        const int out = layout.widths[l + 1];
        const Eigen::Index w_off = layout.weight_offset(l);
        const Eigen::Index b_off = layout.bias_offset(l);
        if (l + 1 == layout.layer_count()) {
            theta.segment(w_off, static_cast<Eigen::Index>(in) * out).setZero();
            theta.segment(b_off, out).setZero();
            continue;
        }
        const double w_bound = std::sqrt(6.0 / in);
        const double b_bound = 1.0 / std::sqrt(static_cast<double>(in));
        for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(in) * out; ++i) {
            theta[w_off + i] = static_cast<T>(rng.uniform(-w_bound, w_bound));
        }
        for (Eigen::Index i = 0; i < out; ++i) {
            theta[b_off + i] = static_cast<T>(rng.uniform(-b_bound, b_bound));
        }
    }
}

template Matrix<float> mlp_forward(const MlpLayout&, const Vector<float>&, const Matrix<float>&,
                                   MlpRecord<float>*);
template Matrix<double> mlp_forward(const MlpLayout&, const Vector<double>&, const Matrix<double>&,
                                    MlpRecord<double>*);
template void mlp_backward(const MlpLayout&, const Vector<float>&, const MlpRecord<float>&, const Matrix<float>&,
                           Vector<float>&, Matrix<float>*);
template void mlp_backward(const MlpLayout&, const Vector<double>&, const MlpRecord<double>&,
                           const Matrix<double>&, Vector<double>&, Matrix<double>*);
template void mlp_init(const MlpLayout&, Vector<float>&, Pcg32&);
template void mlp_init(const MlpLayout&, Vector<double>&, Pcg32&);

} // namespace dstyle
