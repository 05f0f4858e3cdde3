#include "dstyle/tape.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

namespace dstyle {

template <class T>
typename GradientTape<T>::NodeId GradientTape<T>::push(Vec value, BackwardFn backward) {
    nodes_.push_back(Node{std::move(value), std::move(backward)});
    return nodes_.size() - 1;
}

template <class T>
void GradientTape<T>::accumulate(NodeId id, const Eigen::Ref<const Vec>& adjoint) {
    if (id >= adjoints_.size()) {
        throw std::logic_error("accumulate called outside of a backward sweep");
    }
    if (adjoint.size() != nodes_[id].value.size()) {
        throw ShapeError(fmt::format("adjoint of size {} for node of size {}", adjoint.size(),
                                     nodes_[id].value.size()));
    }
    Vec& a = adjoints_[id];
    if (a.size() == 0) {
        a = adjoint;
    } else {
        a += adjoint;
    }
}

template <class T>
typename GradientTape<T>::Vec GradientTape<T>::backward(NodeId output, const Vec& upstream) {
    if (output >= nodes_.size()) {
        throw std::out_of_range("tape output node does not exist");
    }
    if (upstream.size() != nodes_[output].value.size()) {
        throw ShapeError(fmt::format("upstream cotangent has {} elements, tape output has {}", upstream.size(),
                                     nodes_[output].value.size()));
    }
    adjoints_.assign(output + 1, Vec());
    param_grad_ = Vec::Zero(param_count_);
    adjoints_[output] = upstream;
    for (std::size_t i = output + 1; i-- > 0;) {
        if (adjoints_[i].size() == 0 || !nodes_[i].backward) {
            continue;
        }
        nodes_[i].backward(adjoints_[i], *this);
    }
    adjoints_.clear();
    Vec grad = std::move(param_grad_);
    param_grad_ = Vec();
    return grad;
}

template <class T>
typename GradientTape<T>::NodeId param_slice(GradientTape<T>& tape, const Vector<T>& theta, Eigen::Index offset,
                                             Eigen::Index count) {
    if (offset < 0 || count < 0 || offset + count > theta.size() || theta.size() != tape.param_count()) {
        throw ShapeError("parameter slice out of range");
    }
    return tape.push(theta.segment(offset, count),
                     [offset, count](const Vector<T>& adj, GradientTape<T>& t) {
                         t.param_grad().segment(offset, count) += adj;
                     });
}

template <class T>
typename GradientTape<T>::NodeId square(GradientTape<T>& tape, typename GradientTape<T>::NodeId x) {
    Vector<T> v = tape.value(x).array().square().matrix();
    return tape.push(std::move(v), [x](const Vector<T>& adj, GradientTape<T>& t) {
        t.accumulate(x, (T(2) * adj.array() * t.value(x).array()).matrix());
    });
}

template <class T>
typename GradientTape<T>::NodeId sum(GradientTape<T>& tape, typename GradientTape<T>::NodeId x) {
    Vector<T> v(1);
    v[0] = tape.value(x).sum();
    return tape.push(std::move(v), [x](const Vector<T>& adj, GradientTape<T>& t) {
        t.accumulate(x, Vector<T>::Constant(t.value(x).size(), adj[0]));
    });
}

template class GradientTape<float>;
template class GradientTape<double>;
template GradientTape<float>::NodeId param_slice(GradientTape<float>&, const Vector<float>&, Eigen::Index,
                                                 Eigen::Index);
template GradientTape<double>::NodeId param_slice(GradientTape<double>&, const Vector<double>&, Eigen::Index,
                                                  Eigen::Index);
template GradientTape<float>::NodeId square(GradientTape<float>&, GradientTape<float>::NodeId);
template GradientTape<double>::NodeId square(GradientTape<double>&, GradientTape<double>::NodeId);
template GradientTape<float>::NodeId sum(GradientTape<float>&, GradientTape<float>::NodeId);
template GradientTape<double>::NodeId sum(GradientTape<double>&, GradientTape<double>::NodeId);

} // namespace dstyle
