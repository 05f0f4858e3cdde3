#pragma once

#include "dstyle/tensor.hpp"

#include <functional>
#include <vector>

namespace dstyle {

/// Reverse-mode tape over flat vector-valued nodes.
///
/// Each node stores its primal value and a backward function that receives
/// the node's adjoint and pushes contributions to its parents (via
/// accumulate) or straight into the parameter gradient. Ops are coarse
/// (a whole MLP batch or a whole rendered image per node), so the closure
/// overhead is negligible.
template <class T>
class GradientTape {
public:
    using Vec = Vector<T>;
    using NodeId = std::size_t;
    using BackwardFn = std::function<void(const Vec& adjoint, GradientTape& tape)>;

    explicit GradientTape(Eigen::Index param_count) : param_count_(param_count) {}

    NodeId push(Vec value, BackwardFn backward = {});

    const Vec& value(NodeId id) const { return nodes_.at(id).value; }
    std::size_t size() const { return nodes_.size(); }
    Eigen::Index param_count() const { return param_count_; }
    NodeId last() const { return nodes_.size() - 1; }

    /// Only valid inside a backward sweep.
    void accumulate(NodeId id, const Eigen::Ref<const Vec>& adjoint);
    Vec& param_grad() { return param_grad_; }

    /// Reverse sweep from `output` seeded with `upstream`; returns dL/dtheta.
    /// The tape may be swept any number of times.
    Vec backward(NodeId output, const Vec& upstream);

private:
    struct Node {
        Vec value;
        BackwardFn backward;
    };
    Eigen::Index param_count_;
    std::vector<Node> nodes_;
    std::vector<Vec> adjoints_;
    Vec param_grad_;
};

/// theta[offset, offset + count) as a node; its adjoint flows into the
/// parameter gradient.
template <class T>
typename GradientTape<T>::NodeId param_slice(GradientTape<T>& tape, const Vector<T>& theta, Eigen::Index offset,
                                             Eigen::Index count);

template <class T>
typename GradientTape<T>::NodeId square(GradientTape<T>& tape, typename GradientTape<T>::NodeId x);

template <class T>
typename GradientTape<T>::NodeId sum(GradientTape<T>& tape, typename GradientTape<T>::NodeId x);

} // namespace dstyle
