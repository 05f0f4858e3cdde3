#pragma once

// Central-difference gradient oracle used by the field and render tests.

#include "dstyle/rng.hpp"
#include "dstyle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace dstyle::test {

struct FdReport {
    int checked = 0;
    double max_rel_error = 0.0;
};

/// Compares `grad` against central differences of `loss` (evaluated in
/// double) at `count` coordinates of [begin, end) drawn from those whose
/// derivative is at least `floor_fraction` of the largest |grad| entry there.
/// Coordinates with negligible gradient carry no information about the
/// reverse sweep and would turn round-off into huge relative errors.
inline FdReport fd_check(const std::function<double(const Vector<double>&)>& loss, const Vector<double>& theta,
                         const Vector<double>& grad, int count, double h, Pcg32& rng,
                         double floor_fraction = 1e-3, Eigen::Index begin = 0, Eigen::Index end = -1) {
    if (end < 0) {
        end = grad.size();
    }
    const double scale = grad.segment(begin, end - begin).cwiseAbs().maxCoeff();
    std::vector<Eigen::Index> candidates;
    for (Eigen::Index i = begin; i < end; ++i) {
        if (std::abs(grad[i]) >= floor_fraction * scale) {
            candidates.push_back(i);
        }
    }
    FdReport report;
    Vector<double> probe = theta;
    for (int k = 0; k < count && !candidates.empty(); ++k) {
        const std::size_t pick = rng.bounded(static_cast<std::uint32_t>(candidates.size()));
        const Eigen::Index i = candidates[pick];
        candidates.erase(candidates.begin() + static_cast<std::ptrdiff_t>(pick));
        probe[i] = theta[i] + h;
        const double up = loss(probe);
        probe[i] = theta[i] - h;
        const double down = loss(probe);
        probe[i] = theta[i];
        const double fd = (up - down) / (2.0 * h);
        const double rel = std::abs(fd - grad[i]) / std::max(std::abs(fd), 1e-12);
        report.max_rel_error = std::max(report.max_rel_error, rel);
        ++report.checked;
    }
    return report;
}

} // namespace dstyle::test
