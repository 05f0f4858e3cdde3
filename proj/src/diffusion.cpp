#include "dstyle/diffusion.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <cmath>

namespace dstyle {

namespace {

void check_same_size(std::size_t a, std::size_t b, const char* what) {
    if (a != b) {
        throw ShapeError(fmt::format("{}: buffers have {} and {} elements", what, a, b));
    }
}

} // namespace

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    if (beta_.size() < 2) {
        throw ConfigError("diffusion schedule needs at least 2 steps");
    }
    double prev = 0.0;
    double bar = 1.0;
    alpha_.reserve(beta_.size());
    alpha_bar_.reserve(beta_.size());
    for (double b : beta_) {
        if (!(b > prev && b < 1.0)) {
            throw ConfigError("betas must be strictly increasing inside (0, 1)");
        }
        prev = b;
        alpha_.push_back(1.0 - b);
        bar *= 1.0 - b;
        alpha_bar_.push_back(bar);
    }
}

std::size_t DiffusionSchedule::index(int t) const {
    if (t < 1 || t > steps()) {
        throw std::out_of_range(fmt::format("timestep {} outside [1, {}]", t, steps()));
    }
    return static_cast<std::size_t>(t - 1);
}

DiffusionSchedule linear_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 2 || !(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
        throw ConfigError(
            fmt::format("invalid linear schedule: T={} beta in [{}, {}]", steps, beta_start, beta_end));
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    for (int i = 0; i < steps; ++i) {
        betas[static_cast<std::size_t>(i)] = beta_start + (beta_end - beta_start) * i / (steps - 1);
    }
    return DiffusionSchedule(std::move(betas));
}

std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps,
                            const DiffusionSchedule& sched) {
    check_same_size(x0.size(), eps.size(), "q_sample");
    const double abar = sched.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double b = std::sqrt(1.0 - abar);
    std::vector<float> out(x0.size());
    for (std::size_t i = 0; i < x0.size(); ++i) {
        out[i] = static_cast<float>(a * x0[i] + b * eps[i]);
    }
    return out;
}

std::vector<float> reverse_step(std::span<const float> x_t, std::span<const float> eps_hat, int t,
                                const DiffusionSchedule& sched, Pcg32& rng) {
    check_same_size(x_t.size(), eps_hat.size(), "reverse_step");
    const double alpha = sched.alpha(t);
    const double coef = (1.0 - alpha) / std::sqrt(1.0 - sched.alpha_bar(t));
    const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
    const double sigma = t > 1 ? std::sqrt(sched.beta(t)) : 0.0;
    std::vector<float> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        double v = (x_t[i] - coef * eps_hat[i]) * inv_sqrt_alpha;
        if (t > 1) {
            v += sigma * rng.normal();
        }
        out[i] = static_cast<float>(v);
    }
    return out;
}

std::vector<float> cfg_combine(std::span<const float> eps_cond, std::span<const float> eps_uncond, double scale) {
    check_same_size(eps_cond.size(), eps_uncond.size(), "cfg_combine");
    if (!(scale >= 0.0)) {
        throw ConfigError("guidance scale must be non-negative");
    }
    std::vector<float> out(eps_cond.size());
    for (std::size_t i = 0; i < eps_cond.size(); ++i) {
        out[i] = scale == 0.0 ? eps_cond[i]
                              : static_cast<float>(eps_cond[i] + scale * (double(eps_cond[i]) - eps_uncond[i]));
    }
    return out;
}

double sds_weight(int t, const DiffusionSchedule& sched, SdsWeighting kind) {
    const double abar = sched.alpha_bar(t);
    return kind == SdsWeighting::One ? 1.0 : 1.0 - abar;
}

int sample_timestep(Pcg32& rng, const DiffusionSchedule& sched) {
    const int steps = sched.steps();
    const int lo = std::max(1, static_cast<int>(std::ceil(0.02 * steps)));
    const int hi = std::max(lo, static_cast<int>(std::floor(0.98 * steps)));
    return lo + static_cast<int>(rng.bounded(static_cast<std::uint32_t>(hi - lo + 1)));
}

std::vector<float> gaussian_noise(std::size_t count, Pcg32& rng) {
    std::vector<float> out(count);
    for (auto& v : out) {
        v = static_cast<float>(rng.normal());
    }
    return out;
}

} // namespace dstyle
