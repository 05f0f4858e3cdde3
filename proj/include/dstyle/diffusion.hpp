#pragma once

#include "dstyle/rng.hpp"

#include <span>
#include <vector>

namespace dstyle {

/// DDPM variance schedule. Steps are 1-based: beta(1) ... beta(T).
class DiffusionSchedule {
public:
    DiffusionSchedule(std::vector<double> betas);

    int steps() const { return static_cast<int>(beta_.size()); }
    double beta(int t) const { return beta_.at(index(t)); }
    double alpha(int t) const { return alpha_.at(index(t)); }
    double alpha_bar(int t) const { return alpha_bar_.at(index(t)); }

private:
    std::size_t index(int t) const;

    std::vector<double> beta_;
    std::vector<double> alpha_;
    std::vector<double> alpha_bar_;
};

/// beta linearly spaced from beta_start (t = 1) to beta_end (t = T).
DiffusionSchedule linear_schedule(int steps, double beta_start = 1e-4, double beta_end = 0.02);

/// x_t = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps
std::vector<float> q_sample(std::span<const float> x0, int t, std::span<const float> eps,
                            const DiffusionSchedule& sched);

/// One ancestral step with Sigma = beta_t I:
/// x_{t-1} = (x_t - (1 - alpha_t) / sqrt(1 - abar_t) eps_hat) / sqrt(alpha_t) + sqrt(beta_t) z,
/// z ~ N(0, I) for t > 1 and z = 0 at t = 1.
std::vector<float> reverse_step(std::span<const float> x_t, std::span<const float> eps_hat, int t,
                                const DiffusionSchedule& sched, Pcg32& rng);

/// eps_hat = eps_cond + s (eps_cond - eps_uncond)
std::vector<float> cfg_combine(std::span<const float> eps_cond, std::span<const float> eps_uncond, double scale);

enum class SdsWeighting {
    One,
    OneMinusAlphaBar,
};

double sds_weight(int t, const DiffusionSchedule& sched, SdsWeighting kind = SdsWeighting::OneMinusAlphaBar);

/// Uniform integer in [ceil(0.02 T), floor(0.98 T)].
int sample_timestep(Pcg32& rng, const DiffusionSchedule& sched);

/// Standard normal buffer drawn in order from `rng`.
std::vector<float> gaussian_noise(std::size_t count, Pcg32& rng);

} // namespace dstyle
