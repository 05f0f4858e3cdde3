#pragma once

#include "dstyle/diffusion.hpp"
#include "dstyle/guidance.hpp"
#include "dstyle/render.hpp"

#include <string>

namespace dstyle {

struct SdsOptions {
    double guidance_scale = 10.0;
    SdsWeighting weighting = SdsWeighting::OneMinusAlphaBar;
};

template <class T>
struct SdsGradient {
    int timestep = 0;
    double weight = 0.0;
    std::vector<float> residual; // eps_hat - eps, H*W*3
    Vector<T> theta_grad;        // render_vjp(tape, weight * residual)
};

/// Draws t, then eps, then the request seed from `rng`, asks the backend for
/// the residual given (x, d, mask, prompt, t, s, eps) and pulls
/// w(t) * residual back through the render. The backend is treated as a
/// constant: no gradient flows through the predictor.
template <class T>
SdsGradient<T> d_sds_step(const RenderedView<T>& view, GradientTape<T>& tape, const std::string& prompt,
                          GuidanceBackend& backend, const DiffusionSchedule& sched, Pcg32& rng,
                          const SdsOptions& opts = {});

/// The request d_sds_step sends for a view, timestep and noise.
template <class T>
GuidanceRequest make_guidance_request(const RenderedView<T>& view, const std::string& prompt, int timestep,
                                      int total_timesteps, double guidance_scale, std::vector<float> epsilon,
                                      std::uint64_t seed);

} // namespace dstyle
