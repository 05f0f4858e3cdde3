#include "dstyle/sds.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

namespace dstyle {

template <class T>
GuidanceRequest make_guidance_request(const RenderedView<T>& view, const std::string& prompt, int timestep,
                                      int total_timesteps, double guidance_scale, std::vector<float> epsilon,
                                      std::uint64_t seed) {
    GuidanceRequest req;
    req.prompt = prompt;
    req.timestep = timestep;
    req.total_timesteps = total_timesteps;
    req.guidance_scale = guidance_scale;
    req.width = view.width;
    req.height = view.height;
    req.image.assign(view.image.begin(), view.image.end());
    req.depth = view.depth;
    req.mask = view.mask;
    req.epsilon = std::move(epsilon);
    req.seed = seed;
    return req;
}

template <class T>
SdsGradient<T> d_sds_step(const RenderedView<T>& view, GradientTape<T>& tape, const std::string& prompt,
                          GuidanceBackend& backend, const DiffusionSchedule& sched, Pcg32& rng,
                          const SdsOptions& opts) {
    SdsGradient<T> out;
    out.timestep = sample_timestep(rng, sched);
    std::vector<float> eps = gaussian_noise(view.image.size(), rng);
    const std::uint64_t seed = rng.next_u64();
    const GuidanceRequest req =
        make_guidance_request(view, prompt, out.timestep, sched.steps(), opts.guidance_scale, std::move(eps), seed);
    GuidanceResponse res = backend.predict_residual(req);
    if (res.residual.size() != view.image.size()) {
        throw ShapeError(fmt::format("backend residual has {} elements, render has {}", res.residual.size(),
                                     view.image.size()));
    }
    out.weight = sds_weight(out.timestep, sched, opts.weighting);
    Vector<T> cotangent(static_cast<Eigen::Index>(res.residual.size()));
    for (Eigen::Index i = 0; i < cotangent.size(); ++i) {
        cotangent[i] = static_cast<T>(out.weight * res.residual[static_cast<std::size_t>(i)]);
    }
    out.residual = std::move(res.residual);
    out.theta_grad = render_vjp(tape, cotangent);
    return out;
}

template SdsGradient<float> d_sds_step(const RenderedView<float>&, GradientTape<float>&, const std::string&,
                                       GuidanceBackend&, const DiffusionSchedule&, Pcg32&, const SdsOptions&);
template SdsGradient<double> d_sds_step(const RenderedView<double>&, GradientTape<double>&, const std::string&,
                                        GuidanceBackend&, const DiffusionSchedule&, Pcg32&, const SdsOptions&);
template GuidanceRequest make_guidance_request(const RenderedView<float>&, const std::string&, int, int, double,
                                               std::vector<float>, std::uint64_t);
template GuidanceRequest make_guidance_request(const RenderedView<double>&, const std::string&, int, int, double,
                                               std::vector<float>, std::uint64_t);

} // namespace dstyle
