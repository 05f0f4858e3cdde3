#include "dstyle/guidance.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace dstyle {

void GuidanceRequest::validate() const {
    if (width <= 0 || height <= 0) {
        throw ShapeError(fmt::format("guidance request has invalid size {}x{}", width, height));
    }
    if (total_timesteps < 2 || timestep < 1 || timestep > total_timesteps) {
        throw ConfigError(fmt::format("timestep {} outside [1, {}]", timestep, total_timesteps));
    }
    if (!(guidance_scale >= 0.0)) {
        throw ConfigError("guidance scale must be non-negative");
    }
    const std::size_t pixels = static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
    auto check = [&](std::size_t got, std::size_t want, const char* name) {
        if (got != want) {
            throw ShapeError(fmt::format("guidance request {} has {} elements, expected {} for {}x{}", name, got,
                                         want, width, height));
        }
    };
    check(image.size(), 3 * pixels, "image");
    check(depth.size(), pixels, "depth");
    check(mask.size(), pixels, "mask");
    check(epsilon.size(), 3 * pixels, "epsilon");
}

std::vector<float> oracle_epsilon(std::span<const float> x_t, int t, std::span<const float> target,
                                  const DiffusionSchedule& sched) {
    if (x_t.size() != target.size()) {
        throw ShapeError(fmt::format("oracle_epsilon: x_t has {} elements, target {}", x_t.size(), target.size()));
    }
    const double abar = sched.alpha_bar(t);
    const double a = std::sqrt(abar);
    const double inv_b = 1.0 / std::sqrt(1.0 - abar);
    std::vector<float> out(x_t.size());
    for (std::size_t i = 0; i < x_t.size(); ++i) {
        out[i] = static_cast<float>((x_t[i] - a * target[i]) * inv_b);
    }
    return out;
}

std::vector<float> depth_shaded_target(const GuidanceRequest& req, const Rgb& near_color, const Rgb& far_color) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t p = 0; p < req.mask.size(); ++p) {
        if (req.mask[p] != 0) {
            lo = std::min(lo, req.depth[p]);
            hi = std::max(hi, req.depth[p]);
        }
    }
    const double span = hi > lo ? static_cast<double>(hi) - lo : 0.0;
    std::vector<float> out = req.image;
    for (std::size_t p = 0; p < req.mask.size(); ++p) {
        if (req.mask[p] == 0) {
            continue;
        }
        const double v = span > 0.0 ? (req.depth[p] - static_cast<double>(lo)) / span : 0.0;
        for (int c = 0; c < 3; ++c) {
            out[3 * p + c] = static_cast<float>(near_color[c] + v * (far_color[c] - near_color[c]));
        }
    }
    return out;
}

std::vector<float> oracle_target(const OracleConfig& cfg, const GuidanceRequest& req) {
    switch (cfg.kind) {
    case OracleConfig::Kind::Constant: {
        std::vector<float> out = req.image;
        for (std::size_t p = 0; p < req.mask.size(); ++p) {
            if (req.mask[p] != 0) {
                std::copy(cfg.color.begin(), cfg.color.end(), out.begin() + static_cast<std::ptrdiff_t>(3 * p));
            }
        }
        return out;
    }
    case OracleConfig::Kind::Image:
        if (cfg.width != req.width || cfg.height != req.height || cfg.image.size() != req.image.size()) {
            throw ShapeError(fmt::format("oracle target is {}x{} but the render is {}x{}", cfg.width, cfg.height,
                                         req.width, req.height));
        }
        return cfg.image;
    case OracleConfig::Kind::DepthShaded:
        return depth_shaded_target(req, cfg.near_color, cfg.far_color);
    }
    throw ConfigError("unknown oracle target kind");
}

GuidanceResponse ZeroBackend::predict_residual(const GuidanceRequest& req) {
    req.validate();
    return {std::vector<float>(req.image.size(), 0.0F), "zero"};
}

GuidanceResponse OracleBackend::predict_residual(const GuidanceRequest& req) {
    req.validate();
    const DiffusionSchedule sched = linear_schedule(req.total_timesteps, cfg_.beta_start, cfg_.beta_end);
    const std::vector<float> target = oracle_target(cfg_, req);
    const std::vector<float> x_t = q_sample(req.image, req.timestep, req.epsilon, sched);
    std::vector<float> eps_hat = oracle_epsilon(x_t, req.timestep, target, sched);
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
        eps_hat[i] -= req.epsilon[i];
    }
    return {std::move(eps_hat), "oracle"};
}

RemoteBackend::RemoteBackend(std::string endpoint, RetryPolicy policy) : client_(std::move(endpoint), policy) {}

GuidanceResponse RemoteBackend::predict_residual(const GuidanceRequest& req) {
    req.validate();
    return response_from_json(client_.post("/v1/predict", request_to_json(req)), req);
}

HealthStatus RemoteBackend::health() {
    const auto start = std::chrono::steady_clock::now();
    const nlohmann::json j = client_.get_once("/v1/health");
    HealthStatus status;
    status.latency_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    try {
        status.ok = j.at("ok").get<bool>();
        status.info = j.value("info", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(fmt::format("{}/v1/health: malformed response ({})", client_.url(), e.what()));
    }
    return status;
}

nlohmann::json request_to_json(const GuidanceRequest& req) {
    return {
        {"prompt", req.prompt},
        {"timestep", req.timestep},
        {"total_timesteps", req.total_timesteps},
        {"guidance_scale", req.guidance_scale},
        {"width", req.width},
        {"height", req.height},
        {"image_b64", encode_floats(req.image)},
        {"depth_b64", encode_floats(req.depth)},
        {"mask_b64", base64_encode(req.mask)},
        {"epsilon_b64", encode_floats(req.epsilon)},
        {"seed", req.seed},
    };
}

GuidanceRequest request_from_json(const nlohmann::json& j) {
    GuidanceRequest req;
    try {
        req.prompt = j.at("prompt").get<std::string>();
        req.timestep = j.at("timestep").get<int>();
        req.total_timesteps = j.at("total_timesteps").get<int>();
        req.guidance_scale = j.at("guidance_scale").get<double>();
        req.width = j.at("width").get<int>();
        req.height = j.at("height").get<int>();
        req.seed = j.at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(fmt::format("malformed guidance request: {}", e.what()));
    }
    if (req.width <= 0 || req.height <= 0) {
        throw ShapeError(fmt::format("guidance request has invalid size {}x{}", req.width, req.height));
    }
    const std::size_t pixels = static_cast<std::size_t>(req.width) * static_cast<std::size_t>(req.height);
    req.image = decode_floats(j.at("image_b64").get<std::string>(), 3 * pixels, "image_b64");
    req.depth = decode_floats(j.at("depth_b64").get<std::string>(), pixels, "depth_b64");
    req.mask = base64_decode(j.at("mask_b64").get<std::string>());
    req.epsilon = decode_floats(j.at("epsilon_b64").get<std::string>(), 3 * pixels, "epsilon_b64");
    req.validate();
    return req;
}

nlohmann::json response_to_json(const GuidanceResponse& res) {
    return {{"residual_b64", encode_floats(res.residual)}, {"backend_info", res.backend_info}};
}

GuidanceResponse response_from_json(const nlohmann::json& j, const GuidanceRequest& req) {
    GuidanceResponse res;
    try {
        res.residual = decode_floats(j.at("residual_b64").get<std::string>(), req.image.size(), "residual_b64");
        res.backend_info = j.value("backend_info", std::string{});
    } catch (const nlohmann::json::exception& e) {
        throw BackendError(fmt::format("malformed guidance response: {}", e.what()));
    }
    if (!std::all_of(res.residual.begin(), res.residual.end(), [](float v) { return std::isfinite(v); })) {
        throw BackendError("guidance response contains non-finite residual values");
    }
    return res;
}

HealthStatus health_check(GuidanceBackend& backend) { return backend.health(); }

} // namespace dstyle
