#pragma once

#include "dstyle/diffusion.hpp"
#include "dstyle/wire.hpp"

#include <array>
#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace dstyle {

/// Everything a noise predictor needs for one score-distillation step.
/// Buffers are row-major from the top-left; image and epsilon are RGB.
struct GuidanceRequest {
    std::string prompt;
    int timestep = 1;
    int total_timesteps = 1000;
    double guidance_scale = 10.0;
    int width = 0;
    int height = 0;
    std::vector<float> image;
    std::vector<float> depth;
    std::vector<std::uint8_t> mask;
    std::vector<float> epsilon;
    std::uint64_t seed = 0;

    /// Throws ShapeError / ConfigError.
    void validate() const;
};

/// residual = eps_hat - eps, in pixel space with the request image's shape.
struct GuidanceResponse {
    std::vector<float> residual;
    std::string backend_info;
};

struct HealthStatus {
    bool ok = false;
    std::string info;
    double latency_ms = 0.0;
};

class GuidanceBackend {
public:
    virtual ~GuidanceBackend() = default;

    virtual GuidanceResponse predict_residual(const GuidanceRequest& req) = 0;
    /// Throws BackendError when the backend cannot be reached.
    virtual HealthStatus health() = 0;
};

/// eps_hat = (x_t - sqrt(abar_t) x*) / sqrt(1 - abar_t): the noise that
/// names x* as the clean image of x_t.
std::vector<float> oracle_epsilon(std::span<const float> x_t, int t, std::span<const float> target,
                                  const DiffusionSchedule& sched);

using Rgb = std::array<float, 3>;

/// Target of the analytic predictor.
struct OracleConfig {
    enum class Kind {
        Constant,    // `color` on every masked pixel
        Image,       // `image` (width x height RGB) everywhere
        DepthShaded, // lerp(near_color, far_color, v), v = masked depth normalized to [0, 1]
    };
    Kind kind = Kind::Constant;
    Rgb color{0.8F, 0.15F, 0.1F};
    std::vector<float> image;
    int width = 0;
    int height = 0;
    Rgb near_color{0.1F, 0.1F, 0.3F};
    Rgb far_color{0.9F, 0.6F, 0.7F};
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

/// Target for one request. Pixels outside the mask keep the request image
/// for Constant and DepthShaded, so they carry no residual.
std::vector<float> oracle_target(const OracleConfig& cfg, const GuidanceRequest& req);

/// Colormap of normalized masked depth (min -> 0, max -> 1; constant depth -> 0).
std::vector<float> depth_shaded_target(const GuidanceRequest& req, const Rgb& near_color, const Rgb& far_color);

class ZeroBackend final : public GuidanceBackend {
public:
    GuidanceResponse predict_residual(const GuidanceRequest& req) override;
    HealthStatus health() override { return {true, "zero", 0.0}; }
};

/// Noises the clean render in-core with req.epsilon and answers with the
/// oracle noise for its target. A pure function of the request; the
/// guidance scale is ignored because the oracle has no unconditional branch.
class OracleBackend final : public GuidanceBackend {
public:
    explicit OracleBackend(OracleConfig cfg) : cfg_(std::move(cfg)) {}

    GuidanceResponse predict_residual(const GuidanceRequest& req) override;
    HealthStatus health() override { return {true, "oracle", 0.0}; }

    const OracleConfig& config() const { return cfg_; }

private:
    OracleConfig cfg_;
};

/// Client for the guidance service wire protocol.
class RemoteBackend final : public GuidanceBackend {
public:
    explicit RemoteBackend(std::string endpoint, RetryPolicy policy = {});

    GuidanceResponse predict_residual(const GuidanceRequest& req) override;
    HealthStatus health() override;

private:
    JsonClient client_;
};

nlohmann::json request_to_json(const GuidanceRequest& req);
GuidanceRequest request_from_json(const nlohmann::json& j);
nlohmann::json response_to_json(const GuidanceResponse& res);
/// Checks the residual against the request shape and for finiteness.
GuidanceResponse response_from_json(const nlohmann::json& j, const GuidanceRequest& req);

HealthStatus health_check(GuidanceBackend& backend);

} // namespace dstyle
