#pragma once

#include "dstyle/camera.hpp"
#include "dstyle/fields.hpp"
#include "dstyle/guidance.hpp"
#include "dstyle/render.hpp"
#include "dstyle/sds.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dstyle {

struct AdamwConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

template <class T>
struct AdamwState {
    AdamwConfig config;
    Vector<T> m;
    Vector<T> v;
    long step = 0;

    static AdamwState zeros(Eigen::Index n, const AdamwConfig& cfg = {});
};

/// Decoupled decay first (theta *= 1 - lr * wd), then the bias-corrected
/// Adam update. Throws NumericalError on a non-finite gradient and
/// ShapeError on size mismatch.
template <class T>
void adamw_step(AdamwState<T>& state, Vector<T>& theta, const Vector<T>& grad, double lr);

/// Scales grad in place so its L2 norm is at most max_norm; returns the norm before clipping.
template <class T>
double clip_grad_norm(Vector<T>& grad, double max_norm);

struct TrainConfig {
    int iterations = 3000;
    double lr0 = 5e-4;
    double lr_decay = 0.7;
    int decay_every = 500;
    double guidance_scale = 10.0;
    int resolution = 64;
    std::uint64_t seed = 0;
    int checkpoint_every = 0; // 0 disables periodic checkpoints
    double clip_norm = 10.0;
    int diffusion_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    SdsWeighting weighting = SdsWeighting::OneMinusAlphaBar;
    AdamwConfig adamw;
    ViewSamplerConfig views;
    ShadingConfig shading;
    FieldsConfig fields;

    /// Throws ConfigError naming the offending field.
    void validate() const;
};

/// lr0 * lr_decay ^ floor(iter / decay_every)
double lr_at(int iter, const TrainConfig& cfg);

struct IterationRecord {
    int iter = 0;
    double lr = 0.0;
    int timestep = 0;
    double residual_l2 = 0.0;
    double grad_norm = 0.0; // before clipping
    double wall_ms = 0.0;
};

nlohmann::json to_json(const IterationRecord& rec);

struct TrainCallbacks {
    std::function<void(const IterationRecord&)> on_iteration;
    /// Called after iterations that are multiples of checkpoint_every.
    std::function<void(int iter, const AppearanceFields<float>&)> on_checkpoint;
};

struct TrainResult {
    AppearanceFields<float> fields;
    std::vector<IterationRecord> report;
};

/// Fields initialization seed and the stream of the loop generator are
/// both derived from cfg.seed; everything else is deterministic.
TrainResult train(const Mesh& mesh, const std::string& prompt, const TrainConfig& cfg, GuidanceBackend& backend,
                  const TrainCallbacks& callbacks = {});

/// "3DSD", version, three (layer count, widths) headers, then theta as
/// little-endian float32.
void save_checkpoint(const AppearanceFields<float>& fields, const std::filesystem::path& path);
/// Throws FormatError on bad magic, version or length and ShapeError when
/// the stored widths differ from `layout`.
AppearanceFields<float> load_checkpoint(const std::filesystem::path& path, const FieldsLayout& layout);

/// How well a render matches an oracle target, over masked pixels.
struct OracleFit {
    double mse = 0.0;
    double depth_correlation = 0.0; // Pearson r of luminance vs depth
    std::size_t pixels = 0;
};

OracleFit oracle_fit(const RenderedView<float>& view, const OracleConfig& oracle);

/// Pearson correlation; 0 when either input is constant.
double pearson(std::span<const double> a, std::span<const double> b);

} // namespace dstyle
