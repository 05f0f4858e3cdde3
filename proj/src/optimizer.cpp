#include "dstyle/optimizer.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>

namespace dstyle {

namespace {

constexpr std::uint64_t kTrainStream = 0x7a11ab1e5eed0002ULL;
constexpr char kMagic[4] = {'3', 'D', 'S', 'D'};
constexpr std::uint32_t kCheckpointVersion = 1;

template <class T>
bool all_finite(const Vector<T>& v) {
    return v.array().isFinite().all();
}

} // namespace

template <class T>
AdamwState<T> AdamwState<T>::zeros(Eigen::Index n, const AdamwConfig& cfg) {
    return AdamwState<T>{cfg, Vector<T>::Zero(n), Vector<T>::Zero(n), 0};
}

template <class T>
void adamw_step(AdamwState<T>& state, Vector<T>& theta, const Vector<T>& grad, double lr) {
    if (grad.size() != theta.size() || state.m.size() != theta.size() || state.v.size() != theta.size()) {
        throw ShapeError(fmt::format("adamw_step: theta {}, grad {}, moments {}", theta.size(), grad.size(),
                                     state.m.size()));
    }
    if (!all_finite(grad)) {
        Eigen::Index bad = 0;
        for (; bad < grad.size() && std::isfinite(grad[bad]); ++bad) {
        }
        throw NumericalError(
            fmt::format("non-finite gradient at step {} (first bad index {})", state.step + 1, bad));
    }
    const auto& c = state.config;
    ++state.step;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));
    const T decay = static_cast<T>(1.0 - lr * c.weight_decay);
    const T b1 = static_cast<T>(c.beta1);
    const T b2 = static_cast<T>(c.beta2);
    const T step_size = static_cast<T>(lr / bc1);
    const T inv_sqrt_bc2 = static_cast<T>(1.0 / std::sqrt(bc2));
    const T eps = static_cast<T>(c.eps);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const T g = grad[i];
        theta[i] *= decay;
        state.m[i] = b1 * state.m[i] + (T(1) - b1) * g;
        state.v[i] = b2 * state.v[i] + (T(1) - b2) * g * g;
        theta[i] -= step_size * state.m[i] / (std::sqrt(state.v[i]) * inv_sqrt_bc2 + eps);
    }
}

template <class T>
double clip_grad_norm(Vector<T>& grad, double max_norm) {
    double sq = 0.0;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
        sq += static_cast<double>(grad[i]) * grad[i];
    }
    const double norm = std::sqrt(sq);
    if (norm > max_norm) {
        grad *= static_cast<T>(max_norm / norm);
    }
    return norm;
}

void TrainConfig::validate() const {
    auto fail = [](const char* field, const std::string& why) {
        throw ConfigError(fmt::format("{}: {}", field, why));
    };
    if (iterations < 0) fail("iterations", "must be >= 0");
    if (!(lr0 > 0.0)) fail("lr0", "must be > 0");
    if (!(lr_decay > 0.0 && lr_decay <= 1.0)) fail("lr_decay", "must be in (0, 1]");
    if (decay_every < 1) fail("decay_every", "must be >= 1");
    if (!(guidance_scale >= 0.0)) fail("guidance_scale", "must be >= 0");
    if (resolution <= 0 || resolution % 8 != 0) fail("resolution", "must be a positive multiple of 8");
    if (checkpoint_every < 0) fail("checkpoint_every", "must be >= 0");
    if (!(clip_norm > 0.0)) fail("clip_norm", "must be > 0");
    if (diffusion_steps < 2) fail("diffusion_steps", "must be >= 2");
    if (!(adamw.beta1 >= 0.0 && adamw.beta1 < 1.0 && adamw.beta2 >= 0.0 && adamw.beta2 < 1.0)) {
        fail("adamw", "betas must be in [0, 1)");
    }
    views.validate();
    shading.validate();
    linear_schedule(diffusion_steps, beta_start, beta_end);
}

double lr_at(int iter, const TrainConfig& cfg) {
    if (iter < 0) {
        throw std::out_of_range("lr_at: negative iteration");
    }
    return cfg.lr0 * std::pow(cfg.lr_decay, iter / cfg.decay_every);
}

nlohmann::json to_json(const IterationRecord& rec) {
    return {{"iter", rec.iter},           {"lr", rec.lr},
            {"t", rec.timestep},          {"residual_l2", rec.residual_l2},
            {"grad_norm", rec.grad_norm}, {"wall_ms", rec.wall_ms}};
}

TrainResult train(const Mesh& mesh, const std::string& prompt, const TrainConfig& cfg, GuidanceBackend& backend,
                  const TrainCallbacks& callbacks) {
    cfg.validate();
    const FieldsLayout layout(cfg.fields);
    TrainResult result{AppearanceFields<float>::initialized(layout, cfg.seed), {}};
    if (cfg.iterations == 0) {
        return result;
    }
    const Bvh bvh = build_bvh(mesh);
    const DiffusionSchedule sched = linear_schedule(cfg.diffusion_steps, cfg.beta_start, cfg.beta_end);
    ViewSamplerConfig views = cfg.views;
    views.width = cfg.resolution;
    views.height = cfg.resolution;
    ShadingConfig shading = cfg.shading;
    shading.background_mode = BackgroundMode::RandomGray;
    const SdsOptions sds_opts{cfg.guidance_scale, cfg.weighting};

    Pcg32 rng(cfg.seed, kTrainStream);
    auto state = AdamwState<float>::zeros(layout.param_count, cfg.adamw);
    result.report.reserve(static_cast<std::size_t>(cfg.iterations));

    for (int iter = 0; iter < cfg.iterations; ++iter) {
        const auto start = std::chrono::steady_clock::now();
        const Camera cam = sample_camera(views, rng);
        RenderResult<float> rendered = render_view(mesh, bvh, result.fields, cam, shading, &rng);
        SdsGradient<float> sds = d_sds_step(rendered.view, rendered.tape, prompt, backend, sched, rng, sds_opts);

        IterationRecord rec;
        rec.iter = iter;
        rec.lr = lr_at(iter, cfg);
        rec.timestep = sds.timestep;
        double sq = 0.0;
        for (float r : sds.residual) {
            sq += static_cast<double>(r) * r;
        }
        rec.residual_l2 = std::sqrt(sq);
        if (!all_finite(sds.theta_grad)) {
            throw NumericalError(fmt::format("non-finite gradient at iteration {} (t={})", iter, sds.timestep));
        }
        rec.grad_norm = clip_grad_norm(sds.theta_grad, cfg.clip_norm);
        adamw_step(state, result.fields.theta, sds.theta_grad, rec.lr);
        if (!all_finite(result.fields.theta)) {
            throw NumericalError(fmt::format("non-finite parameters after iteration {}", iter));
        }
        rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
        result.report.push_back(rec);
        if (callbacks.on_iteration) {
            callbacks.on_iteration(rec);
        }
        if (cfg.checkpoint_every > 0 && (iter + 1) % cfg.checkpoint_every == 0 && callbacks.on_checkpoint) {
            callbacks.on_checkpoint(iter + 1, result.fields);
        }
    }
    return result;
}

namespace {

std::vector<const MlpLayout*> nets(const FieldsLayout& layout) {
    return {&layout.normal, &layout.svbrdf, &layout.lighting};
}

std::string widths_string(const std::vector<std::vector<std::uint32_t>>& shapes) {
    std::string out;
    for (const auto& w : shapes) {
        out += fmt::format("[{}]", fmt::join(w, ","));
    }
    return out;
}

} // namespace

void save_checkpoint(const AppearanceFields<float>& fields, const std::filesystem::path& path) {
    std::string buf(kMagic, sizeof kMagic);
    auto put_u32 = [&buf](std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) {
            b[i] = static_cast<char>((v >> (8 * i)) & 0xFFU);
        }
        buf.append(b, 4);
    };
    put_u32(kCheckpointVersion);
    for (const MlpLayout* net : nets(fields.layout)) {
        put_u32(static_cast<std::uint32_t>(net->widths.size()));
        for (int w : net->widths) {
            put_u32(static_cast<std::uint32_t>(w));
        }
    }
    const std::size_t header = buf.size();
    buf.resize(header + sizeof(float) * static_cast<std::size_t>(fields.theta.size()));
    std::memcpy(buf.data() + header, fields.theta.data(), sizeof(float) * static_cast<std::size_t>(fields.theta.size()));

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ConfigError(fmt::format("cannot write checkpoint {}", path.string()));
    }
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw ConfigError(fmt::format("failed writing checkpoint {}", path.string()));
    }
}

AppearanceFields<float> load_checkpoint(const std::filesystem::path& path, const FieldsLayout& layout) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError(fmt::format("cannot open checkpoint {}", path.string()));
    }
    const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    std::size_t pos = 0;
    auto get_u32 = [&]() {
        if (pos + 4 > buf.size()) {
            throw FormatError(fmt::format("checkpoint {} is truncated in its header", path.string()));
        }
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        }
        pos += 4;
        return v;
    };
    if (buf.size() < 4 || std::memcmp(buf.data(), kMagic, 4) != 0) {
        throw FormatError(fmt::format("{} is not a checkpoint (bad magic)", path.string()));
    }
    pos = 4;
    if (const std::uint32_t version = get_u32(); version != kCheckpointVersion) {
        throw FormatError(fmt::format("checkpoint {} has version {}, expected {}", path.string(), version,
                                      kCheckpointVersion));
    }
    std::vector<std::vector<std::uint32_t>> stored;
    std::vector<std::vector<std::uint32_t>> expected;
    for (const MlpLayout* net : nets(layout)) {
        const std::uint32_t count = get_u32();
        if (count > 64) {
            throw FormatError(fmt::format("checkpoint {} has an implausible layer count {}", path.string(), count));
        }
        std::vector<std::uint32_t> w(count);
        for (auto& x : w) {
            x = get_u32();
        }
        stored.push_back(std::move(w));
        expected.emplace_back(net->widths.begin(), net->widths.end());
    }
    if (stored != expected) {
        throw ShapeError(fmt::format("checkpoint {} has network widths {} but the engine expects {}",
                                     path.string(), widths_string(stored), widths_string(expected)));
    }
    const std::size_t want = sizeof(float) * static_cast<std::size_t>(layout.param_count);
    if (buf.size() - pos != want) {
        throw FormatError(fmt::format("checkpoint {} has {} parameter bytes, expected {}", path.string(),
                                      buf.size() - pos, want));
    }
    AppearanceFields<float> fields{layout, Vector<float>(layout.param_count)};
    std::memcpy(fields.theta.data(), buf.data() + pos, want);
    return fields;
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ShapeError("pearson: inputs differ in length");
    }
    const double n = static_cast<double>(a.size());
    if (a.empty()) {
        return 0.0;
    }
    double ma = 0.0;
    double mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0;
    double saa = 0.0;
    double sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) {
        return 0.0;
    }
    return sab / std::sqrt(saa * sbb);
}

OracleFit oracle_fit(const RenderedView<float>& view, const OracleConfig& oracle) {
    GuidanceRequest req;
    req.width = view.width;
    req.height = view.height;
    req.image.assign(view.image.begin(), view.image.end());
    req.depth = view.depth;
    req.mask = view.mask;
    const std::vector<float> target = oracle_target(oracle, req);

    OracleFit fit;
    std::vector<double> luminance;
    std::vector<double> depth;
    double sq = 0.0;
    for (std::size_t p = 0; p < view.mask.size(); ++p) {
        if (view.mask[p] == 0) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = static_cast<double>(view.image[3 * p + c]) - target[3 * p + c];
            sq += d * d;
        }
        luminance.push_back(0.2126 * view.image[3 * p] + 0.7152 * view.image[3 * p + 1] +
                            0.0722 * view.image[3 * p + 2]);
        depth.push_back(view.depth[p]);
    }
    fit.pixels = luminance.size();
    fit.mse = fit.pixels ? sq / (3.0 * static_cast<double>(fit.pixels)) : 0.0;
    fit.depth_correlation = pearson(luminance, depth);
    return fit;
}

template struct AdamwState<float>;
template struct AdamwState<double>;
template void adamw_step(AdamwState<float>&, Vector<float>&, const Vector<float>&, double);
template void adamw_step(AdamwState<double>&, Vector<double>&, const Vector<double>&, double);
template double clip_grad_norm(Vector<float>&, double);
template double clip_grad_norm(Vector<double>&, double);

} // namespace dstyle
