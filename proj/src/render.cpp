#include "dstyle/render.hpp"

#include "dstyle/errors.hpp"
#include "dstyle/parallel.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <memory>
#include <optional>

namespace dstyle {

void ShadingConfig::validate() const {
    if (quadrature_count < 8) {
        throw ConfigError(fmt::format("quadrature_count must be >= 8, got {}", quadrature_count));
    }
    if (shard_size < 1) {
        throw ConfigError("shard_size must be positive");
    }
    if (!(gray_range[0] >= 0.0 && gray_range[0] <= gray_range[1] && gray_range[1] <= 1.0)) {
        throw ConfigError("gray_range must satisfy 0 <= lo <= hi <= 1");
    }
}

template <class T>
std::size_t RenderedView<T>::hit_count() const {
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

double depth_at(const Hit& hit, const Camera& cam, PixelCoord px) {
    return (hit.point - cam.position).norm() * center_ray_cosine(cam, px);
}

double depth_by_projection(const Hit& hit, const Camera& cam) {
    return (hit.point - cam.position).dot(cam.optical_axis());
}

namespace {

// Fixed number of reduction groups: results do not depend on thread count.
constexpr std::size_t kReductionGroups = 16;

template <class T>
struct RenderState {
    AppearanceFields<T> fields;
    HemisphereQuadrature quad;
    bool clamp = true;
    unsigned threads = 0;
    std::vector<std::uint32_t> hit_pixels;
    std::vector<ShadeInputs<T>> inputs;
    std::vector<Matrix<T>> colors; // unclamped, per shard
    std::vector<std::optional<ShadeRecord<T>>> records;

    RenderState(const AppearanceFields<T>& f, int quad_count) : fields(f), quad(quad_count) {}
};

template <class T>
std::size_t record_bytes_per_hit(const FieldsLayout& lay, int quad_count) {
    auto mlp_floats = [](const MlpLayout& m) {
        std::size_t n = 0;
        for (int l = 0; l + 1 < static_cast<int>(m.widths.size()); ++l) {
            n += static_cast<std::size_t>(m.widths[static_cast<std::size_t>(l)]);
        }
        return n;
    };
    const std::size_t per_dir = mlp_floats(lay.lighting) + 9;
    const std::size_t per_hit = mlp_floats(lay.normal) + mlp_floats(lay.svbrdf) + 32;
    return sizeof(T) * (per_hit + per_dir * static_cast<std::size_t>(quad_count));
}

template <class T>
Vector<T> pairwise_sum(std::vector<Vector<T>>& parts, std::size_t lo, std::size_t hi) {
    if (hi - lo == 1) {
        return std::move(parts[lo]);
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    Vector<T> left = pairwise_sum(parts, lo, mid);
    left += pairwise_sum(parts, mid, hi);
    return left;
}

template <class T>
void render_backward(const RenderState<T>& st, const Vector<T>& adjoint, GradientTape<T>& tape) {
    const std::size_t shards = st.inputs.size();
    if (shards == 0) {
        return;
    }
    const std::size_t groups = std::min(kReductionGroups, shards);
    std::vector<Vector<T>> partial(groups);
    const Eigen::Index param_count = st.fields.theta.size();

    parallel_for(groups, st.threads, [&](std::size_t g) {
        Vector<T> acc = Vector<T>::Zero(param_count);
        const std::size_t begin = g * shards / groups;
        const std::size_t end = (g + 1) * shards / groups;
        std::size_t hit_offset = 0;
        for (std::size_t s = 0; s < begin; ++s) {
            hit_offset += static_cast<std::size_t>(st.inputs[s].positions.rows());
        }
        for (std::size_t s = begin; s < end; ++s) {
            const ShadeInputs<T>& in = st.inputs[s];
            const Matrix<T>& color = st.colors[s];
            const Eigen::Index rows = in.positions.rows();
            Matrix<T> d_color(rows, 3);
            for (Eigen::Index r = 0; r < rows; ++r) {
                const std::size_t px = st.hit_pixels[hit_offset + static_cast<std::size_t>(r)];
                for (int c = 0; c < 3; ++c) {
                    const T value = color(r, c);
                    const bool saturated = st.clamp && (value < T(0) || value > T(1));
                    d_color(r, c) = saturated ? T(0) : adjoint[static_cast<Eigen::Index>(px * 3 + c)];
                }
            }
            hit_offset += static_cast<std::size_t>(rows);
            if (d_color.isZero()) {
                continue;
            }
            if (st.records[s]) {
                shade_batch_backward(st.fields, in, st.quad, *st.records[s], d_color, acc);
            } else {
                ShadeRecord<T> rec;
                shade_batch(st.fields, in, st.quad, &rec);
                shade_batch_backward(st.fields, in, st.quad, rec, d_color, acc);
            }
        }
        partial[g] = std::move(acc);
    });
    tape.param_grad() += pairwise_sum(partial, 0, groups);
}

} // namespace

template <class T>
RenderResult<T> render_view(const Mesh& mesh, const Bvh& bvh, const AppearanceFields<T>& fields,
                            const Camera& cam, const ShadingConfig& cfg, Pcg32* rng) {
    cam.validate();
    cfg.validate();

    Vec3 background = cfg.background;
    if (cfg.background_mode == BackgroundMode::RandomGray) {
        if (rng == nullptr) {
            throw std::invalid_argument("random gray background requires an rng");
        }
        background = Vec3::Constant(rng->uniform(cfg.gray_range[0], cfg.gray_range[1]));
    }

    RenderedView<T> view;
    view.width = cam.width;
    view.height = cam.height;
    view.camera = cam;
    view.background = background;
    const std::size_t pixels = view.pixel_count();
    view.image.resize(pixels * 3);
    view.depth.assign(pixels, 0.0F);
    view.mask.assign(pixels, 0);
    for (std::size_t i = 0; i < pixels; ++i) {
        for (int c = 0; c < 3; ++c) {
            view.image[i * 3 + static_cast<std::size_t>(c)] = static_cast<T>(background[c]);
        }
    }

    auto state = std::make_shared<RenderState<T>>(fields, cfg.quadrature_count);
    state->clamp = cfg.clamp_radiance;
    state->threads = cfg.threads;

    std::vector<Hit> hits;
    std::vector<Vec3> view_dirs;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const PixelCoord px{x, y};
            const Ray ray = generate_ray(cam, px);
            const auto hit = intersect(bvh, mesh, ray);
            if (!hit) {
                continue;
            }
            const std::size_t idx = static_cast<std::size_t>(y) * cam.width + x;
            const double d = depth_at(*hit, cam, px);
            const double d_proj = depth_by_projection(*hit, cam);
            if (std::abs(d - d_proj) > 1e-6 * std::max(1.0, std::abs(d))) {
                throw NumericalError(fmt::format("depth forms disagree at pixel ({}, {}): {} vs {}", x, y, d, d_proj));
            }
            view.mask[idx] = 1;
            view.depth[idx] = static_cast<float>(d);
            state->hit_pixels.push_back(static_cast<std::uint32_t>(idx));
            hits.push_back(*hit);
            view_dirs.push_back(ray.direction);
        }
    }

    const std::size_t shard_size = static_cast<std::size_t>(cfg.shard_size);
    const std::size_t shards = (hits.size() + shard_size - 1) / shard_size;
    const bool retain =
        hits.size() * record_bytes_per_hit<T>(fields.layout, cfg.quadrature_count) <= cfg.retain_bytes;
    state->inputs.resize(shards);
    state->colors.resize(shards);
    state->records.resize(shards);
    for (std::size_t s = 0; s < shards; ++s) {
        const std::size_t begin = s * shard_size;
        const auto rows = static_cast<Eigen::Index>(std::min(shard_size, hits.size() - begin));
        ShadeInputs<T>& in = state->inputs[s];
        in.positions.resize(rows, 3);
        in.face_normals.resize(rows, 3);
        in.view_dirs.resize(rows, 3);
        for (Eigen::Index r = 0; r < rows; ++r) {
            const Hit& h = hits[begin + static_cast<std::size_t>(r)];
            in.positions.row(r) = h.point.cast<T>().transpose();
            in.face_normals.row(r) = h.face_normal.cast<T>().transpose();
            in.view_dirs.row(r) = view_dirs[begin + static_cast<std::size_t>(r)].cast<T>().transpose();
        }
    }

    parallel_for(shards, cfg.threads, [&](std::size_t s) {
        if (retain) {
            state->records[s].emplace();
            state->colors[s] = shade_batch(state->fields, state->inputs[s], state->quad, &*state->records[s]);
        } else {
            state->colors[s] = shade_batch(state->fields, state->inputs[s], state->quad);
        }
    });

    std::size_t hit = 0;
    for (std::size_t s = 0; s < shards; ++s) {
        const Matrix<T>& color = state->colors[s];
        for (Eigen::Index r = 0; r < color.rows(); ++r, ++hit) {
            const std::size_t px = state->hit_pixels[hit];
            for (int c = 0; c < 3; ++c) {
                T value = color(r, c);
                if (!std::isfinite(static_cast<double>(value))) {
                    throw NumericalError("non-finite radiance in render");
                }
                if (cfg.clamp_radiance) {
                    value = std::clamp(value, T(0), T(1));
                }
                view.image[px * 3 + static_cast<std::size_t>(c)] = value;
            }
        }
    }

    GradientTape<T> tape(fields.theta.size());
    Vector<T> flat = Eigen::Map<const Vector<T>>(view.image.data(), static_cast<Eigen::Index>(view.image.size()));
    tape.push(std::move(flat), [state](const Vector<T>& adjoint, GradientTape<T>& t) {
        render_backward(*state, adjoint, t);
    });
    return RenderResult<T>{std::move(view), std::move(tape)};
}

template <class T>
Vector<T> render_vjp(GradientTape<T>& tape, const Vector<T>& image_cotangent) {
    if (tape.size() == 0) {
        throw std::invalid_argument("render_vjp needs a tape recorded by render_view");
    }
    return tape.backward(tape.last(), image_cotangent);
}

template <class T>
Eigen::Matrix<T, 3, 1> shade_pixel(const AppearanceFields<T>& fields, const Hit& hit, const Vec3& view_dir,
                                   const ShadingConfig& cfg) {
    cfg.validate();
    const HemisphereQuadrature quad(cfg.quadrature_count);
    ShadeInputs<T> in;
    in.positions = hit.point.cast<T>().transpose();
    in.face_normals = hit.face_normal.cast<T>().transpose();
    in.view_dirs = view_dir.cast<T>().transpose();
    Eigen::Matrix<T, 3, 1> rgb = shade_batch(fields, in, quad).row(0).transpose();
    if (cfg.clamp_radiance) {
        rgb = rgb.cwiseMax(T(0)).cwiseMin(T(1));
    }
    return rgb;
}

template struct RenderedView<float>;
template struct RenderedView<double>;
template RenderResult<float> render_view(const Mesh&, const Bvh&, const AppearanceFields<float>&, const Camera&,
                                         const ShadingConfig&, Pcg32*);
template RenderResult<double> render_view(const Mesh&, const Bvh&, const AppearanceFields<double>&, const Camera&,
                                          const ShadingConfig&, Pcg32*);
template Vector<float> render_vjp(GradientTape<float>&, const Vector<float>&);
template Vector<double> render_vjp(GradientTape<double>&, const Vector<double>&);
template Eigen::Matrix<float, 3, 1> shade_pixel(const AppearanceFields<float>&, const Hit&, const Vec3&,
                                                const ShadingConfig&);
template Eigen::Matrix<double, 3, 1> shade_pixel(const AppearanceFields<double>&, const Hit&, const Vec3&,
                                                 const ShadingConfig&);

} // namespace dstyle
