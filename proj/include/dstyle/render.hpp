#pragma once

#include "dstyle/bvh.hpp"
#include "dstyle/camera.hpp"
#include "dstyle/fields.hpp"
#include "dstyle/shading.hpp"
#include "dstyle/tape.hpp"

#include <cstdint>
#include <vector>

namespace dstyle {

enum class BackgroundMode {
    Fixed,      // `background` color
    RandomGray, // uniform gray in gray_range, drawn from the render rng
};

struct ShadingConfig {
    int quadrature_count = 128;
    BackgroundMode background_mode = BackgroundMode::Fixed;
    Vec3 background{1.0, 1.0, 1.0};
    std::array<double, 2> gray_range{0.2, 0.8};
    bool clamp_radiance = true;
    // Execution knobs. threads and retain_bytes never change results;
    // shard_size sets the batch shape and so only affects rounding.
    int shard_size = 256;
    unsigned threads = 0;
    std::size_t retain_bytes = std::size_t{256} << 20U; // above this, records are recomputed in render_vjp

    void validate() const;
};

/// Image, metric depth and coverage for one camera. Buffers are row-major
/// with the origin at the top-left; the image is interleaved RGB.
template <class T>
struct RenderedView {
    int width = 0;
    int height = 0;
    std::vector<T> image;        // H*W*3 in [0, 1]
    std::vector<float> depth;    // H*W, 0 where mask is 0
    std::vector<std::uint8_t> mask;
    Camera camera;
    Vec3 background;

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t hit_count() const;
};

/// Metric depth in its angle form: |k - c| cos(gamma).
double depth_at(const Hit& hit, const Camera& cam, PixelCoord px);
/// Same quantity as the projection of (k - c) onto the optical axis.
double depth_by_projection(const Hit& hit, const Camera& cam);

template <class T>
struct RenderResult {
    RenderedView<T> view;
    GradientTape<T> tape; // last node is the image
};

/// Casts one ray per pixel, shades hits and records a tape for render_vjp.
/// `rng` is only consumed for BackgroundMode::RandomGray (one draw).
template <class T>
RenderResult<T> render_view(const Mesh& mesh, const Bvh& bvh, const AppearanceFields<T>& fields,
                            const Camera& cam, const ShadingConfig& cfg, Pcg32* rng = nullptr);

/// dL/dtheta for an image cotangent of H*W*3 elements.
template <class T>
Vector<T> render_vjp(GradientTape<T>& tape, const Vector<T>& image_cotangent);

/// Single-pixel shading (unclamped unless cfg.clamp_radiance).
template <class T>
Eigen::Matrix<T, 3, 1> shade_pixel(const AppearanceFields<T>& fields, const Hit& hit, const Vec3& view_dir,
                                   const ShadingConfig& cfg);

} // namespace dstyle
