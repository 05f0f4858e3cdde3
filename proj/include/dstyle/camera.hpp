#pragma once

#include "dstyle/bvh.hpp"
#include "dstyle/rng.hpp"

#include <array>
#include <vector>

namespace dstyle {

/// Pinhole camera with a right-handed look-at frame. Pixel (0, 0) is the
/// top-left corner of the image.
struct Camera {
    Vec3 position{0.0, 0.0, 1.5};
    Vec3 target{0.0, 0.0, 0.0};
    Vec3 up{0.0, 1.0, 0.0};
    double fov_y_deg = 45.0;
    int width = 64;
    int height = 64;

    /// Throws ConfigError when an invariant is violated.
    void validate() const;
    Vec3 optical_axis() const { return (target - position).normalized(); }
};

struct PixelCoord {
    int x = 0;
    int y = 0;
};

/// Training viewpoint distribution: uniform in radius, elevation and
/// azimuth (degrees). Defaults avoid views from below the object.
struct ViewSamplerConfig {
    std::array<double, 2> radius_range{1.2, 1.8};
    std::array<double, 2> elevation_range{-10.0, 60.0};
    std::array<double, 2> azimuth_range{0.0, 360.0};
    double fov_y_deg = 45.0;
    int width = 64;
    int height = 64;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Position on a sphere around the origin, y up; azimuth 0 looks from +z.
Vec3 spherical_position(double radius, double elevation_deg, double azimuth_deg);

Camera orbit_camera(double radius, double elevation_deg, double azimuth_deg, double fov_y_deg, int width,
                    int height);

/// Draws radius, elevation, azimuth (in that order) from `rng`.
Camera sample_camera(const ViewSamplerConfig& cfg, Pcg32& rng);

/// Ray through the pixel center. Throws std::out_of_range outside the image.
Ray generate_ray(const Camera& cam, PixelCoord px);

/// cos of the angle between the pixel ray and the optical axis.
double center_ray_cosine(const Camera& cam, PixelCoord px);

/// n views at radius 1.5, azimuth 360 k / n, elevations cycling 0, 30, -20.
/// Intrinsics are taken from `cam_template`.
std::vector<Camera> uniform_eval_views(int n, const Camera& cam_template);

} // namespace dstyle
