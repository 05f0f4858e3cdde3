#include "dstyle/camera.hpp"

#include "dstyle/errors.hpp"

#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dstyle {

namespace {

double radians(double deg) { return deg * std::numbers::pi / 180.0; }

struct Frame {
    Vec3 forward;
    Vec3 right;
    Vec3 up;
};

Frame look_at_frame(const Camera& cam) {
    Frame f;
    f.forward = cam.optical_axis();
    Vec3 up = cam.up.normalized();
    if (f.forward.cross(up).norm() < 1e-9) {
        // Looking straight along `up`: pick any perpendicular reference.
        up = std::abs(f.forward.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    }
    f.right = f.forward.cross(up).normalized();
    f.up = f.right.cross(f.forward);
    return f;
}

} // namespace

void Camera::validate() const {
    if ((position - target).norm() <= 0.0) {
        throw ConfigError("camera position equals target");
    }
    if (!(fov_y_deg > 0.0 && fov_y_deg < 180.0)) {
        throw ConfigError(fmt::format("camera fov_y must be in (0, 180) degrees, got {}", fov_y_deg));
    }
    if (width < 1 || height < 1) {
        throw ConfigError(fmt::format("camera resolution must be positive, got {}x{}", width, height));
    }
}

void ViewSamplerConfig::validate() const {
    if (!(radius_range[0] > 0.0 && radius_range[0] <= radius_range[1])) {
        throw ConfigError("view sampler requires 0 < radius_min <= radius_max");
    }
    if (elevation_range[0] > elevation_range[1] || azimuth_range[0] > azimuth_range[1]) {
        throw ConfigError("view sampler ranges must be ordered [min, max]");
    }
}

Vec3 spherical_position(double radius, double elevation_deg, double azimuth_deg) {
    const double el = radians(elevation_deg);
    const double az = radians(azimuth_deg);
    return {radius * std::cos(el) * std::sin(az), radius * std::sin(el), radius * std::cos(el) * std::cos(az)};
}

Camera orbit_camera(double radius, double elevation_deg, double azimuth_deg, double fov_y_deg, int width,
                    int height) {
    Camera cam;
    cam.position = spherical_position(radius, elevation_deg, azimuth_deg);
    cam.target = Vec3::Zero();
    cam.up = Vec3::UnitY();
    cam.fov_y_deg = fov_y_deg;
    cam.width = width;
    cam.height = height;
    return cam;
}

Camera sample_camera(const ViewSamplerConfig& cfg, Pcg32& rng) {
    const double radius = rng.uniform(cfg.radius_range[0], cfg.radius_range[1]);
    const double elevation = rng.uniform(cfg.elevation_range[0], cfg.elevation_range[1]);
    const double azimuth = rng.uniform(cfg.azimuth_range[0], cfg.azimuth_range[1]);
    return orbit_camera(radius, elevation, azimuth, cfg.fov_y_deg, cfg.width, cfg.height);
}

Ray generate_ray(const Camera& cam, PixelCoord px) {
    if (px.x < 0 || px.y < 0 || px.x >= cam.width || px.y >= cam.height) {
        throw std::out_of_range(
            fmt::format("pixel ({}, {}) outside {}x{} image", px.x, px.y, cam.width, cam.height));
    }
    const Frame f = look_at_frame(cam);
    const double tan_half = std::tan(radians(cam.fov_y_deg) * 0.5);
    const double aspect = static_cast<double>(cam.width) / cam.height;
    const double sx = (2.0 * (px.x + 0.5) / cam.width - 1.0) * tan_half * aspect;
    const double sy = (1.0 - 2.0 * (px.y + 0.5) / cam.height) * tan_half;
    return Ray{cam.position, (f.forward + sx * f.right + sy * f.up).normalized()};
}

double center_ray_cosine(const Camera& cam, PixelCoord px) {
    return generate_ray(cam, px).direction.dot(cam.optical_axis());
}

std::vector<Camera> uniform_eval_views(int n, const Camera& cam_template) {
    if (n < 1) {
        throw ConfigError("uniform_eval_views needs at least one view");
    }
    constexpr std::array<double, 3> kElevations{0.0, 30.0, -20.0};
    std::vector<Camera> views;
    views.reserve(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) {
        const double azimuth = 360.0 * k / n;
        views.push_back(orbit_camera(1.5, kElevations[static_cast<std::size_t>(k) % kElevations.size()], azimuth,
                                     cam_template.fov_y_deg, cam_template.width, cam_template.height));
    }
    return views;
}

} // namespace dstyle
