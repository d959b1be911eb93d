// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <random>

#include "splatir/camera.hpp"
#include "splatir/raster.hpp"
#include "splatir/scene.hpp"

namespace splatir::testing {

/// Camera at the world origin looking down +z.
inline Camera make_test_camera(int w, int h, double focal = 0.0) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    if (focal <= 0.0) focal = w;
    cam.intrinsics << focal, 0, w / 2.0, 0, focal, h / 2.0, 0, 0, 1;
    return cam;
}

/// Camera on a sphere of given radius looking at the origin (y-up world).
inline Camera make_orbit_camera(int w, int h, double radius, double azimuth, double elevation,
                                double focal = 0.0) {
    Camera cam = make_test_camera(w, h, focal);
    const Vec3 pos(radius * std::cos(elevation) * std::sin(azimuth),
                   radius * std::sin(elevation),
                   radius * std::cos(elevation) * std::cos(azimuth));
    const Vec3 fwd = (-pos).normalized();
    Vec3 up(0.0, 1.0, 0.0);
    if (std::abs(fwd.dot(up)) > 0.999) up = Vec3(1.0, 0.0, 0.0);
    const Vec3 right = fwd.cross(up).normalized();
    const Vec3 down = fwd.cross(right).normalized();
    Mat3 R;
    R.row(0) = right.transpose();
    R.row(1) = down.transpose();
    R.row(2) = fwd.transpose();
    cam.world_to_cam.setIdentity();
    cam.world_to_cam.topLeftCorner<3, 3>() = R;
    cam.world_to_cam.topRightCorner<3, 1>() = -R * pos;
    return cam;
}

/// Random splats in front of the default camera, all attributes exercised.
inline SplatScene make_random_scene(unsigned seed, int count, double z0 = 2.0, double z1 = 4.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    SplatScene scene(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) {
        double* r = scene.raw(static_cast<std::size_t>(i));
        r[param::kPosition + 0] = 0.8 * uni(rng);
        r[param::kPosition + 1] = 0.8 * uni(rng);
        r[param::kPosition + 2] = z0 + 0.5 * (z1 - z0) * (uni(rng) + 1.0);
        Vec3 tu = Vec3(gauss(rng), gauss(rng), gauss(rng));
        Vec3 tv = Vec3(gauss(rng), gauss(rng), gauss(rng));
        while (tu.norm() < 0.3) tu = Vec3(gauss(rng), gauss(rng), gauss(rng));
        while (tv.cross(tu).norm() < 0.3) tv = Vec3(gauss(rng), gauss(rng), gauss(rng));
        for (int k = 0; k < 3; ++k) {
            r[param::kTangentU + k] = tu[k];
            r[param::kTangentV + k] = tv[k];
        }
        r[param::kLogScale + 0] = std::log(0.25) + 0.4 * uni(rng);
        r[param::kLogScale + 1] = std::log(0.25) + 0.4 * uni(rng);
        r[param::kOpacity] = 0.8 * gauss(rng);
        for (int k = 0; k < kShCoeffs; ++k) r[param::kSh + k] = 0.2 * uni(rng);
        for (int k = 0; k < 3; ++k) r[param::kAlbedo + k] = 0.7 * gauss(rng);
        r[param::kMetallic] = 0.7 * gauss(rng);
        r[param::kRoughness] = 0.7 * gauss(rng);
    }
    return scene;
}

/// Deterministic pseudo-random weight maps matched to a G-buffer's layout, for
/// scalar FD objectives J = sum_maps <W, map>.
inline Image make_weight_image(unsigned seed, int w, int h, int channels) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    Image img(w, h, channels);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = uni(rng);
    return img;
}

inline GBufferGrads make_weight_grads(unsigned seed, int w, int h, RenderMode mode) {
    GBufferGrads g;
    g.normal = make_weight_image(seed + 1, w, h, 3);
    g.depth = make_weight_image(seed + 2, w, h, 1);
    g.opacity = make_weight_image(seed + 3, w, h, 1);
    if (mode == RenderMode::Color) {
        g.color = make_weight_image(seed + 4, w, h, 3);
    } else {
        g.albedo = make_weight_image(seed + 5, w, h, 3);
        g.metallic = make_weight_image(seed + 6, w, h, 1);
        g.roughness = make_weight_image(seed + 7, w, h, 1);
        g.tangent_u = make_weight_image(seed + 8, w, h, 3);
        g.tangent_v = make_weight_image(seed + 9, w, h, 3);
        g.scale = make_weight_image(seed + 10, w, h, 2);
    }
    return g;
}

inline double weighted_sum(const Image& w, const Image& m) {
    double s = 0.0;
    for (std::size_t i = 0; i < m.size(); ++i) s += w.data()[i] * m.data()[i];
    return s;
}

/// Scalar objective over every rendered map, used by FD gradient checks.
inline double gbuffer_objective(const GBuffer& gb, const GBufferGrads& w, RenderMode mode) {
    double s = weighted_sum(w.normal, gb.normal) + weighted_sum(w.depth, gb.depth) +
               weighted_sum(w.opacity, gb.opacity);
    if (mode == RenderMode::Color) {
        s += weighted_sum(w.color, gb.color);
    } else {
        s += weighted_sum(w.albedo, gb.albedo) + weighted_sum(w.metallic, gb.metallic) +
             weighted_sum(w.roughness, gb.roughness) + weighted_sum(w.tangent_u, gb.tangent_u) +
             weighted_sum(w.tangent_v, gb.tangent_v) + weighted_sum(w.scale, gb.scale);
    }
    return s;
}

}  // namespace splatir::testing
