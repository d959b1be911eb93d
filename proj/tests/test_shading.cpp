// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <random>

#include "fd_check.hpp"
#include "splatir/shading.hpp"
#include "test_util.hpp"

using namespace splatir;

namespace {

/// Fronto-parallel surface filling the frame: normals toward the camera,
/// constant depth and material.
GBuffer make_flat_gbuffer(int w, int h, double depth, const Vec3& albedo, double metallic,
                          double roughness) {
    GBuffer gb;
    gb.albedo = Image(w, h, 3);
    gb.metallic = Image(w, h, 1, metallic);
    gb.roughness = Image(w, h, 1, roughness);
    gb.normal = Image(w, h, 3);
    gb.depth = Image(w, h, 1, depth);
    gb.opacity = Image(w, h, 1, 1.0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            gb.albedo.set_rgb(x, y, albedo);
            gb.normal.set_rgb(x, y, Vec3(0, 0, -1));
        }
    }
    return gb;
}

GBuffer make_random_gbuffer(unsigned seed, int w, int h) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);
    GBuffer gb = make_flat_gbuffer(w, h, 2.0, Vec3::Zero(), 0.0, 0.5);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            gb.albedo.set_rgb(x, y, Vec3(uni(rng), uni(rng), uni(rng)));
            gb.metallic.at(x, y) = uni(rng);
            gb.roughness.at(x, y) = 0.05 + 0.9 * uni(rng);
            Vec3 n(0.4 * gauss(rng), 0.4 * gauss(rng), -1.0);
            gb.normal.set_rgb(x, y, n.normalized());
            gb.depth.at(x, y) = 1.5 + uni(rng);
            gb.opacity.at(x, y) = (uni(rng) < 0.2) ? 0.1 : 0.9;  // mix of background
        }
    }
    return gb;
}

Image make_positive_image(unsigned seed, int w, int h) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.1, 1.5);
    Image img(w, h, 3);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = uni(rng);
    return img;
}

}  // namespace

TEST_CASE("head-on pixel matches the closed form") {
    // 3x3 frame: the center pixel sits exactly on the optical axis, so with the
    // light along the axis wi = wo = n and every factor collapses.
    const Camera cam = testing::make_test_camera(3, 3, 40.0);
    const GBuffer gb = make_flat_gbuffer(3, 3, 2.0, Vec3(1.0, 0.5, 0.25), 0.0, 0.5);
    DirectionalLight light;
    light.direction = Vec3(0, 0, -1);
    Image incident(3, 3, 3, 0.5);

    const Image L = shade_sdl(gb, cam, light, incident);
    const double a = 0.25;  // roughness^2 = 0.25
    const double fs = 0.04 / (4.0 * kPi * a * a);
    CHECK(L.at(1, 1, 0) == doctest::Approx(0.5 * (1.0 / kPi + fs)).epsilon(1e-12));
    CHECK(L.at(1, 1, 1) == doctest::Approx(0.5 * (0.5 / kPi + fs)).epsilon(1e-12));
    CHECK(L.at(1, 1, 2) == doctest::Approx(0.5 * (0.25 / kPi + fs)).epsilon(1e-12));
    // Off-axis pixels see slightly tilted outgoing rays, so they land close by.
    CHECK(L.at(0, 0, 0) == doctest::Approx(0.5 * (1.0 / kPi + fs)).epsilon(0.02));

    // A light from behind the surface contributes nothing.
    light.direction = Vec3(0, 0, 1);
    const Image dark = shade_sdl(gb, cam, light, incident);
    for (std::size_t i = 0; i < dark.size(); ++i) CHECK(dark.data()[i] == 0.0);
}

TEST_CASE("background pixels stay zero and inputs are validated") {
    const Camera cam = testing::make_test_camera(4, 4);
    GBuffer gb = make_flat_gbuffer(4, 4, 2.0, Vec3(0.8, 0.8, 0.8), 0.0, 0.4);
    gb.opacity.at(2, 1) = 0.0;
    gb.depth.at(1, 2) = 0.0;
    DirectionalLight light;
    light.direction = Vec3(0, 0, -1);
    const Image incident(4, 4, 3, 1.0);

    const Image L = shade_sdl(gb, cam, light, incident);
    CHECK(L.rgb(2, 1).norm() == 0.0);
    CHECK(L.rgb(1, 2).norm() == 0.0);
    CHECK(L.rgb(0, 0).norm() > 0.0);

    GBuffer no_materials;
    no_materials.opacity = gb.opacity;
    no_materials.depth = gb.depth;
    no_materials.normal = gb.normal;
    CHECK_THROWS_AS(shade_sdl(no_materials, cam, light, incident), ContractError);
    CHECK_THROWS_AS(shade_sdl(gb, cam, light, Image(3, 4, 3, 1.0)), ContractError);
    DirectionalLight bad;
    bad.direction = Vec3(0, 0, 2);
    CHECK_THROWS_AS(shade_sdl(gb, cam, bad, incident), InputError);
}

TEST_CASE("radiance is linear in the incident map") {
    const Camera cam = testing::make_test_camera(6, 5);
    const GBuffer gb = make_random_gbuffer(3, 6, 5);
    DirectionalLight light;
    light.direction = Vec3(0.3, -0.2, -1.0).normalized();
    const Image incident = make_positive_image(4, 6, 5);
    Image doubled = incident;
    for (std::size_t i = 0; i < doubled.size(); ++i) doubled.data()[i] *= 2.0;

    const Image L1 = shade_sdl(gb, cam, light, incident);
    Image L2_expect = L1;
    for (std::size_t i = 0; i < L2_expect.size(); ++i) L2_expect.data()[i] *= 2.0;
    CHECK(shade_sdl(gb, cam, light, doubled) == L2_expect);
}

TEST_CASE("multi-light shading sums per-light contributions") {
    const Camera cam = testing::make_test_camera(5, 4);
    const GBuffer gb = make_random_gbuffer(7, 5, 4);
    DirectionalLight l1;
    l1.direction = Vec3(0.2, 0.1, -1.0).normalized();
    l1.intensity = Vec3(0.8, 0.7, 0.6);

    // A singleton list reproduces shade_sdl with the intensity broadcast.
    Image incident(5, 4, 3);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 5; ++x) incident.set_rgb(x, y, l1.intensity);
    CHECK(shade_multi_light(gb, cam, {l1}) == shade_sdl(gb, cam, l1, incident));

    // Two copies of the same light double the image exactly.
    const Image one = shade_multi_light(gb, cam, {l1});
    Image twice = one;
    for (std::size_t i = 0; i < twice.size(); ++i) twice.data()[i] *= 2.0;
    CHECK(shade_multi_light(gb, cam, {l1, l1}) == twice);

    CHECK_THROWS_AS(shade_multi_light(gb, cam, {}), InputError);
}

TEST_CASE("unproject_map inverts the projection on foreground pixels") {
    const Camera cam = testing::make_orbit_camera(5, 4, 3.0, 0.7, 0.3);
    GBuffer gb = make_flat_gbuffer(5, 4, 2.5, Vec3::Ones(), 0.0, 0.5);
    gb.opacity.at(3, 2) = 0.0;
    const Image pts = unproject_map(gb, cam);
    CHECK(pts.rgb(3, 2).norm() == 0.0);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 5; ++x) {
            if (x == 3 && y == 2) continue;
            Vec2 px;
            double depth = 0.0;
            REQUIRE(cam.project(pts.rgb(x, y), px, &depth));
            CHECK(px.x() == doctest::Approx(x + 0.5).epsilon(1e-9));
            CHECK(px.y() == doctest::Approx(y + 0.5).epsilon(1e-9));
            CHECK(depth == doctest::Approx(2.5).epsilon(1e-12));
        }
    }
}

TEST_CASE("shading gradients match central differences") {
    const int w = 6, h = 5;
    const Camera cam = testing::make_test_camera(w, h);
    GBuffer gb = make_random_gbuffer(11, w, h);
    DirectionalLight light;
    light.direction = Vec3(-0.3, 0.25, -1.0).normalized();
    Image incident = make_positive_image(13, w, h);
    const Image upstream = make_positive_image(17, w, h);

    auto objective = [&]() {
        const Image L = shade_sdl(gb, cam, light, incident);
        double acc = 0.0;
        for (std::size_t i = 0; i < L.size(); ++i) acc += upstream.data()[i] * L.data()[i];
        return acc;
    };
    const ShadeGrads g = shade_sdl_backward(gb, cam, light, incident, upstream);

    testing::FdReport rep;
    testing::FdOptions opt;
    opt.step = 1e-5;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::string tag = "px " + std::to_string(x) + "," + std::to_string(y);
            for (int c = 0; c < 3; ++c) {
                testing::fd_check_entry(rep, objective, &gb.albedo.at(x, y, c),
                                        g.gbuffer.albedo.at(x, y, c), opt, tag + " albedo");
                testing::fd_check_entry(rep, objective, &gb.normal.at(x, y, c),
                                        g.gbuffer.normal.at(x, y, c), opt, tag + " normal");
                testing::fd_check_entry(rep, objective, &incident.at(x, y, c),
                                        g.incident.at(x, y, c), opt, tag + " incident");
            }
            testing::fd_check_entry(rep, objective, &gb.metallic.at(x, y),
                                    g.gbuffer.metallic.at(x, y), opt, tag + " metallic");
            testing::fd_check_entry(rep, objective, &gb.roughness.at(x, y),
                                    g.gbuffer.roughness.at(x, y), opt, tag + " roughness");
        }
    }
    CHECK_MESSAGE(rep.failed == 0, rep.worst_label, " rel err ", rep.worst_rel);
    CHECK(rep.checked >= 300);
    CHECK(rep.skip_fraction() < 0.1);
}
