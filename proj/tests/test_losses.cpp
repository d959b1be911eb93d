// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <random>

#include <doctest.h>

#include "fd_check.hpp"
#include "splatir/dataset.hpp"
#include "splatir/losses.hpp"
#include "splatir/metrics.hpp"
#include "test_util.hpp"

using namespace splatir;
using namespace splatir::testing;

namespace {

Image random_image(unsigned seed, int w, int h, int c, double lo = 0.0, double hi = 1.0) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(lo, hi);
    Image img(w, h, c);
    for (std::size_t i = 0; i < img.size(); ++i) img.data()[i] = uni(rng);
    return img;
}

Image random_unit_normals(unsigned seed, int w, int h) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Image img(w, h, 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            Vec3 n(gauss(rng), gauss(rng), gauss(rng));
            while (n.norm() < 0.1) n = Vec3(gauss(rng), gauss(rng), gauss(rng));
            img.set_rgb(x, y, n.normalized());
        }
    return img;
}

/// Checks an image-space analytic gradient against central differences at a
/// strided subset of entries.
void fd_image(FdReport& rep, Image& img, const Image& analytic,
              const std::function<double()>& eval, int stride, const char* label,
              const FdOptions& opt = {}) {
    REQUIRE(analytic.same_shape(img));
    for (std::size_t k = 0; k < img.size(); k += static_cast<std::size_t>(stride))
        fd_check_entry(rep, eval, &img.data()[k], analytic.data()[k], opt,
                       std::string(label) + "[" + std::to_string(k) + "]");
}

/// G-buffer for a camera-frame plane z = depth0 + slope * x_cam, with the
/// matching analytic normal written everywhere.
GBuffer plane_gbuffer(const Camera& cam, double depth0, double slope) {
    GBuffer gb;
    const int w = cam.width, h = cam.height;
    gb.normal = Image(w, h, 3);
    gb.depth = Image(w, h, 1);
    gb.opacity = Image(w, h, 1, 1.0);
    const Vec3 n_cam = Vec3(slope, 0.0, -1.0).normalized();  // faces the camera
    const Vec3 n_world = cam.rotation().transpose() * n_cam;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double dx = (x + 0.5 - cam.cx()) / cam.fx();
            gb.depth.at(x, y) = depth0 / (1.0 - slope * dx);
            gb.normal.set_rgb(x, y, n_world);
        }
    return gb;
}

}  // namespace

TEST_CASE("l1 loss: exact values, symmetry, gradient") {
    Image a = random_image(11, 9, 7, 3);
    Image b = random_image(12, 9, 7, 3);
    CHECK(loss_l1(a, a) == 0.0);
    CHECK(loss_l1(a, b) == doctest::Approx(loss_l1(b, a)).epsilon(1e-15));
    CHECK(loss_l1(a, b) > 0.0);

    Image shifted = a;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += 0.1;
    CHECK(loss_l1(shifted, a) == doctest::Approx(0.1).epsilon(1e-12));

    Image grad;
    loss_l1(a, b, &grad);
    FdReport rep;
    fd_image(rep, a, grad, [&] { return loss_l1(a, b); }, 7, "l1");
    CHECK(rep.checked > 15);
    CHECK(rep.failed == 0);

    Image small(4, 4, 3);
    CHECK_THROWS_AS(loss_l1(a, small), InputError);
}

TEST_CASE("ssim: bounds, symmetry, gradient") {
    Image a = random_image(21, 12, 10, 3);
    Image b = random_image(22, 12, 10, 3);
    CHECK(loss_ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
    const double s = loss_ssim(a, b);
    CHECK(s < 1.0);
    CHECK(s > -1.0);
    CHECK(loss_ssim(b, a) == doctest::Approx(s).epsilon(1e-12));

    Image grad;
    loss_ssim(a, b, &grad);
    FdReport rep;
    FdOptions opt;
    opt.step = 1e-5;
    fd_image(rep, a, grad, [&] { return loss_ssim(a, b); }, 11, "ssim", opt);
    CHECK(rep.checked > 25);
    CHECK(rep.failed == 0);
}

TEST_CASE("rgb loss: constant offset hits the L1 branch exactly") {
    Image a = random_image(31, 8, 8, 3, 0.2, 0.8);
    CHECK(loss_rgb(a, a) == doctest::Approx(0.0).epsilon(1e-12));

    Image shifted = a;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += 0.1;
    const double total = loss_rgb(shifted, a);
    const double ssim_part = 0.2 * (1.0 - loss_ssim(shifted, a));
    CHECK(total - ssim_part == doctest::Approx(0.08).epsilon(1e-12));

    Image b = random_image(32, 8, 8, 3);
    Image grad;
    loss_rgb(a, b, &grad);
    FdReport rep;
    FdOptions opt;
    opt.step = 1e-5;
    fd_image(rep, a, grad, [&] { return loss_rgb(a, b); }, 5, "rgb", opt);
    CHECK(rep.checked > 20);
    CHECK(rep.failed == 0);
}

TEST_CASE("normal consistency: planes and antiparallel normals") {
    const Camera cam = make_test_camera(16, 16, 24.0);

    SUBCASE("fronto-parallel plane scores zero") {
        GBuffer gb = plane_gbuffer(cam, 3.0, 0.0);
        const NormalConsistencyResult r = loss_normal_consistency(gb, cam);
        CHECK(r.pixels > 100);
        CHECK(r.value == doctest::Approx(0.0).epsilon(1e-10));
    }
    SUBCASE("45-degree plane: depth-derived normal matches the analytic one") {
        GBuffer gb = plane_gbuffer(cam, 3.0, 1.0);
        const NormalConsistencyResult r = loss_normal_consistency(gb, cam);
        CHECK(r.pixels > 100);
        CHECK(r.value < 1e-3);
    }
    SUBCASE("flipped normals score 2 per pixel") {
        GBuffer gb = plane_gbuffer(cam, 3.0, 0.0);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x) gb.normal.set_rgb(x, y, -gb.normal.rgb(x, y));
        const NormalConsistencyResult r = loss_normal_consistency(gb, cam);
        CHECK(r.value == doctest::Approx(2.0).epsilon(1e-10));
    }
}

TEST_CASE("normal consistency: gradients against central differences") {
    const Camera cam = make_test_camera(10, 10, 16.0);
    GBuffer gb = plane_gbuffer(cam, 3.0, 0.7);
    // Wobble both maps so the loss sits away from its minimum.
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> uni(-0.05, 0.05);
    for (std::size_t i = 0; i < gb.depth.size(); ++i) gb.depth.data()[i] += uni(rng);
    for (std::size_t i = 0; i < gb.normal.size(); ++i) gb.normal.data()[i] += uni(rng);

    const NormalConsistencyResult r = loss_normal_consistency(gb, cam);
    CHECK(r.value > 0.0);
    auto eval = [&] { return loss_normal_consistency(gb, cam).value; };
    FdReport rep;
    fd_image(rep, gb.normal, r.grad_normal, eval, 13, "nc-normal");
    fd_image(rep, gb.depth, r.grad_depth, eval, 7, "nc-depth");
    CHECK(rep.checked > 20);
    CHECK(rep.skip_fraction() < 0.2);
    CHECK(rep.failed == 0);
}

TEST_CASE("normal guidance: exact match, hand value, rotation invariance") {
    const Camera cam = make_orbit_camera(6, 6, 3.0, 0.7, 0.3);
    Image world = random_unit_normals(51, 6, 6);
    Image mask(6, 6, 1, 1.0);

    // Guidance equal to the rendered normals re-expressed in camera frame.
    Image guidance(6, 6, 3);
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 6; ++x) guidance.set_rgb(x, y, cam.rotation() * world.rgb(x, y));
    CHECK(loss_normal_reg(world, guidance, cam, mask) == doctest::Approx(0.0).epsilon(1e-12));

    SUBCASE("single pixel hand value") {
        const Camera id_cam = make_test_camera(1, 1);
        Image rendered(1, 1, 3), g(1, 1, 3), m(1, 1, 1, 1.0);
        rendered.set_rgb(0, 0, Vec3(0, 0, 1));
        g.set_rgb(0, 0, Vec3(0, 1, 0));
        CHECK(loss_normal_reg(rendered, g, id_cam, m) == doctest::Approx(2.0).epsilon(1e-12));
    }
    SUBCASE("camera rotation with consistently transformed guidance is invariant") {
        const Image target = random_unit_normals(52, 6, 6);
        const Camera cam2 = make_orbit_camera(6, 6, 2.5, -1.1, 0.6);
        Image g1(6, 6, 3), g2(6, 6, 3);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                g1.set_rgb(x, y, cam.rotation() * target.rgb(x, y));
                g2.set_rgb(x, y, cam2.rotation() * target.rgb(x, y));
            }
        const double l1 = loss_normal_reg(world, g1, cam, mask);
        const double l2 = loss_normal_reg(world, g2, cam2, mask);
        CHECK(l1 == doctest::Approx(l2).epsilon(1e-9));
        CHECK(l1 > 0.0);
    }
    SUBCASE("masked pixels are excluded") {
        Image g(6, 6, 3);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) g.set_rgb(x, y, cam.rotation() * world.rgb(x, y));
        // Corrupt one pixel, then mask it out: the loss must stay zero.
        g.set_rgb(2, 3, Vec3(1, 0, 0));
        Image m = mask;
        m.at(2, 3) = 0.0;
        CHECK(loss_normal_reg(world, g, cam, m) == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("normal guidance: gradients for all three penalties") {
    const Camera cam = make_orbit_camera(7, 5, 3.0, 0.4, -0.2);
    Image rendered = random_unit_normals(61, 7, 5);
    const Image guidance = random_unit_normals(62, 7, 5);
    Image mask(7, 5, 1, 1.0);
    mask.at(0, 0) = 0.0;  // one background pixel exercises the skip

    for (const auto penalty :
         {NormalRegPenalty::L1, NormalRegPenalty::L2, NormalRegPenalty::Cosine}) {
        Image grad;
        loss_normal_reg(rendered, guidance, cam, mask, &grad, penalty);
        FdReport rep;
        fd_image(
            rep, rendered, grad,
            [&] { return loss_normal_reg(rendered, guidance, cam, mask, nullptr, penalty); }, 5,
            "nr");
        CHECK(rep.checked > 15);
        CHECK(rep.failed == 0);
    }
}

TEST_CASE("mask loss: cross-entropy values and gradient") {
    Image o(4, 4, 1, 0.5), m(4, 4, 1, 1.0);
    CHECK(loss_mask(o, m) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

    SUBCASE("matched mask sits at the clamped minimum") {
        Image om = m;
        CHECK(loss_mask(om, m) == doctest::Approx(-std::log(1.0 - 1e-6)).epsilon(1e-6));
        CHECK(loss_mask(om, m) < 2e-6);
    }
    SUBCASE("clamp bounds the mismatched loss near 13.8") {
        Image o1(4, 4, 1, 1.0), m0(4, 4, 1, 0.0);
        CHECK(loss_mask(o1, m0) == doctest::Approx(-std::log(1e-6)).epsilon(1e-9));
        CHECK(loss_mask(o1, m0) == doctest::Approx(13.8155).epsilon(1e-4));
    }
    SUBCASE("gradient") {
        Image op = random_image(71, 6, 6, 1, 0.05, 0.95);
        Image mask = random_image(72, 6, 6, 1);
        for (std::size_t i = 0; i < mask.size(); ++i)
            mask.data()[i] = mask.data()[i] > 0.5 ? 1.0 : 0.0;
        Image grad;
        loss_mask(op, mask, &grad);
        FdReport rep;
        fd_image(rep, op, grad, [&] { return loss_mask(op, mask); }, 3, "mask");
        CHECK(rep.checked > 8);
        CHECK(rep.failed == 0);
    }
}

TEST_CASE("incident loss: values, planar shadow fraction, gradient") {
    SUBCASE("exact match and full miss") {
        Image t(5, 5, 3, 1.0), v(5, 5, 1, 1.0), m(5, 5, 1, 1.0);
        CHECK(loss_incident(t, v, m) == 0.0);
        v.fill(0.0);
        CHECK(loss_incident(t, v, m) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("missing visibility map points at the tracing pass") {
        Image t(5, 5, 3, 1.0), m(5, 5, 1, 1.0);
        CHECK_THROWS_WITH_AS(loss_incident(t, Image(), m), doctest::Contains("trace-visibility"),
                             InputError);
    }
    SUBCASE("constant transport over a half-shadowed plane scores the shadow fraction") {
        SyntheticSpec spec;
        spec.kind = SyntheticKind::PlanePair;
        spec.resolution = 48;
        const Camera cam = synthetic_camera(spec, 0);
        // Tilted so the plate throws its shadow out from under itself, where
        // this view actually sees receiver pixels.
        const DirectionalLight light{Vec3(-0.5, 0.1, 0.8).normalized(), Vec3::Ones()};

        Image vis(48, 48, 1, 1.0), mask(48, 48, 1, 0.0);
        int masked = 0, shadowed = 0;
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                Vec3 p, n;
                if (!synthetic_trace(spec, cam.position(), cam.ray_direction(x + 0.5, y + 0.5),
                                     &p, &n))
                    continue;
                mask.at(x, y) = 1.0;
                ++masked;
                const double v = synthetic_visibility(spec, p, light.direction);
                vis.at(x, y) = v;
                if (v == 0.0) ++shadowed;
            }
        REQUIRE(masked > 0);
        REQUIRE(shadowed > 0);
        REQUIRE(shadowed < masked);
        Image ones(48, 48, 3, 1.0);
        const double frac = static_cast<double>(shadowed) / masked;
        CHECK(loss_incident(ones, vis, mask) == doctest::Approx(frac).epsilon(1e-12));
    }
    SUBCASE("gradient") {
        Image t = random_image(81, 7, 6, 3);
        Image v = random_image(82, 7, 6, 1);
        Image m = random_image(83, 7, 6, 1);
        for (std::size_t i = 0; i < m.size(); ++i) m.data()[i] = m.data()[i] > 0.4 ? 1.0 : 0.0;
        Image grad;
        loss_incident(t, v, m, &grad);
        FdReport rep;
        fd_image(rep, t, grad, [&] { return loss_incident(t, v, m); }, 5, "inc");
        CHECK(rep.checked > 12);
        CHECK(rep.failed == 0);
    }
}

TEST_CASE("image metrics: psnr and normal error") {
    Image a = random_image(91, 8, 8, 3);
    CHECK(psnr(a, a) == doctest::Approx(99.0));
    Image b = a;
    for (std::size_t i = 0; i < b.size(); ++i) b.data()[i] = clamp01(b.data()[i] + 0.1);
    CHECK(psnr(a, b) > 15.0);
    CHECK(psnr(a, b) < 25.0);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));

    Image na = random_unit_normals(92, 8, 8);
    Image mask(8, 8, 1, 1.0);
    CHECK(normal_mae_deg(na, na, mask) == doctest::Approx(0.0).epsilon(1e-9));
    Image nb(8, 8, 3);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) nb.set_rgb(x, y, -na.rgb(x, y));
    CHECK(normal_mae_deg(na, nb, mask) == doctest::Approx(180.0).epsilon(1e-9));
    Image empty_mask(8, 8, 1, 0.0);
    CHECK_THROWS_AS(normal_mae_deg(na, nb, empty_mask), InputError);
}
