// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "fd_check.hpp"
#include "splatir/light_field.hpp"
#include "splatir/rng.hpp"
#include "test_util.hpp"

using namespace splatir;

namespace {

MatX random_input(unsigned seed, int cols) {
    Rng rng(seed);
    MatX m(kMlpInputDim, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < kMlpInputDim; ++i) m(i, j) = rng.uniform(-1.0, 1.0);
    return m;
}

/// Seeded network with a non-zero output layer so gradients reach every layer.
LightMLP perturbed_mlp(unsigned seed) {
    LightMLP mlp = LightMLP::seeded(seed);
    Rng rng(seed + 1);
    const std::size_t head = 3 * kMlpHiddenDim + 3;  // final layer sits last
    for (std::size_t k = mlp.params().size() - head; k < mlp.params().size(); ++k)
        mlp.params()[k] = 0.3 * rng.normal();
    return mlp;
}

struct TransportRig {
    Camera cam;
    GBuffer gb;
    Image upstream;
};

TransportRig make_rig(unsigned seed, int w, int h, int count = 6) {
    TransportRig rig;
    rig.cam = testing::make_test_camera(w, h);
    const SplatScene scene = testing::make_random_scene(seed, count);
    rig.gb = rasterize(scene, rig.cam, RenderMode::Deferred).gbuffer;
    Rng rng(seed + 7);
    rig.upstream = Image(w, h, 3);
    for (std::size_t i = 0; i < rig.upstream.size(); ++i)
        rig.upstream.data()[i] = rng.uniform(0.1, 1.0);
    return rig;
}

double transport_objective(const LightMLP& mlp, const TransportRig& rig,
                           const DirectionalLight& light) {
    const TransportEval ev = transport_forward(mlp, rig.gb, rig.cam, light);
    double acc = 0.0;
    for (std::size_t i = 0; i < ev.transport.size(); ++i)
        acc += rig.upstream.data()[i] * ev.transport.data()[i];
    return acc;
}

}  // namespace

TEST_CASE("fourier encoding lays out octave sin/cos pairs") {
    const Vec3 x(0.25, 0.0, -0.5);
    double enc[kEncodedPosDim];
    fourier_encode(x, enc);
    CHECK(enc[0] == 0.25);
    CHECK(enc[1] == 0.0);
    CHECK(enc[2] == -0.5);
    // band 0: sin(pi x), cos(pi x)
    CHECK(enc[3] == doctest::Approx(std::sin(kPi * 0.25)).epsilon(1e-15));
    CHECK(enc[4] == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(enc[5] == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(enc[6] == doctest::Approx(std::cos(kPi * 0.25)).epsilon(1e-15));
    CHECK(enc[7] == 1.0);
    CHECK(enc[8] == doctest::Approx(0.0).epsilon(1e-12));
    // band 1 doubles the frequency: sin(2 pi * 0.25) = 1
    CHECK(enc[9] == doctest::Approx(1.0).epsilon(1e-12));
    // the last slot is cos(2^5 pi * -0.5) = cos(16 pi) = 1
    CHECK(enc[kEncodedPosDim - 1] == doctest::Approx(1.0).epsilon(1e-12));

    testing::FdReport rep;
    testing::FdOptions opt;
    Vec3 p(0.37, -0.81, 1.93);
    double weights[kEncodedPosDim];
    Rng rng(3);
    for (double& v : weights) v = rng.uniform(-1.0, 1.0);
    auto eval = [&]() {
        double e[kEncodedPosDim];
        fourier_encode(p, e);
        double acc = 0.0;
        for (int i = 0; i < kEncodedPosDim; ++i) acc += weights[i] * e[i];
        return acc;
    };
    Vec3 g = Vec3::Zero();
    fourier_encode_backward(p, weights, g);
    for (int c = 0; c < 3; ++c)
        testing::fd_check_entry(rep, eval, &p[c], g[c], opt, "fourier axis");
    CHECK(rep.failed == 0);
    CHECK(rep.checked == 3);
}

TEST_CASE("fresh networks are flat and seeding is reproducible") {
    const LightMLP zero;
    const MatX out = zero.forward(random_input(1, 4));
    CHECK(out.rows() == 3);
    CHECK(out.cols() == 4);
    for (int j = 0; j < 4; ++j)
        for (int i = 0; i < 3; ++i) CHECK(out(i, j) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    const LightMLP a = LightMLP::seeded(42);
    const LightMLP b = LightMLP::seeded(42);
    const LightMLP c = LightMLP::seeded(43);
    CHECK(a.params() == b.params());
    CHECK(a.params() != c.params());
    // The output head starts at zero, so even a seeded network is flat.
    const MatX seeded_out = a.forward(random_input(2, 3));
    for (int j = 0; j < 3; ++j)
        for (int i = 0; i < 3; ++i)
            CHECK(seeded_out(i, j) == doctest::Approx(std::log(2.0)).epsilon(1e-15));

    // He fan-in scale on a hidden layer: the first layer holds 128 x 56 weights.
    double sum = 0.0, sumsq = 0.0;
    const std::size_t n0 = static_cast<std::size_t>(kMlpHiddenDim) * kMlpInputDim;
    for (std::size_t k = 0; k < n0; ++k) {
        sum += a.params()[k];
        sumsq += a.params()[k] * a.params()[k];
    }
    const double mean = sum / n0;
    const double stddev = std::sqrt(sumsq / n0 - mean * mean);
    CHECK(std::abs(mean) < 0.01);
    CHECK(stddev == doctest::Approx(std::sqrt(2.0 / kMlpInputDim)).epsilon(0.05));
}

TEST_CASE("batched evaluation agrees with per-column evaluation") {
    const LightMLP mlp = perturbed_mlp(9);
    const MatX input = random_input(4, 7);
    const MatX batch = mlp.forward(input);
    for (int j = 0; j < input.cols(); ++j) {
        const MatX single = mlp.forward(input.col(j));
        for (int i = 0; i < 3; ++i)
            CHECK(batch(i, j) == doctest::Approx(single(i, 0)).epsilon(1e-12));
    }
}

TEST_CASE("network gradients match central differences") {
    LightMLP mlp = perturbed_mlp(11);
    MatX input = random_input(6, 2);
    MatX weights(3, 2);
    Rng rng(12);
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < 3; ++i) weights(i, j) = rng.uniform(-1.0, 1.0);

    auto eval = [&]() { return mlp.forward(input).cwiseProduct(weights).sum(); };

    MlpCache cache;
    mlp.forward(input, &cache);
    std::vector<double> grad(LightMLP::param_count(), 0.0);
    const MatX g_input = mlp.backward(cache, weights, grad);

    testing::FdReport rep;
    testing::FdOptions opt;
    opt.step = 1e-5;
    for (int j = 0; j < 2; ++j)
        for (int i = 0; i < kMlpInputDim; ++i)
            testing::fd_check_entry(rep, eval, &input(i, j), g_input(i, j), opt, "input");
    for (std::size_t k = 0; k < grad.size(); k += 229)
        testing::fd_check_entry(rep, eval, &mlp.params()[k], grad[k], opt, "param");
    CHECK_MESSAGE(rep.failed == 0, rep.worst_label, " rel err ", rep.worst_rel);
    CHECK(rep.checked >= 300);
    CHECK(rep.skip_fraction() < 0.2);

    // Backward accumulates: a second sweep doubles the buffer.
    std::vector<double> twice(LightMLP::param_count(), 0.0);
    mlp.backward(cache, weights, twice);
    mlp.backward(cache, weights, twice);
    for (std::size_t k = 0; k < twice.size(); k += 1009)
        CHECK(twice[k] == doctest::Approx(2.0 * grad[k]).epsilon(1e-12));
}

TEST_CASE("transport maps cover foreground pixels and wire pixel inputs correctly") {
    const TransportRig rig = make_rig(21, 8, 8);
    DirectionalLight light;
    light.direction = Vec3(0.3, -0.4, -1.0).normalized();

    const LightMLP flat;  // zero network
    const TransportEval ev = transport_forward(flat, rig.gb, rig.cam, light);
    CHECK(!ev.pixels.empty());
    CHECK(static_cast<int>(ev.pixels.size()) < 64);
    for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
            const bool fg = shade_foreground(rig.gb, x, y, {});
            const double expect = fg ? std::log(2.0) : 1.0;
            for (int ch = 0; ch < 3; ++ch)
                CHECK(ev.transport.at(x, y, ch) == doctest::Approx(expect).epsilon(1e-15));
        }
    }

    // A live network's per-pixel output must match a hand-assembled column.
    const LightMLP mlp = perturbed_mlp(23);
    const TransportEval lv = transport_forward(mlp, rig.gb, rig.cam, light);
    const int px = lv.pixels[lv.pixels.size() / 2];
    const int x = px % 8, y = px / 8;
    MlpPoint pt;
    pt.position = rig.cam.unproject(x + 0.5, y + 0.5, rig.gb.depth.at(x, y, 0));
    pt.tangent_u = rig.gb.tangent_u.rgb(x, y);
    pt.tangent_v = rig.gb.tangent_v.rgb(x, y);
    pt.scale = Vec2(rig.gb.scale.at(x, y, 0), rig.gb.scale.at(x, y, 1));
    pt.normal = rig.gb.normal.rgb(x, y);
    pt.omega_in = light.direction;
    pt.omega_out = (rig.cam.position() - pt.position).normalized();
    MatX col(kMlpInputDim, 1);
    encode_mlp_point(pt, col.data());
    const MatX ref = mlp.forward(col);
    for (int ch = 0; ch < 3; ++ch)
        CHECK(lv.transport.at(x, y, ch) == doctest::Approx(ref(ch, 0)).epsilon(1e-12));

    GBuffer color_only =
        rasterize(testing::make_random_scene(21, 6), rig.cam, RenderMode::Color).gbuffer;
    CHECK_THROWS_AS(transport_forward(mlp, color_only, rig.cam, light), ContractError);
}

TEST_CASE("transport gradients match central differences") {
    TransportRig rig = make_rig(31, 7, 6, 14);
    DirectionalLight light;
    light.direction = Vec3(-0.2, 0.3, -1.0).normalized();
    LightMLP mlp = perturbed_mlp(33);

    auto eval = [&]() { return transport_objective(mlp, rig, light); };

    const TransportEval ev = transport_forward(mlp, rig.gb, rig.cam, light);
    REQUIRE(!ev.pixels.empty());
    std::vector<double> grad(LightMLP::param_count(), 0.0);
    const GBufferGrads gg = transport_backward(mlp, ev, rig.cam, rig.upstream, grad);

    testing::FdReport rep;
    testing::FdOptions opt;
    // Small step with a tight agreement guard: the high-frequency encoding
    // amplifies perturbations, so wider steps can straddle a ReLU kink.
    opt.step = 1e-6;
    opt.smooth_rel = 0.01;
    for (int px : ev.pixels) {
        const int x = px % 7, y = px / 7;
        const std::string tag = "px " + std::to_string(x) + "," + std::to_string(y);
        for (int c = 0; c < 3; ++c) {
            testing::fd_check_entry(rep, eval, &rig.gb.normal.at(x, y, c), gg.normal.at(x, y, c),
                                    opt, tag + " normal");
            testing::fd_check_entry(rep, eval, &rig.gb.tangent_u.at(x, y, c),
                                    gg.tangent_u.at(x, y, c), opt, tag + " tu");
            testing::fd_check_entry(rep, eval, &rig.gb.tangent_v.at(x, y, c),
                                    gg.tangent_v.at(x, y, c), opt, tag + " tv");
        }
        testing::fd_check_entry(rep, eval, &rig.gb.scale.at(x, y, 0), gg.scale.at(x, y, 0), opt,
                                tag + " su");
        testing::fd_check_entry(rep, eval, &rig.gb.scale.at(x, y, 1), gg.scale.at(x, y, 1), opt,
                                tag + " sv");
        testing::fd_check_entry(rep, eval, &rig.gb.depth.at(x, y, 0), gg.depth.at(x, y, 0), opt,
                                tag + " depth");
    }
    for (std::size_t k = 0; k < grad.size(); k += 701)
        testing::fd_check_entry(rep, eval, &mlp.params()[k], grad[k], opt, "param");
    CHECK_MESSAGE(rep.failed == 0, rep.worst_label, " rel err ", rep.worst_rel);
    CHECK(rep.checked >= 100);
    CHECK(rep.skip_fraction() < 0.2);
}
