// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <filesystem>
#include <fstream>

#include <doctest.h>

#include "splatir/checkpoint.hpp"
#include "splatir/optimizer.hpp"
#include "splatir/raster.hpp"
#include "splatir/rng.hpp"
#include "test_util.hpp"

using namespace splatir;
using namespace splatir::testing;

namespace {

std::filesystem::path fresh_dir(const char* name) {
    const auto dir = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

/// One-splat scene facing the default camera, with chosen opacity and scale.
SplatScene one_splat(double opacity, double scale) {
    Gaussian2D g;
    g.position = Vec3(0.0, 0.0, 2.0);
    g.t_u = Vec3::UnitX();
    g.t_v = Vec3::UnitY();
    g.s_u = scale;
    g.s_v = scale * 0.8;
    g.opacity = opacity;
    g.albedo = Vec3(0.6, 0.5, 0.4);
    g.roughness = 0.5;
    SplatScene scene;
    double raw[kParamsPerGaussian];
    deactivate_parameters(g, raw);
    scene.push_back(raw);
    return scene;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters untouched") {
    std::vector<double> params{0.3, -1.2, 4.0};
    const std::vector<double> before = params;
    std::vector<double> grads(3, 0.0);
    AdamState state(3);
    state.step(params.data(), grads.data(), 3, {0.01});
    CHECK(params == before);
    CHECK(state.steps() == 1);
}

TEST_CASE("adam: first step moves by -lr * sign(gradient)") {
    std::vector<double> params{1.0, 2.0, -3.0, 0.5};
    std::vector<double> grads{0.7, -0.01, 1e-6, -4.0};
    AdamState state(4);
    state.step(params.data(), grads.data(), 4, {0.05});
    CHECK(params[0] == doctest::Approx(1.0 - 0.05).epsilon(1e-9));
    CHECK(params[1] == doctest::Approx(2.0 + 0.05).epsilon(1e-9));
    CHECK(params[2] == doctest::Approx(-3.0 - 0.05).epsilon(1e-6));
    CHECK(params[3] == doctest::Approx(0.5 + 0.05).epsilon(1e-9));
}

TEST_CASE("adam: learning-rate cycle maps attributes onto rows") {
    std::vector<double> params(6, 0.0);
    std::vector<double> grads(6, 1.0);
    AdamState state(6);
    state.step(params.data(), grads.data(), 6, {0.1, 0.001});
    for (int i = 0; i < 6; ++i) {
        const double expect = (i % 2 == 0) ? -0.1 : -0.001;
        CHECK(params[i] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("adam: quadratic bowl converges from 1 to below 1e-3 in 500 steps") {
    double x = 1.0;
    AdamState state(1);
    bool reached = false;
    for (int i = 0; i < 500 && !reached; ++i) {
        const double g = 2.0 * x;
        state.step(&x, &g, 1, {0.01});
        if (std::abs(x) < 1e-3) reached = true;
    }
    CHECK(reached);
}

TEST_CASE("adam: shape drift and empty cycle are contract errors") {
    std::vector<double> params(4, 0.0), grads(4, 1.0);
    AdamState wrong(3);
    CHECK_THROWS_AS(wrong.step(params.data(), grads.data(), 4, {0.1}), ContractError);
    AdamState ok(4);
    CHECK_THROWS_AS(ok.step(params.data(), grads.data(), 4, {}), ContractError);
}

TEST_CASE("optimizer state: positional-gradient accumulation") {
    SplatOptimizerState state;
    state.reset(2);
    std::vector<double> grads(2 * kParamsPerGaussian, 0.0);
    grads[param::kPosition + 0] = 3.0;
    grads[param::kPosition + 1] = 4.0;  // splat 0: norm 5
    grads[kParamsPerGaussian + param::kPosition + 2] = 2.0;  // splat 1: norm 2
    state.accumulate(grads);
    state.accumulate(grads);
    CHECK(state.grad_accum[0] == doctest::Approx(10.0));
    CHECK(state.grad_accum[1] == doctest::Approx(4.0));
    CHECK(state.grad_count[0] == 2);

    std::vector<double> wrong(kParamsPerGaussian, 0.0);
    CHECK_THROWS_AS(state.accumulate(wrong), ContractError);
}

TEST_CASE("densify: quiet healthy scene passes through bit-exact") {
    SplatScene scene = make_random_scene(7, 12);
    const std::vector<double> before = scene.raw_block();
    SplatOptimizerState state;
    state.reset(scene.size());
    Rng rng(3);
    const DensifyStats stats = densify_and_prune(scene, state, DensifyConfig{}, rng);
    CHECK(stats.cloned == 0);
    CHECK(stats.split == 0);
    CHECK(stats.pruned == 0);
    CHECK(scene.raw_block() == before);
}

TEST_CASE("densify: transparent splat is pruned and moments stay aligned") {
    SplatScene scene = make_random_scene(8, 5);
    // Middle splat goes transparent.
    scene.raw(2)[param::kOpacity] = logit(0.001);
    SplatOptimizerState state;
    state.reset(scene.size());
    // Tag the moments so we can watch rows relocate.
    for (std::size_t i = 0; i < state.adam.m().size(); ++i)
        state.adam.m()[i] = static_cast<double>(i);
    state.adam.set_steps(17);

    Rng rng(3);
    const DensifyStats stats = densify_and_prune(scene, state, DensifyConfig{}, rng);
    CHECK(stats.pruned == 1);
    CHECK(scene.size() == 4);
    CHECK(state.adam.steps() == 17);
    state.check_shapes(scene);
    // Moment rows 0,1,3,4 survive in order; row 3's first entry was 3*65.
    CHECK(state.adam.m()[2 * kParamsPerGaussian] ==
          doctest::Approx(3.0 * kParamsPerGaussian));
}

TEST_CASE("densify: oversized splat is pruned by the scale cap") {
    SplatScene scene = make_random_scene(9, 3);
    scene.raw(1)[param::kLogScale] = std::log(50.0);
    SplatOptimizerState state;
    state.reset(scene.size());
    DensifyConfig config;
    config.prune_scale = 10.0;
    Rng rng(3);
    const DensifyStats stats = densify_and_prune(scene, state, config, rng);
    CHECK(stats.pruned == 1);
    CHECK(scene.size() == 2);
}

TEST_CASE("densify: stressed small splat clones, stressed large splat splits") {
    DensifyConfig config;
    config.grad_threshold = 1e-3;
    config.clone_scale = 0.1;

    SUBCASE("clone duplicates the row exactly with fresh moments") {
        SplatScene scene = one_splat(0.8, 0.05);
        const std::vector<double> parent(scene.raw(0), scene.raw(0) + kParamsPerGaussian);
        SplatOptimizerState state;
        state.reset(1);
        state.grad_accum[0] = 1.0;  // mean 1.0 > threshold
        state.grad_count[0] = 1;
        for (auto& m : state.adam.m()) m = 5.0;
        Rng rng(3);
        const DensifyStats stats = densify_and_prune(scene, state, config, rng);
        CHECK(stats.cloned == 1);
        REQUIRE(scene.size() == 2);
        for (int k = 0; k < kParamsPerGaussian; ++k) {
            CHECK(scene.raw(0)[k] == parent[k]);
            CHECK(scene.raw(1)[k] == parent[k]);
        }
        CHECK(state.adam.m()[0] == 5.0);                      // parent kept its moments
        CHECK(state.adam.m()[kParamsPerGaussian] == 0.0);     // clone starts cold
    }

    SUBCASE("split makes two shrunk children along the dominant axis") {
        SplatScene scene = one_splat(0.8, 0.4);  // s_u = 0.4 dominates s_v = 0.32
        const Gaussian2D parent = activate_parameters(scene.raw(0));
        SplatOptimizerState state;
        state.reset(1);
        state.grad_accum[0] = 1.0;
        state.grad_count[0] = 1;
        Rng rng(3);
        DensifyConfig cfg = config;
        cfg.split_shrink = 1.6;
        const DensifyStats stats = densify_and_prune(scene, state, cfg, rng);
        CHECK(stats.split == 1);
        REQUIRE(scene.size() == 2);
        const Gaussian2D a = activate_parameters(scene.raw(0));
        const Gaussian2D b = activate_parameters(scene.raw(1));
        CHECK(a.s_u == doctest::Approx(parent.s_u / 1.6).epsilon(1e-9));
        CHECK(b.s_v == doctest::Approx(parent.s_v / 1.6).epsilon(1e-9));
        // Children sit on opposite sides of the parent along t_u.
        const double da = (a.position - parent.position).dot(parent.t_u);
        const double db = (b.position - parent.position).dot(parent.t_u);
        CHECK(da < 0.0);
        CHECK(db > 0.0);
        const double half = 0.5 * parent.s_u;
        CHECK(std::abs(da) >= half * 0.5 - 1e-12);
        CHECK(std::abs(da) <= half * 1.0 + 1e-12);
        // Off-axis displacement is zero.
        CHECK(std::abs((a.position - parent.position).dot(parent.t_v)) < 1e-12);
        // SH tails are inherited verbatim.
        for (int k = 0; k < kShCoeffs; ++k)
            CHECK(scene.raw(0)[param::kSh + k] == scene.raw(1)[param::kSh + k]);
    }
}

TEST_CASE("densify: cloning a faint splat barely changes its rendered opacity") {
    // A clone doubles the splat's contribution, so the opacity drift at its
    // pixel is bounded by alpha^2 for a faint splat; one optimizer step on the
    // duplicated block must not blow that up.
    const Camera cam = make_test_camera(16, 16);
    SplatScene scene = one_splat(0.04, 0.05);
    const Image before = rasterize(scene, cam, RenderMode::Color).gbuffer.opacity;

    DensifyConfig config;
    config.grad_threshold = 1e-3;
    config.clone_scale = 0.1;
    SplatOptimizerState state;
    state.reset(1);
    state.grad_accum[0] = 1.0;
    state.grad_count[0] = 1;
    Rng rng(3);
    densify_and_prune(scene, state, config, rng);
    REQUIRE(scene.size() == 2);

    // One small Adam step with a real opacity gradient.
    std::vector<double> grads(scene.raw_block().size(), 0.0);
    grads[param::kOpacity] = 0.5;
    grads[kParamsPerGaussian + param::kOpacity] = 0.5;
    state.adam.step(scene.raw_block().data(), grads.data(), grads.size(), {1e-3});

    const Image after = rasterize(scene, cam, RenderMode::Color).gbuffer.opacity;
    double worst = 0.0;
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x)
            worst = std::max(worst, std::abs(after.at(x, y) - before.at(x, y)));
    CHECK(worst > 0.0);     // the clone does contribute
    CHECK(worst < 0.05);    // but stays within the faint-splat bound
}

TEST_CASE("checkpoint: round trip is bit-exact, with and without the network") {
    const auto dir = fresh_dir("splatir_ckpt_test");

    Checkpoint ckpt;
    ckpt.stage = 2;
    ckpt.iteration = 1234;
    ckpt.scene = make_random_scene(10, 7);
    ckpt.has_mlp = true;
    ckpt.mlp = LightMLP::seeded(99);

    const auto path = dir / "model.ckpt";
    save_checkpoint(path, ckpt);
    const Checkpoint loaded = load_checkpoint(path);
    CHECK(loaded.stage == 2);
    CHECK(loaded.iteration == 1234);
    CHECK(loaded.scene.raw_block() == ckpt.scene.raw_block());
    CHECK(loaded.has_mlp);
    CHECK(loaded.mlp.params() == ckpt.mlp.params());

    // Saving the loaded copy reproduces the file byte for byte.
    const auto path2 = dir / "model2.ckpt";
    save_checkpoint(path2, loaded);
    CHECK(slurp(path) == slurp(path2));

    // Stage-1 checkpoints skip the network block entirely.
    Checkpoint s1;
    s1.scene = make_random_scene(11, 3);
    const auto p1 = dir / "s1.ckpt";
    save_checkpoint(p1, s1);
    const Checkpoint l1 = load_checkpoint(p1);
    CHECK_FALSE(l1.has_mlp);
    CHECK(l1.scene.raw_block() == s1.scene.raw_block());
    CHECK(std::filesystem::file_size(p1) <
          std::filesystem::file_size(path));  // no network payload

    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint: malformed files are rejected with input errors") {
    const auto dir = fresh_dir("splatir_ckpt_bad");
    CHECK_THROWS_AS(load_checkpoint(dir / "absent.ckpt"), InputError);

    Checkpoint ckpt;
    ckpt.scene = make_random_scene(12, 4);
    const auto good = dir / "good.ckpt";
    save_checkpoint(good, ckpt);
    const std::string bytes = slurp(good);

    SUBCASE("bad magic") {
        const auto p = dir / "magic.ckpt";
        std::string corrupt = bytes;
        corrupt[0] = 'X';
        std::ofstream(p, std::ios::binary) << corrupt;
        CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("not a checkpoint"),
                             InputError);
    }
    SUBCASE("unsupported version") {
        const auto p = dir / "version.ckpt";
        std::string corrupt = bytes;
        corrupt[4] = 9;  // little-endian version word
        std::ofstream(p, std::ios::binary) << corrupt;
        CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("version"), InputError);
    }
    SUBCASE("truncation") {
        const auto p = dir / "short.ckpt";
        std::ofstream(p, std::ios::binary) << bytes.substr(0, bytes.size() / 2);
        CHECK_THROWS_WITH_AS(load_checkpoint(p), doctest::Contains("truncated"), InputError);
    }
    std::filesystem::remove_all(dir);
}
