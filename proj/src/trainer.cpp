// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <string>
#include <utility>

#include <nlohmann/json.hpp>

#include "splatir/light_field.hpp"
#include "splatir/metrics.hpp"
#include "splatir/rng.hpp"

namespace splatir {
namespace {

using nlohmann::json;

[[noreturn]] void unknown_key(const std::string& scope, const std::string& key) {
    throw InputError("train config: unknown key '" + scope + key + "'");
}

void read_double(const json& j, const char* key, double& out) {
    if (!j.is_number()) throw InputError(std::string("train config: '") + key + "' must be a number");
    out = j.get<double>();
}

void read_int(const json& j, const char* key, int& out) {
    if (!j.is_number_integer())
        throw InputError(std::string("train config: '") + key + "' must be an integer");
    out = j.get<int>();
}

void parse_weights(const json& j, LossWeights& w) {
    for (const auto& [key, value] : j.items()) {
        if (key == "normal_consistency") read_double(value, key.c_str(), w.normal_consistency);
        else if (key == "normal_reg") read_double(value, key.c_str(), w.normal_reg);
        else if (key == "mask") read_double(value, key.c_str(), w.mask);
        else if (key == "incident") read_double(value, key.c_str(), w.incident);
        else unknown_key("weights.", key);
    }
}

void parse_densify(const json& j, DensifyConfig& d) {
    for (const auto& [key, value] : j.items()) {
        if (key == "grad_threshold") read_double(value, key.c_str(), d.grad_threshold);
        else if (key == "clone_scale") read_double(value, key.c_str(), d.clone_scale);
        else if (key == "split_shrink") read_double(value, key.c_str(), d.split_shrink);
        else if (key == "prune_opacity") read_double(value, key.c_str(), d.prune_opacity);
        else if (key == "prune_scale") read_double(value, key.c_str(), d.prune_scale);
        else unknown_key("densify.", key);
    }
}

void parse_raster(const json& j, RasterConfig& r) {
    for (const auto& [key, value] : j.items()) {
        if (key == "gaussian_cutoff") read_double(value, key.c_str(), r.gaussian_cutoff);
        else if (key == "transmittance_min") read_double(value, key.c_str(), r.transmittance_min);
        else if (key == "near_plane") read_double(value, key.c_str(), r.near_plane);
        else if (key == "lowpass_sigma_px") read_double(value, key.c_str(), r.lowpass_sigma_px);
        else if (key == "deterministic") r.deterministic = value.get<bool>();
        else if (key == "threads") read_int(value, key.c_str(), r.threads);
        else unknown_key("raster.", key);
    }
}

void parse_shade(const json& j, ShadeConfig& s) {
    for (const auto& [key, value] : j.items()) {
        if (key == "opacity_threshold") read_double(value, key.c_str(), s.opacity_threshold);
        else if (key == "min_depth") read_double(value, key.c_str(), s.min_depth);
        else unknown_key("shade.", key);
    }
}

void parse_tracer(const json& j, TracerConfig& t) {
    for (const auto& [key, value] : j.items()) {
        if (key == "footprint_sigma") read_double(value, key.c_str(), t.footprint_sigma);
        else if (key == "min_transmittance") read_double(value, key.c_str(), t.min_transmittance);
        else if (key == "leaf_size") read_int(value, key.c_str(), t.leaf_size);
        else unknown_key("tracer.", key);
    }
}

NormalRegPenalty parse_penalty(const json& j) {
    const std::string v = j.get<std::string>();
    if (v == "l1") return NormalRegPenalty::L1;
    if (v == "l2") return NormalRegPenalty::L2;
    if (v == "cosine") return NormalRegPenalty::Cosine;
    throw InputError("train config: normal_penalty must be one of l1 / l2 / cosine, got '" + v +
                     "'");
}

void check_term(double value, int stage, const char* term) {
    if (!std::isfinite(value)) {
        char buf[128];
        std::snprintf(buf, sizeof(buf), "stage %d %s loss is not finite", stage, term);
        throw NumericError(buf);
    }
}

/// dst += s * src, treating an empty dst as zeros of src's shape. Empty or
/// zero-scaled sources are no-ops.
void add_scaled(Image& dst, const Image& src, double s) {
    if (src.empty() || s == 0.0) return;
    if (dst.empty()) dst = Image(src.width(), src.height(), src.channels(), 0.0);
    if (!dst.same_shape(src)) throw ContractError("add_scaled: gradient shape mismatch");
    for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
}

/// Learning rate for raw index i is cycle[i % 65]; one entry per attribute.
std::vector<double> splat_lr_cycle(const TrainConfig& c) {
    std::vector<double> cycle(kParamsPerGaussian, 0.0);
    for (int i = 0; i < 3; ++i) cycle[param::kPosition + i] = c.lr_position;
    for (int i = 0; i < 6; ++i) cycle[param::kTangentU + i] = c.lr_tangent;
    for (int i = 0; i < 2; ++i) cycle[param::kLogScale + i] = c.lr_scale;
    cycle[param::kOpacity] = c.lr_opacity;
    for (int i = 0; i < kShCoeffs; ++i) cycle[param::kSh + i] = c.lr_sh;
    for (int i = 0; i < 3; ++i) cycle[param::kAlbedo + i] = c.lr_material;
    cycle[param::kMetallic] = c.lr_material;
    cycle[param::kRoughness] = c.lr_material;
    return cycle;
}

struct Stage2Forward {
    RenderResult forward;
    TransportEval transport;
    Image incident;
    Image rendered;
};

Stage2Forward run_stage2_forward(const SplatScene& scene, const LightMLP& mlp,
                                 const Camera& camera, const DirectionalLight& light,
                                 const RasterConfig& raster, const ShadeConfig& shade) {
    Stage2Forward out;
    out.forward = rasterize(scene, camera, RenderMode::Deferred, raster);
    out.transport = transport_forward(mlp, out.forward.gbuffer, camera, light, shade);
    const Image& t = out.transport.transport;
    out.incident = Image(t.width(), t.height(), 3);
    for (int y = 0; y < t.height(); ++y)
        for (int x = 0; x < t.width(); ++x)
            for (int c = 0; c < 3; ++c)
                out.incident.at(x, y, c) = t.at(x, y, c) * light.intensity[c];
    out.rendered = shade_sdl(out.forward.gbuffer, camera, light, out.incident, shade);
    return out;
}

}  // namespace

TrainConfig load_train_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("train config: cannot open " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw InputError("train config: " + path.string() + " is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw InputError("train config: top level must be an object");

    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        if (key == "weights") parse_weights(value, c.weights);
        else if (key == "normal_penalty") c.normal_penalty = parse_penalty(value);
        else if (key == "stage1_iterations") read_int(value, key.c_str(), c.stage1_iterations);
        else if (key == "stage2_iterations") read_int(value, key.c_str(), c.stage2_iterations);
        else if (key == "init_splats") read_int(value, key.c_str(), c.init_splats);
        else if (key == "seed") c.seed = value.get<std::uint64_t>();
        else if (key == "densify_from") read_int(value, key.c_str(), c.densify_from);
        else if (key == "densify_until") read_int(value, key.c_str(), c.densify_until);
        else if (key == "densify_interval") read_int(value, key.c_str(), c.densify_interval);
        else if (key == "densify") parse_densify(value, c.densify);
        else if (key == "lr_position") read_double(value, key.c_str(), c.lr_position);
        else if (key == "lr_tangent") read_double(value, key.c_str(), c.lr_tangent);
        else if (key == "lr_scale") read_double(value, key.c_str(), c.lr_scale);
        else if (key == "lr_opacity") read_double(value, key.c_str(), c.lr_opacity);
        else if (key == "lr_sh") read_double(value, key.c_str(), c.lr_sh);
        else if (key == "lr_material") read_double(value, key.c_str(), c.lr_material);
        else if (key == "lr_mlp") read_double(value, key.c_str(), c.lr_mlp);
        else if (key == "checkpoint_interval") read_int(value, key.c_str(), c.checkpoint_interval);
        else if (key == "metrics_interval") read_int(value, key.c_str(), c.metrics_interval);
        else if (key == "raster") parse_raster(value, c.raster);
        else if (key == "shade") parse_shade(value, c.shade);
        else if (key == "tracer") parse_tracer(value, c.tracer);
        else unknown_key("", key);
    }
    if (c.stage1_iterations < 0 || c.stage2_iterations < 0)
        throw InputError("train config: iteration counts must be nonnegative");
    if (c.init_splats <= 0) throw InputError("train config: init_splats must be positive");
    if (c.densify_interval <= 0) throw InputError("train config: densify_interval must be positive");
    if (c.metrics_interval <= 0) throw InputError("train config: metrics_interval must be positive");
    return c;
}

Stage1Eval evaluate_stage1(const SplatScene& scene, const Camera& camera, const Image& target,
                           const Image& guidance_cam, const Image& mask,
                           const TrainConfig& config) {
    const LossWeights& w = config.weights;
    Stage1Eval out;

    RenderResult forward = rasterize(scene, camera, RenderMode::Color, config.raster);
    const GBuffer& gb = forward.gbuffer;

    Image g_color;
    out.losses.rgb = loss_rgb(gb.color, target, &g_color);
    check_term(out.losses.rgb, 1, "rgb");
    out.psnr = psnr(gb.color, target);

    GBufferGrads upstream;
    upstream.color = std::move(g_color);

    if (w.normal_consistency != 0.0) {
        NormalConsistencyResult nc = loss_normal_consistency(gb, camera, config.shade);
        check_term(nc.value, 1, "normal consistency");
        out.losses.normal_consistency = nc.value;
        add_scaled(upstream.normal, nc.grad_normal, w.normal_consistency);
        add_scaled(upstream.depth, nc.grad_depth, w.normal_consistency);
    }
    if (w.normal_reg != 0.0 && !guidance_cam.empty()) {
        Image g_nr;
        out.losses.normal_reg = loss_normal_reg(gb.normal, guidance_cam, camera, mask, &g_nr,
                                                config.normal_penalty);
        check_term(out.losses.normal_reg, 1, "normal guidance");
        add_scaled(upstream.normal, g_nr, w.normal_reg);
    }
    if (w.mask != 0.0) {
        Image g_op;
        out.losses.mask = loss_mask(gb.opacity, mask, &g_op);
        check_term(out.losses.mask, 1, "mask");
        add_scaled(upstream.opacity, g_op, w.mask);
    }

    out.losses.total = out.losses.rgb + w.normal_consistency * out.losses.normal_consistency +
                       w.normal_reg * out.losses.normal_reg + w.mask * out.losses.mask;
    check_term(out.losses.total, 1, "total");

    out.grad_raw = rasterize_backward(scene, camera, forward, upstream);
    return out;
}

Image render_stage2(const SplatScene& scene, const LightMLP& mlp, const Camera& camera,
                    const DirectionalLight& light, const RasterConfig& raster,
                    const ShadeConfig& shade) {
    return run_stage2_forward(scene, mlp, camera, light, raster, shade).rendered;
}

Stage2Eval evaluate_stage2(const SplatScene& scene, const LightMLP& mlp, const Camera& camera,
                           const DirectionalLight& light, const Image& target,
                           const Image& guidance_cam, const Image& mask, const Image& visibility,
                           const TrainConfig& config) {
    const LossWeights& w = config.weights;
    Stage2Eval out;

    Stage2Forward fw =
        run_stage2_forward(scene, mlp, camera, light, config.raster, config.shade);
    const GBuffer& gb = fw.forward.gbuffer;

    Image g_rendered;
    out.losses.rgb = loss_rgb(fw.rendered, target, &g_rendered);
    check_term(out.losses.rgb, 2, "rgb");
    out.psnr = psnr(fw.rendered, target);

    // Shading backward: G-buffer material/normal grads plus the incident-map
    // gradient that continues into the transport network.
    ShadeGrads sg =
        shade_sdl_backward(gb, camera, light, fw.incident, g_rendered, config.shade);

    Image g_transport;  // via incident = transport * intensity
    const Image& gi = sg.incident;
    g_transport = Image(gi.width(), gi.height(), 3);
    for (int y = 0; y < gi.height(); ++y)
        for (int x = 0; x < gi.width(); ++x)
            for (int c = 0; c < 3; ++c)
                g_transport.at(x, y, c) = gi.at(x, y, c) * light.intensity[c];

    if (w.incident != 0.0) {
        Image g_inc;
        out.losses.incident = loss_incident(fw.transport.transport, visibility, mask, &g_inc);
        check_term(out.losses.incident, 2, "incident");
        add_scaled(g_transport, g_inc, w.incident);
    }

    out.grad_mlp.assign(LightMLP::param_count(), 0.0);
    GBufferGrads tg = transport_backward(mlp, fw.transport, camera, g_transport, out.grad_mlp);

    GBufferGrads upstream;
    upstream.albedo = std::move(sg.gbuffer.albedo);
    upstream.metallic = std::move(sg.gbuffer.metallic);
    upstream.roughness = std::move(sg.gbuffer.roughness);
    upstream.normal = std::move(sg.gbuffer.normal);
    add_scaled(upstream.normal, tg.normal, 1.0);
    upstream.tangent_u = std::move(tg.tangent_u);
    upstream.tangent_v = std::move(tg.tangent_v);
    upstream.scale = std::move(tg.scale);
    upstream.depth = std::move(tg.depth);

    if (w.normal_consistency != 0.0) {
        NormalConsistencyResult nc = loss_normal_consistency(gb, camera, config.shade);
        check_term(nc.value, 2, "normal consistency");
        out.losses.normal_consistency = nc.value;
        add_scaled(upstream.normal, nc.grad_normal, w.normal_consistency);
        add_scaled(upstream.depth, nc.grad_depth, w.normal_consistency);
    }
    if (w.normal_reg != 0.0 && !guidance_cam.empty()) {
        Image g_nr;
        out.losses.normal_reg = loss_normal_reg(gb.normal, guidance_cam, camera, mask, &g_nr,
                                                config.normal_penalty);
        check_term(out.losses.normal_reg, 2, "normal guidance");
        add_scaled(upstream.normal, g_nr, w.normal_reg);
    }
    if (w.mask != 0.0) {
        Image g_op;
        out.losses.mask = loss_mask(gb.opacity, mask, &g_op);
        check_term(out.losses.mask, 2, "mask");
        add_scaled(upstream.opacity, g_op, w.mask);
    }

    out.losses.total = out.losses.rgb + w.normal_consistency * out.losses.normal_consistency +
                       w.normal_reg * out.losses.normal_reg + w.mask * out.losses.mask +
                       w.incident * out.losses.incident;
    check_term(out.losses.total, 2, "total");

    out.grad_raw = rasterize_backward(scene, camera, fw.forward, upstream);
    return out;
}

SplatScene initialize_scene(const MVPSDataset& dataset, const TrainConfig& config) {
    if (dataset.views.empty()) throw InputError("initialize_scene: dataset has no views");

    // The point the cameras jointly look at: least-squares intersection of the
    // optical axes. A = sum of (I - z z^T) projectors, b the same applied to
    // the camera centers.
    Mat3 A = Mat3::Zero();
    Vec3 b = Vec3::Zero();
    std::vector<Vec3> origins, axes;
    for (const View& view : dataset.views) {
        const Vec3 o = view.camera.position();
        const Vec3 z = view.camera.rotation().transpose() * Vec3::UnitZ();
        const Mat3 P = Mat3::Identity() - z * z.transpose();
        A += P;
        b += P * o;
        origins.push_back(o);
        axes.push_back(z);
    }
    Vec3 center;
    if (std::abs(A.determinant()) > 1e-12) {
        center = A.ldlt().solve(b);
    } else {
        // Degenerate rig (all axes parallel): drop the center one mean
        // camera-spread ahead of the mean camera.
        Vec3 mean_o = Vec3::Zero(), mean_z = Vec3::Zero();
        for (std::size_t i = 0; i < origins.size(); ++i) {
            mean_o += origins[i];
            mean_z += axes[i];
        }
        mean_o /= static_cast<double>(origins.size());
        mean_z.normalize();
        double spread = 0.0;
        for (const Vec3& o : origins) spread += (o - mean_o).norm();
        spread /= static_cast<double>(origins.size());
        center = mean_o + mean_z * std::max(spread, 1.0);
    }

    double mean_dist = 0.0;
    for (const Vec3& o : origins) mean_dist += (center - o).norm();
    mean_dist /= static_cast<double>(origins.size());
    const double ball_radius = 0.35 * mean_dist;
    const int count = config.init_splats;
    const double splat_scale =
        0.7 * std::sqrt(4.0 * kPi / static_cast<double>(count)) * ball_radius;

    Rng rng(config.seed);
    SplatScene scene;
    for (int i = 0; i < count; ++i) {
        Gaussian2D g;
        Vec3 p;
        do {
            p = Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        } while (p.squaredNorm() > 1.0);
        g.position = center + ball_radius * p;

        Vec3 u(rng.normal(), rng.normal(), rng.normal());
        while (u.norm() < 1e-6) u = Vec3(rng.normal(), rng.normal(), rng.normal());
        g.t_u = u.normalized();
        Vec3 v;
        do {
            v = Vec3(rng.normal(), rng.normal(), rng.normal());
            v -= v.dot(g.t_u) * g.t_u;
        } while (v.norm() < 1e-6);
        g.t_v = v.normalized();

        g.s_u = g.s_v = splat_scale;
        g.opacity = 0.1;
        g.sh.fill(0.0);  // activation adds 0.5, so the scene starts mid gray
        g.albedo = Vec3::Constant(0.5);
        g.metallic = 0.1;  // off zero so the sigmoid keeps a usable gradient
        g.roughness = 0.5;

        double raw[kParamsPerGaussian];
        deactivate_parameters(g, raw);
        scene.push_back(raw);
    }
    return scene;
}

TrainArtifacts train(const MVPSDataset& dataset, const TrainConfig& config,
                     const std::filesystem::path& workdir) {
    std::vector<int> train_idx, test_idx;
    resolve_split(dataset, train_idx, test_idx);
    if (train_idx.empty()) throw InputError("train: dataset split has no training views");
    std::filesystem::create_directories(workdir);

    TrainArtifacts art;
    art.stage1_path = workdir / "stage1.ckpt";
    art.stage2_path = workdir / "stage2.ckpt";
    art.metrics_path = workdir / "metrics.csv";

    std::ofstream metrics(art.metrics_path);
    if (!metrics) throw InputError("train: cannot open " + art.metrics_path.string());
    metrics << "iteration,stage,rgb,normal_consistency,normal_reg,mask,incident,total,psnr,"
               "splats\n";
    auto log_metrics = [&](int iter, int stage, const StageLosses& l, double psnr_probe,
                           std::size_t splats) {
        char buf[320];
        std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%zu\n",
                      iter, stage, l.rgb, l.normal_consistency, l.normal_reg, l.mask, l.incident,
                      l.total, psnr_probe, splats);
        metrics << buf;
    };

    // Stage-1 targets: per-view light averages, computed once.
    std::vector<Image> averages(dataset.views.size());
    for (int v : train_idx) averages[v] = light_average(dataset.views[v]);

    SplatScene scene = initialize_scene(dataset, config);
    const std::vector<double> lr_cycle = splat_lr_cycle(config);
    SplatOptimizerState opt;
    opt.reset(scene.size());
    opt.adam = AdamState(scene.raw_block().size());
    Rng densify_rng(config.seed ^ 0xD1CEBEEFULL);

    for (int i = 0; i < config.stage1_iterations; ++i) {
        const int v = train_idx[static_cast<std::size_t>(i) % train_idx.size()];
        const View& view = dataset.views[v];
        Stage1Eval ev = evaluate_stage1(scene, view.camera, averages[v], view.guidance_normals,
                                        view.mask, config);
        art.stage1_totals.push_back(ev.losses.total);
        opt.accumulate(ev.grad_raw);
        opt.adam.step(scene.raw_block().data(), ev.grad_raw.data(), scene.raw_block().size(),
                      lr_cycle);
        scene.reorthonormalize_tangents();

        const int it = i + 1;
        if (it >= config.densify_from && it <= config.densify_until &&
            (it - config.densify_from) % config.densify_interval == 0 &&
            it < config.stage1_iterations) {
            densify_and_prune(scene, opt, config.densify, densify_rng);
        }
        if (it % config.metrics_interval == 0 || it == config.stage1_iterations)
            log_metrics(it, 1, ev.losses, ev.psnr, scene.size());
        if (config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0) {
            char name[48];
            std::snprintf(name, sizeof(name), "stage1_%06d.ckpt", it);
            save_checkpoint(workdir / name,
                            Checkpoint{1, it, scene, false, LightMLP()});
        }
    }

    art.stage1 = Checkpoint{1, config.stage1_iterations, scene, false, LightMLP()};
    save_checkpoint(art.stage1_path, art.stage1);

    LightMLP mlp = LightMLP::seeded(config.seed);
    if (config.stage2_iterations > 0) {
        // Visibility is ray-traced once against the frozen stage-1 geometry and
        // reused for every stage-2 iteration (the incident loss supervises the
        // network against these maps).
        const SplatBVH bvh = SplatBVH::build(scene, config.tracer);
        VisibilityCache cache(workdir / "visibility", bvh.geometry_hash());
        struct Pair {
            int view, light;
            Image visibility;
        };
        std::vector<Pair> pairs;
        for (int v : train_idx) {
            const View& view = dataset.views[v];
            const RenderResult fw = rasterize(scene, view.camera, RenderMode::Deferred,
                                              config.raster);
            for (std::size_t l = 0; l < view.lights.size(); ++l) {
                Image vis = cache.load_or_trace(v, static_cast<int>(l), bvh, fw.gbuffer,
                                                view.camera, view.lights[l].light, config.shade,
                                                config.tracer);
                pairs.push_back(Pair{v, static_cast<int>(l), std::move(vis)});
            }
        }

        AdamState mlp_adam(LightMLP::param_count());
        const std::vector<double> mlp_cycle{config.lr_mlp};

        for (int i = 0; i < config.stage2_iterations; ++i) {
            const Pair& pair = pairs[static_cast<std::size_t>(i) % pairs.size()];
            const View& view = dataset.views[pair.view];
            const LightImage& li = view.lights[pair.light];
            Stage2Eval ev =
                evaluate_stage2(scene, mlp, view.camera, li.light, li.image,
                                view.guidance_normals, view.mask, pair.visibility, config);
            art.stage2_totals.push_back(ev.losses.total);
            opt.adam.step(scene.raw_block().data(), ev.grad_raw.data(),
                          scene.raw_block().size(), lr_cycle);
            mlp_adam.step(mlp.params().data(), ev.grad_mlp.data(), mlp.params().size(),
                          mlp_cycle);
            scene.reorthonormalize_tangents();

            const int it = i + 1;
            if (it % config.metrics_interval == 0 || it == config.stage2_iterations)
                log_metrics(it, 2, ev.losses, ev.psnr, scene.size());
            if (config.checkpoint_interval > 0 && it % config.checkpoint_interval == 0) {
                char name[48];
                std::snprintf(name, sizeof(name), "stage2_%06d.ckpt", it);
                save_checkpoint(workdir / name, Checkpoint{2, it, scene, true, mlp});
            }
        }
    }

    art.stage2 = Checkpoint{2, config.stage2_iterations, scene, true, mlp};
    save_checkpoint(art.stage2_path, art.stage2);
    metrics.close();
    return art;
}

}  // namespace splatir
