// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/eval.hpp"

#include <chrono>
#include <cstdio>
#include <nlohmann/json.hpp>
#include <numeric>

#include "splatir/trainer.hpp"

namespace splatir {

namespace {

constexpr const char* kLpipsNote = "not reported: would require a pretrained network";

/// Reference normal map for a view: ground truth when present, otherwise the
/// guidance prior, otherwise empty.
const Image& reference_normals(const View& view) {
    return view.gt_normals.empty() ? view.guidance_normals : view.gt_normals;
}

double view_normal_mae(const SplatScene& scene, const View& view, const EvalOptions& options) {
    const Image& reference = reference_normals(view);
    if (reference.empty() || view.mask.empty()) return -1.0;
    const RenderResult forward =
        rasterize(scene, view.camera, RenderMode::Deferred, options.raster);
    return normal_mae_deg(forward.gbuffer.normal, reference, view.mask);
}

}  // namespace

EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const MVPSDataset& dataset,
                               const EvalOptions& options) {
    if (dataset.views.empty()) throw InputError("evaluate_checkpoint: dataset has no views");
    std::vector<int> eval_views;
    if (options.include_train) {
        eval_views.resize(dataset.views.size());
        std::iota(eval_views.begin(), eval_views.end(), 0);
    } else {
        std::vector<int> train_idx;
        resolve_split(dataset, train_idx, eval_views);
    }

    const auto start = std::chrono::steady_clock::now();
    EvalReport report;
    report.stage = ckpt.stage;
    report.splat_count = ckpt.scene.size();
    for (int v : eval_views) {
        const View& view = dataset.views[v];
        ViewEval ve;
        ve.view = v;
        if (ckpt.has_mlp) {
            for (const LightImage& li : view.lights) {
                const Image rendered = render_stage2(ckpt.scene, ckpt.mlp, view.camera,
                                                     li.light, options.raster, options.shade);
                ve.psnr_db += psnr(rendered, li.image);
                ve.ssim_value += ssim(rendered, li.image);
                ++ve.pairs;
            }
        } else {
            const Image target = light_average(view);
            const RenderResult forward =
                rasterize(ckpt.scene, view.camera, RenderMode::Color, options.raster);
            ve.psnr_db = psnr(forward.gbuffer.color, target);
            ve.ssim_value = ssim(forward.gbuffer.color, target);
            ve.pairs = 1;
        }
        ve.psnr_db /= ve.pairs;
        ve.ssim_value /= ve.pairs;
        ve.normal_mae_deg = view_normal_mae(ckpt.scene, view, options);
        report.views.push_back(ve);
    }

    int normal_views = 0;
    double normal_sum = 0.0;
    for (const ViewEval& ve : report.views) {
        report.psnr_db += ve.psnr_db;
        report.ssim_value += ve.ssim_value;
        if (ve.normal_mae_deg >= 0.0) {
            normal_sum += ve.normal_mae_deg;
            ++normal_views;
        }
    }
    report.psnr_db /= static_cast<double>(report.views.size());
    report.ssim_value /= static_cast<double>(report.views.size());
    report.normal_mae_deg = normal_views ? normal_sum / normal_views : -1.0;
    report.runtime_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return report;
}

std::string EvalReport::to_json() const {
    nlohmann::ordered_json j;
    j["stage"] = stage;
    j["splats"] = splat_count;
    j["aggregate"] = {{"psnr_db", psnr_db},
                      {"ssim", ssim_value},
                      {"normal_mae_deg", normal_mae_deg}};
    j["views"] = nlohmann::ordered_json::array();
    for (const ViewEval& ve : views) {
        j["views"].push_back({{"view", ve.view},
                              {"pairs", ve.pairs},
                              {"psnr_db", ve.psnr_db},
                              {"ssim", ve.ssim_value},
                              {"normal_mae_deg", ve.normal_mae_deg}});
    }
    j["runtime_seconds"] = runtime_seconds;
    j["lpips"] = kLpipsNote;
    return j.dump(2) + "\n";
}

std::string EvalReport::to_table() const {
    std::string out;
    char line[160];
    std::snprintf(line, sizeof line, "%6s %6s %10s %8s %16s\n", "view", "pairs", "PSNR(dB)",
                  "SSIM", "normal MAE(deg)");
    out += line;
    auto row = [&](const char* label, int pairs, double p, double s, double mae) {
        if (mae >= 0.0)
            std::snprintf(line, sizeof line, "%6s %6d %10.2f %8.4f %16.2f\n", label, pairs, p,
                          s, mae);
        else
            std::snprintf(line, sizeof line, "%6s %6d %10.2f %8.4f %16s\n", label, pairs, p, s,
                          "-");
        out += line;
    };
    int total_pairs = 0;
    for (const ViewEval& ve : views) {
        char label[16];
        std::snprintf(label, sizeof label, "%d", ve.view);
        row(label, ve.pairs, ve.psnr_db, ve.ssim_value, ve.normal_mae_deg);
        total_pairs += ve.pairs;
    }
    row("all", total_pairs, psnr_db, ssim_value, normal_mae_deg);
    std::snprintf(line, sizeof line, "stage %d, %zu splats, %.2f s; LPIPS %s\n", stage,
                  splat_count, runtime_seconds, kLpipsNote);
    out += line;
    return out;
}

Image relight(const Checkpoint& ckpt, const Camera& camera, const DirectionalLight& light,
              ShadowMode shadows, const RasterConfig& raster, const ShadeConfig& shade,
              const TracerConfig& tracer) {
    if (!ckpt.has_mlp)
        throw InputError(
            "relight: stage-1 checkpoint carries only geometry and view-dependent color; "
            "the PBR material and lighting-network parameters needed for relighting are "
            "absent until stage-2 training has run");
    light.validate();
    if (shadows == ShadowMode::Learned)
        return render_stage2(ckpt.scene, ckpt.mlp, camera, light, raster, shade);
    const RenderResult forward = rasterize(ckpt.scene, camera, RenderMode::Deferred, raster);
    const SplatBVH bvh = SplatBVH::build(ckpt.scene, tracer);
    const Image visibility =
        visibility_map(bvh, forward.gbuffer, camera, light, shade, tracer);
    Image incident(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y)
        for (int x = 0; x < camera.width; ++x)
            incident.set_rgb(x, y, visibility.at(x, y, 0) * light.intensity);
    return shade_sdl(forward.gbuffer, camera, light, incident, shade);
}

}  // namespace splatir
