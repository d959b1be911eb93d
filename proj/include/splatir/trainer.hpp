// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "splatir/checkpoint.hpp"
#include "splatir/dataset.hpp"
#include "splatir/losses.hpp"
#include "splatir/optimizer.hpp"
#include "splatir/raster.hpp"
#include "splatir/raytracer.hpp"

namespace splatir {

/// Everything the two training stages need, loadable from a JSON file (see
/// load_train_config for the schema; README documents every key).
struct TrainConfig {
    LossWeights weights;
    NormalRegPenalty normal_penalty = NormalRegPenalty::L1;

    int stage1_iterations = 2500;
    int stage2_iterations = 1200;
    int init_splats = 2000;
    std::uint64_t seed = 1;

    // Densification (stage 1 only; stage 2 freezes topology).
    int densify_from = 500;
    int densify_until = 10000;
    int densify_interval = 200;
    DensifyConfig densify;

    // Per-attribute learning rates for the splat block, plus the network's.
    double lr_position = 5e-4;
    double lr_tangent = 2e-3;
    double lr_scale = 5e-3;
    double lr_opacity = 5e-2;
    double lr_sh = 5e-3;
    double lr_material = 1e-2;
    double lr_mlp = 2e-3;

    int checkpoint_interval = 0;  // extra periodic checkpoints; 0 = final only
    int metrics_interval = 25;    // CSV cadence

    RasterConfig raster;  // carries the deterministic-reduction flag
    ShadeConfig shade;
    TracerConfig tracer;
};

/// Parses a JSON config file; unknown keys are rejected so typos surface.
TrainConfig load_train_config(const std::filesystem::path& path);

/// Per-term loss values of one training step (unweighted terms; `total`
/// applies the configured weights).
struct StageLosses {
    double rgb = 0.0;
    double normal_consistency = 0.0;
    double normal_reg = 0.0;
    double mask = 0.0;
    double incident = 0.0;
    double total = 0.0;
};

/// Forward + backward of the stage-1 objective (SH color on light-averaged
/// targets) for one view. Terms with zero weight are skipped entirely, and
/// the guidance term is also skipped when `guidance_cam` is empty. Throws
/// NumericError naming the first non-finite term.
struct Stage1Eval {
    StageLosses losses;
    double psnr = 0.0;  // rendered color vs target, probe for the metrics log
    std::vector<double> grad_raw;
};
Stage1Eval evaluate_stage1(const SplatScene& scene, const Camera& camera, const Image& target,
                           const Image& guidance_cam, const Image& mask,
                           const TrainConfig& config);

/// Forward + backward of the stage-2 objective (deferred PBR with
/// network-predicted incident lighting) for one (view, light) pair.
/// `visibility` is the cached ray-traced map for that pair.
struct Stage2Eval {
    StageLosses losses;
    double psnr = 0.0;
    std::vector<double> grad_raw;
    std::vector<double> grad_mlp;
};
Stage2Eval evaluate_stage2(const SplatScene& scene, const LightMLP& mlp, const Camera& camera,
                           const DirectionalLight& light, const Image& target,
                           const Image& guidance_cam, const Image& mask, const Image& visibility,
                           const TrainConfig& config);

/// Renders the stage-2 image for one (view, light) pair: deferred G-buffer,
/// network transport times light intensity, then single-directional-light
/// shading. Shared by training, relighting, and evaluation.
Image render_stage2(const SplatScene& scene, const LightMLP& mlp, const Camera& camera,
                    const DirectionalLight& light, const RasterConfig& raster = {},
                    const ShadeConfig& shade = {});

struct TrainArtifacts {
    Checkpoint stage1;
    Checkpoint stage2;
    std::filesystem::path stage1_path, stage2_path, metrics_path;
    std::vector<double> stage1_totals;  // weighted total per iteration
    std::vector<double> stage2_totals;
};

/// Two-stage training. Stage 1 fits geometry and SH color to light-averaged
/// images; stage 2 freezes topology, ray-traces visibility once per
/// (view, light) pair into workdir/visibility, and jointly optimizes
/// materials, geometry, and the lighting network on the per-light images.
/// Writes stage1.ckpt, stage2.ckpt, and metrics.csv under `workdir`.
/// Training views come from the dataset split (resolve_split).
TrainArtifacts train(const MVPSDataset& dataset, const TrainConfig& config,
                     const std::filesystem::path& workdir);

/// Scene-initialization helper used by train and exposed for tests: random
/// surfels in a ball around the point the cameras jointly look at.
SplatScene initialize_scene(const MVPSDataset& dataset, const TrainConfig& config);

}  // namespace splatir
