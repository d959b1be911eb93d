// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "splatir/checkpoint.hpp"
#include "splatir/dataset.hpp"
#include "splatir/metrics.hpp"
#include "splatir/raster.hpp"
#include "splatir/raytracer.hpp"
#include "splatir/shading.hpp"

namespace splatir {

/// Image metrics for one evaluated view. PSNR / SSIM average over that view's
/// evaluated (view, light) pairs; the normal error is per view. A negative
/// `normal_mae_deg` means the dataset carries no reference normals for it.
struct ViewEval {
    int view = 0;
    int pairs = 0;
    double psnr_db = 0.0;
    double ssim_value = 0.0;
    double normal_mae_deg = -1.0;
};

/// Per-view and aggregate quality of a checkpoint on a dataset split.
/// Aggregates weight views equally. Serializes to JSON (stable key order)
/// and to a fixed-width table; both note that LPIPS is not reported, since
/// it would pull in a pretrained network.
struct EvalReport {
    int stage = 1;
    std::size_t splat_count = 0;
    std::vector<ViewEval> views;
    double psnr_db = 0.0;
    double ssim_value = 0.0;
    double normal_mae_deg = -1.0;
    double runtime_seconds = 0.0;

    std::string to_json() const;
    std::string to_table() const;
};

struct EvalOptions {
    bool include_train = false;  // evaluate every view, not just the held-out ones
    RasterConfig raster;
    ShadeConfig shade;
};

/// Scores a checkpoint against a dataset. Stage-1 checkpoints render the
/// view-dependent color against the light-averaged image (one pair per view);
/// stage-2 checkpoints render every (view, light) pair through the deferred
/// pipeline with network-predicted incident light. Normal error compares the
/// rendered normal map with the dataset's reference (or, failing that,
/// guidance) normals over the foreground mask.
EvalReport evaluate_checkpoint(const Checkpoint& ckpt, const MVPSDataset& dataset,
                               const EvalOptions& options = {});

/// Shadow source for relighting. Learned shadows come from the transport
/// network exactly as in training; Traced replaces the network's transport
/// with freshly ray-traced visibility, which keeps shadow boundaries sharp
/// under lights far outside the training rig.
enum class ShadowMode { Learned, Traced };

/// Renders the scene under an arbitrary directional light. Requires a
/// stage-2 checkpoint; a stage-1 checkpoint has no material or lighting
/// network to shade with and raises InputError. Radiance scales linearly
/// with the light's intensity (clamping happens only at image encoding).
Image relight(const Checkpoint& ckpt, const Camera& camera, const DirectionalLight& light,
              ShadowMode shadows = ShadowMode::Learned, const RasterConfig& raster = {},
              const ShadeConfig& shade = {}, const TracerConfig& tracer = {});

}  // namespace splatir
