// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <vector>

#include "splatir/camera.hpp"
#include "splatir/image.hpp"
#include "splatir/scene.hpp"

namespace splatir {

/// Ray-splat intersection in the splat's tangent frame.
struct RaySplatHit {
    double u = 0.0, v = 0.0;  // tangent-plane coordinates, in units of s_u / s_v
    double z = 0.0;           // camera-space depth of the intersection
    double weight = 0.0;      // exp(-(u^2+v^2)/2)
};

struct RasterConfig {
    double gaussian_cutoff = 1.0 / 255.0;  // skip contributions below this weight
    double transmittance_min = 1e-4;       // stop blending once T drops below
    double near_plane = 0.01;
    double lowpass_sigma_px = 0.5;  // min screen-space footprint; 0 disables
    bool normalize_depth = true;    // weight-normalized depth blending
    bool normalize_features = false;  // material maps normalized by O instead of as-blended
    bool deterministic = true;      // fixed-order gradient reduction
    int threads = 0;                // 0 = OpenMP default
};

enum class RenderMode { Color, Deferred };

/// Per-pixel deferred-shading maps. Color mode fills color/normal/depth/opacity;
/// Deferred mode fills everything except color (tangent and scale maps feed the
/// incident-light network).
struct GBuffer {
    Image color;      // 3ch, alpha-blended SH color
    Image albedo;     // 3ch
    Image metallic;   // 1ch
    Image roughness;  // 1ch
    Image normal;     // 3ch, unit length wherever the blend is nonzero
    Image depth;      // 1ch
    Image opacity;    // 1ch, accumulated alpha in [0,1]
    Image tangent_u;  // 3ch
    Image tangent_v;  // 3ch
    Image scale;      // 2ch

    int width() const { return opacity.width(); }
    int height() const { return opacity.height(); }
};

/// Upstream gradients for the backward pass; empty images mean zero.
struct GBufferGrads {
    Image color, albedo, metallic, roughness, normal, depth, opacity, tangent_u, tangent_v, scale;
};

/// One cached splat contribution at a pixel, enough to replay the blend.
struct HitRecord {
    std::int32_t splat;
    float u, v;
    double z;
    double alpha;
    std::uint8_t screen_branch;  // weight came from the low-pass screen filter
    std::uint8_t plane_valid;    // tangent-plane intersection exists (depth source)
};

/// Forward output plus the per-pixel sorted hit cache required by the backward
/// pass (only the blended prefix of each pixel's hit list is retained).
struct RenderResult {
    GBuffer gbuffer;
    std::vector<HitRecord> hits;
    std::vector<std::int64_t> pixel_offsets;  // width*height + 1 entries into hits
    RenderMode mode = RenderMode::Color;
    RasterConfig config;
    bool has_cache = false;
};

/// Solves the homogeneous ray-splat system for tangent coordinates and depth at
/// continuous pixel coordinates. Degenerate (near-parallel) configurations and
/// hits behind the near plane or below the weight cutoff report a miss.
std::optional<RaySplatHit> intersect(const Gaussian2D& g, const Camera& camera, const Vec2& pixel,
                                     const RasterConfig& config = {});

/// Tiled, OpenMP-parallel forward rasterization. Bit-identical to
/// rasterize_reference for any thread count.
RenderResult rasterize(const SplatScene& scene, const Camera& camera, RenderMode mode,
                       const RasterConfig& config = {});

/// Serial reference forward: every pixel tests every splat. Kept for tests and
/// the kernel benchmark.
RenderResult rasterize_reference(const SplatScene& scene, const Camera& camera, RenderMode mode,
                                 const RasterConfig& config = {});

/// Analytic backward pass. Returns gradients on the raw parameter block
/// (kParamsPerGaussian per splat). Throws ContractError without a forward cache.
std::vector<double> rasterize_backward(const SplatScene& scene, const Camera& camera,
                                       const RenderResult& forward, const GBufferGrads& upstream);

/// Serial reference backward with pixel-major accumulation order.
std::vector<double> rasterize_backward_reference(const SplatScene& scene, const Camera& camera,
                                                 const RenderResult& forward,
                                                 const GBufferGrads& upstream);

}  // namespace splatir
