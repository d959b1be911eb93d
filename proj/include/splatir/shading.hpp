// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <vector>

#include "splatir/brdf.hpp"
#include "splatir/camera.hpp"
#include "splatir/raster.hpp"
#include "splatir/scene.hpp"

namespace splatir {

struct ShadeConfig {
    double opacity_threshold = 0.5;  // pixels at or below render as background
    double min_depth = 1e-6;         // guards unproject on degenerate pixels
};

/// True when a G-buffer pixel holds a usable surface sample (opaque enough,
/// valid depth, non-degenerate normal). Shared by every deferred consumer.
bool shade_foreground(const GBuffer& gbuffer, int x, int y, const ShadeConfig& config = {});

/// Renders one directional light from the G-buffer: per foreground pixel,
/// radiance = incident * (f_d + f_s) * clamped cosine. `incident` carries the
/// full per-pixel incident radiance (transport times light intensity);
/// the light supplies only the direction. Background pixels are zero.
Image shade_sdl(const GBuffer& gbuffer, const Camera& camera, const DirectionalLight& light,
                const Image& incident, const ShadeConfig& config = {});

/// Gradients of a scalar objective through shade_sdl. The G-buffer grads cover
/// albedo / metallic / roughness / normal (the outgoing direction is fixed by
/// the pixel ray, so depth carries no shading gradient); `incident` receives
/// the per-pixel gradient that feeds the lighting network backward.
struct ShadeGrads {
    GBufferGrads gbuffer;
    Image incident;
};
ShadeGrads shade_sdl_backward(const GBuffer& gbuffer, const Camera& camera,
                              const DirectionalLight& light, const Image& incident,
                              const Image& upstream, const ShadeConfig& config = {});

/// Sum of shade_sdl over a light set with unshadowed incident radiance equal
/// to each light's intensity. Throws InputError on an empty list.
Image shade_multi_light(const GBuffer& gbuffer, const Camera& camera,
                        const std::vector<DirectionalLight>& lights,
                        const ShadeConfig& config = {});

/// Per-pixel world positions from the depth map (background pixels zero).
/// Used to feed the lighting network and the normal-consistency loss.
Image unproject_map(const GBuffer& gbuffer, const Camera& camera, const ShadeConfig& config = {});

}  // namespace splatir
