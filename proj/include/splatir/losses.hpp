// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatir/camera.hpp"
#include "splatir/image.hpp"
#include "splatir/raster.hpp"
#include "splatir/shading.hpp"

namespace splatir {

/// Weights of the regularization terms; the reconstruction term has weight 1.
struct LossWeights {
    double normal_consistency = 0.05;
    double normal_reg = 0.1;
    double mask = 0.01;
    double incident = 0.1;
};

/// How loss_normal_reg penalizes the difference to the guidance normals.
enum class NormalRegPenalty { L1, L2, Cosine };

/// Mean absolute difference over every sample. Optionally writes the gradient
/// with respect to `a`. Throws InputError on shape mismatch.
double loss_l1(const Image& a, const Image& b, Image* grad_a = nullptr);

/// Mean structural similarity (11x11 Gaussian window, sigma 1.5, K1=0.01,
/// K2=0.03, unit dynamic range) averaged over pixels and channels, with
/// clamp-to-edge windows at the borders. `grad_a` receives dSSIM/da.
double loss_ssim(const Image& a, const Image& b, Image* grad_a = nullptr);

/// Photometric reconstruction loss: 0.8 * L1 + 0.2 * (1 - SSIM), full frame.
double loss_rgb(const Image& rendered, const Image& target, Image* grad_rendered = nullptr);

/// Agreement between the blended normal map and the normal implied by the
/// depth map. Central differences of the unprojected depth give a second
/// normal estimate N_d (oriented toward the camera); the loss is the mean of
/// 1 - N_hat . N_d over pixels whose 4-neighborhood is foreground.
struct NormalConsistencyResult {
    double value = 0.0;
    int pixels = 0;       // contributing pixel count
    Image grad_normal;    // dvalue / d normal map
    Image grad_depth;     // dvalue / d depth map
};
NormalConsistencyResult loss_normal_consistency(const GBuffer& gbuffer, const Camera& camera,
                                                const ShadeConfig& config = {});

/// Deviation of the rendered (world-frame) normal map from guidance normals
/// given in the camera frame; the camera rotation transposed carries the
/// guidance to world space. Mean over mask>0.5 pixels of the per-pixel
/// penalty (L1 sums the three component magnitudes). `grad_normal`, if
/// nonnull, receives the gradient for the rendered map.
double loss_normal_reg(const Image& rendered_normal, const Image& guidance_cam,
                       const Camera& camera, const Image& mask, Image* grad_normal = nullptr,
                       NormalRegPenalty penalty = NormalRegPenalty::L1);

/// Binary cross entropy pushing accumulated opacity toward the capture mask;
/// opacity is clamped to [1e-6, 1 - 1e-6] first. Mean over all pixels.
double loss_mask(const Image& opacity, const Image& mask, Image* grad_opacity = nullptr);

/// L1 agreement between the transport map predicted by the lighting network
/// and the ray-traced visibility, broadcast to RGB; mean over mask>0.5
/// pixels and channels. An empty visibility map raises InputError pointing
/// at the trace-visibility pass.
double loss_incident(const Image& transport, const Image& visibility, const Image& mask,
                     Image* grad_transport = nullptr);

}  // namespace splatir
