// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "splatir/image.hpp"

namespace splatir {

/// Peak signal-to-noise ratio in dB for unit-range images, clamped to
/// [0, 99]; identical images score exactly 99. Throws InputError on shape
/// mismatch.
double psnr(const Image& a, const Image& b);

/// Mean structural similarity (same windowing as the SSIM loss term).
double ssim(const Image& a, const Image& b);

/// Mean angular error in degrees between two normal maps over mask>0.5
/// pixels; inputs are normalized per pixel and the dot product clamped to
/// [-1, 1]. Throws InputError when the mask selects nothing.
double normal_mae_deg(const Image& normals_a, const Image& normals_b, const Image& mask);

}  // namespace splatir
