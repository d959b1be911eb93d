// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>

#include "splatir/image.hpp"

namespace splatir {

/// PNG bit depth used when encoding.
enum class PngDepth { Bits8, Bits16 };

/// Writes an image as PNG. Values are clamped to [0,1] and quantized to the
/// requested bit depth. With `srgb` the sRGB transfer curve is applied before
/// quantization (for display images); without it values are stored linearly.
void write_png(const std::filesystem::path& path, const Image& img, PngDepth depth,
               bool srgb = false);

/// Reads a PNG of any supported layout (8/16-bit, gray/RGB/RGBA) into doubles
/// in [0,1]. `bit_depth_out`, if nonnull, receives the file's bit depth.
/// No transfer function is applied; callers linearize if needed.
Image read_png(const std::filesystem::path& path, int* bit_depth_out = nullptr);

/// Raw float32 map: 16-byte header (magic 'FMP1', width, height, channels as
/// u32 little-endian) followed by row-major interleaved float32 samples.
void write_float_map(const std::filesystem::path& path, const Image& img);
Image read_float_map(const std::filesystem::path& path);

/// Quantization helpers shared with dataset round-trip code.
/// encode: round(clamp01(v) * maxv); decode: k / maxv.
inline double quantize_unit(double v, int maxv) {
    double q = std::nearbyint(clamp01(v) * maxv);
    return q / maxv;
}

}  // namespace splatir
