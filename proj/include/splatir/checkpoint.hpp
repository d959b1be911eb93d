// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>

#include "splatir/light_field.hpp"
#include "splatir/scene.hpp"

namespace splatir {

/// Trained model snapshot. Stage 1 carries only the splat block; stage 2 adds
/// the incident-lighting network. The binary format stores raw doubles, so a
/// save / load round trip is bit-exact.
struct Checkpoint {
    int stage = 1;
    std::int64_t iteration = 0;
    SplatScene scene;
    bool has_mlp = false;
    LightMLP mlp;
};

/// Writes atomically (temp file in the target directory, then rename).
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);

/// Throws InputError on missing files, bad magic, or truncation.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace splatir
