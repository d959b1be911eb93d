// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <optional>

#include "splatir/scene.hpp"

namespace splatir {

/// Spatial selection for scene edits, tested against raw splat positions.
struct Region {
    enum class Kind { All, Sphere, Box };
    Kind kind = Kind::All;
    Vec3 center = Vec3::Zero();  // Sphere
    double radius = 0.0;
    Vec3 lo = Vec3::Zero();  // Box, inclusive corners
    Vec3 hi = Vec3::Zero();

    bool contains(const Vec3& p) const;
};

/// Overwrites activated material attributes of every splat inside `region`;
/// absent fields are left alone. Values are clamped to the sigmoid's open
/// range before deactivation. Returns the number of splats touched (0 means
/// the selection was empty and the scene is unchanged).
std::size_t edit_set_material(SplatScene& scene, const Region& region,
                              const std::optional<Vec3>& albedo,
                              std::optional<double> metallic,
                              std::optional<double> roughness);

/// Scales the specular contribution of the selected splats by multiplying
/// their activated metallic by `factor` (clamped back into range). A factor
/// of exactly 1 is the identity and leaves every bit of the scene unchanged.
/// Returns the number of splats touched.
std::size_t edit_scale_specular(SplatScene& scene, const Region& region, double factor);

/// Deletes every splat whose position lies inside `region`, preserving the
/// order of the survivors. Returns the number removed.
std::size_t edit_remove_region(SplatScene& scene, const Region& region);

}  // namespace splatir
