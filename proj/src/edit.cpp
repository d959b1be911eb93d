// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#include "splatir/edit.hpp"

#include <algorithm>
#include <vector>

namespace splatir {

namespace {

// Matches the clamp deactivate_parameters applies before its logit, so edited
// values survive an activate/deactivate round trip unchanged.
double material_logit(double value) {
    return logit(std::clamp(value, 1e-7, 1.0 - 1e-7));
}

Vec3 raw_position(const SplatScene& scene, std::size_t i) {
    const double* row = scene.raw(i);
    return Vec3(row[param::kPosition], row[param::kPosition + 1], row[param::kPosition + 2]);
}

}  // namespace

bool Region::contains(const Vec3& p) const {
    switch (kind) {
        case Kind::All:
            return true;
        case Kind::Sphere:
            return (p - center).norm() <= radius;
        case Kind::Box:
            return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
    }
    return false;
}

std::size_t edit_set_material(SplatScene& scene, const Region& region,
                              const std::optional<Vec3>& albedo,
                              std::optional<double> metallic,
                              std::optional<double> roughness) {
    std::size_t touched = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!region.contains(raw_position(scene, i))) continue;
        double* row = scene.raw(i);
        if (albedo)
            for (int c = 0; c < 3; ++c) row[param::kAlbedo + c] = material_logit((*albedo)[c]);
        if (metallic) row[param::kMetallic] = material_logit(*metallic);
        if (roughness) row[param::kRoughness] = material_logit(*roughness);
        ++touched;
    }
    return touched;
}

std::size_t edit_scale_specular(SplatScene& scene, const Region& region, double factor) {
    std::size_t touched = 0;
    for (std::size_t i = 0; i < scene.size(); ++i) {
        if (!region.contains(raw_position(scene, i))) continue;
        // Skip the write for the identity factor: a logit/sigmoid round trip
        // is not bit-exact, and a no-op edit must leave the checkpoint
        // byte-identical.
        if (factor != 1.0) {
            double* row = scene.raw(i);
            row[param::kMetallic] = material_logit(factor * sigmoid(row[param::kMetallic]));
        }
        ++touched;
    }
    return touched;
}

std::size_t edit_remove_region(SplatScene& scene, const Region& region) {
    std::vector<std::size_t> keep;
    keep.reserve(scene.size());
    for (std::size_t i = 0; i < scene.size(); ++i)
        if (!region.contains(raw_position(scene, i))) keep.push_back(i);
    const std::size_t removed = scene.size() - keep.size();
    if (removed == 0) return 0;
    SplatScene pruned;
    pruned.raw_block().reserve(keep.size() * kParamsPerGaussian);
    for (std::size_t i : keep) pruned.push_back(scene.raw(i));
    scene = std::move(pruned);
    return removed;
}

}  // namespace splatir
