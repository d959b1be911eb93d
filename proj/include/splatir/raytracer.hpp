// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "splatir/camera.hpp"
#include "splatir/raster.hpp"
#include "splatir/scene.hpp"
#include "splatir/shading.hpp"

namespace splatir {

struct TracerConfig {
    double footprint_sigma = 3.0;    // radial support of a splat, in deviations
    double min_transmittance = 1e-3; // stop accumulating once the ray is this dark
    int leaf_size = 4;               // max splats per BVH leaf
};

/// Axis-aligned box of the sigma-scaled elliptical splat footprint.
void splat_aabb(const Gaussian2D& g, double sigma, Vec3& lo, Vec3& hi);

/// Median-split BVH over activated splats. Immutable once built; tracing is
/// read-only, so rays may be traced from any number of threads.
class SplatBVH {
  public:
    struct Node {
        Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
        std::int32_t left = -1, right = -1;  // interior children; leaf when left < 0
        std::int32_t begin = 0, end = 0;     // leaf range in the primitive order
    };

    /// Builds the tree. Throws InputError on an empty scene.
    static SplatBVH build(const SplatScene& scene, const TracerConfig& config = {});

    const std::vector<Gaussian2D>& splats() const { return splats_; }
    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::int32_t>& primitive_order() const { return order_; }
    double footprint_sigma() const { return sigma_; }

    /// Median of all splat extents (both axes pooled); scales the
    /// self-intersection offset used when tracing from a surface.
    double median_scale() const { return median_scale_; }

    /// Fingerprint of the raw parameters the tree was built from; keys the
    /// on-disk visibility cache.
    std::uint64_t geometry_hash() const { return geometry_hash_; }

    /// Appends the splat indices whose boxes the ray may cross at t > t_min.
    void collect_candidates(const Vec3& origin, const Vec3& dir, double t_min,
                            std::vector<std::int32_t>& out) const;

  private:
    std::vector<Node> nodes_;
    std::vector<std::int32_t> order_;
    std::vector<Gaussian2D> splats_;
    double sigma_ = 3.0;
    double median_scale_ = 0.0;
    std::uint64_t geometry_hash_ = 0;
};

/// Transmittance from `origin` along unit `omega_in`: the product of
/// (1 - opacity * G) over every splat footprint the ray crosses, taken in
/// distance order with hits at or before `exclude_radius` skipped, stopping
/// once it falls under config.min_transmittance.
double trace_visibility(const SplatBVH& bvh, const Vec3& origin, const Vec3& omega_in,
                        double exclude_radius, const TracerConfig& config = {});

/// Acceleration-free reference with identical semantics, bit for bit.
double trace_visibility_brute(const std::vector<Gaussian2D>& splats, const Vec3& origin,
                              const Vec3& omega_in, double exclude_radius,
                              const TracerConfig& config = {});

/// Per-pixel transmittance toward one light: each foreground pixel is
/// unprojected, pushed off the surface along its normal by the
/// self-intersection radius (3x the median splat scale), and traced.
/// Background pixels read 1.
Image visibility_map(const SplatBVH& bvh, const GBuffer& gbuffer, const Camera& camera,
                     const DirectionalLight& light, const ShadeConfig& shade_config = {},
                     const TracerConfig& config = {});

/// Disk cache of visibility maps, one float-map file per (view, light) pair
/// plus a manifest recording the geometry fingerprint they were traced from.
/// A hash mismatch invalidates the whole directory.
class VisibilityCache {
  public:
    VisibilityCache(std::filesystem::path directory, std::uint64_t geometry_hash);

    /// Loads the cached map, or traces and stores it on a miss.
    Image load_or_trace(int view_index, int light_index, const SplatBVH& bvh,
                        const GBuffer& gbuffer, const Camera& camera,
                        const DirectionalLight& light, const ShadeConfig& shade_config = {},
                        const TracerConfig& config = {});

    bool contains(int view_index, int light_index) const;
    const std::filesystem::path& directory() const { return dir_; }

  private:
    std::filesystem::path map_path(int view_index, int light_index) const;
    void write_manifest() const;

    std::filesystem::path dir_;
    std::uint64_t hash_ = 0;
};

}  // namespace splatir
