// splatir: differentiable 2D Gaussian surfel renderer for multi-view photometric stereo.
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force serial rasterizer: every pixel tests every splat, gradients
// accumulate in row-major pixel order. The tiled path must reproduce these
// forward maps bit for bit; tests and the kernel benchmark rely on that.
#include "splatir/raster.hpp"

#include "raster_detail.hpp"

namespace splatir {

using detail::BackwardAccum;
using detail::LocalHit;
using detail::SplatView;

RenderResult rasterize_reference(const SplatScene& scene, const Camera& camera, RenderMode mode,
                                 const RasterConfig& config) {
    camera.validate();
    const int w = camera.width, h = camera.height;
    RenderResult res;
    res.mode = mode;
    res.config = config;
    res.gbuffer = detail::make_gbuffer(w, h, mode);
    res.pixel_offsets.assign(static_cast<std::size_t>(w) * h + 1, 0);
    res.has_cache = true;
    if (scene.empty() || w == 0 || h == 0) return res;

    const std::vector<SplatView> views = detail::build_splat_views(scene, camera, mode, config);
    const Vec3 origin = camera.position();
    std::vector<LocalHit> hits;
    double num[detail::kChannels];

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double pcx = x + 0.5, pcy = y + 0.5;
            const Vec3 dir = camera.ray_direction(pcx, pcy);
            hits.clear();
            LocalHit hit;
            for (std::size_t i = 0; i < views.size(); ++i) {
                if (detail::test_pixel_splat(views[i], static_cast<std::int32_t>(i), origin, dir,
                                             pcx, pcy, config, hit))
                    hits.push_back(hit);
            }
            detail::sort_hits(hits);
            double O = 0.0;
            const int blended = detail::blend_pixel(hits, views, config, num, O);
            detail::write_pixel(res.gbuffer, x, y, mode, config, num, O);
            for (int j = 0; j < blended; ++j) {
                const LocalHit& lh = hits[static_cast<std::size_t>(j)];
                res.hits.push_back(HitRecord{lh.splat, static_cast<float>(lh.u),
                                             static_cast<float>(lh.v), lh.z, lh.alpha,
                                             lh.screen_branch, lh.plane_valid});
            }
            res.pixel_offsets[static_cast<std::size_t>(y) * w + x + 1] =
                static_cast<std::int64_t>(res.hits.size());
        }
    }
    return res;
}

std::vector<double> rasterize_backward_reference(const SplatScene& scene, const Camera& camera,
                                                 const RenderResult& forward,
                                                 const GBufferGrads& upstream) {
    if (!forward.has_cache)
        throw ContractError("rasterize_backward_reference: forward result has no hit cache");
    const RasterConfig& cfg = forward.config;
    const int w = camera.width, h = camera.height;
    const std::size_t n = scene.size();
    if (n == 0) return {};

    const std::vector<SplatView> views =
        detail::build_splat_views(scene, camera, forward.mode, cfg);
    BackwardAccum acc(n);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::size_t p = static_cast<std::size_t>(y) * w + x;
            const std::int64_t o0 = forward.pixel_offsets[p];
            const int count = static_cast<int>(forward.pixel_offsets[p + 1] - o0);
            detail::pixel_backward(x, y, forward.hits.data() + o0, count, views, camera, cfg,
                                   forward.mode, upstream, acc);
        }
    }
    return detail::finalize_grads(scene, views, camera, forward.mode, acc);
}

}  // namespace splatir
